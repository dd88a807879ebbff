//! Method-level defect detection.
//!
//! A small encoder produces a method embedding, a linear head turns it into a
//! two-class distribution, and training combines cross-entropy on the clean
//! input with a symmetric KL consistency term between the clean prediction and
//! the prediction on an FGM-perturbed copy of the token embeddings.

mod encoder;
mod loss;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::CodeError;

pub use encoder::{EncoderConfig, EncoderLayout, EncoderNodes, Vocab};
pub use loss::{
    cross_entropy_loss, fgm_perturb, kl_consistency_loss, kl_divergence, total_loss, PROB_FLOOR,
};
pub use train::{
    epoch_order, split_indices, train_detector, DetectorModel, EpochStats, Objective,
    TrainingReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("empty token sequence")]
    EmptyInput,
    #[error("gradient is zero; perturbation direction undefined")]
    ZeroGradient,
    #[error("dataset contains a single label; both classes are required")]
    SingleClassDataset,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Code(#[from] CodeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEmbedding {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialEmbedding {
    pub vector: Vec<f64>,
    pub epsilon_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectLabel {
    Defective,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_defective: f64,
    pub prob_clean: f64,
    pub label: DefectLabel,
}

impl Prediction {
    pub const THRESHOLD: f64 = 0.5;

    /// From a `[clean, defective]` distribution.
    pub fn from_distribution(probs: &[f64]) -> Self {
        let (prob_clean, prob_defective) = (probs[0], probs[1]);
        let label = if prob_defective >= Self::THRESHOLD {
            DefectLabel::Defective
        } else {
            DefectLabel::Clean
        };
        Self {
            prob_defective,
            prob_clean,
            label,
        }
    }

    pub fn is_defective(&self) -> bool {
        self.label == DefectLabel::Defective
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight of the KL consistency term.
    pub beta: f64,
    /// FGM step size in token-embedding space.
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Run the perturbed pass and the consistency term. With `false` the loop
    /// is plain cross-entropy training.
    pub adversarial: bool,
    pub encoder: EncoderConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            epsilon: 1.0,
            batch_size: 16,
            max_epochs: 200,
            early_stop_patience: 5,
            learning_rate: 2e-3,
            seed: 0,
            validation_fraction: 0.2,
            adversarial: true,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if !(self.beta >= 0.0) {
            return bad("beta must be >= 0");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.encoder.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.encoder.embed_dim == 0 || self.encoder.embed_dim % self.encoder.n_heads.max(1) != 0 {
            return bad("embed_dim must be positive and divisible by n_heads");
        }
        Ok(())
    }
}

/// Comment-free lexemes of a method, the encoder's input.
pub fn method_lexemes(method: &crate::code_model::Method) -> Result<Vec<String>, CodeError> {
    Ok(method.code_tokens()?.into_iter().map(|t| t.text).collect())
}

/// Embed a token list in inference mode.
pub fn encode_method(
    model: &DetectorModel,
    tokens: &[crate::code_model::Token],
) -> Result<MethodEmbedding, DetectorError> {
    let lexemes: Vec<&str> = tokens
        .iter()
        .filter(|t| t.kind != crate::code_model::TokenKind::Comment)
        .map(|t| t.text.as_str())
        .collect();
    model.embed_lexemes(&lexemes)
}

pub fn predict_defect(
    model: &DetectorModel,
    method: &crate::code_model::Method,
) -> Result<Prediction, DetectorError> {
    model.predict_lexemes(&method_lexemes(method)?)
}
