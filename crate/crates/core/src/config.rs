//! One configuration surface for every stage: a TOML file whose relative
//! paths are resolved against the file's directory, with command-line (or
//! `STEERTEST_*` environment) overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detector::TrainingConfig;
use crate::nn::derive_seed;
use crate::prompt::DEFAULT_TASK;
use crate::steer::{DecoderConfig, DecoderTrainingConfig, GenerationConfig};
use crate::validator::ValidationConfig;

/// Prefix of environment variables that override configuration values.
pub const ENV_PREFIX: &str = "STEERTEST_";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub defective: Option<PathBuf>,
    pub fixed: Option<PathBuf>,
    /// Production source roots scanned for methods, relative to the project.
    pub source_roots: Vec<PathBuf>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            defective: None,
            fixed: None,
            source_roots: vec![PathBuf::from("src/main/java")],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Labelled methods (JSONL) for the detector.
    pub detector_train: Option<PathBuf>,
    /// Methods with defect lines (JSONL) for the locator; defaults to the
    /// detector data.
    pub locator_train: Option<PathBuf>,
    /// Prompt/target pairs (JSONL) for the decoder.
    pub decoder_corpus: Option<PathBuf>,
    /// Profiling set (JSON).
    pub profiling_set: Option<PathBuf>,
}

/// Pretrained checkpoints; a stage trains its own model when unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub detector: Option<PathBuf>,
    pub locator: Option<PathBuf>,
    pub decoder: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocateConfig {
    /// Statements marked defective per method.
    pub top_statements: usize,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self { top_statements: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Log-likelihood of the profiling set's reference tests.
    #[default]
    Likelihood,
    /// Profiling prompts whose steered candidates trigger the configured
    /// project's defect.
    Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub scorer: ScorerKind,
    /// Items of the profiling set used.
    pub set_size: usize,
    /// Candidates sampled per item by the trigger scorer.
    pub candidates_per_item: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerKind::Likelihood,
            set_size: 100,
            candidates_per_item: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringConfig {
    pub alpha: f64,
    pub top_k: usize,
    /// Candidates generated per located method.
    pub candidates: usize,
    pub generation: GenerationConfig,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            top_k: 10,
            candidates: 100,
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub language: String,
    pub comment_prefix: String,
    pub task_template: String,
    /// Layout file with `{task}`, `{class_context}` and `{method}`.
    pub template: Option<PathBuf>,
    pub marker: String,
    pub highlight_marker: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            language: "Java".into(),
            comment_prefix: "//".into(),
            task_template: DEFAULT_TASK.into(),
            template: None,
            marker: "<defective>".into(),
            highlight_marker: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage draws from its own stream of it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub project: ProjectConfig,
    pub data: DataConfig,
    pub models: ModelPaths,
    pub detector: TrainingConfig,
    pub locator: TrainingConfig,
    pub locate: LocateConfig,
    pub decoder: DecoderConfig,
    pub decoder_training: DecoderTrainingConfig,
    pub profile: ProfileConfig,
    pub steering: SteeringConfig,
    pub prompt: PromptConfig,
    pub validation: ValidationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("steertest-out"),
            project: ProjectConfig::default(),
            data: DataConfig::default(),
            models: ModelPaths::default(),
            detector: TrainingConfig::default(),
            locator: TrainingConfig::default(),
            locate: LocateConfig::default(),
            decoder: DecoderConfig::default(),
            decoder_training: DecoderTrainingConfig::default(),
            profile: ProfileConfig::default(),
            steering: SteeringConfig::default(),
            prompt: PromptConfig::default(),
            validation: ValidationConfig::default(),
        }
    }
}

/// Stages that draw randomness, each with its own seed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Detect = 1,
    Locate = 2,
    TrainDecoder = 3,
    Profile = 4,
    Generate = 5,
}

const STREAM_STAGE: u64 = 900;

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<file>")
                .to_string();
            ConfigError::new(field, e.to_string())
        })
    }

    /// Read a TOML file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Make every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        for p in [
            &mut self.project.defective,
            &mut self.project.fixed,
            &mut self.data.detector_train,
            &mut self.data.locator_train,
            &mut self.data.decoder_corpus,
            &mut self.data.profiling_set,
            &mut self.models.detector,
            &mut self.models.locator,
            &mut self.models.decoder,
            &mut self.prompt.template,
        ] {
            resolve(base, p);
        }
    }

    /// Range checks independent of any particular stage.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.steering;
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(ConfigError::new("steering.alpha", format!("{} is outside [0, 1]", s.alpha)));
        }
        if s.top_k == 0 {
            return Err(ConfigError::new("steering.top_k", "must be at least 1"));
        }
        if s.candidates == 0 {
            return Err(ConfigError::new("steering.candidates", "must be at least 1"));
        }
        if !(s.generation.temperature >= 0.0) {
            return Err(ConfigError::new("steering.generation.temperature", "must be >= 0"));
        }
        if self.locate.top_statements == 0 {
            return Err(ConfigError::new("locate.top_statements", "must be at least 1"));
        }
        if self.profile.set_size == 0 {
            return Err(ConfigError::new("profile.set_size", "must be at least 1"));
        }
        if !(self.validation.runner.timeout_secs > 0.0) {
            return Err(ConfigError::new("validation.runner.timeout_secs", "must be positive"));
        }
        if !self.validation.runner.template.contains("{runner}") {
            return Err(ConfigError::new("validation.runner.template", "must contain {runner}"));
        }
        self.detector
            .validate()
            .map_err(|e| ConfigError::new("detector", e.to_string()))?;
        self.locator
            .validate()
            .map_err(|e| ConfigError::new("locator", e.to_string()))?;
        self.decoder
            .validate()
            .map_err(|e| ConfigError::new("decoder", e.to_string()))?;
        Ok(())
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, &[STREAM_STAGE, stage as u64])
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_settings() {
        let c = PipelineConfig::default();
        assert_eq!((c.steering.alpha, c.steering.top_k, c.steering.candidates), (0.01, 10, 100));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_toml_and_unknown_fields() {
        let c = PipelineConfig::from_toml("seed = 7\n[steering]\nalpha = 0.5\n").unwrap();
        assert_eq!((c.seed, c.steering.alpha, c.steering.top_k), (7, 0.5, 10));
        let err = PipelineConfig::from_toml("[steering]\nalfa = 0.5\n").unwrap_err();
        assert_eq!(err.field, "alfa");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = PipelineConfig::default();
        c.steering.alpha = 1.5;
        assert_eq!(c.validate().unwrap_err().field, "steering.alpha");
        let mut c = PipelineConfig::default();
        c.steering.top_k = 0;
        assert_eq!(c.validate().unwrap_err().field, "steering.top_k");
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let mut c = PipelineConfig::from_toml("output_dir = \"out\"\n[project]\ndefective = \"p/d\"\nfixed = \"/abs/f\"\n").unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.output_dir, PathBuf::from("/cfg/out"));
        assert_eq!(c.project.defective, Some(PathBuf::from("/cfg/p/d")));
        assert_eq!(c.project.fixed, Some(PathBuf::from("/abs/f")));
    }

    #[test]
    fn stage_seeds_and_hash_are_stable() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.stage_seed(Stage::Detect), a.stage_seed(Stage::Locate));
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.stage_seed(Stage::Detect), b.stage_seed(Stage::Detect));
    }
}
