use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code_model::Method;
use crate::nn::block::{bind_params, param_grads, xavier};
use crate::nn::{stream_rng, Adam, Graph, Matrix, NodeId, ParamId, ParamStore};

use super::encoder::{EncoderConfig, EncoderLayout, EncoderNodes, Vocab};
use super::loss::{fgm_perturb, graph_cross_entropy, graph_kl_consistency};
use super::{
    method_lexemes, AdversarialEmbedding, DetectorError, MethodEmbedding, Prediction,
    TrainingConfig,
};

// Stream labels for `stream_rng`.
const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

/// Encoder plus a two-way linear classification head (`[clean, defective]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub encoder: EncoderLayout,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Which scalar [`DetectorModel::objective`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    CrossEntropy,
    Consistency,
    Total,
}

struct Forward {
    enc: EncoderNodes,
    probs: NodeId,
}

impl DetectorModel {
    pub fn new(config: EncoderConfig, vocab: Vocab, seed: u64) -> Self {
        let mut rng = stream_rng(seed, &[STREAM_INIT]);
        let mut params = ParamStore::new();
        let encoder = EncoderLayout::init(&mut params, &config, vocab.len(), &mut rng);
        let head_w = params.add("head.w", xavier(&mut rng, config.embed_dim, 2));
        let head_b = params.add("head.b", Matrix::zeros(1, 2));
        Self {
            config,
            vocab,
            params,
            encoder,
            head_w,
            head_b,
        }
    }

    fn ids<S: AsRef<str>>(&self, lexemes: &[S]) -> Result<Vec<usize>, DetectorError> {
        if lexemes.is_empty() {
            return Err(DetectorError::EmptyInput);
        }
        Ok(self.vocab.ids(lexemes))
    }

    fn forward(
        &self,
        g: &mut Graph,
        nodes: &[NodeId],
        ids: &[usize],
        perturbation: Option<&Matrix>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Forward {
        let enc = self
            .encoder
            .forward(g, nodes, &self.config, ids, perturbation, rng);
        let logits = g.matmul(enc.pooled, nodes[self.head_w]);
        let logits = g.add_bias(logits, nodes[self.head_b]);
        let probs = g.softmax_rows(logits, false);
        Forward { enc, probs }
    }

    pub fn embed_lexemes<S: AsRef<str>>(&self, lexemes: &[S]) -> Result<MethodEmbedding, DetectorError> {
        let ids = self.ids(lexemes)?;
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let f = self.forward(&mut g, &nodes, &ids, None, None);
        Ok(MethodEmbedding {
            vector: g.value(f.enc.pooled).data.clone(),
        })
    }

    pub fn predict_lexemes<S: AsRef<str>>(&self, lexemes: &[S]) -> Result<Prediction, DetectorError> {
        let ids = self.ids(lexemes)?;
        Ok(Prediction::from_distribution(&self.distribution(&ids, None)))
    }

    /// `[clean, defective]` probabilities in inference mode.
    pub fn distribution(&self, ids: &[usize], perturbation: Option<&Matrix>) -> Vec<f64> {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let f = self.forward(&mut g, &nodes, ids, perturbation, None);
        g.value(f.probs).data.clone()
    }

    /// Gradient of the clean cross-entropy with respect to the token
    /// embeddings (inference mode), shaped `len x embed_dim`.
    pub fn embedding_gradient(&self, ids: &[usize], label: bool) -> Matrix {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let f = self.forward(&mut g, &nodes, ids, None, None);
        let ce = graph_cross_entropy(&mut g, f.probs, label as usize);
        let (rows, cols) = g.value(f.enc.token_emb).shape();
        g.backward_to(ce, f.enc.token_emb).get_or_zeros(f.enc.token_emb, rows, cols)
    }

    /// FGM perturbation of the token embeddings for `(ids, label)`.
    pub fn perturbation(&self, ids: &[usize], label: bool, epsilon: f64) -> Result<Matrix, DetectorError> {
        let grad = self.embedding_gradient(ids, label);
        let r = fgm_perturb(&grad.data, epsilon)?;
        Ok(Matrix::from_vec(grad.rows, grad.cols, r))
    }

    /// Pooled embedding of the FGM-perturbed input (inference mode).
    pub fn adversarial_embedding<S: AsRef<str>>(
        &self,
        lexemes: &[S],
        label: bool,
        epsilon: f64,
    ) -> Result<AdversarialEmbedding, DetectorError> {
        let ids = self.ids(lexemes)?;
        let r = self.perturbation(&ids, label, epsilon)?;
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let f = self.forward(&mut g, &nodes, &ids, Some(&r), None);
        Ok(AdversarialEmbedding {
            vector: g.value(f.enc.pooled).data.clone(),
            epsilon_used: epsilon,
        })
    }

    /// Value and parameter gradients of one training objective in inference
    /// mode, with a fixed (detached) perturbation of the token embeddings.
    pub fn objective(
        &self,
        ids: &[usize],
        label: bool,
        perturbation: &Matrix,
        beta: f64,
        which: Objective,
    ) -> (f64, Vec<Matrix>) {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let clean = self.forward(&mut g, &nodes, ids, None, None);
        let adv = self.forward(&mut g, &nodes, ids, Some(perturbation), None);
        let ce = graph_cross_entropy(&mut g, clean.probs, label as usize);
        let kl = graph_kl_consistency(&mut g, clean.probs, adv.probs);
        let root = match which {
            Objective::CrossEntropy => ce,
            Objective::Consistency => kl,
            Objective::Total => {
                let weighted = g.scale(kl, beta);
                g.add(ce, weighted)
            }
        };
        let grads = g.backward(root);
        (g.scalar(root), param_grads(&grads, &nodes, &self.params))
    }

    /// One training step for one sample: returns the total loss, its
    /// cross-entropy part, and parameter gradients.
    fn sample_step(
        &self,
        ids: &[usize],
        label: bool,
        cfg: &TrainingConfig,
        stream: [u64; 3],
    ) -> (f64, f64, Vec<Matrix>) {
        let mut clean_rng = stream_rng(cfg.seed, &[STREAM_DROPOUT, stream[0], stream[1], stream[2], 0]);
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let clean = self.forward(&mut g, &nodes, ids, None, Some(&mut clean_rng));
        let ce = graph_cross_entropy(&mut g, clean.probs, label as usize);
        let ce_value = g.scalar(ce);
        let root = if cfg.adversarial {
            let (rows, cols) = g.value(clean.enc.token_emb).shape();
            let emb_grad = g
                .backward_to(ce, clean.enc.token_emb)
                .get_or_zeros(clean.enc.token_emb, rows, cols);
            // A saturated sample has no gradient direction; it gets no push.
            let r = fgm_perturb(&emb_grad.data, cfg.epsilon)
                .map(|r| Matrix::from_vec(rows, cols, r))
                .unwrap_or_else(|_| Matrix::zeros(rows, cols));
            let mut adv_rng = stream_rng(cfg.seed, &[STREAM_DROPOUT, stream[0], stream[1], stream[2], 1]);
            let adv = self.forward(&mut g, &nodes, ids, Some(&r), Some(&mut adv_rng));
            let kl = graph_kl_consistency(&mut g, clean.probs, adv.probs);
            let weighted = g.scale(kl, cfg.beta);
            g.add(ce, weighted)
        } else {
            ce
        };
        let grads = g.backward(root);
        (g.scalar(root), ce_value, param_grads(&grads, &nodes, &self.params))
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    /// Mean total loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub train_size: usize,
    pub val_size: usize,
}

/// Deterministic train/validation split: `(train, validation)` indices.
/// With `fraction == 0` the validation set is the training set.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, &[STREAM_SPLIT]));
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return (idx.clone(), idx);
    }
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Visiting order of the training samples in `epoch`.
pub fn epoch_order(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    order.shuffle(&mut stream_rng(seed, &[STREAM_SHUFFLE, epoch as u64]));
    order
}

/// Train on `(method, is_defective)` pairs; returns the parameters that scored
/// best on the validation split.
pub fn train_detector(
    dataset: &[(Method, bool)],
    cfg: &TrainingConfig,
) -> Result<(DetectorModel, TrainingReport), DetectorError> {
    let samples = dataset
        .iter()
        .map(|(m, label)| Ok((method_lexemes(m)?, *label)))
        .collect::<Result<Vec<_>, DetectorError>>()?;
    train_on_lexemes(&samples, cfg)
}

pub(crate) fn train_on_lexemes(
    samples: &[(Vec<String>, bool)],
    cfg: &TrainingConfig,
) -> Result<(DetectorModel, TrainingReport), DetectorError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    if samples.iter().all(|s| s.1) || samples.iter().all(|s| !s.1) {
        return Err(DetectorError::SingleClassDataset);
    }
    if samples.iter().any(|s| s.0.is_empty()) {
        return Err(DetectorError::EmptyInput);
    }
    let (train, val) = split_indices(samples.len(), cfg.validation_fraction, cfg.seed);
    let vocab = Vocab::build(train.iter().map(|&i| samples[i].0.as_slice()), cfg.encoder.max_vocab);
    let encoded: Vec<(Vec<usize>, bool)> = samples
        .iter()
        .map(|(lex, label)| (vocab.ids(lex), *label))
        .collect();

    let mut model = DetectorModel::new(cfg.encoder.clone(), vocab, cfg.seed);
    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let mut report = TrainingReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        train_size: train.len(),
        val_size: val.len(),
    };
    let mut best_params = model.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let order = epoch_order(&train, cfg.seed, epoch);
        let (mut loss_sum, mut ce_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (ids, label) = &encoded[i];
                let (loss, ce, grads) =
                    model.sample_step(ids, *label, cfg, [epoch as u64, i as u64, 0]);
                batch_loss += loss;
                ce_sum += ce;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let acc: Vec<Matrix> = acc.into_iter().map(|a| a.scale(inv)).collect();
            opt.step(&mut model.params, &acc);
            report.step_losses.push(batch_loss * inv);
            loss_sum += batch_loss;
        }

        let (val_loss, val_accuracy) = evaluate(&model, &encoded, &val);
        let n = order.len() as f64;
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_ce: ce_sum / n,
            val_loss,
            val_accuracy,
        });
        let improved = val_accuracy > report.best_val_accuracy + 1e-12
            || (val_accuracy >= report.best_val_accuracy - 1e-12 && val_loss < best_loss - 1e-4);
        if improved {
            report.best_epoch = epoch;
            report.best_val_accuracy = val_accuracy;
            best_loss = val_loss;
            best_params = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, report))
}

/// Mean clean cross-entropy and accuracy over `indices` in inference mode.
fn evaluate(model: &DetectorModel, encoded: &[(Vec<usize>, bool)], indices: &[usize]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in indices {
        let (ids, label) = &encoded[i];
        let p = model.distribution(ids, None);
        loss += super::loss::cross_entropy_loss(&p, &if *label { [0.0, 1.0] } else { [1.0, 0.0] });
        if Prediction::from_distribution(&p).is_defective() == *label {
            correct += 1;
        }
    }
    let n = indices.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{detector_corpus, SynthConfig};

    fn tiny_config() -> TrainingConfig {
        TrainingConfig {
            max_epochs: 3,
            encoder: EncoderConfig {
                embed_dim: 16,
                n_heads: 2,
                ff_dim: 32,
                ..EncoderConfig::default()
            },
            ..TrainingConfig::default()
        }
    }

    fn corpus(n: usize, seed: u64) -> Vec<(Method, bool)> {
        detector_corpus(&SynthConfig { samples: n, seed, ..SynthConfig::default() })
            .into_iter()
            .map(|s| (s.method, s.label))
            .collect()
    }

    #[test]
    fn rejects_single_class_and_empty() {
        let data: Vec<_> = corpus(20, 1).into_iter().filter(|s| s.1).collect();
        assert_eq!(
            train_detector(&data, &tiny_config()).unwrap_err(),
            DetectorError::SingleClassDataset
        );
        assert_eq!(
            train_detector(&[], &tiny_config()).unwrap_err(),
            DetectorError::EmptyDataset
        );
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = corpus(24, 2);
        let (a, ra) = train_detector(&data, &tiny_config()).unwrap();
        let (b, rb) = train_detector(&data, &tiny_config()).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(ra, rb);
    }

    #[test]
    fn zero_beta_matches_plain_cross_entropy_bit_for_bit() {
        let data = corpus(24, 3);
        let adv = TrainingConfig { beta: 0.0, epsilon: 3.0, ..tiny_config() };
        let plain = TrainingConfig { adversarial: false, ..adv.clone() };
        let (ma, ra) = train_detector(&data, &adv).unwrap();
        let (mb, rb) = train_detector(&data, &plain).unwrap();
        assert_eq!(ra.step_losses, rb.step_losses);
        assert_eq!(ma.checksum(), mb.checksum());
    }

    #[test]
    fn inference_is_deterministic_and_normalized() {
        let data = corpus(16, 4);
        let model = DetectorModel::new(tiny_config().encoder, Vocab::from(vec!["<unk>".into()]), 0);
        let m = &data[0].0;
        let p1 = super::super::predict_defect(&model, m).unwrap();
        let p2 = super::super::predict_defect(&model, m).unwrap();
        assert_eq!(p1, p2);
        assert!((p1.prob_clean + p1.prob_defective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn embeddings_have_shape_and_react_to_tokens() {
        let lex: Vec<String> = "int a = b + 1 ;".split(' ').map(String::from).collect();
        let vocab = Vocab::build([lex.as_slice()], 100);
        let model = DetectorModel::new(tiny_config().encoder, vocab, 5);
        let e1 = model.embed_lexemes(&lex).unwrap();
        assert_eq!(e1.vector.len(), 16);
        assert_eq!(e1, model.embed_lexemes(&lex).unwrap());
        let mut other = lex.clone();
        other[3] = "a".into();
        assert_ne!(e1, model.embed_lexemes(&other).unwrap());
        let empty: [&str; 0] = [];
        assert_eq!(model.embed_lexemes(&empty).unwrap_err(), DetectorError::EmptyInput);
    }

    #[test]
    fn adversarial_embedding_moves_by_perturbation() {
        let lex: Vec<String> = "return x * y ;".split(' ').map(String::from).collect();
        let vocab = Vocab::build([lex.as_slice()], 100);
        let model = DetectorModel::new(tiny_config().encoder, vocab, 6);
        let clean = model.embed_lexemes(&lex).unwrap();
        let adv = model.adversarial_embedding(&lex, true, 1.0).unwrap();
        assert_eq!(adv.epsilon_used, 1.0);
        assert_ne!(clean.vector, adv.vector);
        let ids = model.vocab.ids(&lex);
        let r = model.perturbation(&ids, true, 0.7).unwrap();
        assert!((r.frobenius_norm() - 0.7).abs() < 1e-9);
    }
}
