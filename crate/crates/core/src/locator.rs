//! Statement-level defect localization.
//!
//! Each statement of a method is encoded on its own (positions restart at
//! zero), a linear head maps the pooled statement vector to a scalar logit,
//! and a softmax over the method's statements ranks them. Training treats the
//! labels as multi-hot and applies a binary cross-entropy per statement.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code_model::{CodeError, Method, TokenKind};
use crate::detector::{
    epoch_order, split_indices, EncoderConfig, EncoderLayout, TrainingConfig, Vocab,
};
use crate::nn::block::{bind_params, param_grads, xavier};
use crate::nn::{softmax, stream_rng, Adam, Graph, Matrix, NodeId, ParamId, ParamStore};

const STREAM_INIT: u64 = 11;
const STREAM_DROPOUT: u64 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocatorError {
    #[error("method has no statements")]
    EmptyMethod,
    #[error("sample `{0}` has no labeled defective statement")]
    UnlabeledSample(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Code(#[from] CodeError),
}

/// One pooled embedding row per statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl StatementMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectLocation {
    /// Sorted 0-based statement indices.
    pub statement_indices: Vec<usize>,
    /// Softmax over all statements, in statement order.
    pub scores: Vec<f64>,
}

/// Serialized form of a location, one per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub method_id: String,
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

/// A training sample: a method and the 1-based lines holding its defect.
#[derive(Debug, Clone)]
pub struct LocatorSample {
    pub id: String,
    pub method: Method,
    pub defect_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatorModel {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub encoder: EncoderLayout,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Comment-free lexemes of each statement. A statement made only of
/// comments yields an empty list.
pub fn statement_lexemes(method: &Method) -> Result<Vec<Vec<String>>, CodeError> {
    let tokens = method.body_tokens()?;
    Ok(method
        .statements
        .iter()
        .map(|s| {
            tokens[s.token_span.clone()]
                .iter()
                .filter(|t| t.kind != TokenKind::Comment)
                .map(|t| t.text.clone())
                .collect()
        })
        .collect())
}

impl LocatorModel {
    pub fn new(config: EncoderConfig, vocab: Vocab, seed: u64) -> Self {
        let mut rng = stream_rng(seed, &[STREAM_INIT]);
        let mut params = ParamStore::new();
        let encoder = EncoderLayout::init(&mut params, &config, vocab.len(), &mut rng);
        let head_w = params.add("head.w", xavier(&mut rng, config.embed_dim, 1));
        let head_b = params.add("head.b", Matrix::zeros(1, 1));
        Self {
            config,
            vocab,
            params,
            encoder,
            head_w,
            head_b,
        }
    }

    /// Vocabulary ids per statement; an empty statement maps to `[<unk>]`.
    fn statement_ids(&self, lexemes: &[Vec<String>]) -> Vec<Vec<usize>> {
        lexemes
            .iter()
            .map(|l| {
                if l.is_empty() {
                    vec![Vocab::UNK_ID]
                } else {
                    self.vocab.ids(l)
                }
            })
            .collect()
    }

    /// Encode every statement; returns pooled nodes and a `1 x n` logit row.
    fn forward(
        &self,
        g: &mut Graph,
        nodes: &[NodeId],
        statements: &[Vec<usize>],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<NodeId>, NodeId) {
        let mut pooled = Vec::with_capacity(statements.len());
        let mut logits = Vec::with_capacity(statements.len());
        for ids in statements {
            let enc = self
                .encoder
                .forward(g, nodes, &self.config, ids, None, rng.as_deref_mut());
            let s = g.matmul(enc.pooled, nodes[self.head_w]);
            logits.push(g.add_bias(s, nodes[self.head_b]));
            pooled.push(enc.pooled);
        }
        let row = g.concat_cols(&logits);
        (pooled, row)
    }

    pub fn embed_statements(&self, method: &Method) -> Result<StatementMatrix, LocatorError> {
        if method.statements.is_empty() {
            return Err(LocatorError::EmptyMethod);
        }
        let ids = self.statement_ids(&statement_lexemes(method)?);
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let (pooled, _) = self.forward(&mut g, &nodes, &ids, None);
        let cols = self.config.embed_dim;
        let values = pooled.iter().flat_map(|&p| g.value(p).data.clone()).collect();
        Ok(StatementMatrix {
            rows: pooled.len(),
            cols,
            values,
        })
    }

    /// Softmax over statement logits, in inference mode.
    pub fn statement_scores(&self, method: &Method) -> Result<Vec<f64>, LocatorError> {
        if method.statements.is_empty() {
            return Err(LocatorError::EmptyMethod);
        }
        let ids = self.statement_ids(&statement_lexemes(method)?);
        Ok(self.scores_from_ids(&ids))
    }

    fn scores_from_ids(&self, ids: &[Vec<usize>]) -> Vec<f64> {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let (_, row) = self.forward(&mut g, &nodes, ids, None);
        softmax(&g.value(row).data)
    }

    /// Mean per-statement binary cross-entropy and parameter gradients.
    fn sample_step(
        &self,
        ids: &[Vec<usize>],
        labels: &[bool],
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Vec<Matrix>) {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let (_, row) = self.forward(&mut g, &nodes, ids, rng);
        // Logit pairs [0, s_i]: the softmax of the pair is the sigmoid of s_i.
        let col = g.transpose(row);
        let zero = g.leaf(Matrix::zeros(ids.len(), 1));
        let pairs = g.concat_cols(&[zero, col]);
        let targets: Vec<Option<usize>> = labels.iter().map(|&l| Some(l as usize)).collect();
        let loss = g.cross_entropy_logits(pairs, &targets);
        let grads = g.backward(loss);
        (g.scalar(loss), param_grads(&grads, &nodes, &self.params))
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }
}

/// Top `top_m` statements by score; ties go to the lower index.
pub fn rank_statements(scores: &[f64], top_m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(top_m).collect();
    picked.sort_unstable();
    picked
}

pub fn embed_statements(model: &LocatorModel, method: &Method) -> Result<StatementMatrix, LocatorError> {
    model.embed_statements(method)
}

pub fn locate_defects(
    model: &LocatorModel,
    method: &Method,
    top_m: usize,
) -> Result<DefectLocation, LocatorError> {
    let scores = model.statement_scores(method)?;
    Ok(DefectLocation {
        statement_indices: rank_statements(&scores, top_m),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatorEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatorReport {
    pub epochs: Vec<LocatorEpoch>,
    pub best_epoch: usize,
    pub best_val_top1: f64,
    pub train_size: usize,
    pub val_size: usize,
}

struct Encoded {
    ids: Vec<Vec<usize>>,
    labels: Vec<bool>,
}

/// Train on methods with labeled defect lines. Only the cross-entropy part of
/// `cfg` applies; `beta`, `epsilon` and `adversarial` are ignored.
pub fn train_locator(
    dataset: &[LocatorSample],
    cfg: &TrainingConfig,
) -> Result<(LocatorModel, LocatorReport), LocatorError> {
    cfg.validate()
        .map_err(|e| LocatorError::InvalidConfig(e.to_string()))?;
    if dataset.is_empty() {
        return Err(LocatorError::EmptyDataset);
    }
    let mut lexemes = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for s in dataset {
        if s.method.statements.is_empty() {
            return Err(LocatorError::EmptyMethod);
        }
        let hit: BTreeSet<usize> = s.method.statements_on_lines(&s.defect_lines).into_iter().collect();
        if hit.is_empty() {
            return Err(LocatorError::UnlabeledSample(s.id.clone()));
        }
        labels.push((0..s.method.statements.len()).map(|i| hit.contains(&i)).collect::<Vec<_>>());
        lexemes.push(statement_lexemes(&s.method)?);
    }

    let (train, val) = split_indices(dataset.len(), cfg.validation_fraction, cfg.seed);
    let vocab = Vocab::build(
        train.iter().flat_map(|&i| lexemes[i].iter().map(Vec::as_slice)),
        cfg.encoder.max_vocab,
    );
    let mut model = LocatorModel::new(cfg.encoder.clone(), vocab, cfg.seed);
    let encoded: Vec<Encoded> = lexemes
        .iter()
        .zip(labels)
        .map(|(lex, labels)| Encoded {
            ids: model.statement_ids(lex),
            labels,
        })
        .collect();

    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let mut report = LocatorReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_top1: f64::NEG_INFINITY,
        train_size: train.len(),
        val_size: val.len(),
    };
    let mut best_params = model.params.clone();
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let order = epoch_order(&train, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.params.zeros_like();
            for &i in batch {
                let mut rng = stream_rng(cfg.seed, &[STREAM_DROPOUT, epoch as u64, i as u64]);
                let (loss, grads) = model.sample_step(&encoded[i].ids, &encoded[i].labels, Some(&mut rng));
                loss_sum += loss;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let acc: Vec<Matrix> = acc.into_iter().map(|a| a.scale(inv)).collect();
            opt.step(&mut model.params, &acc);
        }
        let val_top1 = top1_accuracy(&model, &encoded, &val);
        report.epochs.push(LocatorEpoch {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_top1,
        });
        if val_top1 > report.best_val_top1 + 1e-12 {
            report.best_epoch = epoch;
            report.best_val_top1 = val_top1;
            best_params = model.params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        // Perfect validation ranking cannot improve further.
        if since_best >= cfg.early_stop_patience || val_top1 >= 1.0 {
            break;
        }
    }
    model.params = best_params;
    Ok((model, report))
}

fn top1_accuracy(model: &LocatorModel, encoded: &[Encoded], indices: &[usize]) -> f64 {
    let hits = indices
        .iter()
        .filter(|&&i| {
            let top = rank_statements(&model.scores_from_ids(&encoded[i].ids), 1)[0];
            encoded[i].labels[top]
        })
        .count();
    hits as f64 / indices.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code_model::parse_method_snippet;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 16,
            n_heads: 2,
            ff_dim: 32,
            ..EncoderConfig::default()
        }
    }

    fn method(code: &str) -> Method {
        parse_method_snippet(code, "").unwrap()
    }

    fn model_for(m: &Method) -> LocatorModel {
        let lex = statement_lexemes(m).unwrap();
        LocatorModel::new(tiny(), Vocab::build(lex.iter().map(Vec::as_slice), 100), 3)
    }

    #[test]
    fn statement_matrix_shape_and_content() {
        let m = method("void f() {\n  int a = 1;\n  a++;\n  int a = 1;\n}\n");
        let model = model_for(&m);
        let sm = model.embed_statements(&m).unwrap();
        assert_eq!((sm.rows, sm.cols), (3, 16));
        assert_eq!(sm.row(0), sm.row(2));
        assert_ne!(sm.row(0), sm.row(1));
        assert!(sm.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_statement_scores_one() {
        let m = method("int f() {\n  return 1;\n}\n");
        let loc = locate_defects(&model_for(&m), &m, 1).unwrap();
        assert_eq!(loc.statement_indices, vec![0]);
        assert_eq!(loc.scores, vec![1.0]);
    }

    #[test]
    fn empty_method_is_rejected() {
        let m = method("void f() {\n}\n");
        assert_eq!(locate_defects(&model_for(&m), &m, 1).unwrap_err(), LocatorError::EmptyMethod);
    }

    #[test]
    fn scores_normalize_and_top_n_returns_all() {
        let m = method("void f() {\n  int a = 1;\n  a++;\n  g(a);\n}\n");
        let model = model_for(&m);
        let loc = locate_defects(&model, &m, 10).unwrap();
        assert_eq!(loc.statement_indices, vec![0, 1, 2]);
        assert!((loc.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(loc, locate_defects(&model, &m, 10).unwrap());
    }

    #[test]
    fn ranking_breaks_ties_by_lower_index() {
        assert_eq!(rank_statements(&[0.2, 0.4, 0.4], 1), vec![1]);
        assert_eq!(rank_statements(&[0.25; 4], 2), vec![0, 1]);
        assert_eq!(rank_statements(&[0.1, 0.6, 0.3], 2), vec![1, 2]);
    }

    #[test]
    fn unlabeled_sample_is_rejected() {
        let m = method("void f() {\n  int a = 1;\n}\n");
        let sample = LocatorSample {
            id: "x".into(),
            method: m,
            defect_lines: vec![40],
        };
        assert_eq!(
            train_locator(&[sample], &TrainingConfig::default()).unwrap_err(),
            LocatorError::UnlabeledSample("x".into())
        );
    }

    #[test]
    fn degenerate_labels_on_first_statement_are_fit() {
        let codes = [
            "void f() {\n  int a = 1;\n  a++;\n  g(a);\n}\n",
            "void f() {\n  x = y;\n  int b = 2;\n}\n",
            "void f() {\n  h();\n  k(3);\n  return;\n}\n",
        ];
        let data: Vec<LocatorSample> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| LocatorSample {
                id: i.to_string(),
                method: method(c),
                defect_lines: vec![2],
            })
            .collect();
        let cfg = TrainingConfig {
            validation_fraction: 0.0,
            max_epochs: 60,
            early_stop_patience: 60,
            batch_size: 3,
            learning_rate: 5e-3,
            encoder: tiny(),
            ..TrainingConfig::default()
        };
        let (model, report) = train_locator(&data, &cfg).unwrap();
        assert_eq!(report.best_val_top1, 1.0);
        for s in &data {
            assert_eq!(locate_defects(&model, &s.method, 1).unwrap().statement_indices, vec![0]);
        }
        let (again, _) = train_locator(&data, &cfg).unwrap();
        assert_eq!(model.checksum(), again.checksum());
    }
}
