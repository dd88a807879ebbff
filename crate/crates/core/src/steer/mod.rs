//! Attention steering: post-softmax reweighting of selected heads, and a small
//! decoder-only transformer whose heads can be steered during generation.
//!
//! For a probability row `A`, highlighted key set `S` and coefficient `alpha`,
//! the steered row is `A_t / C` for `t` in `S` and `alpha * A_t / C`
//! elsewhere, with `C = sum_{t in S} A_t + alpha * sum_{t not in S} A_t`.

mod decoder;
mod generate;
pub mod tokenizer;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

pub use decoder::{
    train_decoder, DecoderConfig, DecoderExample, DecoderTrainingConfig, DecoderTrainingReport,
    HeadTrace, LastPositionTrace, ToyDecoder,
};
pub use generate::{generate_candidates, GeneratedSequence, GenerationConfig, SteeringMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteerError {
    #[error("no highlighted position carries probability mass and alpha = 0")]
    EmptyHighlight,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("prompt of {prompt} tokens leaves no room in a context of {context}")]
    ContextOverflow { prompt: usize, context: usize },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("head {0} is outside the model")]
    UnknownHead(HeadId),
    #[error("head {0} listed twice")]
    DuplicateHead(HeadId),
    #[error("highlighted position {position} is outside the prompt ({prompt_len} tokens)")]
    HighlightOutOfRange { position: usize, prompt_len: usize },
    #[error("invalid decoder configuration: {0}")]
    InvalidConfig(String),
}

/// An attention head, 1-based in both coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.head)
    }
}

/// Ordered, duplicate-free set of heads.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HeadId>", into = "Vec<HeadId>")]
pub struct HeadSet {
    heads: Vec<HeadId>,
}

impl HeadSet {
    pub fn new(heads: Vec<HeadId>) -> Result<Self, SteerError> {
        let mut seen = BTreeSet::new();
        for h in &heads {
            if !seen.insert(*h) {
                return Err(SteerError::DuplicateHead(*h));
            }
        }
        Ok(Self { heads })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(head: HeadId) -> Self {
        Self { heads: vec![head] }
    }

    /// Every head of an `L x H` model in (layer, head) order.
    pub fn all(n_layers: usize, n_heads: usize) -> Self {
        Self {
            heads: (1..=n_layers)
                .flat_map(|l| (1..=n_heads).map(move |h| HeadId::new(l, h)))
                .collect(),
        }
    }

    pub fn heads(&self) -> &[HeadId] {
        &self.heads
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn contains(&self, head: HeadId) -> bool {
        self.heads.contains(&head)
    }
}

impl TryFrom<Vec<HeadId>> for HeadSet {
    type Error = SteerError;
    fn try_from(v: Vec<HeadId>) -> Result<Self, SteerError> {
        Self::new(v)
    }
}

impl From<HeadSet> for Vec<HeadId> {
    fn from(s: HeadSet) -> Self {
        s.heads
    }
}

/// Highlighted key positions and the down-scaling coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub highlighted_tokens: BTreeSet<usize>,
    pub alpha: f64,
}

impl SteeringSpec {
    pub fn new(highlighted_tokens: impl IntoIterator<Item = usize>, alpha: f64) -> Result<Self, SteerError> {
        check_alpha(alpha)?;
        Ok(Self {
            highlighted_tokens: highlighted_tokens.into_iter().collect(),
            alpha,
        })
    }

    /// `alpha = 1` leaves every row unchanged.
    pub fn is_identity(&self) -> bool {
        self.alpha == 1.0
    }
}

fn check_alpha(alpha: f64) -> Result<(), SteerError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(SteerError::InvalidAlpha(alpha))
    }
}

/// Reweight one post-softmax attention row. Positions in `highlighted` that
/// fall outside the row are ignored. `alpha = 1` returns the row unchanged.
pub fn reweight_row(row: &[f64], highlighted: &BTreeSet<usize>, alpha: f64) -> Result<Vec<f64>, SteerError> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(row.to_vec());
    }
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (t, &a) in row.iter().enumerate() {
        if highlighted.contains(&t) {
            inside += a;
        } else {
            outside += a;
        }
    }
    let c = inside + alpha * outside;
    if c <= 0.0 {
        return Err(SteerError::EmptyHighlight);
    }
    Ok(row
        .iter()
        .enumerate()
        .map(|(t, &a)| if highlighted.contains(&t) { a / c } else { alpha * a / c })
        .collect())
}

/// `W(A) V`: reweight every row of `attention`, then multiply by `values`.
pub fn steered_head_output(
    attention: &Matrix,
    values: &Matrix,
    highlighted: &BTreeSet<usize>,
    alpha: f64,
) -> Result<Matrix, SteerError> {
    if attention.cols != values.rows {
        return Err(SteerError::DimensionMismatch(format!(
            "attention has {} key columns but values have {} rows",
            attention.cols, values.rows
        )));
    }
    let mut w = Matrix::zeros(attention.rows, attention.cols);
    for r in 0..attention.rows {
        let row = reweight_row(attention.row(r), highlighted, alpha)?;
        w.row_mut(r).copy_from_slice(&row);
    }
    Ok(w.matmul(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn reweight_examples() {
        let out = reweight_row(&[0.5, 0.3, 0.2], &set(&[0]), 0.01).unwrap();
        let expect = [0.5 / 0.505, 0.003 / 0.505, 0.002 / 0.505];
        for (o, e) in out.iter().zip(expect) {
            assert!((o - e).abs() < 1e-12);
        }
        assert!((out[0] - 0.990099).abs() < 1e-6);
        assert!((out[1] - 0.005941).abs() < 1e-6);
        assert!((out[2] - 0.003960).abs() < 1e-6);

        let out = reweight_row(&[0.4, 0.35, 0.25], &set(&[1, 2]), 0.0).unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.583333).abs() < 1e-6);
        assert!((out[2] - 0.416667).abs() < 1e-6);

        let row = [0.1, 0.2, 0.7];
        assert_eq!(reweight_row(&row, &set(&[2]), 1.0).unwrap(), row.to_vec());
    }

    #[test]
    fn reweight_errors() {
        assert_eq!(
            reweight_row(&[0.0, 1.0], &set(&[0]), 0.0).unwrap_err(),
            SteerError::EmptyHighlight
        );
        assert_eq!(reweight_row(&[1.0], &set(&[]), 0.0).unwrap_err(), SteerError::EmptyHighlight);
        assert!(matches!(reweight_row(&[1.0], &set(&[0]), 1.5), Err(SteerError::InvalidAlpha(_))));
        // With alpha > 0 an empty highlight is just the identity up to rounding.
        let out = reweight_row(&[0.6, 0.4], &set(&[]), 0.3).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn head_output_dimensions_are_checked() {
        let a = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let v = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert!(matches!(
            steered_head_output(&a, &v, &set(&[0]), 0.5),
            Err(SteerError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn one_hot_values_pick_the_highlighted_row() {
        let a = Matrix::from_rows(&[vec![0.2, 0.5, 0.3]]);
        let v = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let out = steered_head_output(&a, &v, &set(&[2]), 0.0).unwrap();
        assert_eq!(out.row(0), v.row(2));
    }

    #[test]
    fn head_set_rejects_duplicates_and_serializes_as_list() {
        let h = HeadId::new(1, 2);
        assert_eq!(HeadSet::new(vec![h, h]).unwrap_err(), SteerError::DuplicateHead(h));
        let s = HeadSet::new(vec![HeadId::new(2, 1), h]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"[{"layer":2,"head":1},{"layer":1,"head":2}]"#);
        assert_eq!(serde_json::from_str::<HeadSet>(&json).unwrap(), s);
        assert!(serde_json::from_str::<HeadSet>(r#"[{"layer":1,"head":1},{"layer":1,"head":1}]"#).is_err());
        assert_eq!(HeadSet::all(2, 2).len(), 4);
    }
}
