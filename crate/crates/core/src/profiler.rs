//! Head profiling: steer each attention head alone, score it on a profiling
//! set, and keep the `k` best heads.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::steer::{HeadId, HeadSet, SteerError, SteeringSpec, ToyDecoder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfilerError {
    #[error("profiling set is empty")]
    EmptyProfilingSet,
    #[error("scorer returned a non-finite score for head {0}")]
    NonFiniteScore(HeadId),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("scorer failed on head {head}: {message}")]
    Scorer { head: HeadId, message: String },
}

/// One profiling prompt with its highlighted positions and the reference
/// error-triggering test used by likelihood scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingItem {
    pub id: String,
    pub prompt: String,
    pub highlighted: BTreeSet<usize>,
    #[serde(default)]
    pub reference_test: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfilingSet {
    pub items: Vec<ProfilingItem>,
}

impl ProfilingSet {
    pub const DEFAULT_SIZE: usize = 100;

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The first `size` items.
    pub fn truncated(&self, size: usize) -> Self {
        Self {
            items: self.items.iter().take(size).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadScore {
    pub layer: usize,
    pub head: usize,
    pub score: f64,
}

impl HeadScore {
    pub fn id(&self) -> HeadId {
        HeadId::new(self.layer, self.head)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingReport {
    /// One entry per head, in (layer, head) order.
    pub scores: Vec<HeadScore>,
    pub selected: HeadSet,
    pub k: usize,
    pub alpha: f64,
}

/// Evaluates one head steered alone over a profiling set.
pub trait HeadScorer: Sync {
    fn score(&self, model: &ToyDecoder, head: HeadId, set: &ProfilingSet, alpha: f64) -> Result<f64, String>;
}

impl<F> HeadScorer for F
where
    F: Fn(&ToyDecoder, HeadId, &ProfilingSet, f64) -> Result<f64, String> + Sync,
{
    fn score(&self, model: &ToyDecoder, head: HeadId, set: &ProfilingSet, alpha: f64) -> Result<f64, String> {
        self(model, head, set, alpha)
    }
}

/// Top `k` heads by score; equal scores go to the lower (layer, head).
pub fn select_top_k(scores: &[HeadScore], k: usize) -> HeadSet {
    let mut ranked: Vec<&HeadScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id().cmp(&b.id())));
    HeadSet::new(ranked.into_iter().take(k).map(HeadScore::id).collect())
        .expect("head ids are distinct")
}

/// Score every head of `model` steered alone and select the top `k`.
/// The model is only read.
pub fn profile_heads(
    model: &ToyDecoder,
    set: &ProfilingSet,
    alpha: f64,
    scorer: &dyn HeadScorer,
    k: usize,
) -> Result<ProfilingReport, ProfilerError> {
    if set.is_empty() {
        return Err(ProfilerError::EmptyProfilingSet);
    }
    if k == 0 {
        return Err(ProfilerError::InvalidK);
    }
    let heads = HeadSet::all(model.n_layers(), model.n_heads());
    let scores = heads
        .heads()
        .par_iter()
        .map(|&head| {
            let score = scorer
                .score(model, head, set, alpha)
                .map_err(|message| ProfilerError::Scorer { head, message })?;
            if !score.is_finite() {
                return Err(ProfilerError::NonFiniteScore(head));
            }
            Ok(HeadScore {
                layer: head.layer,
                head: head.head,
                score,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProfilingReport {
        selected: select_top_k(&scores, k),
        scores,
        k,
        alpha,
    })
}

/// Proxy scorer: mean log-likelihood of each item's reference test given its
/// prompt, with only the scored head steered toward the item's highlights.
#[derive(Debug, Clone, Copy, Default)]
pub struct LikelihoodScorer;

impl LikelihoodScorer {
    pub fn log_likelihood(
        model: &ToyDecoder,
        item: &ProfilingItem,
        heads: &HeadSet,
        alpha: f64,
    ) -> Result<f64, SteerError> {
        let prompt = model.encode(&item.prompt);
        let mut ids = prompt.clone();
        ids.extend(model.encode(&item.reference_test));
        ids.push(ToyDecoder::EOS_ID);
        if ids.len() > model.config.context {
            return Err(SteerError::ContextOverflow {
                prompt: ids.len(),
                context: model.config.context,
            });
        }
        let spec = SteeringSpec::new(item.highlighted.iter().copied(), alpha)?;
        let logits = model.logits_incremental(&ids[..ids.len() - 1], heads, &spec)?;
        let mut total = 0.0;
        for p in prompt.len() - 1..ids.len() - 1 {
            let row = logits.row(p);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            total += row[ids[p + 1]] - lse;
        }
        Ok(total)
    }
}

impl HeadScorer for LikelihoodScorer {
    fn score(&self, model: &ToyDecoder, head: HeadId, set: &ProfilingSet, alpha: f64) -> Result<f64, String> {
        let heads = HeadSet::single(head);
        let mut total = 0.0;
        for item in &set.items {
            total += Self::log_likelihood(model, item, &heads, alpha).map_err(|e| e.to_string())?;
        }
        Ok(total / set.items.len() as f64)
    }
}
