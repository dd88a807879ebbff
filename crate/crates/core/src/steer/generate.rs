//! Sampling candidate continuations from a [`ToyDecoder`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::stream_rng;

use super::decoder::{ActiveSteering, KvCache, ToyDecoder};
use super::{HeadId, HeadSet, SteerError, SteeringSpec};

const STREAM_SAMPLE: u64 = 31;

/// How a multi-head set is applied across candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    /// Every head of the set is steered in every candidate.
    #[default]
    Simultaneous,
    /// Candidate `i` steers only head `i mod |set|`.
    PerHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Softmax temperature; 0 selects the arg-max (lowest id on ties).
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub mode: SteeringMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_new_tokens: 256,
            mode: SteeringMode::Simultaneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSequence {
    pub index: usize,
    pub token_ids: Vec<usize>,
    pub text: String,
    /// Heads steered for this candidate (empty when steering was inactive).
    pub steered_heads: Vec<HeadId>,
    /// Whether generation stopped at `<eos>`.
    pub finished: bool,
}

fn sample(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let probs = crate::nn::softmax(&scaled);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

struct Prefilled {
    heads: Vec<HeadId>,
    steering: Option<ActiveSteering>,
    cache: KvCache,
    logits: Vec<f64>,
}

fn prefill(model: &ToyDecoder, prompt: &[usize], heads: Vec<HeadId>, spec: &SteeringSpec) -> Prefilled {
    let steering = ActiveSteering::new(model, &heads, spec);
    let mut cache = model.new_cache();
    let mut logits = Vec::new();
    for &t in prompt {
        logits = model.step(&mut cache, t, steering.as_ref(), None);
    }
    let heads = if steering.is_some() { heads } else { Vec::new() };
    Prefilled {
        heads,
        steering,
        cache,
        logits,
    }
}

/// Sample `n_candidates` continuations of `prompt`. Candidate `i` depends only
/// on `(seed, i)` and the inputs, so the result is independent of scheduling.
pub fn generate_candidates(
    model: &ToyDecoder,
    prompt: &[usize],
    head_set: &HeadSet,
    spec: &SteeringSpec,
    n_candidates: usize,
    seed: u64,
    cfg: &GenerationConfig,
) -> Result<Vec<GeneratedSequence>, SteerError> {
    if prompt.is_empty() {
        return Err(SteerError::EmptyPrompt);
    }
    if prompt.len() >= model.config.context {
        return Err(SteerError::ContextOverflow {
            prompt: prompt.len(),
            context: model.config.context,
        });
    }
    model.check_heads(head_set)?;
    if let Some(&p) = spec.highlighted_tokens.iter().find(|&&p| p >= prompt.len()) {
        return Err(SteerError::HighlightOutOfRange {
            position: p,
            prompt_len: prompt.len(),
        });
    }
    let active = !head_set.is_empty() && !spec.is_identity();
    if active && spec.highlighted_tokens.is_empty() {
        return Err(SteerError::EmptyHighlight);
    }
    if n_candidates == 0 {
        return Ok(Vec::new());
    }

    // One shared prompt pass per distinct steering configuration.
    let variants: Vec<Vec<HeadId>> = match cfg.mode {
        SteeringMode::PerHead if active => head_set.heads().iter().map(|&h| vec![h]).collect(),
        _ => vec![head_set.heads().to_vec()],
    };
    let prefilled: Vec<Prefilled> = variants
        .into_par_iter()
        .map(|heads| prefill(model, prompt, heads, spec))
        .collect();

    let out = (0..n_candidates)
        .into_par_iter()
        .map(|i| {
            let base = &prefilled[i % prefilled.len()];
            let mut rng = stream_rng(seed, &[STREAM_SAMPLE, i as u64]);
            let mut cache = base.cache.clone();
            let mut logits = base.logits.clone();
            let mut ids = Vec::new();
            let mut finished = false;
            for _ in 0..cfg.max_new_tokens {
                let tok = sample(&logits, cfg.temperature, &mut rng);
                if tok == ToyDecoder::EOS_ID {
                    finished = true;
                    break;
                }
                ids.push(tok);
                if cache.len() >= model.config.context {
                    break;
                }
                logits = model.step(&mut cache, tok, base.steering.as_ref(), None);
            }
            GeneratedSequence {
                index: i,
                text: model.decode(&ids),
                token_ids: ids,
                steered_heads: base.heads.clone(),
                finished,
            }
        })
        .collect();
    Ok(out)
}
