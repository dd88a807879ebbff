//! A small decoder-only transformer with two evaluation routes: the autograd
//! tape (used for training) and a plain incremental pass with a key/value
//! cache and per-head steering hooks (used for generation).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::detector::Vocab;
use crate::nn::block::{bind_params, block_forward, normal_init, param_grads, xavier, BlockParams};
use crate::nn::{dot, gelu, softmax, stream_rng, Adam, Graph, Matrix, NodeId, ParamId, ParamStore};

use super::tokenizer;
use super::{reweight_row, HeadId, HeadSet, SteerError, SteeringSpec};

const STREAM_INIT: u64 = 21;
const STREAM_SHUFFLE: u64 = 22;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    /// Maximum sequence length (prompt plus generated tokens).
    pub context: usize,
    pub max_vocab: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            model_dim: 128,
            ff_dim: 512,
            context: 512,
            max_vocab: 8000,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), SteerError> {
        let bad = |m: &str| Err(SteerError::InvalidConfig(m.to_string()));
        if self.n_layers == 0 || self.n_heads == 0 || self.model_dim == 0 || self.ff_dim == 0 {
            return bad("layers, heads, model_dim and ff_dim must be positive");
        }
        if self.model_dim % self.n_heads != 0 {
            return bad("model_dim must be divisible by n_heads");
        }
        if self.context < 2 {
            return bad("context must hold at least two tokens");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDecoder {
    pub config: DecoderConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub blocks: Vec<BlockParams>,
    pub ln_f_g: ParamId,
    pub ln_f_b: ParamId,
    pub lm_head: ParamId,
}

/// Per-layer keys and values of every position processed so far.
#[derive(Debug, Clone)]
pub(crate) struct KvCache {
    keys: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<Vec<f64>>>,
    len: usize,
}

impl KvCache {
    pub(crate) fn len(&self) -> usize {
        self.len
    }
}

/// Steering as applied inside the incremental pass.
#[derive(Debug, Clone)]
pub(crate) struct ActiveSteering {
    /// `layer * n_heads + head`, 0-based.
    mask: Vec<bool>,
    highlighted: BTreeSet<usize>,
    alpha: f64,
}

impl ActiveSteering {
    /// `None` when the configuration cannot change any attention row.
    pub(crate) fn new(model: &ToyDecoder, heads: &[HeadId], spec: &SteeringSpec) -> Option<Self> {
        if heads.is_empty() || spec.is_identity() {
            return None;
        }
        let h = model.config.n_heads;
        let mut mask = vec![false; model.config.n_layers * h];
        for id in heads {
            mask[(id.layer - 1) * h + (id.head - 1)] = true;
        }
        Some(Self {
            mask,
            highlighted: spec.highlighted_tokens.clone(),
            alpha: spec.alpha,
        })
    }
}

/// Attention of one head at the last position.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    /// Attention row over keys `0..=pos`, after any steering.
    pub attention: Vec<f64>,
    /// This head's value vectors, one row per key position.
    pub values: Matrix,
    /// `attention * values`.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LastPositionTrace {
    pub logits: Vec<f64>,
    /// `layers[l][h]`, 0-based.
    pub layers: Vec<Vec<HeadTrace>>,
}

fn layer_norm_row(x: &[f64], gamma: &Matrix, beta: &Matrix) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let is = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .enumerate()
        .map(|(c, v)| (v - mean) * is * gamma.data[c] + beta.data[c])
        .collect()
}

fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    Matrix::row_vector(x.to_vec()).matmul(w).data
}

impl ToyDecoder {
    pub const EOS: &'static str = "<eos>";
    pub const EOS_ID: usize = 1;

    /// Vocabulary over the lexemes of `texts` with `<unk>` and `<eos>`
    /// reserved as ids 0 and 1.
    pub fn build_vocab<S: AsRef<str>>(texts: &[S], max_size: usize) -> Vocab {
        let seqs: Vec<Vec<String>> = texts.iter().map(|t| tokenizer::lexemes(t.as_ref())).collect();
        let counted = Vocab::build(seqs.iter().map(Vec::as_slice), max_size.max(2) - 1);
        let mut tokens: Vec<String> = vec![Vocab::UNK.to_string(), Self::EOS.to_string()];
        tokens.extend(
            (1..counted.len())
                .map(|i| counted.token(i).to_string())
                .filter(|t| t != Self::EOS),
        );
        Vocab::from(tokens)
    }

    pub fn new(config: DecoderConfig, vocab: Vocab, seed: u64) -> Result<Self, SteerError> {
        config.validate()?;
        if vocab.len() < 2 || vocab.token(Self::EOS_ID) != Self::EOS {
            return Err(SteerError::InvalidConfig(format!(
                "vocabulary must reserve id {} for {}",
                Self::EOS_ID,
                Self::EOS
            )));
        }
        let mut rng = stream_rng(seed, &[STREAM_INIT]);
        let mut params = ParamStore::new();
        let d = config.model_dim;
        let tok_emb = params.add("dec.tok_emb", normal_init(&mut rng, vocab.len(), d, 0.5));
        let pos_emb = params.add("dec.pos_emb", normal_init(&mut rng, config.context, d, 0.1));
        let blocks = (0..config.n_layers)
            .map(|l| BlockParams::init(&mut params, &format!("dec.block{l}"), d, config.ff_dim, &mut rng))
            .collect();
        let ln_f_g = params.add("dec.ln_f.g", Matrix::filled(1, d, 1.0));
        let ln_f_b = params.add("dec.ln_f.b", Matrix::zeros(1, d));
        let lm_head = params.add("dec.lm_head", xavier(&mut rng, d, vocab.len()));
        Ok(Self {
            config,
            vocab,
            params,
            tok_emb,
            pos_emb,
            blocks,
            ln_f_g,
            ln_f_b,
            lm_head,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.config.n_heads
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.vocab.ids(&tokenizer::lexemes(text))
    }

    /// Render ids (up to the first `<eos>`) back to source text.
    pub fn decode(&self, ids: &[usize]) -> String {
        let lexemes: Vec<String> = ids
            .iter()
            .take_while(|&&i| i != Self::EOS_ID)
            .map(|&i| self.vocab.token(i).to_string())
            .collect();
        tokenizer::render(&lexemes)
    }

    pub fn check_heads(&self, heads: &HeadSet) -> Result<(), SteerError> {
        for &h in heads.heads() {
            if h.layer == 0 || h.layer > self.config.n_layers || h.head == 0 || h.head > self.config.n_heads {
                return Err(SteerError::UnknownHead(h));
            }
        }
        Ok(())
    }

    // ----- tape route -------------------------------------------------

    fn graph_logits(&self, g: &mut Graph, nodes: &[NodeId], ids: &[usize]) -> NodeId {
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = g.gather(nodes[self.tok_emb], ids);
        let pos = g.gather(nodes[self.pos_emb], &positions);
        let mut x = g.add(tok, pos);
        for b in &self.blocks {
            x = block_forward(g, nodes, b, x, self.config.n_heads, true, 0.0, None);
        }
        let x = g.layer_norm(x, nodes[self.ln_f_g], nodes[self.ln_f_b]);
        g.matmul(x, nodes[self.lm_head])
    }

    /// Unsteered logits at every position through the training route.
    pub fn logits_reference(&self, ids: &[usize]) -> Matrix {
        let mut g = Graph::new();
        let nodes = bind_params(&mut g, &self.params);
        let out = self.graph_logits(&mut g, &nodes, ids);
        g.value(out).clone()
    }

    // ----- incremental route ------------------------------------------

    pub(crate) fn new_cache(&self) -> KvCache {
        KvCache {
            keys: vec![Vec::new(); self.config.n_layers],
            values: vec![Vec::new(); self.config.n_layers],
            len: 0,
        }
    }

    /// Process one token at position `cache.len()` and return next-token
    /// logits. `trace`, when given, receives per-head attention of this
    /// position.
    pub(crate) fn step(
        &self,
        cache: &mut KvCache,
        token: usize,
        steering: Option<&ActiveSteering>,
        mut trace: Option<&mut Vec<Vec<HeadTrace>>>,
    ) -> Vec<f64> {
        let pos = cache.len;
        let (n_heads, dh) = (self.config.n_heads, self.config.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let p = |id: ParamId| self.params.get(id);
        let mut x: Vec<f64> = p(self.tok_emb)
            .row(token)
            .iter()
            .zip(p(self.pos_emb).row(pos))
            .map(|(a, b)| a + b)
            .collect();
        for (l, b) in self.blocks.iter().enumerate() {
            let h = layer_norm_row(&x, p(b.ln1_g), p(b.ln1_b));
            let q = vec_mat(&h, p(b.wq));
            cache.keys[l].push(vec_mat(&h, p(b.wk)));
            cache.values[l].push(vec_mat(&h, p(b.wv)));
            let (keys, values) = (&cache.keys[l], &cache.values[l]);
            let mut cat = vec![0.0; self.config.model_dim];
            let mut layer_trace = Vec::new();
            for j in 0..n_heads {
                let span = j * dh..(j + 1) * dh;
                let scores: Vec<f64> = keys
                    .iter()
                    .map(|k| dot(&q[span.clone()], &k[span.clone()]) * scale)
                    .collect();
                let mut probs = softmax(&scores);
                if let Some(s) = steering.filter(|s| s.mask[l * n_heads + j]) {
                    // Rows that see no highlighted key under alpha = 0 have no
                    // defined reweighting and are left as they are.
                    if let Ok(w) = reweight_row(&probs, &s.highlighted, s.alpha) {
                        probs = w;
                    }
                }
                let out = &mut cat[span.clone()];
                for (t, &a) in probs.iter().enumerate() {
                    for (o, v) in out.iter_mut().zip(&values[t][span.clone()]) {
                        *o += a * v;
                    }
                }
                if trace.is_some() {
                    let vals = Matrix::from_rows(&values.iter().map(|v| v[span.clone()].to_vec()).collect::<Vec<_>>());
                    layer_trace.push(HeadTrace {
                        attention: probs,
                        values: vals,
                        output: out.to_vec(),
                    });
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(layer_trace);
            }
            let attn = vec_mat(&cat, p(b.wo));
            for (xi, a) in x.iter_mut().zip(&attn) {
                *xi += a;
            }
            let h2 = layer_norm_row(&x, p(b.ln2_g), p(b.ln2_b));
            let f: Vec<f64> = vec_mat(&h2, p(b.w1))
                .iter()
                .zip(&p(b.b1).data)
                .map(|(v, bias)| gelu(v + bias))
                .collect();
            let f = vec_mat(&f, p(b.w2));
            for ((xi, v), bias) in x.iter_mut().zip(&f).zip(&p(b.b2).data) {
                *xi += v + bias;
            }
        }
        cache.len += 1;
        let xf = layer_norm_row(&x, p(self.ln_f_g), p(self.ln_f_b));
        vec_mat(&xf, p(self.lm_head))
    }

    /// Logits at every position through the incremental route.
    pub fn logits_incremental(
        &self,
        ids: &[usize],
        heads: &HeadSet,
        spec: &SteeringSpec,
    ) -> Result<Matrix, SteerError> {
        self.check_heads(heads)?;
        let steering = ActiveSteering::new(self, heads.heads(), spec);
        let mut cache = self.new_cache();
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&t| self.step(&mut cache, t, steering.as_ref(), None))
            .collect();
        Ok(Matrix::from_rows(&rows))
    }

    /// Per-head attention and outputs at the last position of `ids`.
    pub fn trace_last(
        &self,
        ids: &[usize],
        heads: &HeadSet,
        spec: &SteeringSpec,
    ) -> Result<LastPositionTrace, SteerError> {
        let Some((&last, prefix)) = ids.split_last() else {
            return Err(SteerError::EmptyPrompt);
        };
        self.check_heads(heads)?;
        let steering = ActiveSteering::new(self, heads.heads(), spec);
        let mut cache = self.new_cache();
        for &t in prefix {
            self.step(&mut cache, t, steering.as_ref(), None);
        }
        let mut layers = Vec::new();
        let logits = self.step(&mut cache, last, steering.as_ref(), Some(&mut layers));
        Ok(LastPositionTrace { logits, layers })
    }
}

/// A prompt and the test the model should produce for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderExample {
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderTrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DecoderTrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 3e-3,
            batch_size: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderTrainingReport {
    /// Mean per-token cross-entropy over target tokens, per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Teacher-forced training: cross-entropy on the target tokens and the
/// closing `<eos>`, conditioned on the prompt.
pub fn train_decoder(
    model: &mut ToyDecoder,
    examples: &[DecoderExample],
    cfg: &DecoderTrainingConfig,
) -> Result<DecoderTrainingReport, SteerError> {
    if examples.is_empty() {
        return Err(SteerError::InvalidConfig("no training examples".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(SteerError::InvalidConfig("batch_size and learning_rate must be positive".into()));
    }
    let mut encoded = Vec::with_capacity(examples.len());
    for ex in examples {
        let prompt = model.encode(&ex.prompt);
        if prompt.is_empty() {
            return Err(SteerError::EmptyPrompt);
        }
        let mut seq = prompt.clone();
        seq.extend(model.encode(&ex.target));
        seq.push(ToyDecoder::EOS_ID);
        if seq.len() > model.config.context {
            return Err(SteerError::ContextOverflow {
                prompt: seq.len(),
                context: model.config.context,
            });
        }
        let targets: Vec<Option<usize>> = (0..seq.len() - 1)
            .map(|p| (p + 1 >= prompt.len()).then(|| seq[p + 1]))
            .collect();
        seq.pop();
        encoded.push((seq, targets));
    }

    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let mut report = DecoderTrainingReport { epoch_losses: Vec::new() };
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream_rng(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.params.zeros_like();
            for &i in batch {
                let (ids, targets) = &encoded[i];
                let mut g = Graph::new();
                let nodes = bind_params(&mut g, &model.params);
                let logits = model.graph_logits(&mut g, &nodes, ids);
                let loss = g.cross_entropy_logits(logits, targets);
                total += g.scalar(loss);
                let grads = g.backward(loss);
                for (a, gr) in acc.iter_mut().zip(param_grads(&grads, &nodes, &model.params)) {
                    a.add_assign(&gr);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let acc: Vec<Matrix> = acc.into_iter().map(|a| a.scale(inv)).collect();
            opt.step(&mut model.params, &acc);
        }
        report.epoch_losses.push(total / encoded.len() as f64);
    }
    Ok(report)
}
