//! Token-embedding + self-attention encoder with mean pooling.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::block::{block_forward, dropout, normal_init, BlockParams};
use crate::nn::{Graph, Matrix, NodeId, ParamId, ParamStore};

/// Lexeme vocabulary; id 0 is reserved for out-of-vocabulary lexemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const UNK: &'static str = "<unk>";
    pub const UNK_ID: usize = 0;

    /// Build from token sequences, keeping at most `max_size` lexemes
    /// (most frequent first, ties by lexeme).
    pub fn build<'a, I, S>(sequences: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_ref().to_string()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens: Vec<String> = std::iter::once(Self::UNK.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t).filter(|t| t != Self::UNK))
            .take(max_size.max(1))
            .collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    /// Longer inputs are truncated to their first `max_len` tokens.
    pub max_len: usize,
    pub dropout: f64,
    pub max_vocab: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 128,
            max_len: 256,
            dropout: 0.1,
            max_vocab: 5000,
        }
    }
}

/// Parameter ids of the encoder inside its owner's [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayout {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub blocks: Vec<BlockParams>,
    pub ln_f_g: ParamId,
    pub ln_f_b: ParamId,
}

/// Tape nodes produced by one encoder pass.
#[derive(Debug, Clone, Copy)]
pub struct EncoderNodes {
    /// Token embeddings before positions are added; the FGM target.
    pub token_emb: NodeId,
    /// Mean-pooled sequence representation (`1 x embed_dim`).
    pub pooled: NodeId,
}

impl EncoderLayout {
    pub fn init(store: &mut ParamStore, cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.embed_dim;
        let tok_emb = store.add("enc.tok_emb", normal_init(rng, vocab_size, d, 0.5));
        let pos_emb = store.add("enc.pos_emb", normal_init(rng, cfg.max_len, d, 0.1));
        let blocks = (0..cfg.n_layers)
            .map(|l| BlockParams::init(store, &format!("enc.block{l}"), d, cfg.ff_dim, rng))
            .collect();
        let ln_f_g = store.add("enc.ln_f.g", Matrix::filled(1, d, 1.0));
        let ln_f_b = store.add("enc.ln_f.b", Matrix::zeros(1, d));
        Self {
            tok_emb,
            pos_emb,
            blocks,
            ln_f_g,
            ln_f_b,
        }
    }

    /// Encode `ids` (already truncated by the caller or here to `max_len`).
    /// `perturbation`, when given, is added to the token embeddings and must
    /// have shape `len x embed_dim`.
    pub fn forward(
        &self,
        g: &mut Graph,
        nodes: &[NodeId],
        cfg: &EncoderConfig,
        ids: &[usize],
        perturbation: Option<&Matrix>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> EncoderNodes {
        let ids = &ids[..ids.len().min(cfg.max_len)];
        let positions: Vec<usize> = (0..ids.len()).collect();
        let token_emb = g.gather(nodes[self.tok_emb], ids);
        let mut x = match perturbation {
            Some(r) => g.add_const(token_emb, r),
            None => token_emb,
        };
        let pos = g.gather(nodes[self.pos_emb], &positions);
        x = g.add(x, pos);
        for block in &self.blocks {
            x = block_forward(g, nodes, block, x, cfg.n_heads, false, cfg.dropout, rng.as_deref_mut());
        }
        let x = g.layer_norm(x, nodes[self.ln_f_g], nodes[self.ln_f_b]);
        let pooled = g.mean_rows(x);
        let pooled = dropout(g, pooled, cfg.dropout, rng);
        EncoderNodes { token_emb, pooled }
    }
}
