//! Pre-LayerNorm transformer block shared by the encoder and the decoder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::matrix::Matrix;
use super::optim::{ParamId, ParamStore};

/// Parameter ids of one block inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockParams {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl BlockParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        ff_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut add = |name: &str, m: Matrix| store.add(format!("{prefix}.{name}"), m);
        Self {
            ln1_g: add("ln1.g", Matrix::filled(1, dim, 1.0)),
            ln1_b: add("ln1.b", Matrix::zeros(1, dim)),
            wq: add("attn.q", xavier(rng, dim, dim)),
            wk: add("attn.k", xavier(rng, dim, dim)),
            wv: add("attn.v", xavier(rng, dim, dim)),
            wo: add("attn.o", xavier(rng, dim, dim)),
            ln2_g: add("ln2.g", Matrix::filled(1, dim, 1.0)),
            ln2_b: add("ln2.b", Matrix::zeros(1, dim)),
            w1: add("ff.w1", xavier(rng, dim, ff_dim)),
            b1: add("ff.b1", Matrix::zeros(1, ff_dim)),
            w2: add("ff.w2", xavier(rng, ff_dim, dim)),
            b2: add("ff.b2", Matrix::zeros(1, dim)),
        }
    }
}

/// Uniform Glorot initialisation.
pub fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

pub fn normal_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    // Sum of uniforms; exact normality does not matter here.
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let s: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum();
                s * std * (3.0f64 / 4.0).sqrt()
            })
            .collect(),
    )
}

/// Graph leaves for every parameter of a store, in store order.
pub fn bind_params(g: &mut Graph, store: &ParamStore) -> Vec<NodeId> {
    store.iter().map(|p| g.leaf(p.value.clone())).collect()
}

/// Inverted dropout; identity when `rng` is `None` or `rate == 0`.
pub fn dropout(g: &mut Graph, x: NodeId, rate: f64, rng: Option<&mut ChaCha8Rng>) -> NodeId {
    match rng {
        Some(rng) if rate > 0.0 => {
            let v = g.value(x);
            let keep = 1.0 - rate;
            let mask = Matrix::from_vec(
                v.rows,
                v.cols,
                (0..v.data.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
            );
            g.mul_const(x, mask)
        }
        _ => x,
    }
}

/// One block on the tape. `nodes` maps param ids to graph leaves.
pub fn block_forward(
    g: &mut Graph,
    nodes: &[NodeId],
    p: &BlockParams,
    x: NodeId,
    n_heads: usize,
    causal: bool,
    dropout_rate: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> NodeId {
    let dim = g.value(x).cols;
    assert_eq!(dim % n_heads, 0, "model dim must divide into heads");
    let head_dim = dim / n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let h = g.layer_norm(x, nodes[p.ln1_g], nodes[p.ln1_b]);
    let q = g.matmul(h, nodes[p.wq]);
    let k = g.matmul(h, nodes[p.wk]);
    let v = g.matmul(h, nodes[p.wv]);
    let mut heads = Vec::with_capacity(n_heads);
    for j in 0..n_heads {
        let qj = g.slice_cols(q, j * head_dim, head_dim);
        let kj = g.slice_cols(k, j * head_dim, head_dim);
        let vj = g.slice_cols(v, j * head_dim, head_dim);
        let kt = g.transpose(kj);
        let scores = g.matmul(qj, kt);
        let scores = g.scale(scores, scale);
        let attn = g.softmax_rows(scores, causal);
        heads.push(g.matmul(attn, vj));
    }
    let cat = g.concat_cols(&heads);
    let attn_out = g.matmul(cat, nodes[p.wo]);
    let x = g.add(x, attn_out);

    let h2 = g.layer_norm(x, nodes[p.ln2_g], nodes[p.ln2_b]);
    let f = g.matmul(h2, nodes[p.w1]);
    let f = g.add_bias(f, nodes[p.b1]);
    let f = g.gelu(f);
    let f = g.matmul(f, nodes[p.w2]);
    let f = g.add_bias(f, nodes[p.b2]);
    let f = dropout(g, f, dropout_rate, rng.as_deref_mut());
    g.add(x, f)
}

/// Collect the gradient of every parameter (zeros where untouched).
pub fn param_grads(grads: &super::graph::Gradients, nodes: &[NodeId], store: &ParamStore) -> Vec<Matrix> {
    nodes
        .iter()
        .zip(store.iter())
        .map(|(&n, p)| grads.get_or_zeros(n, p.value.rows, p.value.cols))
        .collect()
}
