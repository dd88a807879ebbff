//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! enough information to push gradients back to its inputs. Graphs are built
//! per forward pass and dropped afterwards.

use super::matrix::{gelu, gelu_grad, Matrix};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    AddConst(NodeId),
    MulConst(NodeId, Matrix),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    MeanRows(NodeId),
    Gather(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    Transpose(NodeId),
    LogClamp(NodeId, f64, f64),
    Sum(NodeId),
    CrossEntropyLogits {
        logits: NodeId,
        targets: Vec<Option<usize>>,
        probs: Matrix,
        count: usize,
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::AddConst(a)
            | Op::MulConst(a, _)
            | Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Softmax(a)
            | Op::MeanRows(a)
            | Op::Gather(a, _)
            | Op::SliceCols(a, _)
            | Op::Transpose(a)
            | Op::LogClamp(a, _, _)
            | Op::Sum(a) => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::ConcatCols(parts) => parts.clone(),
            Op::CrossEntropyLogits { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Matrix>,
    ops: Vec<Op>,
}

/// Gradients of one root with respect to every node of the graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    /// Gradient of `id`, or zeros shaped like `like` when the node did not
    /// influence the root.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Matrix {
        self.get(id).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.values[id]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.values[id];
        assert_eq!(v.shape(), (1, 1), "not a scalar node");
        v.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].matmul(&self.values[b]);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.values[a].clone();
        v.add_assign(&self.values[b]);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a], &self.values[b]);
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect();
        let v = Matrix::from_vec(va.rows, va.cols, data);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a], &self.values[b]);
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let v = Matrix::from_vec(va.rows, va.cols, data);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + bias` with a `1 x cols` bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b = &self.values[bias];
        assert_eq!(b.rows, 1, "bias must be a row vector");
        let mut v = self.values[a].clone();
        assert_eq!(v.cols, b.cols, "bias width mismatch");
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddBias(a, bias))
    }

    /// `a + c` for a constant `c` (gradient flows to `a` only).
    pub fn add_const(&mut self, a: NodeId, c: &Matrix) -> NodeId {
        let mut v = self.values[a].clone();
        v.add_assign(c);
        self.push(v, Op::AddConst(a))
    }

    /// Elementwise product with a constant (dropout masks, one-hot targets).
    pub fn mul_const(&mut self, a: NodeId, c: Matrix) -> NodeId {
        let va = &self.values[a];
        assert_eq!(va.shape(), c.shape(), "mul_const shape mismatch");
        let data = va.data.iter().zip(&c.data).map(|(x, y)| x * y).collect();
        let v = Matrix::from_vec(va.rows, va.cols, data);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.values[a].scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a].map(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise softmax. With `causal`, entries above the diagonal are masked
    /// out (probability exactly zero).
    pub fn softmax_rows(&mut self, a: NodeId, causal: bool) -> NodeId {
        let x = &self.values[a];
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let width = if causal { (r + 1).min(x.cols) } else { x.cols };
            let row = x.row(r);
            let max = row[..width].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = v.row_mut(r);
            let mut sum = 0.0;
            for c in 0..width {
                let e = (row[c] - max).exp();
                out[c] = e;
                sum += e;
            }
            for o in &mut out[..width] {
                *o /= sum;
            }
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let xv = &self.values[x];
        let (g, b) = (&self.values[gamma], &self.values[beta]);
        let n = xv.cols as f64;
        let mut xhat = Matrix::zeros(xv.rows, xv.cols);
        let mut out = Matrix::zeros(xv.rows, xv.cols);
        let mut inv_std = Vec::with_capacity(xv.rows);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for c in 0..xv.cols {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data[c] + b.data[c]);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Mean over rows, producing a `1 x cols` row vector.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a];
        let mut v = Matrix::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, y) in v.data.iter_mut().zip(x.row(r)) {
                *o += y;
            }
        }
        let inv = 1.0 / x.rows as f64;
        v.data.iter_mut().for_each(|o| *o *= inv);
        self.push(v, Op::MeanRows(a))
    }

    /// Select rows of `table` (embedding lookup).
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.values[table];
        let mut v = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let x = &self.values[a];
        assert!(start + len <= x.cols, "slice out of range");
        let mut v = Matrix::zeros(x.rows, len);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.values[parts[0]].rows;
        let cols: usize = parts.iter().map(|&p| self.values[p].cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = &self.values[p];
                assert_eq!(pv.rows, rows, "concat row mismatch");
                v.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a].transpose();
        self.push(v, Op::Transpose(a))
    }

    /// `ln(clamp(a, lo, hi))`; the gradient is zero where clamping is active.
    pub fn log_clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.values[a].map(|x| x.clamp(lo, hi).ln());
        self.push(v, Op::LogClamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.values[a].data.iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Mean token-level cross-entropy of softmax(logits) against `targets`;
    /// rows whose target is `None` are ignored.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, targets: &[Option<usize>]) -> NodeId {
        let x = &self.values[logits];
        assert_eq!(x.rows, targets.len(), "target count mismatch");
        let mut probs = Matrix::zeros(x.rows, x.cols);
        let mut loss = 0.0;
        let mut count = 0;
        for (r, target) in targets.iter().enumerate() {
            let p = super::matrix::softmax(x.row(r));
            if let Some(t) = *target {
                loss -= p[t].max(f64::MIN_POSITIVE).ln();
                count += 1;
            }
            probs.row_mut(r).copy_from_slice(&p);
        }
        let loss = if count > 0 { loss / count as f64 } else { 0.0 };
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropyLogits {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
        )
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        self.backward_impl(root, None)
    }

    /// Like [`Graph::backward`], but only propagates along paths that pass
    /// through `target`: the returned gradients are exact for `target` and
    /// for nodes downstream of it, and parameter leaves upstream of it are
    /// skipped entirely.
    pub fn backward_to(&self, root: NodeId, target: NodeId) -> Gradients {
        let mut need = vec![false; root + 1];
        for id in target..=root {
            need[id] = id == target || self.ops[id].inputs().iter().any(|&i| need[i]);
        }
        self.backward_impl(root, Some(&need))
    }

    fn backward_impl(&self, root: NodeId, need: Option<&[bool]>) -> Gradients {
        assert_eq!(self.values[root].shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; root + 1];
        grads[root] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        let wants = |id: NodeId| need.map_or(true, |n| n[id]);

        let acc = |grads: &mut [Option<Matrix>], id: NodeId, g: Matrix| {
            if !wants(id) {
                return;
            }
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads, *a, g.matmul_t(&self.values[*b]));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, self.values[*a].t_matmul(&g));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.scale(-1.0));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.values[*a], &self.values[*b]);
                    let ga = elementwise(&g, vb, |x, y| x * y);
                    let gb = elementwise(&g, va, |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g.clone());
                }
                Op::AddConst(a) => acc(&mut grads, *a, g.clone()),
                Op::MulConst(a, c) => acc(&mut grads, *a, elementwise(&g, c, |x, y| x * y)),
                Op::Scale(a, s) => acc(&mut grads, *a, g.scale(*s)),
                Op::Gelu(a) => {
                    let ga = elementwise(&g, &self.values[*a], |x, y| x * gelu_grad(y));
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let p = &self.values[id];
                    let mut ga = Matrix::zeros(p.rows, p.cols);
                    for r in 0..p.rows {
                        let (pr, gr) = (p.row(r), g.row(r));
                        let inner: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                        for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o = pr[c] * (gr[c] - inner);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = &self.values[*gamma];
                    let n = xhat.cols as f64;
                    let mut gg = Matrix::zeros(1, xhat.cols);
                    let mut gbeta = Matrix::zeros(1, xhat.cols);
                    let mut gx = Matrix::zeros(xhat.rows, xhat.cols);
                    for r in 0..xhat.rows {
                        let (h, dy) = (xhat.row(r), g.row(r));
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..xhat.cols {
                            gg.data[c] += dy[c] * h[c];
                            gbeta.data[c] += dy[c];
                            let d = dy[c] * gv.data[c];
                            mean_d += d;
                            mean_dh += d * h[c];
                        }
                        mean_d /= n;
                        mean_dh /= n;
                        for c in 0..xhat.cols {
                            let d = dy[c] * gv.data[c];
                            gx.set(r, c, inv_std[r] * (d - mean_d - h[c] * mean_dh));
                        }
                    }
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gbeta);
                    acc(&mut grads, *x, gx);
                }
                Op::MeanRows(a) => {
                    let rows = self.values[*a].rows;
                    let inv = 1.0 / rows as f64;
                    let mut ga = Matrix::zeros(rows, g.cols);
                    for r in 0..rows {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(&g.data) {
                            *o = x * inv;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(table, _) if !wants(*table) => {}
                Op::Gather(table, ids) => {
                    let t = &self.values[*table];
                    let mut gt = Matrix::zeros(t.rows, t.cols);
                    for (r, &row_id) in ids.iter().enumerate() {
                        for (o, x) in gt.row_mut(row_id).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::SliceCols(a, start) => {
                    let x = &self.values[*a];
                    let mut ga = Matrix::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.values[p].cols;
                        let mut gp = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::LogClamp(a, lo, hi) => {
                    let ga = elementwise(&g, &self.values[*a], |dy, x| {
                        if x < *lo || x > *hi {
                            0.0
                        } else {
                            dy / x
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let x = &self.values[*a];
                    acc(&mut grads, *a, Matrix::filled(x.rows, x.cols, g.data[0]));
                }
                Op::CrossEntropyLogits {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    let mut gl = Matrix::zeros(probs.rows, probs.cols);
                    if *count > 0 {
                        let s = g.data[0] / *count as f64;
                        for (r, target) in targets.iter().enumerate() {
                            if let Some(t) = *target {
                                let row = gl.row_mut(r);
                                for (o, p) in row.iter_mut().zip(probs.row(r)) {
                                    *o = p * s;
                                }
                                row[t] -= s;
                            }
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Matrix::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Check d(build(x))/dx against central differences for every entry of x.
    fn check(x0: Matrix, build: impl Fn(&mut Graph, NodeId) -> NodeId) {
        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let root = build(&mut g, x);
        let analytic = g.backward(root).get_or_zeros(x, x0.rows, x0.cols);
        let h = 1e-6;
        for i in 0..x0.data.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.data[i] += delta;
                let mut g = Graph::new();
                let x = g.leaf(xp);
                let root = build(&mut g, x);
                g.scalar(root)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data[i];
            let err = (fd - a).abs() / (fd.abs() + a.abs()).max(1e-8);
            assert!(err < 1e-5, "entry {i}: fd={fd} analytic={a}");
        }
    }

    #[test]
    fn gradients_of_every_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random(&mut rng, 4, 3);
        let b = random(&mut rng, 1, 3);
        let gamma = random(&mut rng, 1, 3);
        let c = random(&mut rng, 5, 3);
        let x0 = random(&mut rng, 5, 4);
        check(x0.clone(), |g, x| {
            let w = g.leaf(w.clone());
            let bias = g.leaf(b.clone());
            let y = g.matmul(x, w);
            let y = g.add_bias(y, bias);
            let y = g.gelu(y);
            let gm = g.leaf(gamma.clone());
            let bt = g.leaf(b.clone());
            let y = g.layer_norm(y, gm, bt);
            let s = g.softmax_rows(y, true);
            let t = g.transpose(s);
            let tt = g.transpose(t);
            let m = g.mul_const(tt, c.clone());
            let l = g.log_clamp(s, 1e-12, 1.0);
            let z = g.mul(m, l);
            let z = g.sub(z, y);
            let z = g.add_const(z, &c);
            let p = g.mean_rows(z);
            let s = g.sum(p);
            g.scale(s, 0.5)
        });
        check(x0, |g, x| {
            let a = g.slice_cols(x, 0, 2);
            let b = g.slice_cols(x, 2, 2);
            let q = g.matmul_t_helper(a, b);
            let cat = g.concat_cols(&[q, a]);
            let ce = g.cross_entropy_logits(cat, &[Some(0), None, Some(3), Some(6), Some(1)]);
            let e = g.gather(x, &[1, 1, 4]);
            let e = g.sum(e);
            g.add(ce, e)
        });
    }

    impl Graph {
        fn matmul_t_helper(&mut self, a: NodeId, b: NodeId) -> NodeId {
            let bt = self.transpose(b);
            self.matmul(a, bt)
        }
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::filled(3, 3, 0.3));
        let s = g.softmax_rows(x, true);
        let v = g.value(s);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v.row(1), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn pruned_backward_matches_full_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let table = g.leaf(random(&mut rng, 6, 4));
        let w = g.leaf(random(&mut rng, 4, 3));
        let x = g.gather(table, &[1, 3, 3, 0]);
        let h = g.matmul(x, w);
        let h = g.gelu(h);
        let p = g.softmax_rows(h, false);
        let root = g.sum(p);
        let root = g.scale(root, 0.5);
        let m = g.mean_rows(h);
        let m = g.sum(m);
        let root = g.add(root, m);
        let full = g.backward(root);
        let pruned = g.backward_to(root, x);
        assert_eq!(full.get(x), pruned.get(x));
        assert!(pruned.get(w).is_none() && pruned.get(table).is_none());
    }
}
