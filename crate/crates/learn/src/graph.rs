//! A small reverse-mode differentiation tape over dense `f64` matrices.
//!
//! Nodes are appended in forward order and evaluated eagerly; `backward`
//! walks the tape once in reverse, accumulating gradients. The primitive
//! set is exactly what the two scorer architectures need: matrix multiply,
//! elementwise and row-broadcast arithmetic, rectifier, row-wise layer
//! normalization and softmax, mean pooling, transpose, and a fused
//! softmax-cross-entropy loss.
//!
//! Row convention: a batch is one row per example; a "row vector"
//! parameter (bias, gain) has shape 1 x n and broadcasts over rows.

use nalgebra::DMatrix;

use crate::error::LearnError;
use crate::Result;

/// Dense matrix value flowing through the tape.
pub type Value = DMatrix<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(VarId, VarId),
    Add(VarId, VarId),
    Mul(VarId, VarId),
    AddRow(VarId, VarId),
    MulRow(VarId, VarId),
    Scale(VarId, f64),
    Relu(VarId),
    NormRows { x: VarId, eps: f64 },
    SoftmaxRows(VarId),
    MeanPoolRows(VarId),
    Transpose(VarId),
    Sum(VarId),
    SoftmaxCrossEntropy { logits: VarId, labels: Vec<usize> },
}

struct Node {
    value: Value,
    op: Op,
}

/// Gradients of a scalar loss with respect to every tape node that
/// influences it. Leaves that the loss does not depend on yield `None`.
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node the loss is known to depend on.
    pub fn expect(&self, id: VarId) -> &Value {
        self.get(id).expect("node does not influence the loss")
    }
}

/// Forward tape; create values with [`Graph::constant`] / [`Graph::param`]
/// and combine them with the op methods.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn softmax_rows_value(z: &Value) -> Value {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Value, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    /// A leaf that gradients are not requested for (inputs, labels-as-data).
    pub fn constant(&mut self, value: Value) -> VarId {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient will be accumulated (model parameters).
    pub fn param(&mut self, value: Value) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: VarId) -> (usize, usize) {
        let v = self.value(id);
        (v.nrows(), v.ncols())
    }

    /// `a * b` (matrix product). Panics on inner-dimension mismatch, like
    /// the underlying linear-algebra type.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Matmul(a, b))
    }

    /// Elementwise sum of two same-shape matrices.
    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Elementwise (Hadamard) product of two same-shape matrices.
    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    /// Add a `1 x n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: VarId, row: VarId) -> VarId {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row: second operand must be 1 x n");
        assert_eq!(r.ncols(), self.value(a).ncols(), "add_row: width mismatch");
        let mut v = self.value(a).clone();
        for mut out in v.row_iter_mut() {
            out += r.row(0);
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiply every row of an `m x n` matrix by a `1 x n` row vector.
    pub fn mul_row(&mut self, a: VarId, row: VarId) -> VarId {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "mul_row: second operand must be 1 x n");
        assert_eq!(r.ncols(), self.value(a).ncols(), "mul_row: width mismatch");
        let mut v = self.value(a).clone();
        for mut out in v.row_iter_mut() {
            out.component_mul_assign(&r.row(0));
        }
        self.push(v, Op::MulRow(a, row))
    }

    /// Multiply by a compile-time scalar (not differentiated through).
    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Row-wise layer normalization: each row is shifted to zero mean and
    /// scaled to unit variance (biased estimate, stabilized by `eps`).
    /// Learned gain/bias are applied outside via [`Graph::mul_row`] and
    /// [`Graph::add_row`].
    pub fn norm_rows(&mut self, x: VarId, eps: f64) -> VarId {
        assert!(eps > 0.0, "norm_rows: eps must be positive");
        let a = self.value(x);
        let n = a.ncols() as f64;
        let mut v = a.clone();
        for mut row in v.row_iter_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let s = (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) / s;
            }
        }
        self.push(v, Op::NormRows { x, eps })
    }

    /// Row-wise softmax (max-shifted for stability).
    pub fn softmax_rows(&mut self, a: VarId) -> VarId {
        let v = softmax_rows_value(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Mean over rows: `m x n` -> `1 x n`.
    pub fn mean_pool_rows(&mut self, a: VarId) -> VarId {
        let x = self.value(a);
        assert!(x.nrows() > 0, "mean_pool_rows: empty input");
        let v = Value::from_fn(1, x.ncols(), |_, j| x.column(j).sum() / x.nrows() as f64);
        self.push(v, Op::MeanPoolRows(a))
    }

    pub fn transpose(&mut self, a: VarId) -> VarId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Sum of all entries: `m x n` -> `1 x 1`.
    pub fn sum(&mut self, a: VarId) -> VarId {
        let v = Value::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits` (`m x k`, one label in `0..k` per row). Fusing the softmax
    /// keeps the backward pass exact even for extreme logits.
    pub fn softmax_cross_entropy(&mut self, logits: VarId, labels: &[usize]) -> VarId {
        let z = self.value(logits);
        assert_eq!(labels.len(), z.nrows(), "softmax_cross_entropy: one label per row");
        assert!(
            labels.iter().all(|&y| y < z.ncols()),
            "softmax_cross_entropy: label out of range"
        );
        let mut total = 0.0;
        for (row, &y) in z.row_iter().zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let v = Value::from_element(1, 1, total / z.nrows() as f64);
        self.push(v, Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec() })
    }

    /// Smallest `|x|` over all rectifier inputs in the tape, or infinity
    /// when no rectifier exists. Finite-difference checks use this to
    /// detect stencils that would straddle the kink at zero.
    pub fn min_abs_relu_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                for &x in self.value(a).iter() {
                    min = min.min(x.abs());
                }
            }
        }
        min
    }

    /// Reverse pass from a scalar `loss` node. Returns the accumulated
    /// gradient for every node that influences the loss.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(LearnError::Usage(format!(
                "backward requires a scalar loss, got {r} x {c}"
            )));
        }
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Value::from_element(1, 1, 1.0));

        // Helper: add `delta` into the gradient slot for `id`.
        fn accum(grads: &mut [Option<Value>], id: VarId, delta: Value) {
            match &mut grads[id.0] {
                Some(g) => *g += delta,
                slot @ None => *slot = Some(delta),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].clone() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let da = &g * self.value(*b).transpose();
                    let db = self.value(*a).transpose() * &g;
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accum(&mut grads, *a, g.clone());
                    accum(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let da = g.component_mul(self.value(*b));
                    let db = g.component_mul(self.value(*a));
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
                Op::AddRow(a, row) => {
                    let dr = Value::from_fn(1, g.ncols(), |_, j| g.column(j).sum());
                    accum(&mut grads, *a, g.clone());
                    accum(&mut grads, *row, dr);
                }
                Op::MulRow(a, row) => {
                    let r = self.value(*row);
                    let x = self.value(*a);
                    let mut da = g.clone();
                    for mut out in da.row_iter_mut() {
                        out.component_mul_assign(&r.row(0));
                    }
                    let gx = g.component_mul(x);
                    let dr = Value::from_fn(1, g.ncols(), |_, j| gx.column(j).sum());
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *row, dr);
                }
                Op::Scale(a, c) => accum(&mut grads, *a, &g * *c),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let da = Value::from_fn(g.nrows(), g.ncols(), |i, j| {
                        if x[(i, j)] > 0.0 {
                            g[(i, j)]
                        } else {
                            0.0
                        }
                    });
                    accum(&mut grads, *a, da);
                }
                Op::NormRows { x, eps } => {
                    // With y = (x - mu) / s, s = sqrt(var + eps):
                    // dx = (g - mean(g) - y * mean(g .* y)) / s, per row.
                    let xin = self.value(*x);
                    let y = &self.nodes[i].value;
                    let n = xin.ncols() as f64;
                    let mut da = Value::zeros(xin.nrows(), xin.ncols());
                    for r in 0..xin.nrows() {
                        let mean = xin.row(r).sum() / n;
                        let var =
                            xin.row(r).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let s = (var + eps).sqrt();
                        let g_mean = g.row(r).sum() / n;
                        let gy_mean = g
                            .row(r)
                            .iter()
                            .zip(y.row(r).iter())
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            / n;
                        for j in 0..xin.ncols() {
                            da[(r, j)] = (g[(r, j)] - g_mean - y[(r, j)] * gy_mean) / s;
                        }
                    }
                    accum(&mut grads, *x, da);
                }
                Op::SoftmaxRows(a) => {
                    let p = &self.nodes[i].value;
                    let mut da = Value::zeros(p.nrows(), p.ncols());
                    for r in 0..p.nrows() {
                        let dot: f64 =
                            g.row(r).iter().zip(p.row(r).iter()).map(|(a, b)| a * b).sum();
                        for j in 0..p.ncols() {
                            da[(r, j)] = p[(r, j)] * (g[(r, j)] - dot);
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::MeanPoolRows(a) => {
                    let m = self.value(*a).nrows();
                    let da = Value::from_fn(m, g.ncols(), |_, j| g[(0, j)] / m as f64);
                    accum(&mut grads, *a, da);
                }
                Op::Transpose(a) => accum(&mut grads, *a, g.transpose()),
                Op::Sum(a) => {
                    let (m, n) = self.shape(*a);
                    accum(&mut grads, *a, Value::from_element(m, n, g[(0, 0)]));
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let p = softmax_rows_value(self.value(*logits));
                    let m = p.nrows() as f64;
                    let scale = g[(0, 0)] / m;
                    let mut dz = p;
                    for (r, &y) in labels.iter().enumerate() {
                        dz[(r, y)] -= 1.0;
                    }
                    accum(&mut grads, *logits, dz * scale);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub mod fd {
    //! Central finite-difference gradient checking, shared by this crate's
    //! unit tests and by end-to-end verification suites downstream.

    use super::*;

    /// Outcome of a finite-difference sweep.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum FdOutcome {
        /// Every entry of every input was checked and agreed with central
        /// differences within tolerance.
        Checked,
        /// Some rectifier pre-activation sat close enough to zero that the
        /// difference stencil would straddle the kink, where the analytic
        /// subgradient and the central difference legitimately disagree.
        /// Nothing was asserted; callers should draw a fresh configuration.
        KinkAdjacent,
    }

    /// Relative difference with an absolute floor, so near-zero gradient
    /// entries do not blow the ratio up.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / f64::max(1e-6, f64::max(a.abs(), b.abs()))
    }

    /// Check analytic gradients of `build` (a function producing a scalar
    /// loss from leaf values) against central differences in every entry
    /// of every input. `build` must be deterministic. Returns
    /// `Ok(FdOutcome::KinkAdjacent)` without asserting anything when a
    /// rectifier input is within `20 * h` of zero in the base graph (or
    /// within `10 * h` in any perturbed evaluation), and `Err` describing
    /// the first mismatching entry otherwise.
    pub fn check<F>(build: F, inputs: &[Value], h: f64, tol: f64) -> Result<FdOutcome>
    where
        F: Fn(&mut Graph, &[VarId]) -> VarId,
    {
        let mut g = Graph::new();
        let ids: Vec<VarId> = inputs.iter().map(|v| g.param(v.clone())).collect();
        let loss = build(&mut g, &ids);
        if g.min_abs_relu_preactivation() < 20.0 * h {
            return Ok(FdOutcome::KinkAdjacent);
        }
        let grads = g.backward(loss)?;

        // Returns (loss value, smallest |rectifier input|) so perturbed
        // evaluations that drift toward a kink can be rejected too.
        let eval = |vals: &[Value]| -> (f64, f64) {
            let mut g = Graph::new();
            let ids: Vec<VarId> = vals.iter().map(|v| g.param(v.clone())).collect();
            let loss = build(&mut g, &ids);
            (g.value(loss)[(0, 0)], g.min_abs_relu_preactivation())
        };

        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(ids[k]);
            for r in 0..input.nrows() {
                for c in 0..input.ncols() {
                    let mut plus = inputs.to_vec();
                    plus[k][(r, c)] += h;
                    let mut minus = inputs.to_vec();
                    minus[k][(r, c)] -= h;
                    let (f_plus, margin_plus) = eval(&plus);
                    let (f_minus, margin_minus) = eval(&minus);
                    if f64::min(margin_plus, margin_minus) < 10.0 * h {
                        return Ok(FdOutcome::KinkAdjacent);
                    }
                    let fd = (f_plus - f_minus) / (2.0 * h);
                    let an = analytic.map_or(0.0, |m| m[(r, c)]);
                    let err = rel_err(an, fd);
                    if err > tol {
                        return Err(LearnError::Training(format!(
                            "gradient check failed: input {k} entry ({r},{c}): \
                             analytic {an} vs fd {fd} (rel {err})"
                        )));
                    }
                }
            }
        }
        Ok(FdOutcome::Checked)
    }

    /// Panicking convenience for configurations known to be kink-free
    /// (no rectifier in the graph, or inputs chosen away from kinks).
    pub fn check_strict<F>(build: F, inputs: &[Value], h: f64, tol: f64)
    where
        F: Fn(&mut Graph, &[VarId]) -> VarId,
    {
        match check(build, inputs, h, tol) {
            Ok(FdOutcome::Checked) => {}
            Ok(FdOutcome::KinkAdjacent) => {
                panic!("finite-difference check hit a rectifier kink; choose a different configuration")
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fd;
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use vantage_core::rng::{derive_rng, sample_normal};

    /// Random matrix with entries kept away from zero so `relu` kinks do
    /// not sit inside the finite-difference stencil.
    fn randm(rng: &mut impl Rng, r: usize, c: usize) -> Value {
        Value::from_fn(r, c, |_, _| {
            let x = sample_normal(rng);
            if x.abs() >= 0.05 {
                x
            } else if x < 0.0 {
                x - 0.1
            } else {
                x + 0.1
            }
        })
    }

    fn rand_dims(rng: &mut impl Rng) -> (usize, usize) {
        (rng.gen_range(1..6), rng.gen_range(1..6))
    }

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut g = Graph::new();
        let w = g.param(Value::from_fn(3, 2, |i, j| (i + 2 * j) as f64));
        let loss = g.sum(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.expect(w), &Value::from_element(3, 2, 1.0));
    }

    #[test]
    fn square_at_three_has_gradient_six() {
        let mut g = Graph::new();
        let w = g.param(Value::from_element(1, 1, 3.0));
        let sq = g.mul(w, w);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_abs_diff_eq!(grads.expect(w)[(0, 0)], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let w = g.param(Value::zeros(2, 2));
        assert!(g.backward(w).is_err());
    }

    #[test]
    fn constants_receive_no_gradient_but_flow() {
        let mut g = Graph::new();
        let w = g.param(Value::from_element(1, 3, 2.0));
        let c = g.constant(Value::from_element(3, 1, 5.0));
        let prod = g.matmul(w, c);
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.expect(w), &Value::from_element(1, 3, 5.0));
        // Constants still get a slot (they are tape nodes), which keeps
        // the reverse pass uniform; callers simply don't update them.
        assert!(grads.get(c).is_some());
    }

    #[test]
    fn fd_matmul() {
        for trial in 0..20 {
            let mut rng = derive_rng(900, &[trial]);
            let (m, k) = rand_dims(&mut rng);
            let n = rng.gen_range(1..6);
            let a = randm(&mut rng, m, k);
            let b = randm(&mut rng, k, n);
            let w = randm(&mut rng, m, n);
            fd::check_strict(
                |g, ids| {
                    let p = g.matmul(ids[0], ids[1]);
                    let weighted = g.mul(p, ids[2]);
                    g.sum(weighted)
                },
                &[a, b, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_add_and_mul() {
        for trial in 0..20 {
            let mut rng = derive_rng(901, &[trial]);
            let (m, n) = rand_dims(&mut rng);
            let a = randm(&mut rng, m, n);
            let b = randm(&mut rng, m, n);
            let w = randm(&mut rng, m, n);
            fd::check_strict(
                |g, ids| {
                    let s = g.add(ids[0], ids[1]);
                    let p = g.mul(s, ids[1]);
                    let weighted = g.mul(p, ids[2]);
                    g.sum(weighted)
                },
                &[a, b, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_add_row_mul_row() {
        for trial in 0..20 {
            let mut rng = derive_rng(902, &[trial]);
            let (m, n) = rand_dims(&mut rng);
            let a = randm(&mut rng, m, n);
            let r1 = randm(&mut rng, 1, n);
            let r2 = randm(&mut rng, 1, n);
            let w = randm(&mut rng, m, n);
            fd::check_strict(
                |g, ids| {
                    let s = g.add_row(ids[0], ids[1]);
                    let p = g.mul_row(s, ids[2]);
                    let weighted = g.mul(p, ids[3]);
                    g.sum(weighted)
                },
                &[a, r1, r2, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_scale_relu_transpose() {
        for trial in 0..20 {
            let mut rng = derive_rng(903, &[trial]);
            let (m, n) = rand_dims(&mut rng);
            let a = randm(&mut rng, m, n);
            let w = randm(&mut rng, n, m);
            let c = 0.5 + rng.gen::<f64>();
            fd::check_strict(
                move |g, ids| {
                    let s = g.scale(ids[0], c);
                    let r = g.relu(s);
                    let t = g.transpose(r);
                    let weighted = g.mul(t, ids[1]);
                    g.sum(weighted)
                },
                &[a, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_norm_rows() {
        for trial in 0..20 {
            let mut rng = derive_rng(904, &[trial]);
            let m = rng.gen_range(1..6);
            let n = rng.gen_range(2..7);
            let a = randm(&mut rng, m, n);
            let w = randm(&mut rng, m, n);
            fd::check_strict(
                |g, ids| {
                    let y = g.norm_rows(ids[0], 1e-5);
                    let weighted = g.mul(y, ids[1]);
                    g.sum(weighted)
                },
                &[a, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_softmax_rows() {
        for trial in 0..20 {
            let mut rng = derive_rng(905, &[trial]);
            let (m, n) = rand_dims(&mut rng);
            let a = randm(&mut rng, m, n);
            let w = randm(&mut rng, m, n);
            fd::check_strict(
                |g, ids| {
                    let p = g.softmax_rows(ids[0]);
                    let weighted = g.mul(p, ids[1]);
                    g.sum(weighted)
                },
                &[a, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_mean_pool_rows() {
        for trial in 0..20 {
            let mut rng = derive_rng(906, &[trial]);
            let (m, n) = rand_dims(&mut rng);
            let a = randm(&mut rng, m, n);
            let w = randm(&mut rng, 1, n);
            fd::check_strict(
                |g, ids| {
                    let p = g.mean_pool_rows(ids[0]);
                    let weighted = g.mul(p, ids[1]);
                    g.sum(weighted)
                },
                &[a, w],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn fd_softmax_cross_entropy() {
        for trial in 0..20 {
            let mut rng = derive_rng(907, &[trial]);
            let m = rng.gen_range(1..6);
            let k = rng.gen_range(2..5);
            let z = randm(&mut rng, m, k);
            let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..k)).collect();
            fd::check_strict(
                move |g, ids| g.softmax_cross_entropy(ids[0], &labels),
                &[z],
                H,
                TOL,
            );
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = derive_rng(908, &[0]);
        for _ in 0..50 {
            let (m, n) = rand_dims(&mut rng);
            let mut g = Graph::new();
            let a = g.constant(randm(&mut rng, m, n));
            // Include an extreme row to exercise the max-shift.
            let p = g.softmax_rows(a);
            for row in g.value(p).row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x > 0.0));
            }
        }
        let mut g = Graph::new();
        let a = g.constant(Value::from_row_slice(1, 3, &[1000.0, -1000.0, 999.0]));
        let p = g.softmax_rows(a);
        assert!((g.value(p).row(0).sum() - 1.0).abs() < 1e-9);
        assert!(g.value(p).iter().all(|&x| x.is_finite()));
    }

    #[test]
    fn cross_entropy_matches_log_softmax_by_hand() {
        let mut g = Graph::new();
        let z = g.constant(Value::from_row_slice(2, 2, &[0.3, -0.2, 1.5, 0.5]));
        let loss = g.softmax_cross_entropy(z, &[1, 0]);
        let by_hand = |a: f64, b: f64, y: usize| {
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            lse - if y == 0 { a } else { b }
        };
        let expect = 0.5 * (by_hand(0.3, -0.2, 1) + by_hand(1.5, 0.5, 0));
        assert_abs_diff_eq!(g.value(loss)[(0, 0)], expect, epsilon = 1e-12);
    }

    #[test]
    fn gradient_accumulates_when_node_reused() {
        // loss = sum(w .* w) + sum(w): dL/dw = 2w + 1.
        let mut g = Graph::new();
        let w = g.param(Value::from_row_slice(1, 2, &[1.5, -2.0]));
        let sq = g.mul(w, w);
        let s1 = g.sum(sq);
        let s2 = g.sum(w);
        let loss = g.add(s1, s2);
        let grads = g.backward(loss).unwrap();
        assert_abs_diff_eq!(grads.expect(w)[(0, 0)], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grads.expect(w)[(0, 1)], -3.0, epsilon = 1e-12);
    }
}
