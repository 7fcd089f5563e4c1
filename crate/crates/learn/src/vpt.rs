//! Viewpoint transformer: a small set classifier over per-landmark tokens.
//!
//! Architecture: linear token embedding, `n_blocks` post-norm encoder
//! blocks (multi-head self-attention + feed-forward, each behind a
//! residual and row-wise layer normalization), mean pooling over tokens,
//! and a linear two-class head. Padding never enters the graph: the real
//! token rows are gathered up front, so padding invariance is exact and
//! permutation invariance holds up to floating-point reassociation.

use nalgebra::DMatrix;
use rand::Rng;
use vantage_core::features::{token_vector, NormRanges, PerLandmarkFeature};

use crate::error::LearnError;
use crate::graph::{Graph, Value, VarId};
use crate::mlp::init_matrix;
use crate::Result;

/// Stabilizer inside layer normalization.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VptConfig {
    pub token_dim: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_blocks: usize,
    /// Maximum number of real tokens per example; nearest landmarks win.
    pub n_max: usize,
}

impl Default for VptConfig {
    fn default() -> Self {
        VptConfig { token_dim: 18, d_model: 32, n_heads: 2, d_ff: 64, n_blocks: 2, n_max: 256 }
    }
}

impl VptConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0
            || self.d_model == 0
            || self.n_heads == 0
            || self.d_ff == 0
            || self.n_blocks == 0
            || self.n_max == 0
        {
            return Err(LearnError::InvalidConfig("vpt dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(LearnError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// One example for the set model: a fixed-height token matrix, a mask
/// marking the real rows, and the binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    /// `rows x token_dim`; masked-out rows are all zeros.
    pub tokens: DMatrix<f64>,
    pub mask: Vec<bool>,
    pub label: bool,
}

impl TokenBatch {
    /// Pack `real` token rows into an `n_max`-row matrix with zero padding.
    pub fn new(real: &[Vec<f64>], token_dim: usize, n_max: usize, label: bool) -> Result<Self> {
        if real.len() > n_max {
            return Err(LearnError::Schema(format!(
                "{} tokens exceed the {} row budget",
                real.len(),
                n_max
            )));
        }
        let mut tokens = DMatrix::zeros(n_max, token_dim);
        for (i, row) in real.iter().enumerate() {
            if row.len() != token_dim {
                return Err(LearnError::Schema(format!(
                    "token {} has {} entries, expected {}",
                    i,
                    row.len(),
                    token_dim
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                tokens[(i, j)] = x;
            }
        }
        let mut mask = vec![false; n_max];
        mask[..real.len()].fill(true);
        Ok(TokenBatch { tokens, mask, label })
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The real token rows in mask order, or `None` when all rows are
    /// masked out.
    pub fn gather_real(&self) -> Option<Value> {
        let rows: Vec<usize> =
            self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        if rows.is_empty() {
            return None;
        }
        Some(Value::from_fn(rows.len(), self.tokens.ncols(), |r, c| self.tokens[(rows[r], c)]))
    }

    pub fn validate(&self, config: &VptConfig) -> Result<()> {
        if self.tokens.ncols() != config.token_dim {
            return Err(LearnError::Schema(format!(
                "token dim {} does not match model dim {}",
                self.tokens.ncols(),
                config.token_dim
            )));
        }
        if self.mask.len() != self.tokens.nrows() {
            return Err(LearnError::Schema("mask length != token rows".into()));
        }
        if self.real_count() > config.n_max {
            return Err(LearnError::Schema(format!(
                "{} real tokens exceed n_max {}",
                self.real_count(),
                config.n_max
            )));
        }
        for (i, &m) in self.mask.iter().enumerate() {
            if !m && self.tokens.row(i).iter().any(|&x| x != 0.0) {
                return Err(LearnError::Schema(format!("masked row {i} is not zero")));
            }
        }
        Ok(())
    }
}

/// Build one example's tokens from raw (unnormalized) per-landmark
/// features: sort by camera distance (ties by landmark id), keep the
/// `n_max` nearest, normalize each into a token row.
pub fn tokens_from_features(
    feats: &[PerLandmarkFeature],
    ranges: &NormRanges,
    config: &VptConfig,
    label: bool,
) -> Result<TokenBatch> {
    let mut order: Vec<usize> = (0..feats.len()).collect();
    order.sort_by(|&a, &b| {
        feats[a]
            .distance
            .total_cmp(&feats[b].distance)
            .then(feats[a].landmark_id.cmp(&feats[b].landmark_id))
    });
    order.truncate(config.n_max);
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| token_vector(&feats[i], ranges)).collect();
    TokenBatch::new(&rows, config.token_dim, config.n_max, label)
}

/// Parameters of one encoder block. Attention projections are stored per
/// head; the output projection is split per head as well, so the
/// concatenate-then-project step becomes a sum of per-head products.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Vec<Value>,
    pub wk: Vec<Value>,
    pub wv: Vec<Value>,
    pub wo: Vec<Value>,
    pub bo: Value,
    pub ln1_g: Value,
    pub ln1_b: Value,
    pub wf1: Value,
    pub bf1: Value,
    pub wf2: Value,
    pub bf2: Value,
    pub ln2_g: Value,
    pub ln2_b: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VptParams {
    pub config: VptConfig,
    pub embed_w: Value,
    pub embed_b: Value,
    /// Learned stand-in token for views with no landmarks, `1 x token_dim`.
    pub null_token: Value,
    pub blocks: Vec<BlockParams>,
    pub head_w: Value,
    pub head_b: Value,
}

impl VptParams {
    /// Xavier-initialized projections (He where a rectifier follows), unit
    /// gains, zero biases and null token. Draw order is fixed:
    /// embedding, then per block (per head q/k/v/o, then feed-forward),
    /// then the head.
    pub fn init(config: VptConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (d, dh, df) = (config.d_model, config.d_head(), config.d_ff);
        let xavier = |rng: &mut _, r: usize, c: usize| init_matrix(rng, r, c, (1.0 / r as f64).sqrt());
        let embed_w = xavier(rng, config.token_dim, d);
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for _ in 0..config.n_blocks {
            let (mut wq, mut wk, mut wv, mut wo) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for _ in 0..config.n_heads {
                wq.push(xavier(rng, d, dh));
                wk.push(xavier(rng, d, dh));
                wv.push(xavier(rng, d, dh));
                wo.push(xavier(rng, dh, d));
            }
            let wf1 = init_matrix(rng, d, df, (2.0 / d as f64).sqrt());
            let wf2 = xavier(rng, df, d);
            blocks.push(BlockParams {
                wq,
                wk,
                wv,
                wo,
                bo: Value::zeros(1, d),
                ln1_g: Value::from_element(1, d, 1.0),
                ln1_b: Value::zeros(1, d),
                wf1,
                bf1: Value::zeros(1, df),
                wf2,
                bf2: Value::zeros(1, d),
                ln2_g: Value::from_element(1, d, 1.0),
                ln2_b: Value::zeros(1, d),
            });
        }
        let head_w = xavier(rng, d, 2);
        Ok(VptParams {
            config,
            embed_w,
            embed_b: Value::zeros(1, d),
            null_token: Value::zeros(1, config.token_dim),
            blocks,
            head_w,
            head_b: Value::zeros(1, 2),
        })
    }

    /// Tensors in a fixed order with stable names for the parameter file.
    pub fn named_tensors(&self) -> Vec<(String, &Value)> {
        let mut out: Vec<(String, &Value)> = vec![
            ("vpt.embed.w".into(), &self.embed_w),
            ("vpt.embed.b".into(), &self.embed_b),
            ("vpt.null".into(), &self.null_token),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            // Grouped per projection kind, matching `tensors_mut` order.
            for h in 0..self.config.n_heads {
                out.push((format!("vpt.b{i}.h{h}.wq"), &b.wq[h]));
            }
            for h in 0..self.config.n_heads {
                out.push((format!("vpt.b{i}.h{h}.wk"), &b.wk[h]));
            }
            for h in 0..self.config.n_heads {
                out.push((format!("vpt.b{i}.h{h}.wv"), &b.wv[h]));
            }
            for h in 0..self.config.n_heads {
                out.push((format!("vpt.b{i}.h{h}.wo"), &b.wo[h]));
            }
            out.push((format!("vpt.b{i}.bo"), &b.bo));
            out.push((format!("vpt.b{i}.ln1.g"), &b.ln1_g));
            out.push((format!("vpt.b{i}.ln1.b"), &b.ln1_b));
            out.push((format!("vpt.b{i}.ff.w1"), &b.wf1));
            out.push((format!("vpt.b{i}.ff.b1"), &b.bf1));
            out.push((format!("vpt.b{i}.ff.w2"), &b.wf2));
            out.push((format!("vpt.b{i}.ff.b2"), &b.bf2));
            out.push((format!("vpt.b{i}.ln2.g"), &b.ln2_g));
            out.push((format!("vpt.b{i}.ln2.b"), &b.ln2_b));
        }
        out.push(("vpt.head.w".into(), &self.head_w));
        out.push(("vpt.head.b".into(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Value> {
        let mut out: Vec<&mut Value> =
            vec![&mut self.embed_w, &mut self.embed_b, &mut self.null_token];
        for b in &mut self.blocks {
            out.extend(b.wq.iter_mut());
            out.extend(b.wk.iter_mut());
            out.extend(b.wv.iter_mut());
            out.extend(b.wo.iter_mut());
            out.push(&mut b.bo);
            out.push(&mut b.ln1_g);
            out.push(&mut b.ln1_b);
            out.push(&mut b.wf1);
            out.push(&mut b.bf1);
            out.push(&mut b.wf2);
            out.push(&mut b.bf2);
            out.push(&mut b.ln2_g);
            out.push(&mut b.ln2_b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Rebuild from named tensors (inverse of
    /// [`VptParams::named_tensors`]); shapes are validated.
    pub fn from_named(
        config: VptConfig,
        mut take: impl FnMut(&str) -> Option<Value>,
    ) -> Result<Self> {
        config.validate()?;
        let mut get = |name: String| {
            take(&name).ok_or_else(|| LearnError::Serialization(format!("missing tensor {name}")))
        };
        let embed_w = get("vpt.embed.w".into())?;
        let embed_b = get("vpt.embed.b".into())?;
        let null_token = get("vpt.null".into())?;
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for i in 0..config.n_blocks {
            let (mut wq, mut wk, mut wv, mut wo) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for h in 0..config.n_heads {
                wq.push(get(format!("vpt.b{i}.h{h}.wq"))?);
                wk.push(get(format!("vpt.b{i}.h{h}.wk"))?);
                wv.push(get(format!("vpt.b{i}.h{h}.wv"))?);
                wo.push(get(format!("vpt.b{i}.h{h}.wo"))?);
            }
            blocks.push(BlockParams {
                wq,
                wk,
                wv,
                wo,
                bo: get(format!("vpt.b{i}.bo"))?,
                ln1_g: get(format!("vpt.b{i}.ln1.g"))?,
                ln1_b: get(format!("vpt.b{i}.ln1.b"))?,
                wf1: get(format!("vpt.b{i}.ff.w1"))?,
                bf1: get(format!("vpt.b{i}.ff.b1"))?,
                wf2: get(format!("vpt.b{i}.ff.w2"))?,
                bf2: get(format!("vpt.b{i}.ff.b2"))?,
                ln2_g: get(format!("vpt.b{i}.ln2.g"))?,
                ln2_b: get(format!("vpt.b{i}.ln2.b"))?,
            });
        }
        let p = VptParams {
            config,
            embed_w,
            embed_b,
            null_token,
            blocks,
            head_w: get("vpt.head.w".into())?,
            head_b: get("vpt.head.b".into())?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let (d, dh, df) = (c.d_model, c.d_head(), c.d_ff);
        let mut ok = self.embed_w.shape() == (c.token_dim, d)
            && self.embed_b.shape() == (1, d)
            && self.null_token.shape() == (1, c.token_dim)
            && self.head_w.shape() == (d, 2)
            && self.head_b.shape() == (1, 2)
            && self.blocks.len() == c.n_blocks;
        for b in &self.blocks {
            ok = ok
                && [&b.wq, &b.wk, &b.wv, &b.wo].iter().all(|v| v.len() == c.n_heads)
                && b.wq.iter().all(|m| m.shape() == (d, dh))
                && b.wk.iter().all(|m| m.shape() == (d, dh))
                && b.wv.iter().all(|m| m.shape() == (d, dh))
                && b.wo.iter().all(|m| m.shape() == (dh, d))
                && b.bo.shape() == (1, d)
                && b.ln1_g.shape() == (1, d)
                && b.ln1_b.shape() == (1, d)
                && b.wf1.shape() == (d, df)
                && b.bf1.shape() == (1, df)
                && b.wf2.shape() == (df, d)
                && b.bf2.shape() == (1, d)
                && b.ln2_g.shape() == (1, d)
                && b.ln2_b.shape() == (1, d);
        }
        if !ok {
            return Err(LearnError::Serialization("inconsistent vpt tensor shapes".into()));
        }
        let finite =
            self.named_tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(LearnError::Serialization("non-finite vpt parameter".into()));
        }
        Ok(())
    }
}

/// Parameter leaves of one transformer inside a graph.
pub struct BlockVars {
    pub wq: Vec<VarId>,
    pub wk: Vec<VarId>,
    pub wv: Vec<VarId>,
    pub wo: Vec<VarId>,
    pub bo: VarId,
    pub ln1_g: VarId,
    pub ln1_b: VarId,
    pub wf1: VarId,
    pub bf1: VarId,
    pub wf2: VarId,
    pub bf2: VarId,
    pub ln2_g: VarId,
    pub ln2_b: VarId,
}

pub struct VptVars {
    pub d_head: usize,
    pub embed_w: VarId,
    pub embed_b: VarId,
    pub null_token: VarId,
    pub blocks: Vec<BlockVars>,
    pub head_w: VarId,
    pub head_b: VarId,
}

impl VptVars {
    pub fn insert(g: &mut Graph, p: &VptParams) -> Self {
        VptVars {
            d_head: p.config.d_head(),
            embed_w: g.param(p.embed_w.clone()),
            embed_b: g.param(p.embed_b.clone()),
            null_token: g.param(p.null_token.clone()),
            blocks: p
                .blocks
                .iter()
                .map(|b| BlockVars {
                    wq: b.wq.iter().map(|m| g.param(m.clone())).collect(),
                    wk: b.wk.iter().map(|m| g.param(m.clone())).collect(),
                    wv: b.wv.iter().map(|m| g.param(m.clone())).collect(),
                    wo: b.wo.iter().map(|m| g.param(m.clone())).collect(),
                    bo: g.param(b.bo.clone()),
                    ln1_g: g.param(b.ln1_g.clone()),
                    ln1_b: g.param(b.ln1_b.clone()),
                    wf1: g.param(b.wf1.clone()),
                    bf1: g.param(b.bf1.clone()),
                    wf2: g.param(b.wf2.clone()),
                    bf2: g.param(b.bf2.clone()),
                    ln2_g: g.param(b.ln2_g.clone()),
                    ln2_b: g.param(b.ln2_b.clone()),
                })
                .collect(),
            head_w: g.param(p.head_w.clone()),
            head_b: g.param(p.head_b.clone()),
        }
    }

    /// Tape ids in the order matching [`VptParams::tensors_mut`].
    pub fn ids(&self) -> Vec<VarId> {
        let mut out = vec![self.embed_w, self.embed_b, self.null_token];
        for b in &self.blocks {
            out.extend_from_slice(&b.wq);
            out.extend_from_slice(&b.wk);
            out.extend_from_slice(&b.wv);
            out.extend_from_slice(&b.wo);
            out.extend_from_slice(&[
                b.bo, b.ln1_g, b.ln1_b, b.wf1, b.bf1, b.wf2, b.bf2, b.ln2_g, b.ln2_b,
            ]);
        }
        out.push(self.head_w);
        out.push(self.head_b);
        out
    }

    /// Logits for one example whose real tokens are the rows of `x`
    /// (`m x token_dim`, `m >= 1`).
    pub fn logits(&self, g: &mut Graph, x: VarId) -> VarId {
        let e = g.matmul(x, self.embed_w);
        let mut h = g.add_row(e, self.embed_b);
        for b in &self.blocks {
            // Multi-head self-attention; the concat-and-project step is a
            // sum of per-head (context * wo_h) products.
            let mut attn = None;
            for (((wq, wk), wv), wo) in
                b.wq.iter().zip(&b.wk).zip(&b.wv).zip(&b.wo)
            {
                let q = g.matmul(h, *wq);
                let k = g.matmul(h, *wk);
                let v = g.matmul(h, *wv);
                let kt = g.transpose(k);
                let s = g.matmul(q, kt);
                let s = g.scale(s, 1.0 / (self.d_head as f64).sqrt());
                let a = g.softmax_rows(s);
                let ctx = g.matmul(a, v);
                let o = g.matmul(ctx, *wo);
                attn = Some(match attn {
                    None => o,
                    Some(acc) => g.add(acc, o),
                });
            }
            let o = g.add_row(attn.expect("at least one head"), b.bo);
            let res = g.add(h, o);
            let n = g.norm_rows(res, LN_EPS);
            let n = g.mul_row(n, b.ln1_g);
            let h1 = g.add_row(n, b.ln1_b);

            let f = g.matmul(h1, b.wf1);
            let f = g.add_row(f, b.bf1);
            let f = g.relu(f);
            let f = g.matmul(f, b.wf2);
            let f = g.add_row(f, b.bf2);
            let res2 = g.add(h1, f);
            let n2 = g.norm_rows(res2, LN_EPS);
            let n2 = g.mul_row(n2, b.ln2_g);
            h = g.add_row(n2, b.ln2_b);
        }
        let pooled = g.mean_pool_rows(h);
        let z = g.matmul(pooled, self.head_w);
        g.add_row(z, self.head_b)
    }

    /// Real rows of a batch as a graph leaf; all-masked examples fall back
    /// to the learned null token (which stays trainable this way).
    pub fn example_input(&self, g: &mut Graph, batch: &TokenBatch) -> VarId {
        match batch.gather_real() {
            Some(x) => g.constant(x),
            None => self.null_token,
        }
    }
}

/// Two-class probabilities for one token batch.
pub fn vpt_forward(params: &VptParams, batch: &TokenBatch) -> Result<[f64; 2]> {
    batch.validate(&params.config)?;
    let mut g = Graph::new();
    let vars = VptVars::insert(&mut g, params);
    let x = vars.example_input(&mut g, batch);
    let logits = vars.logits(&mut g, x);
    let p = g.softmax_rows(logits);
    let v = g.value(p);
    Ok([v[(0, 0)], v[(0, 1)]])
}
