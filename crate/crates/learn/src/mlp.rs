//! Two-layer rectifier network over the flattened aggregate feature,
//! ending in a two-class softmax.

use rand::Rng;
use vantage_core::rng::sample_normal;

use crate::error::LearnError;
use crate::graph::{Graph, Value, VarId};
use crate::Result;

/// Weights and biases; `w1` is `input_dim x h1`, biases are row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Value,
    pub b1: Value,
    pub w2: Value,
    pub b2: Value,
    pub w3: Value,
    pub b3: Value,
}

/// Sample a matrix with i.i.d. `N(0, std^2)` entries in row-major order,
/// so initialization depends only on the RNG stream, not on storage order.
pub(crate) fn init_matrix(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Value {
    let mut m = Value::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = std * sample_normal(rng);
        }
    }
    m
}

impl MlpParams {
    /// He-initialized hidden layers (they feed rectifiers), Xavier output
    /// layer, zero biases.
    pub fn init(input_dim: usize, hidden: (usize, usize), rng: &mut impl Rng) -> Self {
        let (h1, h2) = hidden;
        MlpParams {
            w1: init_matrix(rng, input_dim, h1, (2.0 / input_dim as f64).sqrt()),
            b1: Value::zeros(1, h1),
            w2: init_matrix(rng, h1, h2, (2.0 / h1 as f64).sqrt()),
            b2: Value::zeros(1, h2),
            w3: init_matrix(rng, h2, 2, (1.0 / h2 as f64).sqrt()),
            b3: Value::zeros(1, 2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Tensors in a fixed declaration order, with stable names used by the
    /// parameter file format.
    pub fn named_tensors(&self) -> Vec<(String, &Value)> {
        vec![
            ("mlp.w1".into(), &self.w1),
            ("mlp.b1".into(), &self.b1),
            ("mlp.w2".into(), &self.w2),
            ("mlp.b2".into(), &self.b2),
            ("mlp.w3".into(), &self.w3),
            ("mlp.b3".into(), &self.b3),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Value> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    /// Rebuild from named tensors (inverse of [`MlpParams::named_tensors`]).
    pub fn from_named(mut take: impl FnMut(&str) -> Option<Value>) -> Result<Self> {
        let mut get = |name: &str| {
            take(name).ok_or_else(|| LearnError::Serialization(format!("missing tensor {name}")))
        };
        let p = MlpParams {
            w1: get("mlp.w1")?,
            b1: get("mlp.b1")?,
            w2: get("mlp.w2")?,
            b2: get("mlp.b2")?,
            w3: get("mlp.w3")?,
            b3: get("mlp.b3")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let shape_ok = self.b1.nrows() == 1
            && self.b1.ncols() == self.w1.ncols()
            && self.w2.nrows() == self.w1.ncols()
            && self.b2.nrows() == 1
            && self.b2.ncols() == self.w2.ncols()
            && self.w3.nrows() == self.w2.ncols()
            && self.w3.ncols() == 2
            && self.b3.nrows() == 1
            && self.b3.ncols() == 2;
        if !shape_ok {
            return Err(LearnError::Serialization("inconsistent mlp tensor shapes".into()));
        }
        let finite = self
            .named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(LearnError::Serialization("non-finite mlp parameter".into()));
        }
        Ok(())
    }
}

/// Parameter leaves of one MLP inside a graph.
pub struct MlpVars {
    pub w1: VarId,
    pub b1: VarId,
    pub w2: VarId,
    pub b2: VarId,
    pub w3: VarId,
    pub b3: VarId,
}

impl MlpVars {
    /// Insert all parameters as trainable leaves.
    pub fn insert(g: &mut Graph, p: &MlpParams) -> Self {
        MlpVars {
            w1: g.param(p.w1.clone()),
            b1: g.param(p.b1.clone()),
            w2: g.param(p.w2.clone()),
            b2: g.param(p.b2.clone()),
            w3: g.param(p.w3.clone()),
            b3: g.param(p.b3.clone()),
        }
    }

    /// Tape order matching [`MlpParams::tensors_mut`].
    pub fn ids(&self) -> Vec<VarId> {
        vec![self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }

    /// Logits for a batch `x` (`m x input_dim`): two rectifier layers and a
    /// linear head.
    pub fn logits(&self, g: &mut Graph, x: VarId) -> VarId {
        let z1 = g.matmul(x, self.w1);
        let z1 = g.add_row(z1, self.b1);
        let h1 = g.relu(z1);
        let z2 = g.matmul(h1, self.w2);
        let z2 = g.add_row(z2, self.b2);
        let h2 = g.relu(z2);
        let z3 = g.matmul(h2, self.w3);
        g.add_row(z3, self.b3)
    }
}

/// Two-class probabilities for one aggregated feature vector.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<[f64; 2]> {
    if input.len() != params.input_dim() {
        return Err(LearnError::Schema(format!(
            "mlp expects {} inputs, got {}",
            params.input_dim(),
            input.len()
        )));
    }
    let mut g = Graph::new();
    let x = g.constant(Value::from_row_slice(1, input.len(), input));
    let vars = MlpVars::insert(&mut g, params);
    let logits = vars.logits(&mut g, x);
    let p = g.softmax_rows(logits);
    let v = g.value(p);
    Ok([v[(0, 0)], v[(0, 1)]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fd;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use vantage_core::rng::{derive_rng, sample_normal};

    fn random_params_and_input(seed: u64) -> (MlpParams, Vec<f64>) {
        let mut rng = derive_rng(seed, &[1]);
        let input_dim = rng.gen_range(4..9);
        let h1 = rng.gen_range(3..7);
        let h2 = rng.gen_range(3..7);
        let params = MlpParams::init(input_dim, (h1, h2), &mut rng);
        let input: Vec<f64> = (0..input_dim).map(|_| rng.gen::<f64>()).collect();
        (params, input)
    }

    #[test]
    fn outputs_are_probabilities() {
        for seed in 0..20 {
            let (params, input) = random_params_and_input(seed);
            let p = mlp_forward(&params, &input).unwrap();
            assert!(p[0] > 0.0 && p[0] < 1.0);
            assert!(p[1] > 0.0 && p[1] < 1.0);
            assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_final_layer_gives_half_half() {
        let (mut params, input) = random_params_and_input(7);
        params.w3.fill(0.0);
        params.b3.fill(0.0);
        let p = mlp_forward(&params, &input).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn forward_is_bit_stable() {
        let (params, input) = random_params_and_input(11);
        let a = mlp_forward(&params, &input).unwrap();
        let b = mlp_forward(&params, &input).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let (params, input) = random_params_and_input(3);
        let short = &input[..input.len() - 1];
        assert!(matches!(mlp_forward(&params, short), Err(LearnError::Schema(_))));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpParams::init(10, (8, 8), &mut derive_rng(5, &[2]));
        let b = MlpParams::init(10, (8, 8), &mut derive_rng(5, &[2]));
        assert_eq!(a, b);
    }

    /// Full-model gradient check: loss = cross-entropy of the logits on a
    /// small random batch; every parameter entry checked against central
    /// differences. Zero-initialized biases are replaced with small random
    /// values so rectifier pre-activations don't sit exactly at the kink,
    /// and configurations the checker flags as kink-adjacent are redrawn.
    #[test]
    fn fd_full_model() {
        let mut checked = 0u64;
        let mut attempt = 0u64;
        while checked < 20 {
            assert!(attempt < 200, "too many kink-adjacent configurations");
            let mut rng = derive_rng(950, &[checked, attempt]);
            attempt += 1;
            let input_dim = rng.gen_range(3..7);
            let h1 = rng.gen_range(3..6);
            let h2 = rng.gen_range(3..6);
            let mut params = MlpParams::init(input_dim, (h1, h2), &mut rng);
            for b in [&mut params.b1, &mut params.b2, &mut params.b3] {
                for v in b.iter_mut() {
                    *v = 0.3 * sample_normal(&mut rng);
                }
            }
            let batch = rng.gen_range(1..4);
            let x = Value::from_fn(batch, input_dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..2)).collect();

            let inputs: Vec<Value> = vec![
                params.w1.clone(),
                params.b1.clone(),
                params.w2.clone(),
                params.b2.clone(),
                params.w3.clone(),
                params.b3.clone(),
            ];
            let xc = x.clone();
            let outcome = fd::check(
                move |g, ids| {
                    let x = g.constant(xc.clone());
                    let vars = MlpVars {
                        w1: ids[0],
                        b1: ids[1],
                        w2: ids[2],
                        b2: ids[3],
                        w3: ids[4],
                        b3: ids[5],
                    };
                    let logits = vars.logits(g, x);
                    g.softmax_cross_entropy(logits, &labels)
                },
                &inputs,
                1e-5,
                1e-4,
            );
            match outcome {
                Ok(fd::FdOutcome::Checked) => checked += 1,
                Ok(fd::FdOutcome::KinkAdjacent) => {}
                Err(e) => panic!("configuration {checked}: {e}"),
            }
        }
    }
}
