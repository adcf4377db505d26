use rand::Rng;

use super::{spectral_norm, uniform_init};
use crate::error::{AceError, Result};
use crate::groups::Space;
use crate::tensor::Tensor;

/// Relative change of the σ estimate below which power iteration stops.
pub const POWER_ITER_RTOL: f64 = 1e-10;
/// Hard limit on power-iteration steps per matrix.
pub const POWER_ITER_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeqKind {
    /// `x ↦ xW` on the flattened space.
    Dense,
    /// `x ↦ relu(xW₁)W₂` with the given hidden width.
    Mlp { hidden: usize },
}

/// Unconstrained branch acting on the flattened layer space. Bias-free, so
/// `f(0) = 0` and `‖f(x)‖ ≤ B‖x‖` holds with `B` a product of spectral norms.
#[derive(Debug)]
pub struct NonEquivariantLayer {
    kind: NeqKind,
    /// Row-vector convention: each matrix is `in×out`.
    weights: Vec<Tensor>,
    input: Space,
    output: Space,
    /// Power-iteration vectors (length `in`) persisted across normalisation calls.
    power_vectors: Vec<Vec<f64>>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

impl NonEquivariantLayer {
    /// Builds a branch from explicit weights. Power vectors start at the
    /// normalised all-ones vector.
    pub fn new(kind: NeqKind, weights: Vec<Tensor>, input: Space, output: Space) -> Result<Self> {
        let (d_in, d_out) = (input.numel(), output.numel());
        let expected: Vec<[usize; 2]> = match kind {
            NeqKind::Dense => vec![[d_in, d_out]],
            NeqKind::Mlp { hidden } => vec![[d_in, hidden], [hidden, d_out]],
        };
        if weights.len() != expected.len() {
            return Err(AceError::InvalidArgument(format!(
                "{kind:?} branch takes {} weight matrices, got {}",
                expected.len(),
                weights.len()
            )));
        }
        for (w, shape) in weights.iter().zip(&expected) {
            if w.shape() != shape {
                return Err(AceError::ShapeMismatch { op: "neq_weight", left: shape.to_vec(), right: w.shape().to_vec() });
            }
        }
        let power_vectors = expected
            .iter()
            .map(|s| vec![1.0 / (s[0] as f64).sqrt(); s[0]])
            .collect();
        Ok(Self { kind, weights, input, output, power_vectors })
    }

    pub fn random<R: Rng + ?Sized>(kind: NeqKind, input: Space, output: Space, rng: &mut R) -> Result<Self> {
        let (d_in, d_out) = (input.numel(), output.numel());
        let weights = match kind {
            NeqKind::Dense => vec![uniform_init(&[d_in, d_out], d_in, rng)],
            NeqKind::Mlp { hidden } => vec![
                uniform_init(&[d_in, hidden], d_in, rng),
                uniform_init(&[hidden, d_out], hidden, rng),
            ],
        };
        Self::new(kind, weights, input, output)
    }

    /// Restores persisted power-iteration vectors.
    pub fn with_power_vectors(mut self, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let ok = vectors.len() == self.weights.len()
            && vectors.iter().zip(&self.weights).all(|(v, w)| v.len() == w.shape()[0]);
        if !ok {
            return Err(AceError::InvalidArgument("power vectors do not match weight shapes".into()));
        }
        self.power_vectors = vectors;
        Ok(self)
    }

    pub fn kind(&self) -> NeqKind {
        self.kind
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn power_vectors(&self) -> &[Vec<f64>] {
        &self.power_vectors
    }

    pub fn input_space(&self) -> Space {
        self.input
    }

    pub fn output_space(&self) -> Space {
        self.output
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        self.input.check(z)?;
        let mut h = z.reshape(&[1, self.input.numel()])?.matmul(&self.weights[0])?;
        if let Some(w2) = self.weights.get(1) {
            h = h.relu().matmul(w2)?;
        }
        h.reshape(&self.output.shape())
    }

    /// `B` with `‖f(x)‖ ≤ B‖x‖`: product of the spectral norms (ReLU is
    /// 1-Lipschitz and fixes 0). The same number certifies the Lipschitz constant.
    pub fn operator_bound(&self) -> Result<f64> {
        if !self.weights.iter().all(Tensor::all_finite) {
            return Err(AceError::NonFiniteWeights(format!("{:?}", self.kind)));
        }
        Ok(self
            .weights
            .iter()
            .map(|w| spectral_norm(&w.data(), [w.shape()[0], w.shape()[1]]))
            .product())
    }

    pub fn lipschitz_bound(&self) -> Result<f64> {
        self.operator_bound()
    }

    /// Divides every weight matrix by its power-iteration estimate of the
    /// largest singular value. Returns the estimates (before division).
    ///
    /// `n_iters` is a minimum: iteration continues until the estimate moves by
    /// less than [`POWER_ITER_RTOL`] (relative) or [`POWER_ITER_CAP`] steps have
    /// run, since a fixed count underestimates σ when the top singular values
    /// are close. With persisted vectors the extra steps are rare.
    pub fn spectral_normalize(&mut self, n_iters: usize) -> Result<Vec<f64>> {
        if n_iters == 0 {
            return Err(AceError::InvalidArgument("spectral normalisation needs at least one iteration".into()));
        }
        let mut sigmas = Vec::with_capacity(self.weights.len());
        for (w, u) in self.weights.iter().zip(self.power_vectors.iter_mut()) {
            let (rows, cols) = (w.shape()[0], w.shape()[1]);
            let sigma = {
                let data = w.data();
                let mut v = vec![0.0; cols];
                let mut sigma = 0.0;
                for it in 0..n_iters.max(POWER_ITER_CAP) {
                    // v ← Wᵀu / ‖Wᵀu‖, u ← Wv / ‖Wv‖; ‖Wv‖ estimates σ_max.
                    v.iter_mut().for_each(|x| *x = 0.0);
                    for i in 0..rows {
                        let ui = u[i];
                        let row = &data[i * cols..(i + 1) * cols];
                        v.iter_mut().zip(row).for_each(|(vj, wij)| *vj += wij * ui);
                    }
                    if normalize(&mut v) == 0.0 {
                        break;
                    }
                    for i in 0..rows {
                        u[i] = data[i * cols..(i + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum();
                    }
                    let prev = sigma;
                    sigma = normalize(u);
                    if sigma == 0.0 || (it + 1 >= n_iters && (sigma - prev).abs() <= POWER_ITER_RTOL * sigma) {
                        break;
                    }
                }
                sigma
            };
            if u.iter().all(|x| *x == 0.0) {
                // A zero matrix annihilated the vector; restart from a valid direction.
                u.iter_mut().for_each(|x| *x = 1.0 / (rows as f64).sqrt());
            }
            if sigma > 0.0 {
                w.update_data(|d| d.iter_mut().for_each(|x| *x /= sigma));
            }
            sigmas.push(sigma);
        }
        Ok(sigmas)
    }

    pub fn deep_copy(&self) -> Self {
        self.map_weights(Tensor::deep_copy)
    }

    pub fn frozen(&self) -> Self {
        self.map_weights(Tensor::detach)
    }

    fn map_weights(&self, f: impl Fn(&Tensor) -> Tensor) -> Self {
        Self {
            kind: self.kind,
            weights: self.weights.iter().map(f).collect(),
            input: self.input,
            output: self.output,
            power_vectors: self.power_vectors.clone(),
        }
    }
}
