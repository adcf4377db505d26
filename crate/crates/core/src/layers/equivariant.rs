use std::rc::Rc;

use rand::Rng;

use super::{spectral_norm, uniform_init};
use crate::error::{AceError, Result};
use crate::groups::{rotated_source, Group, Space};
use crate::tensor::{conv2d, Padding, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivariantKind {
    /// `C×H×W → 4×C'×H×W`: correlates with the four rotated copies of each kernel.
    C4LiftingConv,
    /// `4×C×H×W → 4×C'×H×W`: correlates over the group axis with rotated, shifted kernels.
    C4GroupConv,
    /// `n×d → n×d'`: `zA + (1/n)(11ᵀz)B`.
    DeepSetsLinear,
}

impl EquivariantKind {
    pub fn name(self) -> &'static str {
        match self {
            EquivariantKind::C4LiftingConv => "c4_lifting_conv",
            EquivariantKind::C4GroupConv => "c4_group_conv",
            EquivariantKind::DeepSetsLinear => "deepsets_linear",
        }
    }
}

/// How convolution Lipschitz constants are certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvCertificate {
    /// `k·‖K_eff‖_F`: every input pixel enters at most `k²` output patches.
    #[default]
    Frobenius,
    /// Largest singular value of the unrolled linear map. Cost grows with the
    /// square of the layer size; meant for small shapes.
    Exact,
}

#[derive(Debug)]
pub struct EquivariantLayer {
    kind: EquivariantKind,
    weights: Vec<Tensor>,
    input: Space,
    output: Space,
    /// Kernel gather that materialises the effective convolution kernel.
    tiling: Option<Rc<Vec<usize>>>,
    /// Averaging matrix `(1/n)11ᵀ` of the set layer.
    mean_op: Option<Tensor>,
}

/// `eff[(r·C' + o), c, u, v] = K[o, c, rot^r(u, v)]`.
fn lifting_tiling(c_out: usize, c_in: usize, k: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(4 * c_out * c_in * k * k);
    for r in 0..4u8 {
        for o in 0..c_out {
            for c in 0..c_in {
                for u in 0..k {
                    for v in 0..k {
                        let (su, sv) = rotated_source(u, v, r, k);
                        idx.push(((o * c_in + c) * k + su) * k + sv);
                    }
                }
            }
        }
    }
    idx
}

/// `eff[(r·C' + o), (h·C + c), u, v] = K[o, (h − r) mod 4, c, rot^r(u, v)]`.
fn group_tiling(c_out: usize, c_in: usize, k: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(16 * c_out * c_in * k * k);
    for r in 0..4usize {
        for o in 0..c_out {
            for h in 0..4usize {
                let s = (h + 4 - r) % 4;
                for c in 0..c_in {
                    for u in 0..k {
                        for v in 0..k {
                            let (su, sv) = rotated_source(u, v, r as u8, k);
                            idx.push((((o * 4 + s) * c_in + c) * k + su) * k + sv);
                        }
                    }
                }
            }
        }
    }
    idx
}

fn check_kernel_size(k: usize) -> Result<()> {
    if k % 2 == 1 {
        Ok(())
    } else {
        Err(AceError::InvalidArgument(format!("kernel size must be odd, got {k}")))
    }
}

impl EquivariantLayer {
    /// Lifting convolution on `c_in×side×side` images with `c_out×c_in×k×k` kernels.
    pub fn c4_lifting_conv(kernel: Tensor, side: usize) -> Result<Self> {
        let [c_out, c_in, k, k2] = <[usize; 4]>::try_from(kernel.shape()).map_err(|_| AceError::InvalidShape {
            shape: kernel.shape().to_vec(),
            reason: "lifting kernel must be C'×C×k×k".into(),
        })?;
        if k != k2 {
            return Err(AceError::InvalidShape { shape: kernel.shape().to_vec(), reason: "kernel must be square".into() });
        }
        check_kernel_size(k)?;
        Ok(Self {
            kind: EquivariantKind::C4LiftingConv,
            weights: vec![kernel],
            input: Space::Image { channels: c_in, height: side, width: side },
            output: Space::Regular { channels: c_out, height: side, width: side },
            tiling: Some(Rc::new(lifting_tiling(c_out, c_in, k))),
            mean_op: None,
        })
    }

    /// Group convolution on `4×c_in×side×side` maps with `c_out×4×c_in×k×k` kernels.
    pub fn c4_group_conv(kernel: Tensor, side: usize) -> Result<Self> {
        let [c_out, four, c_in, k, k2] = <[usize; 5]>::try_from(kernel.shape()).map_err(|_| AceError::InvalidShape {
            shape: kernel.shape().to_vec(),
            reason: "group kernel must be C'×4×C×k×k".into(),
        })?;
        if four != 4 || k != k2 {
            return Err(AceError::InvalidShape {
                shape: kernel.shape().to_vec(),
                reason: "group kernel must be C'×4×C×k×k".into(),
            });
        }
        check_kernel_size(k)?;
        Ok(Self {
            kind: EquivariantKind::C4GroupConv,
            weights: vec![kernel],
            input: Space::Regular { channels: c_in, height: side, width: side },
            output: Space::Regular { channels: c_out, height: side, width: side },
            tiling: Some(Rc::new(group_tiling(c_out, c_in, k))),
            mean_op: None,
        })
    }

    /// Permutation-equivariant linear map on sets of `n` rows, `a` and `b` both `d×d'`.
    pub fn deepsets_linear(a: Tensor, b: Tensor, n: usize) -> Result<Self> {
        if a.rank() != 2 || a.shape() != b.shape() {
            return Err(AceError::ShapeMismatch {
                op: "deepsets_linear",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        if n == 0 {
            return Err(AceError::InvalidArgument("set size must be positive".into()));
        }
        let (d, d_out) = (a.shape()[0], a.shape()[1]);
        let mean_op = Tensor::full(&[n, n], 1.0 / n as f64);
        Ok(Self {
            kind: EquivariantKind::DeepSetsLinear,
            weights: vec![a, b],
            input: Space::Set { n, d },
            output: Space::Set { n, d: d_out },
            tiling: None,
            mean_op: Some(mean_op),
        })
    }

    pub fn random_c4_lifting<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, side: usize, rng: &mut R) -> Result<Self> {
        let kernel = uniform_init(&[c_out, c_in, k, k], c_in * k * k, rng);
        Self::c4_lifting_conv(kernel, side)
    }

    pub fn random_c4_group<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, side: usize, rng: &mut R) -> Result<Self> {
        let kernel = uniform_init(&[c_out, 4, c_in, k, k], 4 * c_in * k * k, rng);
        Self::c4_group_conv(kernel, side)
    }

    pub fn random_deepsets<R: Rng + ?Sized>(n: usize, d: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let a = uniform_init(&[d, d_out], d, rng);
        let b = uniform_init(&[d, d_out], d, rng);
        Self::deepsets_linear(a, b, n)
    }

    pub fn kind(&self) -> EquivariantKind {
        self.kind
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn input_space(&self) -> Space {
        self.input
    }

    pub fn output_space(&self) -> Space {
        self.output
    }

    /// The group this layer commutes with.
    pub fn group(&self) -> Group {
        match self.input {
            Space::Set { n, .. } => Group::Symmetric(n),
            _ => Group::C4,
        }
    }

    fn kernel_size(&self) -> usize {
        *self.weights[0].shape().last().expect("conv kernels have rank ≥ 4")
    }

    /// Effective kernel of a convolution kind, as a taped gather of the learned kernel.
    pub fn effective_kernel(&self) -> Option<Result<Tensor>> {
        let tiling = self.tiling.as_ref()?;
        let k = self.kernel_size();
        let (c_in, c_out) = match (self.input, self.output) {
            (Space::Image { channels: ci, .. }, Space::Regular { channels: co, .. }) => (ci, co),
            (Space::Regular { channels: ci, .. }, Space::Regular { channels: co, .. }) => (4 * ci, co),
            _ => unreachable!("convolution layers map images or regular maps"),
        };
        Some(self.weights[0].gather(tiling.clone(), &[4 * c_out, c_in, k, k]))
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        self.input.check(z)?;
        match self.kind {
            EquivariantKind::C4LiftingConv | EquivariantKind::C4GroupConv => {
                let kernel = self.effective_kernel().expect("conv kind")?;
                let (_, h, w) = match self.input {
                    Space::Image { channels, height, width } => (channels, height, width),
                    Space::Regular { channels, height, width } => (4 * channels, height, width),
                    _ => unreachable!(),
                };
                let x = z.reshape(&[self.input.numel() / (h * w), h, w])?;
                conv2d(&x, &kernel, Padding::Same)?.reshape(&self.output.shape())
            }
            EquivariantKind::DeepSetsLinear => {
                let mean_op = self.mean_op.as_ref().expect("set kind");
                let local = z.matmul(&self.weights[0])?;
                let pooled = mean_op.matmul(z)?.matmul(&self.weights[1])?;
                local.add(&pooled)
            }
        }
    }

    /// Certified upper bound on the Lipschitz constant of this (linear) layer.
    pub fn lipschitz_bound(&self, cert: ConvCertificate) -> Result<f64> {
        if !self.weights.iter().all(Tensor::all_finite) {
            return Err(AceError::NonFiniteWeights(self.kind.name().into()));
        }
        match (self.kind, cert) {
            (EquivariantKind::DeepSetsLinear, _) => {
                // On mean-free inputs the map is A, on constant-row inputs A + B,
                // and the two subspaces are orthogonal and invariant.
                let (a, b) = (&self.weights[0], &self.weights[1]);
                let shape = [a.shape()[0], a.shape()[1]];
                let sum: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
                Ok(spectral_norm(&a.data(), shape).max(spectral_norm(&sum, shape)))
            }
            (_, ConvCertificate::Frobenius) => {
                let kernel = self.effective_kernel().expect("conv kind")?;
                Ok(self.kernel_size() as f64 * kernel.l2())
            }
            (_, ConvCertificate::Exact) => self.exact_operator_norm(),
        }
    }

    /// Largest singular value of the unrolled map, built column by column.
    pub fn exact_operator_norm(&self) -> Result<f64> {
        let frozen = self.frozen();
        let (n_in, n_out) = (self.input.numel(), self.output.numel());
        let mut matrix = vec![0.0; n_in * n_out];
        let mut basis = vec![0.0; n_in];
        for j in 0..n_in {
            basis[j] = 1.0;
            let col = frozen.forward(&Tensor::new(basis.clone(), &self.input.shape())?)?;
            for (i, v) in col.data().iter().enumerate() {
                matrix[i * n_in + j] = *v;
            }
            basis[j] = 0.0;
        }
        Ok(spectral_norm(&matrix, [n_out, n_in]))
    }

    /// Independent copy with the same gradient flags.
    pub fn deep_copy(&self) -> Self {
        self.map_weights(Tensor::deep_copy)
    }

    /// Copy whose weights do not require gradients, so forward passes record no tape.
    pub fn frozen(&self) -> Self {
        self.map_weights(Tensor::detach)
    }

    fn map_weights(&self, f: impl Fn(&Tensor) -> Tensor) -> Self {
        Self {
            kind: self.kind,
            weights: self.weights.iter().map(f).collect(),
            input: self.input,
            output: self.output,
            tiling: self.tiling.clone(),
            mean_op: self.mean_op.clone(),
        }
    }
}
