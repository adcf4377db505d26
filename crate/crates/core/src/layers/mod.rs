//! Equivariant layers, unconstrained branches, their homotopic combination
//! and the certified constants (Lipschitz and operator bounds) of each part.

mod equivariant;
mod manifest;
mod model;
mod nonequivariant;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;
use crate::tensor::Tensor;

pub use equivariant::{ConvCertificate, EquivariantKind, EquivariantLayer};
pub use manifest::{decode_model, encode_model, model_from_bytes, model_to_bytes, MODEL_MAGIC, MODEL_VERSION};
pub use model::{Head, HomotopicLayer, HomotopicModel, LayerConstants, ParamGroup};
pub use nonequivariant::{NeqKind, NonEquivariantLayer, POWER_ITER_CAP, POWER_ITER_RTOL};

/// Largest singular value of a row-major `rows×cols` matrix.
pub fn spectral_norm(data: &[f64], [rows, cols]: [usize; 2]) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    DMatrix::from_row_slice(rows, cols, data)
        .singular_values()
        .iter()
        .fold(0.0, |m: f64, s| m.max(*s))
}

/// Trainable tensor with entries uniform in `±√(6/fan_in)`.
pub(crate) fn uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::param(data, shape).expect("length matches shape")
}

/// Certified Lipschitz bound of an equivariant layer under the default certificate.
pub fn lipschitz_bound(layer: &EquivariantLayer) -> Result<f64> {
    layer.lipschitz_bound(ConvCertificate::default())
}

pub fn operator_bound(layer: &NonEquivariantLayer) -> Result<f64> {
    layer.operator_bound()
}

pub fn spectral_normalize(layer: &mut NonEquivariantLayer, n_iters: usize) -> Result<Vec<f64>> {
    layer.spectral_normalize(n_iters)
}
