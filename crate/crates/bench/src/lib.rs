//! Seeded fixtures shared by the benchmarks.

use ace_core::layers::{HomotopicModel, NeqKind};
use ace_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng(seed);
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).expect("shape matches data")
}

pub fn random_param(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, seed).requires_grad_leaf()
}

/// The two-layer C4 model used in the image experiments.
pub fn c4_model(side: usize, seed: u64) -> HomotopicModel {
    HomotopicModel::c4_image_model(side, 2, 3, NeqKind::Dense, 1.0, &mut rng(seed)).expect("valid sizes")
}

/// DeepSets model on 5-point sets of 2 features.
pub fn set_model(seed: u64) -> HomotopicModel {
    HomotopicModel::deepsets_model(5, &[2, 8, 8, 2], NeqKind::Dense, 1.0, &mut rng(seed)).expect("valid sizes")
}
