//! Finite-difference audit of every differentiable op, every layer kind and
//! both Lagrangians. Shared by the CLI `gradcheck` command and the tests.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{lagrangian_resilient, lagrangian_strict, DualState};
use crate::error::Result;
use crate::groups::Space;
use crate::layers::{EquivariantLayer, NeqKind, NonEquivariantLayer};
use crate::tensor::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::tensor::{concat, conv2d, CustomBackward, Padding, Tensor};

/// Worst relative error tolerated by the audit.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Problem sizes. `width == 0` means there is nothing to differentiate and
/// the audit passes vacuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSizes {
    /// Vector length / channel count / set feature width.
    pub width: usize,
    /// Image side for the convolutions (at least the kernel size 3).
    pub side: usize,
    /// Set size for DeepSets layers.
    pub set_size: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self { width: 3, side: 4, set_size: 3 }
    }
}

/// Deliberately wrong backward rules, used to prove the audit can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Cube with its derivative scaled by 1.01.
    ScaledCubeGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub checks: Vec<GradCheckReport>,
}

impl SuiteReport {
    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.worst_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.worst() <= GRADCHECK_TOL
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckReport> {
        self.checks.iter().filter(|c| !c.passes(GRADCHECK_TOL))
    }
}

struct Cube {
    slope: f64,
}

impl CustomBackward for Cube {
    fn name(&self) -> &'static str {
        "cube"
    }

    fn backward(&self, input: &[f64], _output: &[f64], grad_out: &[f64]) -> Vec<f64> {
        input.iter().zip(grad_out).map(|(x, g)| self.slope * 3.0 * x * x * g).collect()
    }
}

fn cube(t: &Tensor, slope: f64) -> Result<Tensor> {
    let out = t.data().iter().map(|x| x * x * x).collect();
    t.custom_unary(out, Rc::new(Cube { slope }))
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).expect("shape matches")
}

/// Magnitudes in [0.1, 1) with random signs, so kinks are never straddled.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(v, shape).expect("shape matches")
}

/// Projects onto a fixed random direction so every output entry contributes.
fn probe(t: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = uniform(t.shape(), &mut rng);
    Ok(t.mul(&w)?.sum())
}

/// Runs the full audit. With `fault` set, a corrupted op is added to the list.
pub fn run_suite(seed: u64, sizes: SuiteSizes, fault: Option<Fault>) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    if sizes.width > 0 {
        checks.extend(op_checks(seed, sizes)?);
        checks.extend(layer_checks(seed, sizes)?);
        checks.extend(lagrangian_checks(seed, sizes)?);
    }
    if let Some(Fault::ScaledCubeGradient) = fault {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = away_from_zero(&[sizes.width.max(1)], &mut rng);
        checks.push(check_gradients("faulty_cube", &[x], DEFAULT_STEP, |t| probe(&cube(&t[0], 1.01)?, 1))?);
    }
    Ok(SuiteReport { checks })
}

fn op_checks(seed: u64, s: SuiteSizes) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s.width;
    let a = away_from_zero(&[n, n], &mut rng);
    let b = away_from_zero(&[n, n], &mut rng);
    let c = Tensor::new(vec![rng.gen_range(0.5..1.5)], &[1])?;
    let h = DEFAULT_STEP;
    let mut out = vec![
        check_gradients("add", &[a.clone(), b.clone()], h, |t| probe(&t[0].add(&t[1])?, 1))?,
        check_gradients("sub", &[a.clone(), b.clone()], h, |t| probe(&t[0].sub(&t[1])?, 2))?,
        check_gradients("mul", &[a.clone(), b.clone()], h, |t| probe(&t[0].mul(&t[1])?, 3))?,
        check_gradients("mul_broadcast", &[a.clone(), c.clone()], h, |t| probe(&t[0].mul(&t[1])?, 4))?,
        check_gradients("relu", &[a.clone()], h, |t| probe(&t[0].relu(), 5))?,
        check_gradients("abs", &[a.clone()], h, |t| probe(&t[0].abs(), 6))?,
        check_gradients("square", &[a.clone()], h, |t| probe(&t[0].square(), 7))?,
        check_gradients("neg", &[a.clone()], h, |t| probe(&t[0].neg(), 8))?,
        check_gradients("scale", &[a.clone()], h, |t| probe(&t[0].scale(-1.7), 9))?,
        check_gradients("matmul", &[a.clone(), b.clone()], h, |t| probe(&t[0].matmul(&t[1])?, 10))?,
        check_gradients("sum", &[a.clone()], h, |t| Ok(t[0].square().sum()))?,
        check_gradients("mean", &[a.clone()], h, |t| Ok(t[0].square().mean()))?,
        check_gradients("l2_norm", &[a.clone()], h, |t| Ok(t[0].l2_norm()))?,
        check_gradients("sum_axes", &[a.clone()], h, |t| probe(&t[0].sum_axes(&[0])?, 11))?,
        check_gradients("mean_axes", &[a.clone()], h, |t| probe(&t[0].mean_axes(&[1])?, 12))?,
        check_gradients("reshape", &[a.clone()], h, |t| probe(&t[0].reshape(&[n * n])?, 13))?,
        check_gradients("concat", &[a.clone(), b.clone()], h, |t| {
            probe(&concat(&[t[0].clone(), t[1].clone()]), 14)
        })?,
        check_gradients("custom_cube", &[a.clone()], h, |t| probe(&cube(&t[0], 1.0)?, 15))?,
    ];
    // Repeated indices exercise gradient accumulation.
    let index: Rc<Vec<usize>> = Rc::new((0..2 * n * n).map(|i| (i * 7) % (n * n)).collect());
    out.push(check_gradients("gather", &[a.clone()], h, |t| {
        probe(&t[0].gather(index.clone(), &[2 * n * n])?, 16)
    })?);
    let img = uniform(&[n, s.side, s.side], &mut rng);
    let k = uniform(&[2, n, 3, 3], &mut rng);
    out.push(check_gradients("conv2d", &[img, k], h, |t| probe(&conv2d(&t[0], &t[1], Padding::Same)?, 17))?);
    Ok(out)
}

fn layer_checks(seed: u64, s: SuiteSizes) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let (c, side, h) = (s.width, s.side, DEFAULT_STEP);
    let mut out = Vec::new();

    let img = uniform(&[c, side, side], &mut rng);
    let lift_k = uniform(&[2, c, 3, 3], &mut rng);
    out.push(check_gradients("c4_lifting_conv", &[img, lift_k], h, |t| {
        probe(&EquivariantLayer::c4_lifting_conv(t[1].clone(), side)?.forward(&t[0])?, 20)
    })?);

    let reg = uniform(&[4, c, side, side], &mut rng);
    let group_k = uniform(&[2, 4, c, 3, 3], &mut rng);
    out.push(check_gradients("c4_group_conv", &[reg, group_k], h, |t| {
        probe(&EquivariantLayer::c4_group_conv(t[1].clone(), side)?.forward(&t[0])?, 21)
    })?);

    let n = s.set_size.max(1);
    let set = uniform(&[n, c], &mut rng);
    let (a, b) = (uniform(&[c, 2], &mut rng), uniform(&[c, 2], &mut rng));
    out.push(check_gradients("deepsets_linear", &[set.clone(), a, b], h, |t| {
        probe(&EquivariantLayer::deepsets_linear(t[1].clone(), t[2].clone(), n)?.forward(&t[0])?, 22)
    })?);

    let (space_in, space_out) = (Space::Set { n, d: c }, Space::Set { n, d: 2 });
    let dense = uniform(&[n * c, n * 2], &mut rng);
    out.push(check_gradients("neq_dense", &[set.clone(), dense], h, |t| {
        let layer = NonEquivariantLayer::new(NeqKind::Dense, vec![t[1].clone()], space_in, space_out)?;
        probe(&layer.forward(&t[0])?, 23)
    })?);

    let hidden = 4;
    let set_far = away_from_zero(&[n, c], &mut rng);
    let (w1, w2) = (uniform(&[n * c, hidden], &mut rng), uniform(&[hidden, n * 2], &mut rng));
    out.push(check_gradients("neq_mlp", &[set_far, w1, w2], h, |t| {
        let layer = NonEquivariantLayer::new(NeqKind::Mlp { hidden }, vec![t[1].clone(), t[2].clone()], space_in, space_out)?;
        probe(&layer.forward(&t[0])?, 24)
    })?);
    Ok(out)
}

/// A one-layer homotopic map `f(x) = eq(x) + γ·neq(x)` written out with γ as
/// a free input, so gradients reach γ, the weights and (for the resilient
/// form) the slack leaf.
fn homotopic_j0(t: &[Tensor], n: usize, d: usize) -> Result<Tensor> {
    let (x, a, b, w, gamma, y) = (&t[0], &t[1], &t[2], &t[3], &t[4], &t[5]);
    let eq = EquivariantLayer::deepsets_linear(a.clone(), b.clone(), n)?;
    let neq = NonEquivariantLayer::new(NeqKind::Dense, vec![w.clone()], Space::Set { n, d }, Space::Set { n, d })?;
    let f = eq.forward(x)?.add(&neq.forward(x)?.mul(gamma)?)?;
    Ok(f.relu().sub(y)?.square().sum())
}

fn lagrangian_checks(seed: u64, s: SuiteSizes) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15);
    let (n, d, h) = (s.set_size.max(1), s.width, DEFAULT_STEP);
    let mut inputs = vec![
        uniform(&[n, d], &mut rng),
        uniform(&[d, d], &mut rng),
        uniform(&[d, d], &mut rng),
        uniform(&[n * d, n * d], &mut rng),
        Tensor::new(vec![rng.gen_range(0.2..0.9)], &[1])?,
        uniform(&[n, d], &mut rng),
    ];

    let mut strict = DualState::strict(1);
    strict.lambda[0] = rng.gen_range(-2.0..2.0);
    let strict_report = check_gradients("lagrangian_strict", &inputs, h, |t| {
        lagrangian_strict(&homotopic_j0(t, n, d)?, &[t[4].clone()], &strict)
    })?;

    let mut resilient = DualState::resilient(1, 1.0)?;
    resilient.lambda[0] = rng.gen_range(0.1..2.0);
    inputs.push(Tensor::new(vec![rng.gen_range(0.1..1.0)], &[1])?);
    let resilient_report = check_gradients("lagrangian_resilient", &inputs, h, |t| {
        lagrangian_resilient(&homotopic_j0(t, n, d)?, &[t[4].clone()], &t[6], &resilient)
    })?;
    Ok(vec![strict_report, resilient_report])
}
