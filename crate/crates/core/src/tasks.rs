//! Deterministic synthetic tasks: the C4 square/rectangle image toy, set
//! regression with a tunable symmetry break, and scalar toys with closed-form
//! optima for validating the primal–dual dynamics.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::codec::{open, seal, Decoder, Encoder, Magic};
use crate::error::{AceError, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: Magic = *b"ACEDATA\0";
pub const DATASET_VERSION: u32 = 1;

// Independent random streams, so that e.g. the set-regression teacher does
// not depend on the sample count or on ε.
const STREAM_TEACHER: u64 = 1;
const STREAM_SAMPLES: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// How far a target departs from full-group symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakKind {
    None,
    /// Invariant only under the order-2 subgroup (half turns).
    SubgroupC2,
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryBreakSpec {
    pub epsilon: f64,
    pub break_kind: BreakKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C4Target {
    Square,
    Rectangle,
    Nonsymmetric,
}

impl C4Target {
    pub fn name(self) -> &'static str {
        match self {
            C4Target::Square => "square",
            C4Target::Rectangle => "rectangle",
            C4Target::Nonsymmetric => "nonsymmetric",
        }
    }

    pub fn break_kind(self) -> BreakKind {
        match self {
            C4Target::Square => BreakKind::None,
            C4Target::Rectangle => BreakKind::SubgroupC2,
            C4Target::Nonsymmetric => BreakKind::Arbitrary,
        }
    }
}

impl std::str::FromStr for C4Target {
    type Err = AceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(C4Target::Square),
            "rectangle" => Ok(C4Target::Rectangle),
            "nonsymmetric" => Ok(C4Target::Nonsymmetric),
            _ => Err(AceError::InvalidArgument(format!("unknown c4 target '{s}'"))),
        }
    }
}

/// Parameters that regenerate a dataset together with its seed.
#[derive(Debug, Clone, PartialEq)]
pub enum Recipe {
    C4Toy { target: C4Target, image_size: usize },
    SetRegression { n_points: usize, d: usize, epsilon: f64 },
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::C4Toy { target, image_size } => write!(f, "c4_toy({}, {image_size})", target.name()),
            Recipe::SetRegression { n_points, d, epsilon } => write!(f, "set_regression({n_points}, {d}, {epsilon})"),
        }
    }
}

impl Recipe {
    pub fn symmetry_break(&self) -> SymmetryBreakSpec {
        match *self {
            Recipe::C4Toy { target, .. } => SymmetryBreakSpec {
                epsilon: if target == C4Target::Square { 0.0 } else { 1.0 },
                break_kind: target.break_kind(),
            },
            Recipe::SetRegression { epsilon, .. } => SymmetryBreakSpec {
                epsilon,
                break_kind: if epsilon == 0.0 { BreakKind::None } else { BreakKind::Arbitrary },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Seeded shuffle, then 80% / 10% / 10%.
    pub fn new(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream(seed, STREAM_SPLIT));
        let n_train = n * 8 / 10;
        let n_val = n / 10;
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Self { train: idx, val, test }
    }

    fn name_of(&self, i: usize) -> &'static str {
        if self.train.contains(&i) {
            "train"
        } else if self.val.contains(&i) {
            "val"
        } else {
            "test"
        }
    }
}

#[derive(Debug)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub splits: Splits,
    pub seed: u64,
    pub recipe: Recipe,
}

/// 1-D profile of a centred interval of half-width `half`, blurred with `[1, 2, 1]/4`.
fn blurred_profile(size: usize, half: usize) -> Vec<f64> {
    let lo = (size / 2).saturating_sub(half);
    let hi = (size / 2 + half).min(size);
    let indicator: Vec<f64> = (0..size).map(|i| if (lo..hi).contains(&i) { 1.0 } else { 0.0 }).collect();
    (0..size)
        .map(|i| {
            let left = if i > 0 { indicator[i - 1] } else { 0.0 };
            let right = indicator.get(i + 1).copied().unwrap_or(0.0);
            (left + 2.0 * indicator[i] + right) / 4.0
        })
        .collect()
}

/// Inputs are centred filled squares of half-size `s ∈ 1..H/2` and intensity
/// `c ∈ [0.5, 1)`. Targets are `c·b_r(i)·b_c(j)` for blurred 1-D profiles:
/// `square` uses the square's own profile on both axes (C4-symmetric and equal
/// to a symmetric 3×3 blur of the input), `rectangle` widens the columns by one
/// pixel (half-turn symmetric only), `nonsymmetric` multiplies the blurred
/// square by a ramp with no rotational symmetry.
pub fn c4_toy(target: C4Target, n: usize, image_size: usize, seed: u64) -> Result<Dataset> {
    let h = image_size;
    if h < 8 || h % 2 == 1 {
        return Err(AceError::InvalidArgument(format!("image size must be even and at least 8, got {h}")));
    }
    let mut rng = stream(seed, STREAM_SAMPLES);
    let (mut inputs, mut targets) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let s = rng.gen_range(1..h / 2);
        let c: f64 = rng.gen_range(0.5..1.0);
        let (lo, hi) = (h / 2 - s, h / 2 + s);
        let mut x = vec![0.0; h * h];
        for i in lo..hi {
            for j in lo..hi {
                x[i * h + j] = c;
            }
        }
        let rows = blurred_profile(h, s);
        let cols = blurred_profile(h, if target == C4Target::Rectangle { s + 1 } else { s });
        let mut y = vec![0.0; h * h];
        for i in 0..h {
            for j in 0..h {
                let mut v = c * rows[i] * cols[j];
                if target == C4Target::Nonsymmetric {
                    v *= 0.5 + (i + 2 * j) as f64 / (3 * (h - 1)) as f64;
                }
                y[i * h + j] = v;
            }
        }
        inputs.push(Tensor::new(x, &[1, h, h])?);
        targets.push(Tensor::new(y, &[1, h, h])?);
    }
    Ok(Dataset { inputs, targets, splits: Splits::new(n, seed), seed, recipe: Recipe::C4Toy { target, image_size } })
}

/// Teacher of the set-regression task; drawn from the seed alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SetTeacher {
    d: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl SetTeacher {
    pub fn new(d: usize, seed: u64) -> Self {
        let mut rng = stream(seed, STREAM_TEACHER);
        let scale = 1.0 / (d as f64).sqrt();
        let mut draw = || (0..d * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
        let (a, b, c) = (draw(), draw(), draw());
        Self { d, a, b, c }
    }

    fn row_times(&self, row: &[f64], m: &[f64]) -> Vec<f64> {
        (0..self.d).map(|k| (0..self.d).map(|j| row[j] * m[j * self.d + k]).sum()).collect()
    }

    /// `y_i = tanh(x_i A + mean(X) B) + ε·w_i·(x_i C)` with `w_i = 2i/(n−1) − 1`.
    /// The first term is permutation-equivariant; the second depends on row position.
    pub fn target(&self, x: &[f64], n: usize, epsilon: f64) -> Vec<f64> {
        let d = self.d;
        let mean: Vec<f64> = (0..d).map(|k| (0..n).map(|i| x[i * d + k]).sum::<f64>() / n as f64).collect();
        let pooled = self.row_times(&mean, &self.b);
        let mut y = Vec::with_capacity(n * d);
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let local = self.row_times(row, &self.a);
            let w = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            let broken = self.row_times(row, &self.c);
            y.extend((0..d).map(|k| (local[k] + pooled[k]).tanh() + epsilon * w * broken[k]));
        }
        y
    }
}

/// Sets of `n_points` rows in `ℝ^d` with standard normal entries and targets
/// from [`SetTeacher::target`].
pub fn set_regression(n_points: usize, d: usize, epsilon: f64, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_points < 2 {
        return Err(AceError::InvalidArgument(format!("set regression needs at least 2 points, got {n_points}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) || d == 0 {
        return Err(AceError::InvalidArgument(format!("invalid set regression parameters d = {d}, epsilon = {epsilon}")));
    }
    let teacher = SetTeacher::new(d, seed);
    let mut rng = stream(seed, STREAM_SAMPLES);
    let (mut inputs, mut targets) = (Vec::with_capacity(n_samples), Vec::with_capacity(n_samples));
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..n_points * d).map(|_| rng.sample(StandardNormal)).collect();
        let y = teacher.target(&x, n_points, epsilon);
        inputs.push(Tensor::new(x, &[n_points, d])?);
        targets.push(Tensor::new(y, &[n_points, d])?);
    }
    Ok(Dataset {
        inputs,
        targets,
        splits: Splits::new(n_samples, seed),
        seed,
        recipe: Recipe::SetRegression { n_points, d, epsilon },
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Adds independent Gaussian noise of standard deviation `std` to every target.
    pub fn add_target_noise(&mut self, std: f64) -> Result<()> {
        let mut rng = stream(self.seed, STREAM_NOISE);
        for t in &self.targets {
            t.update_data(|d| d.iter_mut().for_each(|v| *v += std * rng.sample::<f64, _>(StandardNormal)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match &self.recipe {
            Recipe::C4Toy { target, image_size } => {
                enc.u8(0).str(target.name()).usize(*image_size);
            }
            Recipe::SetRegression { n_points, d, epsilon } => {
                enc.u8(1).usize(*n_points).usize(*d).f64(*epsilon);
            }
        }
        enc.u64(self.seed).usize(self.len());
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            enc.usizes(x.shape()).f64s(&x.data()).usizes(y.shape()).f64s(&y.data());
        }
        enc.usizes(&self.splits.train).usizes(&self.splits.val).usizes(&self.splits.test);
        seal(&DATASET_MAGIC, DATASET_VERSION, &enc.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(open(&DATASET_MAGIC, DATASET_VERSION, bytes)?);
        let recipe = match dec.u8()? {
            0 => Recipe::C4Toy { target: dec.str()?.parse()?, image_size: dec.usize()? },
            1 => Recipe::SetRegression { n_points: dec.usize()?, d: dec.usize()?, epsilon: dec.f64()? },
            t => return Err(AceError::Corrupt(format!("unknown recipe tag {t}"))),
        };
        let seed = dec.u64()?;
        let n = dec.usize()?;
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let shape = dec.usizes()?;
            inputs.push(Tensor::new(dec.f64s()?, &shape)?);
            let shape = dec.usizes()?;
            targets.push(Tensor::new(dec.f64s()?, &shape)?);
        }
        let splits = Splits { train: dec.usizes()?, val: dec.usizes()?, test: dec.usizes()? };
        dec.finish()?;
        let mut all: Vec<usize> = splits.train.iter().chain(&splits.val).chain(&splits.test).copied().collect();
        all.sort_unstable();
        if all != (0..n).collect::<Vec<_>>() {
            return Err(AceError::Corrupt("splits do not partition the samples".into()));
        }
        Ok(Self { inputs, targets, splits, seed, recipe })
    }

    /// One row per sample: `index,split,input,target`, tensors flattened with `;`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,split,input,target")?;
        let join = |t: &Tensor| t.data().iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(";");
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            writeln!(out, "{i},{},{},{}", self.splits.name_of(i), join(x), join(y))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarToyKind {
    /// `min (γ − a)²  s.t.  γ = 0`.
    StrictKkt,
    /// `min (γ − a)² + (ρ/2)u²  s.t.  |γ| ≤ u`.
    ResilientKkt { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum {
    pub gamma: f64,
    pub lambda: f64,
    /// Only for the resilient toy.
    pub u: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarToy {
    pub kind: ScalarToyKind,
    pub a: f64,
}

impl ScalarToy {
    pub fn new(kind: ScalarToyKind, a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(AceError::InvalidArgument("scalar toy target must be finite".into()));
        }
        if let ScalarToyKind::ResilientKkt { rho } = kind {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(AceError::InvalidArgument(format!("rho must be positive, got {rho}")));
            }
        }
        Ok(Self { kind, a })
    }

    /// `(γ − a)²`.
    pub fn objective(&self, gamma: f64) -> f64 {
        (gamma - self.a) * (gamma - self.a)
    }

    /// Closed-form KKT point. Strict: stationarity `2(γ − a) + λ = 0` at `γ = 0`.
    /// Resilient: `|γ| = u`, `ρu = λ`, `2(γ − a) + λ·sign(γ) = 0` give `u = 2|a|/(2 + ρ)`.
    pub fn optimum(&self) -> ScalarOptimum {
        match self.kind {
            ScalarToyKind::StrictKkt => ScalarOptimum { gamma: 0.0, lambda: 2.0 * self.a, u: None },
            ScalarToyKind::ResilientKkt { rho } => {
                let u = 2.0 * self.a.abs() / (2.0 + rho);
                ScalarOptimum { gamma: u * self.a.signum() * (self.a != 0.0) as u8 as f64, lambda: rho * u, u: Some(u) }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{Group, GroupElement, Representation, Space};

    fn rotate(t: &Tensor, r: u8) -> Tensor {
        let h = t.shape()[1];
        let rep = Representation::new(Group::C4, Space::Image { channels: 1, height: h, width: h }).unwrap();
        rep.apply(&GroupElement::Rotation(r), t).unwrap()
    }

    fn dist(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn square_targets_are_fixed_by_every_rotation() {
        let ds = c4_toy(C4Target::Square, 40, 8, 1).unwrap();
        for (x, y) in ds.inputs.iter().zip(&ds.targets) {
            for r in 0..4 {
                assert_eq!(rotate(y, r).to_vec(), y.to_vec());
                assert_eq!(rotate(x, r).to_vec(), x.to_vec());
            }
        }
    }

    #[test]
    fn rectangle_targets_have_only_half_turn_symmetry() {
        let ds = c4_toy(C4Target::Rectangle, 40, 8, 2).unwrap();
        for y in &ds.targets {
            assert_eq!(rotate(y, 2).to_vec(), y.to_vec());
            assert!(dist(&rotate(y, 1), y) > 1e-3);
        }
    }

    #[test]
    fn nonsymmetric_targets_have_no_rotational_symmetry() {
        let ds = c4_toy(C4Target::Nonsymmetric, 40, 10, 3).unwrap();
        for y in &ds.targets {
            let closest = (1..4).map(|r| dist(&rotate(y, r), y)).fold(f64::INFINITY, f64::min);
            assert!(closest > 0.0);
        }
    }

    /// Independent check that the square target is the input blurred by the
    /// symmetric 3×3 kernel `[1,2,1]ᵀ[1,2,1]/16`.
    #[test]
    fn square_target_is_a_blur_of_the_input() {
        let ds = c4_toy(C4Target::Square, 10, 8, 4).unwrap();
        let k = [1.0, 2.0, 1.0];
        for (x, y) in ds.inputs.iter().zip(&ds.targets) {
            let (x, y) = (x.to_vec(), y.to_vec());
            for i in 0..8i32 {
                for j in 0..8i32 {
                    let mut acc = 0.0;
                    for u in -1..=1i32 {
                        for v in -1..=1i32 {
                            let (a, b) = (i + u, j + v);
                            if (0..8).contains(&a) && (0..8).contains(&b) {
                                acc += k[(u + 1) as usize] * k[(v + 1) as usize] / 16.0 * x[(a * 8 + b) as usize];
                            }
                        }
                    }
                    assert!((acc - y[(i * 8 + j) as usize]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn invalid_image_sizes_are_rejected() {
        assert!(c4_toy(C4Target::Square, 4, 7, 0).is_err());
        assert!(c4_toy(C4Target::Square, 4, 6, 0).is_err());
    }

    fn permute_rows(x: &[f64], perm: &[usize], d: usize) -> Vec<f64> {
        perm.iter().flat_map(|&p| x[p * d..(p + 1) * d].to_vec()).collect()
    }

    fn target_defect(teacher: &SetTeacher, x: &[f64], n: usize, d: usize, eps: f64, perms: &[Vec<usize>]) -> f64 {
        let y = teacher.target(x, n, eps);
        perms
            .iter()
            .map(|p| {
                let lhs = teacher.target(&permute_rows(x, p, d), n, eps);
                let rhs = permute_rows(&y, p, d);
                lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn symmetric_set_targets_commute_with_permutations() {
        let (n, d) = (5, 3);
        let ds = set_regression(n, d, 0.0, 30, 5).unwrap();
        let teacher = SetTeacher::new(d, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let group = Group::Symmetric(n);
        for x in &ds.inputs {
            let perms: Vec<Vec<usize>> = (0..20)
                .map(|_| match group.sample(&mut rng) {
                    GroupElement::Permutation(p) => p,
                    _ => unreachable!(),
                })
                .collect();
            assert!(target_defect(&teacher, &x.to_vec(), n, d, 0.0, &perms) <= 1e-12);
        }
    }

    #[test]
    fn target_defect_grows_with_epsilon() {
        let (n, d) = (5, 3);
        let teacher = SetTeacher::new(d, 7);
        let ds = set_regression(n, d, 0.0, 50, 7).unwrap();
        let perms: Vec<Vec<usize>> = Group::Symmetric(n)
            .elements()
            .unwrap()
            .into_iter()
            .map(|g| match g {
                GroupElement::Permutation(p) => p,
                _ => unreachable!(),
            })
            .collect();
        for x in &ds.inputs {
            let x = x.to_vec();
            let defects: Vec<f64> = [0.0, 0.25, 0.5].iter().map(|e| target_defect(&teacher, &x, n, d, *e, &perms)).collect();
            assert!(defects[0] <= 1e-12 && defects[0] < defects[1] && defects[1] < defects[2], "{defects:?}");
        }
    }

    #[test]
    fn teacher_does_not_depend_on_epsilon_or_sample_count() {
        let a = set_regression(4, 2, 0.0, 10, 8).unwrap();
        let b = set_regression(4, 2, 0.5, 20, 8).unwrap();
        assert_eq!(a.inputs[3].to_vec(), b.inputs[3].to_vec());
        let teacher = SetTeacher::new(2, 8);
        assert_eq!(a.targets[3].to_vec(), teacher.target(&a.inputs[3].to_vec(), 4, 0.0));
        assert!(set_regression(1, 2, 0.0, 3, 0).is_err());
        assert!(set_regression(3, 2, -0.1, 3, 0).is_err());
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        for make in [
            (|s| c4_toy(C4Target::Rectangle, 30, 8, s).unwrap()) as fn(u64) -> Dataset,
            |s| set_regression(4, 3, 0.25, 30, s).unwrap(),
        ] {
            assert_eq!(make(11).to_bytes(), make(11).to_bytes());
            assert_ne!(make(11).to_bytes(), make(12).to_bytes());
        }
    }

    #[test]
    fn splits_partition_the_indices() {
        for n in [0, 1, 9, 10, 57, 200] {
            let s = Splits::new(n, 3);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert_eq!(s.train.len(), n * 8 / 10);
            assert_eq!(s.val.len(), n / 10);
        }
    }

    #[test]
    fn container_round_trip_and_csv() {
        let mut ds = set_regression(3, 2, 0.5, 12, 9).unwrap();
        ds.add_target_noise(0.1).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), ds.to_bytes());
        assert_eq!(back.recipe, ds.recipe);

        let mut bytes = ds.to_bytes();
        bytes[9] ^= 1;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(AceError::VersionMismatch { .. })));

        let mut csv = Vec::new();
        ds.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 13);
        let first = text.lines().nth(1).unwrap();
        let value: f64 = first.split(',').nth(2).unwrap().split(';').next().unwrap().parse().unwrap();
        assert_eq!(value.to_bits(), ds.inputs[0].data()[0].to_bits());
    }

    #[test]
    fn scalar_toy_optima() {
        let strict = ScalarToy::new(ScalarToyKind::StrictKkt, 1.0).unwrap();
        assert_eq!(strict.optimum(), ScalarOptimum { gamma: 0.0, lambda: 2.0, u: None });
        let res = ScalarToy::new(ScalarToyKind::ResilientKkt { rho: 1.0 }, 1.0).unwrap().optimum();
        assert!((res.u.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((res.gamma - 2.0 / 3.0).abs() < 1e-15 && (res.lambda - 2.0 / 3.0).abs() < 1e-15);
        let zero = ScalarToy::new(ScalarToyKind::ResilientKkt { rho: 1.0 }, 0.0).unwrap().optimum();
        assert_eq!((zero.gamma, zero.u, zero.lambda), (0.0, Some(0.0), 0.0));

        // Brute-force oracle: minimise (u − a)² + (ρ/2)u² over a fine grid of u ≥ 0.
        for (a, rho) in [(1.0, 1.0), (0.8, 2.5), (-1.5, 0.5)] {
            let toy = ScalarToy::new(ScalarToyKind::ResilientKkt { rho }, a).unwrap();
            let best = (0..200_001)
                .map(|k| k as f64 * 1e-5)
                .min_by(|x, y| {
                    let f = |u: f64| (u - f64::abs(a)).powi(2) + rho / 2.0 * u * u;
                    f(*x).total_cmp(&f(*y))
                })
                .unwrap();
            assert!((toy.optimum().u.unwrap() - best).abs() < 1e-4);
            assert!((toy.optimum().gamma.abs() - best).abs() < 1e-4);
        }
        assert!(ScalarToy::new(ScalarToyKind::ResilientKkt { rho: 0.0 }, 1.0).is_err());
    }
}
