//! Measured equivariance and approximation errors, and certified upper
//! bounds on both: closed-form theorem bounds (coarse and refined) and the
//! tighter layer-by-layer recursions evaluated on actual activations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AceError, Result};
use crate::groups::GroupElement;
use crate::layers::{ConvCertificate, HomotopicModel, LayerConstants};
use crate::tensor::Tensor;

/// Default sample count of the Monte-Carlo estimator.
pub const DEFAULT_MC_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivarianceMode {
    /// Every group element; the group must be enumerable.
    Exact,
    /// `samples` uniform draws, with or without replacement.
    MonteCarlo { samples: usize, seed: u64, replace: bool },
}

impl EquivarianceMode {
    pub fn mc(seed: u64) -> Self {
        EquivarianceMode::MonteCarlo { samples: DEFAULT_MC_SAMPLES, seed, replace: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    /// Max over all group elements (exact mode only).
    pub exact_error: Option<f64>,
    /// Mean over the evaluated elements: all of them in exact mode, the samples otherwise.
    pub mean_error: f64,
    pub n_samples: usize,
    pub per_element: Vec<(GroupElement, f64)>,
}

impl EquivarianceReport {
    /// Largest error seen on any evaluated element.
    pub fn max_error(&self) -> f64 {
        self.per_element.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

fn distance(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖ρ_out(g) f(x) − f(ρ_in(g) x)‖` per evaluated element.
pub fn equivariance_error(model: &HomotopicModel, x: &Tensor, mode: EquivarianceMode) -> Result<EquivarianceReport> {
    let group = model.group();
    let elements = match mode {
        EquivarianceMode::Exact => group.elements()?,
        EquivarianceMode::MonteCarlo { samples, seed, replace } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if replace {
                (0..samples).map(|_| group.sample(&mut rng)).collect()
            } else {
                let mut all = group.elements()?;
                if samples > all.len() {
                    return Err(AceError::InvalidArgument(format!(
                        "{samples} samples without replacement from a group of order {}",
                        all.len()
                    )));
                }
                all.shuffle(&mut rng);
                all.truncate(samples);
                all
            }
        }
    };
    if elements.is_empty() {
        return Err(AceError::InvalidArgument("equivariance error needs at least one sample".into()));
    }
    let (rep_in, rep_out) = (model.input_representation(), model.output_representation());
    let fx = model.forward(x)?;
    let per_element = elements
        .into_iter()
        .map(|g| {
            let lhs = rep_out.apply(&g, &fx)?;
            let rhs = model.forward(&rep_in.apply(&g, x)?)?;
            Ok((g, distance(&lhs, &rhs)))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_element.len();
    let mean_error = per_element.iter().map(|(_, e)| e).sum::<f64>() / n as f64;
    let exact_error = matches!(mode, EquivarianceMode::Exact).then(|| per_element.iter().map(|(_, e)| *e).fold(0.0, f64::max));
    Ok(EquivarianceReport { exact_error, mean_error, n_samples: n, per_element })
}

/// Exact mode when the group can be enumerated, otherwise the default Monte-Carlo estimate.
pub fn equivariance_error_auto(model: &HomotopicModel, x: &Tensor, seed: u64) -> Result<f64> {
    if model.group().is_enumerable() {
        Ok(equivariance_error(model, x, EquivarianceMode::Exact)?.max_error())
    } else {
        Ok(equivariance_error(model, x, EquivarianceMode::mc(seed))?.max_error())
    }
}

/// `‖f_γ(x) − f_0(x)‖`.
pub fn approximation_error(model: &HomotopicModel, x: &Tensor) -> Result<f64> {
    let full = model.forward(x)?;
    let projected = model.project_equivariant().forward(x)?;
    Ok(distance(&full, &projected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Thm1Coarse,
    Thm1Refined,
    Thm2Coarse,
    Thm2Refined,
    /// Closed-form coarse equivariance bound with `C = max(B, 1)`; sound only when `M ≤ max(B, 1)`.
    Thm2CoarseMainText,
    DeltaRecursion,
    EpsilonRecursion,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Thm1Coarse => "thm1_coarse",
            BoundKind::Thm1Refined => "thm1_refined",
            BoundKind::Thm2Coarse => "thm2_coarse",
            BoundKind::Thm2Refined => "thm2_refined",
            BoundKind::Thm2CoarseMainText => "thm2_coarse_main_text",
            BoundKind::DeltaRecursion => "delta_recursion",
            BoundKind::EpsilonRecursion => "epsilon_recursion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    /// Per-layer Lipschitz bounds `max(M_eq, M_neq)`.
    pub m: Vec<f64>,
    /// Per-layer branch operator bounds.
    pub b: Vec<f64>,
    /// Constant multiplying γ̄ inside the coarse form (`1` for the approximation bounds).
    pub c: f64,
    pub gamma_bar: f64,
    pub depth: usize,
    pub x_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    pub value: f64,
    pub constants: BoundConstants,
}

fn gamma_bar(gammas: &[f64]) -> f64 {
    gammas.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Approximation bounds with single constants `M ≥ B`:
/// coarse `[Σ_{k<L}(1+γ̄)^k]·γ̄·B·M^{L−1}·‖x‖`,
/// refined `[Σ_{k<L}|γ_{k+1}|(1 + mean_{j≤k}|γ_j|)^k]·B·M^{L−1}·‖x‖`.
pub fn thm1_values(gammas: &[f64], m: f64, b: f64, x_norm: f64) -> (f64, f64) {
    let l = gammas.len();
    let gb = gamma_bar(gammas);
    let scale = b * m.powi(l as i32 - 1) * x_norm;
    let coarse: f64 = (0..l).map(|k| (1.0 + gb).powi(k as i32)).sum::<f64>() * gb * scale;
    let mut prefix = 0.0;
    let mut refined = 0.0;
    for k in 0..l {
        let growth = if k == 0 { 1.0 } else { (1.0 + prefix / k as f64).powi(k as i32) };
        refined += gammas[k].abs() * growth;
        prefix += gammas[k].abs();
    }
    (coarse, refined * scale)
}

/// Equivariance bounds with `B` already including the representation bound:
/// refined `2B²Σ_k|γ_k|(M + max(B, M)·mean_{j≠k}|γ_j|)^{L−1}·‖x‖`,
/// coarse `2γ̄(M + max(B, M, 1)γ̄)^{L−1}·L·B²·‖x‖`.
pub fn thm2_values(gammas: &[f64], m: f64, b: f64, x_norm: f64) -> (f64, f64) {
    let l = gammas.len();
    let gb = gamma_bar(gammas);
    let c = b.max(m).max(1.0);
    let coarse = 2.0 * gb * (m + c * gb).powi(l as i32 - 1) * l as f64 * b * b * x_norm;
    let total: f64 = gammas.iter().map(|g| g.abs()).sum();
    let refined: f64 = gammas
        .iter()
        .map(|g| {
            let rest = if l > 1 { (total - g.abs()) / (l - 1) as f64 } else { 0.0 };
            g.abs() * (m + b.max(m) * rest).powi(l as i32 - 1)
        })
        .sum::<f64>()
        * 2.0
        * b
        * b
        * x_norm;
    (coarse, refined)
}

/// The coarse equivariance bound with `C = max(B, 1)` taken literally.
pub fn thm2_coarse_main_text(gammas: &[f64], m: f64, b: f64, x_norm: f64) -> f64 {
    let l = gammas.len();
    let gb = gamma_bar(gammas);
    2.0 * gb * (m + b.max(1.0) * gb).powi(l as i32 - 1) * l as f64 * b * b * x_norm
}

/// Per-layer constants of a model plus the representation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    pub layers: Vec<LayerConstants>,
    /// Largest operator norm of the input/output representations.
    pub b_rho: f64,
}

impl ModelConstants {
    pub fn of(model: &HomotopicModel, cert: ConvCertificate) -> Result<Self> {
        let b_rho = model.input_representation().operator_bound().max(model.output_representation().operator_bound());
        Ok(Self { layers: model.constants(cert)?, b_rho })
    }

    /// Per-layer `max(M_eq, M_neq)`.
    pub fn m(&self) -> Vec<f64> {
        self.layers.iter().map(|c| c.m_eq.max(c.m_neq)).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.layers.iter().map(|c| c.b).collect()
    }

    pub fn m_max(&self) -> f64 {
        self.m().into_iter().fold(0.0, f64::max)
    }

    pub fn b_max(&self) -> f64 {
        self.b().into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPair {
    pub coarse: BoundCertificate,
    pub refined: BoundCertificate,
}

fn check_depth(consts: &ModelConstants, gammas: &[f64]) -> Result<()> {
    if consts.layers.is_empty() {
        return Err(AceError::InvalidArgument("bounds need at least one layer".into()));
    }
    if consts.layers.len() != gammas.len() {
        return Err(AceError::LengthMismatch { op: "bounds", left: consts.layers.len(), right: gammas.len() });
    }
    Ok(())
}

pub fn thm1_bounds_with(consts: &ModelConstants, gammas: &[f64], x_norm: f64) -> Result<BoundPair> {
    check_depth(consts, gammas)?;
    let (m, b) = (consts.m_max(), consts.b_max());
    let (coarse, refined) = thm1_values(gammas, m, b, x_norm);
    let constants = BoundConstants { m: consts.m(), b: consts.b(), c: 1.0, gamma_bar: gamma_bar(gammas), depth: gammas.len(), x_norm };
    Ok(BoundPair {
        coarse: BoundCertificate { kind: BoundKind::Thm1Coarse, value: coarse, constants: constants.clone() },
        refined: BoundCertificate { kind: BoundKind::Thm1Refined, value: refined, constants },
    })
}

pub fn thm2_bounds_with(consts: &ModelConstants, gammas: &[f64], x_norm: f64) -> Result<BoundPair> {
    check_depth(consts, gammas)?;
    let m = consts.m_max();
    let b = consts.b_max().max(consts.b_rho);
    let (coarse, refined) = thm2_values(gammas, m, b, x_norm);
    let constants = BoundConstants {
        m: consts.m(),
        b: consts.b(),
        c: b.max(m).max(1.0),
        gamma_bar: gamma_bar(gammas),
        depth: gammas.len(),
        x_norm,
    };
    Ok(BoundPair {
        coarse: BoundCertificate { kind: BoundKind::Thm2Coarse, value: coarse, constants: constants.clone() },
        refined: BoundCertificate { kind: BoundKind::Thm2Refined, value: refined, constants },
    })
}

pub fn thm1_bounds(model: &HomotopicModel, x_norm: f64) -> Result<BoundPair> {
    thm1_bounds_with(&ModelConstants::of(model, ConvCertificate::default())?, &model.gammas(), x_norm)
}

pub fn thm2_bounds(model: &HomotopicModel, x_norm: f64) -> Result<BoundPair> {
    thm2_bounds_with(&ModelConstants::of(model, ConvCertificate::default())?, &model.gammas(), x_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionBounds {
    pub delta: BoundCertificate,
    pub epsilon: BoundCertificate,
}

/// Layer-by-layer certificates on the actual activations of `x`:
/// `δ_i = M_eq,i·δ_{i−1} + |γ_i|B_i‖z_{i−1}‖` and
/// `ε_i = (M_eq,i + |γ_i|B_i)·ε_{i−1} + 2|γ_i|B_ρB_i‖z_{i−1}‖`.
pub fn recursion_bounds_with(consts: &ModelConstants, model: &HomotopicModel, x: &Tensor) -> Result<RecursionBounds> {
    let gammas = model.gammas();
    check_depth(consts, &gammas)?;
    let (_, inputs) = model.frozen().forward_with_inputs(x)?;
    let (mut delta, mut eps) = (0.0, 0.0);
    for ((c, g), z) in consts.layers.iter().zip(&gammas).zip(&inputs) {
        let (g, z) = (g.abs(), z.l2());
        delta = c.m_eq * delta + g * c.b * z;
        eps = (c.m_eq + g * c.m_neq) * eps + 2.0 * g * consts.b_rho * c.b * z;
    }
    let constants = BoundConstants {
        m: consts.m(),
        b: consts.b(),
        c: 1.0,
        gamma_bar: gamma_bar(&gammas),
        depth: gammas.len(),
        x_norm: x.l2(),
    };
    Ok(RecursionBounds {
        delta: BoundCertificate { kind: BoundKind::DeltaRecursion, value: delta, constants: constants.clone() },
        epsilon: BoundCertificate { kind: BoundKind::EpsilonRecursion, value: eps, constants },
    })
}

pub fn recursion_bounds(model: &HomotopicModel, x: &Tensor) -> Result<RecursionBounds> {
    recursion_bounds_with(&ModelConstants::of(model, ConvCertificate::default())?, model, x)
}

/// Absolute slack in [`within`]. Exactly equivariant maps still measure
/// rounding noise around 1e-15 against bounds that are exactly 0.
pub const WITHIN_ABS: f64 = 1e-12;

/// `a ≤ b` up to floating-point slack.
pub fn within(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-12) + WITHIN_ABS
}

/// Measured errors and every certificate for one model and input.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub approximation_error: f64,
    pub equivariance_error: f64,
    pub delta_recursion: f64,
    pub epsilon_recursion: f64,
    pub thm1_refined: f64,
    pub thm1_coarse: f64,
    pub thm2_refined: f64,
    pub thm2_coarse: f64,
    pub thm2_coarse_main_text: f64,
}

impl CertificateReport {
    /// Broken links of the chains `measured ≤ recursion ≤ refined ≤ coarse`.
    pub fn violations(&self) -> Vec<String> {
        let chains = [
            ("approximation_error", self.approximation_error, "delta_recursion", self.delta_recursion),
            ("delta_recursion", self.delta_recursion, "thm1_refined", self.thm1_refined),
            ("thm1_refined", self.thm1_refined, "thm1_coarse", self.thm1_coarse),
            ("equivariance_error", self.equivariance_error, "epsilon_recursion", self.epsilon_recursion),
            ("epsilon_recursion", self.epsilon_recursion, "thm2_refined", self.thm2_refined),
            ("thm2_refined", self.thm2_refined, "thm2_coarse", self.thm2_coarse),
        ];
        chains
            .iter()
            .filter(|(_, a, _, b)| !within(*a, *b))
            .map(|(na, a, nb, b)| format!("{na} = {a:e} > {nb} = {b:e}"))
            .collect()
    }
}

/// Evaluates every measured error and certificate for `x`. The equivariance
/// error uses exact enumeration when possible, else the Monte-Carlo estimate.
pub fn certify(model: &HomotopicModel, x: &Tensor, cert: ConvCertificate, seed: u64) -> Result<CertificateReport> {
    let consts = ModelConstants::of(model, cert)?;
    let frozen = model.frozen();
    let gammas = frozen.gammas();
    let x_norm = x.l2();
    let rec = recursion_bounds_with(&consts, &frozen, x)?;
    let t1 = thm1_bounds_with(&consts, &gammas, x_norm)?;
    let t2 = thm2_bounds_with(&consts, &gammas, x_norm)?;
    let b2 = consts.b_max().max(consts.b_rho);
    Ok(CertificateReport {
        approximation_error: approximation_error(&frozen, x)?,
        equivariance_error: equivariance_error_auto(&frozen, x, seed)?,
        delta_recursion: rec.delta.value,
        epsilon_recursion: rec.epsilon.value,
        thm1_refined: t1.refined.value,
        thm1_coarse: t1.coarse.value,
        thm2_refined: t2.refined.value,
        thm2_coarse: t2.coarse.value,
        thm2_coarse_main_text: thm2_coarse_main_text(&gammas, consts.m_max(), b2, x_norm),
    })
}
