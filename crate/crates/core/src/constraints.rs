//! Primal–dual state and single-step updates for the strict (γ = 0) and
//! resilient (|γ| ≤ u) constrained problems.

use crate::codec::{Decoder, Encoder};
use crate::error::{AceError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Equality constraints `γ_i = 0`; λ is unconstrained in sign.
    Strict,
    /// Relaxed constraints `|γ_i| ≤ u_i` with a quadratic cost `(ρ/2)‖u‖²` on the slacks.
    Resilient,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Strict => "strict",
            Mode::Resilient => "resilient",
        }
    }
}

/// Update rule for the slacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlackRule {
    /// `u ← [u − η_p(ρu − λ)]_+`, gradient descent on the Lagrangian; fixed point `u = λ/ρ`.
    #[default]
    Descent,
    /// `u ← [u + η_p(ρu − λ)]_+`. Kept only to study its divergence.
    Ascent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Slacks; all zero and never touched in strict mode.
    pub u: Vec<f64>,
    pub rho: f64,
    mode: Mode,
}

impl DualState {
    pub fn strict(layers: usize) -> Self {
        Self { lambda: vec![0.0; layers], u: vec![0.0; layers], rho: 1.0, mode: Mode::Strict }
    }

    pub fn resilient(layers: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(AceError::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { lambda: vec![0.0; layers], u: vec![0.0; layers], rho, mode: Mode::Resilient })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Resilient mode keeps λ ≥ 0 and u ≥ 0.
    pub fn check(&self) -> Result<()> {
        if self.mode == Mode::Resilient {
            if let Some(i) = self.lambda.iter().position(|l| !(*l >= 0.0)) {
                return Err(AceError::DualInvariant(format!("lambda[{i}] = {}", self.lambda[i])));
            }
            if let Some(i) = self.u.iter().position(|u| !(*u >= 0.0)) {
                return Err(AceError::DualInvariant(format!("u[{i}] = {}", self.u[i])));
            }
        }
        Ok(())
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self.mode {
            Mode::Strict => 0,
            Mode::Resilient => 1,
        })
        .f64(self.rho)
        .f64s(&self.lambda)
        .f64s(&self.u);
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let mode = match dec.u8()? {
            0 => Mode::Strict,
            1 => Mode::Resilient,
            t => return Err(AceError::Corrupt(format!("unknown mode tag {t}"))),
        };
        let rho = dec.f64()?;
        let (lambda, u) = (dec.f64s()?, dec.f64s()?);
        if lambda.len() != u.len() {
            return Err(AceError::Corrupt("lambda and u lengths differ".into()));
        }
        let state = Self { lambda, u, rho, mode };
        state.check()?;
        Ok(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub eta_p: f64,
    pub eta_d: f64,
    pub mode: Mode,
    pub gamma_init: f64,
    pub slack_rule: SlackRule,
}

impl StepConfig {
    /// Defaults: `η_d = η_p`, `γ_init = 1`, descent slack rule.
    pub fn new(eta_p: f64, mode: Mode) -> Self {
        Self { eta_p, eta_d: eta_p, mode, gamma_init: 1.0, slack_rule: SlackRule::Descent }
    }

    /// `η_p > 0` and `η_d ≥ 0`; `η_d = 0` freezes the multipliers, which sweeps use as a baseline.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_p > 0.0 && self.eta_p.is_finite()) {
            return Err(AceError::InvalidArgument(format!("eta_p must be positive, got {}", self.eta_p)));
        }
        if !(self.eta_d >= 0.0 && self.eta_d.is_finite()) {
            return Err(AceError::InvalidArgument(format!("eta_d must be non-negative, got {}", self.eta_d)));
        }
        if !self.gamma_init.is_finite() {
            return Err(AceError::InvalidArgument("gamma_init must be finite".into()));
        }
        Ok(())
    }
}

fn check_len(op: &'static str, gammas: &[Tensor], state: &DualState) -> Result<()> {
    if gammas.len() != state.len() {
        return Err(AceError::LengthMismatch { op, left: gammas.len(), right: state.len() });
    }
    Ok(())
}

/// `J0 + Σ λ_i γ_i` with λ as constants.
pub fn lagrangian_strict(j0: &Tensor, gammas: &[Tensor], state: &DualState) -> Result<Tensor> {
    check_len("lagrangian_strict", gammas, state)?;
    let mut total = j0.clone();
    for (g, l) in gammas.iter().zip(&state.lambda) {
        total = total.add(&g.scale(*l))?;
    }
    Ok(total)
}

/// `J0 + (ρ/2)‖u‖² + Σ λ_i(|γ_i| − u_i)` with λ constant. `u` is a length-L
/// vector tensor (typically a leaf built from `state.u`) so that `∂/∂u = ρu − λ`
/// is available from the tape.
pub fn lagrangian_resilient(j0: &Tensor, gammas: &[Tensor], u: &Tensor, state: &DualState) -> Result<Tensor> {
    check_len("lagrangian_resilient", gammas, state)?;
    if u.numel() != state.len() {
        return Err(AceError::LengthMismatch { op: "lagrangian_resilient", left: u.numel(), right: state.len() });
    }
    if let Some(i) = state.lambda.iter().position(|l| !(*l >= 0.0)) {
        return Err(AceError::DualInvariant(format!("lambda[{i}] = {}", state.lambda[i])));
    }
    if let Some(i) = u.data().iter().position(|v| !(*v >= 0.0)) {
        return Err(AceError::DualInvariant(format!("u[{i}] negative")));
    }
    let lambda = Tensor::vector(state.lambda.clone());
    let mut total = j0.add(&u.square().sum().scale(state.rho / 2.0))?;
    for (g, l) in gammas.iter().zip(&state.lambda) {
        total = total.add(&g.abs().scale(*l))?;
    }
    total.sub(&u.mul(&lambda)?.sum())
}

/// Primal optimiser. Plain gradient descent is the reference update.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(AdamState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam(AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam(_) => "adam",
        }
    }

    pub fn encode(&self, enc: &mut Encoder) {
        match self {
            Optimizer::Sgd => {
                enc.u8(0);
            }
            Optimizer::Adam(s) => {
                enc.u8(1).f64(s.beta1).f64(s.beta2).f64(s.eps).u64(s.t).usize(s.m.len());
                for (m, v) in s.m.iter().zip(&s.v) {
                    enc.f64s(m).f64s(v);
                }
            }
        }
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        match dec.u8()? {
            0 => Ok(Optimizer::Sgd),
            1 => {
                let (beta1, beta2, eps, t) = (dec.f64()?, dec.f64()?, dec.f64()?, dec.u64()?);
                let n = dec.usize()?;
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for _ in 0..n {
                    m.push(dec.f64s()?);
                    v.push(dec.f64s()?);
                }
                Ok(Optimizer::Adam(AdamState { beta1, beta2, eps, t, m, v }))
            }
            t => Err(AceError::Corrupt(format!("unknown optimizer tag {t}"))),
        }
    }
}

/// One primal update of every tensor in `params` from its accumulated
/// gradient. Backpropagating the Lagrangian puts `∇J0 + λ_i s_i` on each γ_i,
/// so θ and γ share this step.
pub fn primal_step(params: &[Tensor], eta_p: f64, optimizer: &mut Optimizer) -> Result<()> {
    let grads = params
        .iter()
        .enumerate()
        .map(|(i, p)| p.grad().ok_or(AceError::MissingGradient(i)))
        .collect::<Result<Vec<_>>>()?;
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter().zip(&grads) {
                p.update_data(|d| d.iter_mut().zip(g).for_each(|(x, gi)| *x -= eta_p * gi));
            }
        }
        Optimizer::Adam(s) => {
            if s.m.len() != params.len() {
                s.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
                s.v = s.m.clone();
            }
            s.t += 1;
            let (c1, c2) = (1.0 - s.beta1.powi(s.t as i32), 1.0 - s.beta2.powi(s.t as i32));
            for (((p, g), m), v) in params.iter().zip(&grads).zip(&mut s.m).zip(&mut s.v) {
                p.update_data(|d| {
                    for j in 0..d.len() {
                        m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
                        v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
                        d[j] -= eta_p * (m[j] / c1) / ((v[j] / c2).sqrt() + s.eps);
                    }
                });
            }
        }
    }
    Ok(())
}

/// `λ_i += η_d γ_i` with the pre-step γ values.
pub fn dual_step_strict(state: &mut DualState, gamma_values: &[f64], eta_d: f64) -> Result<()> {
    if state.mode != Mode::Strict {
        return Err(AceError::WrongMode { op: "dual_step_strict", mode: state.mode.name().into() });
    }
    if gamma_values.len() != state.len() {
        return Err(AceError::LengthMismatch { op: "dual_step_strict", left: gamma_values.len(), right: state.len() });
    }
    state.lambda.iter_mut().zip(gamma_values).for_each(|(l, g)| *l += eta_d * g);
    Ok(())
}

/// Slack and multiplier updates from the pre-step γ and u:
/// `u ← [u ∓ η_p(ρu − λ)]_+`, `λ ← [λ + η_d(|γ| − u_old)]_+`.
pub fn dual_step_resilient(
    state: &mut DualState,
    gamma_values: &[f64],
    eta_p: f64,
    eta_d: f64,
    rule: SlackRule,
) -> Result<()> {
    if state.mode != Mode::Resilient {
        return Err(AceError::WrongMode { op: "dual_step_resilient", mode: state.mode.name().into() });
    }
    if gamma_values.len() != state.len() {
        return Err(AceError::LengthMismatch { op: "dual_step_resilient", left: gamma_values.len(), right: state.len() });
    }
    let sign = match rule {
        SlackRule::Descent => -1.0,
        SlackRule::Ascent => 1.0,
    };
    let rho = state.rho;
    for ((l, u), g) in state.lambda.iter_mut().zip(state.u.iter_mut()).zip(gamma_values) {
        let (l_old, u_old) = (*l, *u);
        *u = (u_old + sign * eta_p * (rho * u_old - l_old)).max(0.0);
        *l = (l_old + eta_d * (g.abs() - u_old)).max(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{check_gradients, DEFAULT_STEP};
    use proptest::prelude::*;

    fn gammas(values: &[f64]) -> Vec<Tensor> {
        values.iter().map(|v| Tensor::scalar_param(*v)).collect()
    }

    #[test]
    fn strict_lagrangian_examples() {
        let state = DualState::strict(2);
        let j0 = Tensor::scalar(1.5);
        assert_eq!(lagrangian_strict(&j0, &gammas(&[3.0, -1.0]), &state).unwrap().item(), 1.5);

        let mut state = DualState::strict(2);
        state.lambda = vec![1.0, 2.0];
        let value = lagrangian_strict(&Tensor::scalar(0.0), &gammas(&[3.0, -1.0]), &state).unwrap();
        assert_eq!(value.item(), 1.0);
        assert!(matches!(
            lagrangian_strict(&j0, &gammas(&[1.0]), &state),
            Err(AceError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn resilient_lagrangian_examples() {
        let state = DualState::resilient(2, 1.0).unwrap();
        let u = Tensor::vector(vec![0.0, 0.0]);
        let value = lagrangian_resilient(&Tensor::scalar(0.7), &gammas(&[3.0, -1.0]), &u, &state).unwrap();
        assert_eq!(value.item(), 0.7);

        let mut state = DualState::resilient(2, 1.0).unwrap();
        state.lambda = vec![1.0, 1.0];
        let u = Tensor::vector(vec![2.0, 0.0]);
        let value = lagrangian_resilient(&Tensor::scalar(0.0), &gammas(&[3.0, -1.0]), &u, &state).unwrap();
        assert_eq!(value.item(), 4.0);

        state.lambda = vec![-1.0, 1.0];
        assert!(matches!(
            lagrangian_resilient(&Tensor::scalar(0.0), &gammas(&[3.0, -1.0]), &u, &state),
            Err(AceError::DualInvariant(_))
        ));
    }

    #[test]
    fn lagrangian_gradients_match_finite_differences() {
        let mut strict = DualState::strict(2);
        strict.lambda = vec![0.8, -1.3];
        // J0 = (γ1 − 1)² + γ1·γ2² keeps the γ gradients coupled.
        let j0 = |g: &[Tensor]| -> Result<Tensor> {
            g[0].sub(&Tensor::scalar(1.0))?.square().add(&g[0].mul(&g[1].square())?)
        };
        let inputs = [Tensor::scalar(0.4), Tensor::scalar(-0.6)];
        let report = check_gradients("lagrangian_strict", &inputs, DEFAULT_STEP, |g| {
            lagrangian_strict(&j0(g)?, g, &strict)
        })
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");

        // Analytic: ∂/∂γ_i = ∂J0/∂γ_i + λ_i.
        let leaves = gammas(&[0.4, -0.6]);
        lagrangian_strict(&j0(&leaves).unwrap(), &leaves, &strict).unwrap().backward().unwrap();
        let expected = [2.0 * (0.4 - 1.0) + 0.36 + 0.8, 2.0 * 0.4 * -0.6 - 1.3];
        for (leaf, e) in leaves.iter().zip(expected) {
            assert!((leaf.grad().unwrap()[0] - e).abs() < 1e-12);
        }

        let mut resilient = DualState::resilient(2, 1.7).unwrap();
        resilient.lambda = vec![0.9, 0.2];
        let inputs = [Tensor::scalar(0.4), Tensor::scalar(-0.6), Tensor::vector(vec![0.3, 1.1])];
        let report = check_gradients("lagrangian_resilient", &inputs, DEFAULT_STEP, |t| {
            lagrangian_resilient(&j0(&t[..2])?, &t[..2], &t[2], &resilient)
        })
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");

        let u = Tensor::vector(vec![0.3, 1.1]).requires_grad_leaf();
        let g = gammas(&[0.4, -0.6]);
        lagrangian_resilient(&Tensor::scalar(0.0), &g, &u, &resilient).unwrap().backward().unwrap();
        let du = u.grad().unwrap();
        assert!((du[0] - (1.7 * 0.3 - 0.9)).abs() < 1e-12);
        assert!((du[1] - (1.7 * 1.1 - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn primal_step_examples() {
        let p = Tensor::param(vec![1.0, -2.0], &[2]).unwrap();
        p.accumulate_grad(&[0.0, 0.0]);
        primal_step(&[p.clone()], 0.1, &mut Optimizer::Sgd).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);

        // J0 = (γ − 1)², γ = 1, λ = 0.5, η_p = 0.1 → 0.95.
        let mut state = DualState::strict(1);
        state.lambda = vec![0.5];
        let g = gammas(&[1.0]);
        let j0 = g[0].sub(&Tensor::scalar(1.0)).unwrap().square();
        lagrangian_strict(&j0, &g, &state).unwrap().backward().unwrap();
        primal_step(&g, 0.1, &mut Optimizer::Sgd).unwrap();
        assert!((g[0].item() - 0.95).abs() < 1e-15);

        let orphan = Tensor::scalar_param(1.0);
        assert!(matches!(primal_step(&[orphan], 0.1, &mut Optimizer::Sgd), Err(AceError::MissingGradient(0))));
    }

    #[test]
    fn dual_step_examples() {
        let mut s = DualState::strict(2);
        dual_step_strict(&mut s, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![0.0, 0.0]);
        dual_step_strict(&mut s, &[2.0, -2.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![1.0, -1.0]);
        assert_eq!(s.u, vec![0.0, 0.0]);
        assert!(matches!(
            dual_step_resilient(&mut s, &[0.0, 0.0], 0.1, 0.1, SlackRule::Descent),
            Err(AceError::WrongMode { .. })
        ));

        let mut r = DualState::resilient(1, 2.0).unwrap();
        r.lambda = vec![1.0];
        r.u = vec![0.5];
        dual_step_resilient(&mut r, &[0.5], 0.1, 0.1, SlackRule::Descent).unwrap();
        assert_eq!((r.lambda.clone(), r.u.clone()), (vec![1.0], vec![0.5]));
        assert!(matches!(dual_step_strict(&mut r, &[0.0], 0.1), Err(AceError::WrongMode { .. })));

        let mut r = DualState::resilient(1, 1.0).unwrap();
        r.lambda = vec![1.0];
        dual_step_resilient(&mut r, &[0.0], 0.1, 0.1, SlackRule::Descent).unwrap();
        assert!((r.u[0] - 0.1).abs() < 1e-15);
    }

    /// One iteration on the scalar toy `J0 = (γ − a)²` through the tape.
    fn taped_strict_step(gamma: &Tensor, state: &mut DualState, a: f64, eta_p: f64, eta_d: f64) {
        gamma.zero_grad();
        let g_old = gamma.item();
        let j0 = gamma.sub(&Tensor::scalar(a)).unwrap().square();
        lagrangian_strict(&j0, std::slice::from_ref(gamma), state).unwrap().backward().unwrap();
        primal_step(std::slice::from_ref(gamma), eta_p, &mut Optimizer::Sgd).unwrap();
        dual_step_strict(state, &[g_old], eta_d).unwrap();
    }

    #[test]
    fn strict_trajectory_matches_scalar_simulation() {
        let (a, eta_p, eta_d) = (1.0, 0.1, 0.05);
        let gamma = Tensor::scalar_param(1.0);
        let mut state = DualState::strict(1);
        let (mut g, mut l) = (1.0f64, 0.0f64);
        for _ in 0..20 {
            taped_strict_step(&gamma, &mut state, a, eta_p, eta_d);
            let g_old = g;
            g -= eta_p * (2.0 * (g - a) + l);
            l += eta_d * g_old;
            assert!((gamma.item() - g).abs() <= 1e-14);
            assert!((state.lambda[0] - l).abs() <= 1e-14);
        }
    }

    #[test]
    fn strict_kkt_point_is_reached_on_average() {
        let (a, eta) = (1.0, 1e-2);
        let gamma = Tensor::scalar_param(1.0);
        let mut state = DualState::strict(1);
        let steps = 10_000;
        let (mut gs, mut ls) = (0.0, 0.0);
        let mut cumulative = 0.0;
        for t in 0..steps {
            cumulative += gamma.item();
            taped_strict_step(&gamma, &mut state, a, eta, eta);
            assert!((state.lambda[0] - eta * cumulative).abs() <= 1e-10);
            if t >= steps / 2 {
                gs += gamma.item();
                ls += state.lambda[0];
            }
        }
        let half = (steps / 2) as f64;
        assert!((gs / half).abs() <= 1e-2);
        assert!((ls / half - 2.0 * a).abs() <= 5e-2);
    }

    fn resilient_toy(a: f64, rho: f64, eta: f64, steps: usize, rule: SlackRule) -> (f64, DualState) {
        let gamma = Tensor::scalar_param(1.0);
        let mut state = DualState::resilient(1, rho).unwrap();
        for _ in 0..steps {
            gamma.zero_grad();
            let g_old = gamma.item();
            let u = Tensor::vector(state.u.clone());
            let j0 = gamma.sub(&Tensor::scalar(a)).unwrap().square();
            lagrangian_resilient(&j0, std::slice::from_ref(&gamma), &u, &state).unwrap().backward().unwrap();
            primal_step(std::slice::from_ref(&gamma), eta, &mut Optimizer::Sgd).unwrap();
            dual_step_resilient(&mut state, &[g_old], eta, eta, rule).unwrap();
            state.check().unwrap();
            if !state.u[0].is_finite() || state.u[0] > 1e6 {
                break;
            }
        }
        (gamma.item(), state)
    }

    #[test]
    fn resilient_kkt_point_is_reached() {
        for (a, rho) in [(1.0, 1.0), (0.5, 2.0)] {
            let (gamma, state) = resilient_toy(a, rho, 1e-2, 20_000, SlackRule::Descent);
            let star = 2.0 * a / (2.0 + rho);
            assert!((gamma - star).abs() <= 1e-2, "gamma {gamma} vs {star}");
            assert!((state.u[0] - star).abs() <= 1e-2);
            assert!((state.lambda[0] - rho * star).abs() <= 1e-2);
            assert!((state.u[0] - state.lambda[0] / rho).abs() <= 1e-2);
        }
    }

    #[test]
    fn ascent_slack_rule_runs_away_from_the_fixed_point() {
        let (_, state) = resilient_toy(1.0, 1.0, 1e-2, 20_000, SlackRule::Ascent);
        assert!((state.u[0] - 2.0 / 3.0).abs() > 0.1);
    }

    #[test]
    fn state_and_optimizer_round_trip() {
        let mut state = DualState::resilient(3, 1.5).unwrap();
        state.lambda = vec![0.1, 0.0, 2.5];
        state.u = vec![0.3, 0.2, 0.0];
        let p = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        p.accumulate_grad(&[0.5, -0.5]);
        let mut opt = Optimizer::adam();
        primal_step(&[p], 0.01, &mut opt).unwrap();

        let mut enc = Encoder::new();
        state.encode(&mut enc);
        opt.encode(&mut enc);
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes);
        assert_eq!(DualState::decode(&mut dec).unwrap(), state);
        assert_eq!(Optimizer::decode(&mut dec).unwrap(), opt);
        dec.finish().unwrap();
    }

    proptest! {
        #[test]
        fn resilient_duals_stay_non_negative(
            steps in proptest::collection::vec((-3.0f64..3.0, 0.0f64..1.0, 0.0f64..1.0), 1..40),
            rho in 0.1f64..4.0,
        ) {
            let mut state = DualState::resilient(1, rho).unwrap();
            for (g, eta_p, eta_d) in steps {
                dual_step_resilient(&mut state, &[g], eta_p, eta_d, SlackRule::Descent).unwrap();
                prop_assert!(state.lambda[0] >= 0.0 && state.u[0] >= 0.0);
            }
        }

        #[test]
        fn strict_lambda_is_the_scaled_running_sum(gs in proptest::collection::vec(-5.0f64..5.0, 1..200), eta_d in 1e-4f64..1.0) {
            let mut state = DualState::strict(1);
            let mut sum = 0.0;
            for g in gs {
                dual_step_strict(&mut state, &[g], eta_d).unwrap();
                sum += g;
                prop_assert!((state.lambda[0] - eta_d * sum).abs() <= 1e-10);
                prop_assert_eq!(state.u[0], 0.0);
            }
        }
    }
}
