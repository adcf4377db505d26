//! Training loops wiring model, constraints, metrics and tasks: strict and
//! resilient primal–dual training, a fixed-weight penalty baseline and plain
//! equivariant training, with tracing, best-checkpoint selection and
//! bit-exact resumable checkpoints.

mod checkpoint;
mod scalar;
mod trace;


pub use checkpoint::{RUN_MAGIC, RUN_VERSION};
pub use scalar::{train_scalar_toy, ScalarRun};
pub use trace::{read_csv, write_csv, csv_header, TraceRow};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{
    dual_step_resilient, dual_step_strict, lagrangian_resilient, lagrangian_strict, primal_step, DualState, Optimizer,
    SlackRule,
};
use crate::error::{AceError, Result};
use crate::layers::{ConvCertificate, HomotopicModel, ParamGroup};
use crate::metrics::{equivariance_error, thm1_bounds_with, thm2_bounds_with, EquivarianceMode, ModelConstants};
use crate::tasks::Dataset;
use crate::tensor::Tensor;

/// `|J0|` above this aborts a run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Power iterations used once when a run starts, before the persisted vectors are warm.
const WARMUP_POWER_ITERS: usize = 50;

const SHUFFLE_STREAM: u64 = 1 << 32;
const PENALTY_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Strict,
    Resilient,
    /// `α·J0 + β·ℓ_eq` with γ fixed at 1; fixed weights, no adaptation.
    Penalty { alpha: f64, beta: f64, n_g_samples: usize },
    /// Equivariant weights only, γ frozen at 0.
    Plain,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Strict => "strict",
            Objective::Resilient => "resilient",
            Objective::Penalty { .. } => "penalty",
            Objective::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub eta_p: f64,
    pub eta_d: f64,
    pub gamma_init: f64,
    pub rho: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate and append a trace row every this many epochs.
    pub eval_every: u64,
    /// `None`: on for resilient runs, off otherwise.
    pub spectral_norm: Option<bool>,
    pub power_iters: usize,
    pub slack_rule: SlackRule,
    pub optimizer: OptimizerKind,
    pub certificate: ConvCertificate,
    /// Validation inputs used for the equivariance error and bound columns.
    pub eq_probes: usize,
}

impl TrainConfig {
    /// Defaults: `η_d = η_p`, `γ_init = 1`, `ρ = 1`, plain gradient descent.
    pub fn new(objective: Objective, eta_p: f64) -> Self {
        Self {
            objective,
            eta_p,
            eta_d: eta_p,
            gamma_init: 1.0,
            rho: 1.0,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            eval_every: 1,
            spectral_norm: None,
            power_iters: 3,
            slack_rule: SlackRule::Descent,
            optimizer: OptimizerKind::Sgd,
            certificate: ConvCertificate::default(),
            eq_probes: 4,
        }
    }

    pub fn uses_spectral_norm(&self) -> bool {
        self.spectral_norm.unwrap_or(self.objective == Objective::Resilient)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AceError::InvalidArgument(msg));
        if !(self.eta_p > 0.0 && self.eta_p.is_finite()) {
            return bad(format!("eta_p must be positive, got {}", self.eta_p));
        }
        if !(self.eta_d >= 0.0 && self.eta_d.is_finite()) {
            return bad(format!("eta_d must be non-negative, got {}", self.eta_d));
        }
        if !self.gamma_init.is_finite() {
            return bad("gamma_init must be finite".into());
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.power_iters == 0 {
            return bad("batch_size, eval_every and power_iters must be positive".into());
        }
        if let Objective::Penalty { alpha, beta, n_g_samples } = self.objective {
            if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
                return bad(format!("penalty weights must be non-negative, got alpha = {alpha}, beta = {beta}"));
            }
            if n_g_samples == 0 {
                return bad("n_g_samples must be positive".into());
            }
        }
        Ok(())
    }
}

/// Best model seen at an evaluation. Strict runs store the equivariant
/// projection, scored on validation; the other objectives store the full model.
#[derive(Debug)]
pub struct BestCheckpoint {
    pub step: u64,
    pub score: f64,
    pub model: HomotopicModel,
}

/// Emitted after every minibatch step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub step: u64,
    /// γ before the primal step, as used by the dual update.
    pub gammas: &'a [f64],
    pub dual: &'a DualState,
    pub loss: f64,
}

#[derive(Debug)]
pub struct TrainRun {
    pub model: HomotopicModel,
    pub dual: DualState,
    pub config: TrainConfig,
    pub trace: Vec<TraceRow>,
    pub best: Option<BestCheckpoint>,
    pub step: u64,
    pub epoch: u64,
    optimizer: Optimizer,
}

/// Per-sample loss `‖f(x) − y‖²`. Summing rather than averaging over output
/// entries keeps the curvature in γ large enough for `η_d = η_p` to be damped.
fn sq_error(out: &Tensor, target: &Tensor) -> Result<Tensor> {
    Ok(out.sub(target)?.square().sum())
}

/// Mean per-sample squared error of `model` over the given samples (0 for none).
pub fn evaluate(model: &HomotopicModel, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let frozen = model.frozen();
    let mut total = 0.0;
    for &i in indices {
        total += sq_error(&frozen.forward(&data.inputs[i])?, &data.targets[i])?.item();
    }
    Ok(total / indices.len() as f64)
}

/// Largest equivariance error over `inputs`, exact when the group is enumerable.
pub fn max_equivariance_error(model: &HomotopicModel, inputs: &[&Tensor], seed: u64) -> Result<f64> {
    let frozen = model.frozen();
    let mode = if model.group().is_enumerable() { EquivarianceMode::Exact } else { EquivarianceMode::mc(seed) };
    let mut worst = 0.0f64;
    for x in inputs {
        worst = worst.max(equivariance_error(&frozen, x, mode)?.max_error());
    }
    Ok(worst)
}

impl TrainRun {
    /// Prepares a run: sets γ for the objective, warms up spectral
    /// normalisation if enabled, and records the step-0 trace row.
    pub fn start(model: HomotopicModel, data: &Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let space = model.input_space();
        for (x, y) in data.inputs.iter().zip(&data.targets) {
            space.check(x)?;
            if y.shape() != model.output_space()?.shape().as_slice() {
                return Err(AceError::ShapeMismatch { op: "train", left: y.shape().to_vec(), right: model.output_space()?.shape() });
            }
        }
        let depth = model.depth();
        let gamma = match config.objective {
            Objective::Strict | Objective::Resilient => config.gamma_init,
            Objective::Penalty { .. } => 1.0,
            Objective::Plain => 0.0,
        };
        model.set_gammas(&vec![gamma; depth])?;
        let dual = match config.objective {
            Objective::Resilient => DualState::resilient(depth, config.rho)?,
            _ => DualState::strict(depth),
        };
        let optimizer = match config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::adam(),
        };
        let mut run = Self { model, dual, config, trace: Vec::new(), best: None, step: 0, epoch: 0, optimizer };
        if config.uses_spectral_norm() {
            run.model.spectral_normalize(WARMUP_POWER_ITERS)?;
        }
        run.evaluate_and_record(data)?;
        Ok(run)
    }

    /// Runs `epochs` further epochs.
    pub fn advance(&mut self, data: &Dataset, epochs: u64) -> Result<()> {
        self.advance_observed(data, epochs, &mut |_| {})
    }

    pub fn advance_observed(&mut self, data: &Dataset, epochs: u64, observer: &mut dyn FnMut(&StepEvent)) -> Result<()> {
        for _ in 0..epochs {
            let mut order = data.splits.train.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(SHUFFLE_STREAM + self.epoch);
            order.shuffle(&mut rng);
            for batch in order.chunks(self.config.batch_size) {
                let gammas = self.model.gammas();
                let loss = self.step(data, batch, &gammas)?;
                observer(&StepEvent { step: self.step, gammas: &gammas, dual: &self.dual, loss });
            }
            self.epoch += 1;
            if self.epoch % self.config.eval_every == 0 {
                self.evaluate_and_record(data)?;
            }
        }
        Ok(())
    }

    /// One minibatch: primal step on the objective, then the dual step from the pre-step γ.
    fn step(&mut self, data: &Dataset, batch: &[usize], gammas: &[f64]) -> Result<f64> {
        let model = &self.model;
        model.zero_grad();
        let mut j0 = Tensor::scalar(0.0);
        for &i in batch {
            j0 = j0.add(&sq_error(&model.forward(&data.inputs[i])?, &data.targets[i])?)?;
        }
        let j0 = j0.scale(1.0 / batch.len() as f64);
        let loss = j0.item();
        if !loss.is_finite() || loss.abs() > DIVERGENCE_THRESHOLD {
            return Err(AceError::Diverged { step: self.step, value: loss });
        }

        let cfg = self.config;
        let all = [ParamGroup::Equivariant, ParamGroup::NonEquivariant, ParamGroup::Gamma];
        match cfg.objective {
            Objective::Strict => {
                lagrangian_strict(&j0, &model.gamma_tensors(), &self.dual)?.backward()?;
                primal_step(&model.parameters(&all), cfg.eta_p, &mut self.optimizer)?;
                dual_step_strict(&mut self.dual, gammas, cfg.eta_d)?;
            }
            Objective::Resilient => {
                let u = Tensor::vector(self.dual.u.clone()).requires_grad_leaf();
                lagrangian_resilient(&j0, &model.gamma_tensors(), &u, &self.dual)?.backward()?;
                primal_step(&model.parameters(&all), cfg.eta_p, &mut self.optimizer)?;
                dual_step_resilient(&mut self.dual, gammas, cfg.eta_p, cfg.eta_d, cfg.slack_rule)?;
            }
            Objective::Penalty { alpha, beta, n_g_samples } => {
                let mut objective = j0.scale(alpha);
                if beta > 0.0 {
                    let leq = self.sampled_equivariance_loss(data, batch, n_g_samples)?;
                    objective = objective.add(&leq.scale(beta))?;
                }
                objective.backward()?;
                primal_step(&model.theta(), cfg.eta_p, &mut self.optimizer)?;
            }
            Objective::Plain => {
                j0.backward()?;
                primal_step(&model.parameters(&[ParamGroup::Equivariant]), cfg.eta_p, &mut self.optimizer)?;
            }
        }
        if cfg.uses_spectral_norm() {
            self.model.spectral_normalize(cfg.power_iters)?;
        }
        if !self.model.all_finite() {
            return Err(AceError::Diverged { step: self.step, value: f64::NAN });
        }
        self.step += 1;
        Ok(loss)
    }

    /// Batch mean of `(1/n_g) Σ_g ‖f(ρ_X(g)x) − ρ_Y(g)f(x)‖²`, g uniform from the step's stream.
    fn sampled_equivariance_loss(&self, data: &Dataset, batch: &[usize], n_g: usize) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(PENALTY_STREAM + self.step);
        let (model, group) = (&self.model, self.model.group());
        let (rep_in, rep_out) = (model.input_representation(), model.output_representation());
        let mut total = Tensor::scalar(0.0);
        for &i in batch {
            let x = &data.inputs[i];
            let fx = model.forward(x)?;
            for _ in 0..n_g {
                let g = group.sample(&mut rng);
                let gap = model.forward(&rep_in.apply(&g, x)?)?.sub(&rep_out.apply(&g, &fx)?)?;
                total = total.add(&gap.square().sum())?;
            }
        }
        Ok(total.scale(1.0 / (batch.len() * n_g) as f64))
    }

    fn probe_indices<'a>(&self, data: &'a Dataset) -> &'a [usize] {
        let pool = if data.splits.val.is_empty() { &data.splits.train } else { &data.splits.val };
        &pool[..pool.len().min(self.config.eq_probes)]
    }

    fn evaluate_and_record(&mut self, data: &Dataset) -> Result<()> {
        let val = if data.splits.val.is_empty() { &data.splits.train } else { &data.splits.val };
        let projected = self.model.project_equivariant();
        let loss_train = evaluate(&self.model, data, &data.splits.train)?;
        let loss_val_raw = evaluate(&self.model, data, val)?;
        let loss_val_proj = evaluate(&projected, data, val)?;

        let probes: Vec<&Tensor> = self.probe_indices(data).iter().map(|&i| &data.inputs[i]).collect();
        let eq_error_exact = max_equivariance_error(&self.model, &probes, self.config.seed)?;
        let x_norm = probes.iter().map(|x| x.l2()).fold(0.0, f64::max);
        let consts = ModelConstants::of(&self.model, self.config.certificate)?;
        let gammas = self.model.gammas();
        let thm1 = thm1_bounds_with(&consts, &gammas, x_norm)?.refined.value;
        let thm2 = thm2_bounds_with(&consts, &gammas, x_norm)?.refined.value;

        let row = TraceRow {
            step: self.step,
            loss_train,
            loss_val_raw,
            loss_val_proj,
            eq_error_exact,
            gammas,
            lambdas: self.dual.lambda.clone(),
            us: self.dual.u.clone(),
            thm1_refined: thm1,
            thm2_refined: thm2,
        };
        if let Some(last) = self.trace.last() {
            if last.step >= row.step {
                return Ok(());
            }
        }
        self.trace.push(row);

        let (score, candidate) = match self.config.objective {
            Objective::Strict => (loss_val_proj, projected),
            _ => (loss_val_raw, self.model.deep_copy()),
        };
        if self.best.as_ref().map_or(true, |b| score < b.score) {
            self.best = Some(BestCheckpoint { step: self.step, score, model: candidate });
        }
        Ok(())
    }

    pub fn last_row(&self) -> &TraceRow {
        self.trace.last().expect("a run always has its initial row")
    }
}

/// Starts a run and trains for `config.epochs` epochs.
pub fn train(model: HomotopicModel, data: &Dataset, config: TrainConfig) -> Result<TrainRun> {
    let mut run = TrainRun::start(model, data, config)?;
    run.advance(data, config.epochs)?;
    Ok(run)
}

pub fn train_strict(model: HomotopicModel, data: &Dataset, config: TrainConfig) -> Result<TrainRun> {
    train(model, data, TrainConfig { objective: Objective::Strict, ..config })
}

pub fn train_resilient(model: HomotopicModel, data: &Dataset, config: TrainConfig) -> Result<TrainRun> {
    train(model, data, TrainConfig { objective: Objective::Resilient, ..config })
}

pub fn train_penalty(
    model: HomotopicModel,
    data: &Dataset,
    config: TrainConfig,
    alpha: f64,
    beta: f64,
    n_g_samples: usize,
) -> Result<TrainRun> {
    train(model, data, TrainConfig { objective: Objective::Penalty { alpha, beta, n_g_samples }, ..config })
}

pub fn train_plain_equivariant(model: HomotopicModel, data: &Dataset, config: TrainConfig) -> Result<TrainRun> {
    train(model, data, TrainConfig { objective: Objective::Plain, ..config })
}
