//! `ace train`: build task and model from a config, train, write artifacts.

use std::path::{Path, PathBuf};

use ace_core::layers::HomotopicModel;
use ace_core::metrics::certify;
use ace_core::tasks::{c4_toy, set_regression, Dataset, ScalarToy, ScalarToyKind};
use ace_core::trainer::{evaluate, train_scalar_toy, write_csv, TraceRow, TrainRun};
use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Mode, TaskKind};
use crate::plot::write_trace_plots;

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Headline numbers of a finished run, as written to summary.json.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub trace: Vec<TraceRow>,
    pub summary: Map<String, Value>,
}

impl RunOutcome {
    pub fn last(&self) -> &TraceRow {
        self.trace.last().expect("runs record an initial row")
    }

    /// First logged step with max|γ| ≤ `tol`.
    pub fn first_step_gamma_within(&self, tol: f64) -> Option<u64> {
        self.trace.iter().find(|r| r.max_abs_gamma() <= tol).map(|r| r.step)
    }
}

pub fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let mut data = match config.task {
        TaskKind::C4Toy => c4_toy(config.c4_target()?, config.n_samples, config.image_size, config.seed)?,
        TaskKind::SetRegression => {
            set_regression(config.set_size, config.features, config.epsilon, config.n_samples, config.seed)?
        }
        TaskKind::ScalarToy => bail!("scalar_toy has no dataset"),
    };
    if config.noise_std > 0.0 {
        data.add_target_noise(config.noise_std)?;
    }
    Ok(data)
}

/// Model initialised from `config.seed`, branches scaled by `branch_gain`.
pub fn build_model(config: &ExperimentConfig) -> Result<HomotopicModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = config.model_widths();
    let model = match config.task {
        TaskKind::C4Toy => HomotopicModel::c4_model(
            config.image_size,
            &widths,
            config.kernel,
            config.neq_kind(),
            config.gamma_init,
            &mut rng,
        )?,
        TaskKind::SetRegression => {
            HomotopicModel::deepsets_model(config.set_size, &widths, config.neq_kind(), config.gamma_init, &mut rng)?
        }
        TaskKind::ScalarToy => bail!("scalar_toy has no network model"),
    };
    if config.branch_gain != 1.0 {
        model.scale_branches(config.branch_gain)?;
    }
    Ok(model)
}

fn num(v: f64) -> Value {
    // JSON has no NaN/inf; those become null.
    json!(v)
}

fn write_artifacts(dir: &Path, config: &ExperimentConfig, trace: &[TraceRow], summary: &Map<String, Value>) -> Result<()> {
    let mut csv = Vec::new();
    write_csv(trace, &mut csv)?;
    let csv = String::from_utf8(csv).expect("trace CSV is ASCII");
    std::fs::write(dir.join(TRACE_FILE), &csv).context("writing trace.csv")?;
    std::fs::write(dir.join(CONFIG_FILE), config.to_toml()).context("writing resolved config")?;
    let text = serde_json::to_string_pretty(summary)? + "\n";
    std::fs::write(dir.join(SUMMARY_FILE), text).context("writing summary.json")?;
    write_trace_plots(&csv, dir)
}

/// Runs the configured experiment into `config.output_dir`.
pub fn run_train(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    if config.task == TaskKind::ScalarToy {
        return run_scalar(config, dir);
    }

    let data = build_dataset(config)?;
    let model = build_model(config)?;
    let train_config = config.train_config()?;
    let mut run = TrainRun::start(model, &data, train_config)?;
    run.advance(&data, config.epochs)?;
    run.save(dir.join(CHECKPOINT_FILE)).context("writing checkpoint")?;

    let last = run.last_row().clone();
    let projected = run.model.project_equivariant();
    let test = &data.splits.test;
    let mut s = Map::new();
    s.insert("task".into(), json!(config.task.name()));
    s.insert("mode".into(), json!(train_config.objective.name()));
    s.insert("seed".into(), json!(config.seed));
    s.insert("epochs".into(), json!(run.epoch));
    s.insert("steps".into(), json!(run.step));
    s.insert("loss_train".into(), num(last.loss_train));
    s.insert("loss_val_raw".into(), num(last.loss_val_raw));
    s.insert("loss_val_proj".into(), num(last.loss_val_proj));
    s.insert("loss_test_raw".into(), num(evaluate(&run.model, &data, test)?));
    s.insert("loss_test_proj".into(), num(evaluate(&projected, &data, test)?));
    s.insert("max_abs_gamma".into(), num(last.max_abs_gamma()));
    s.insert("max_lambda".into(), num(last.lambdas.iter().copied().fold(0.0, f64::max)));
    s.insert("max_u".into(), num(last.max_u()));
    s.insert("eq_error_exact".into(), num(last.eq_error_exact));
    if let Some(&i) = test.first().or(data.splits.train.first()) {
        let c = certify(&run.model, &data.inputs[i], train_config.certificate, config.seed)?;
        for (k, v) in [
            ("approx_error", c.approximation_error),
            ("delta_recursion", c.delta_recursion),
            ("thm1_refined", c.thm1_refined),
            ("thm1_coarse", c.thm1_coarse),
            ("equivariance_error", c.equivariance_error),
            ("epsilon_recursion", c.epsilon_recursion),
            ("thm2_refined", c.thm2_refined),
            ("thm2_coarse", c.thm2_coarse),
        ] {
            s.insert(format!("cert_{k}"), num(v));
        }
    }
    if let Some(best) = &run.best {
        s.insert("best_step".into(), json!(best.step));
        s.insert("best_val_loss".into(), num(best.score));
    }
    write_artifacts(&dir, config, &run.trace, &s)?;
    Ok(RunOutcome { output_dir: dir, trace: run.trace, summary: s })
}

/// Scalar toy: `epochs` counts single steps; a row is logged every
/// `eval_every` steps. The loss columns hold `(γ − a)²`, the equivariance
/// column `|γ|` (distance to the constraint set), the bound columns 0.
fn run_scalar(config: &ExperimentConfig, dir: PathBuf) -> Result<RunOutcome> {
    let kind = match config.mode {
        Mode::Strict => ScalarToyKind::StrictKkt,
        Mode::Resilient => ScalarToyKind::ResilientKkt { rho: config.rho },
        _ => bail!("key `mode`: scalar_toy supports only strict and resilient"),
    };
    let toy = ScalarToy::new(kind, config.scalar_a)?;
    let eta_d = config.eta_d.unwrap_or(config.eta_p);
    let steps = usize::try_from(config.epochs).context("key `epochs` too large")?;
    let run = train_scalar_toy(&toy, config.eta_p, eta_d, steps, config.gamma_init)?;
    let row = |step: u64, g: f64, l: f64, u: f64| {
        let loss = toy.objective(g);
        TraceRow {
            step,
            loss_train: loss,
            loss_val_raw: loss,
            loss_val_proj: toy.objective(0.0),
            eq_error_exact: g.abs(),
            gammas: vec![g],
            lambdas: vec![l],
            us: vec![u],
            thm1_refined: 0.0,
            thm2_refined: 0.0,
        }
    };
    let mut trace = vec![row(0, config.gamma_init, 0.0, 0.0)];
    for t in 0..steps {
        let step = t as u64 + 1;
        if step % config.eval_every == 0 {
            trace.push(row(step, run.gamma[t], run.lambda[t], run.u[t]));
        }
    }
    if let Some(last) = trace.last() {
        if last.step != steps as u64 {
            trace.push(row(steps as u64, run.gamma[steps - 1], run.lambda[steps - 1], run.u[steps - 1]));
        }
    }
    for (t, g) in run.gamma.iter().enumerate() {
        if !g.is_finite() || g.abs() > 1e12 {
            bail!("training diverged at step {t} (gamma {g:e})");
        }
    }

    let last = trace.last().expect("initial row").clone();
    let opt = toy.optimum();
    let (avg_g, avg_l, avg_u) = run.last_half_average();
    let mut s = Map::new();
    s.insert("task".into(), json!("scalar_toy"));
    s.insert("mode".into(), json!(config.objective().name()));
    s.insert("seed".into(), json!(config.seed));
    s.insert("steps".into(), json!(steps));
    s.insert("gamma".into(), num(last.gammas[0]));
    s.insert("lambda".into(), num(last.lambdas[0]));
    s.insert("u".into(), num(last.us[0]));
    s.insert("gamma_avg_last_half".into(), num(avg_g));
    s.insert("lambda_avg_last_half".into(), num(avg_l));
    s.insert("u_avg_last_half".into(), num(avg_u));
    s.insert("max_abs_gamma".into(), num(last.max_abs_gamma()));
    s.insert("optimum_gamma".into(), num(opt.gamma));
    s.insert("optimum_lambda".into(), num(opt.lambda));
    if let Some(u) = opt.u {
        s.insert("optimum_u".into(), num(u));
    }
    write_artifacts(&dir, config, &trace, &s)?;
    Ok(RunOutcome { output_dir: dir, trace, summary: s })
}
