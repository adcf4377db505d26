//! Experiment configuration: a flat TOML table, every key optional except
//! where noted. Precedence, lowest first: built-in defaults, the file,
//! `ACE_SEED`, then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use ace_core::constraints::SlackRule;
use ace_core::layers::{ConvCertificate, NeqKind};
use ace_core::tasks::C4Target;
use ace_core::trainer::{Objective, OptimizerKind, TrainConfig};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Environment variable overriding `seed` (below `--set`).
pub const SEED_ENV: &str = "ACE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    C4Toy,
    SetRegression,
    ScalarToy,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::C4Toy => "c4_toy",
            TaskKind::SetRegression => "set_regression",
            TaskKind::ScalarToy => "scalar_toy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    Resilient,
    Penalty,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Dense,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    // task
    pub task: TaskKind,
    /// c4_toy: `square`, `rectangle` or `nonsymmetric`.
    pub target: String,
    pub image_size: usize,
    pub n_samples: usize,
    /// set_regression: points per set and features per point.
    pub set_size: usize,
    pub features: usize,
    pub epsilon: f64,
    /// scalar_toy: the target `a` in `(γ − a)²`.
    pub scalar_a: f64,
    /// Std of additive target noise (off at 0).
    pub noise_std: f64,

    // model
    /// Channel widths (c4_toy, first and last must be 1) or feature widths
    /// (set_regression, first and last must equal `features`). Empty picks
    /// the task default.
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub branch: BranchKind,
    pub mlp_hidden: usize,
    /// Factor applied to the initial branch weights.
    pub branch_gain: f64,

    // training
    pub mode: Mode,
    pub eta_p: f64,
    /// Defaults to `eta_p`.
    pub eta_d: Option<f64>,
    pub gamma_init: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_g_samples: usize,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: u64,
    /// Defaults to on for resilient runs only.
    pub spectral_norm: Option<bool>,
    pub power_iters: usize,
    /// `descent` or `ascent`.
    pub slack_rule: String,
    /// `sgd` or `adam`.
    pub optimizer: String,
    /// `frobenius` or `exact`.
    pub certificate: String,
    pub eq_probes: usize,

    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::C4Toy,
            target: "square".into(),
            image_size: 8,
            n_samples: 50,
            set_size: 5,
            features: 2,
            epsilon: 0.0,
            scalar_a: 1.0,
            noise_std: 0.0,
            widths: Vec::new(),
            kernel: 3,
            branch: BranchKind::Dense,
            mlp_hidden: 8,
            branch_gain: 1.0,
            mode: Mode::Strict,
            eta_p: 1e-3,
            eta_d: None,
            gamma_init: 1.0,
            rho: 1.0,
            alpha: 1.0,
            beta: 0.0,
            n_g_samples: 5,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            eval_every: 1,
            spectral_norm: None,
            power_iters: 3,
            slack_rule: "descent".into(),
            optimizer: "sgd".into(),
            certificate: "frobenius".into(),
            eq_probes: 4,
            output_dir: PathBuf::from("ace-out"),
        }
    }
}

/// Parses `key=value`. The value is read as a TOML literal when possible
/// (`3`, `1e-3`, `true`, `[1, 2, 1]`, `"x"`) and as a bare string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{spec}` has an empty key");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Applies `ACE_SEED` (if given) and then the overrides to a raw table.
pub fn layer_table(mut table: toml::Table, env_seed: Option<&str>, overrides: &[String]) -> Result<toml::Table> {
    if let Some(s) = env_seed {
        let seed: i64 = s.trim().parse().with_context(|| format!("{SEED_ENV}={s} is not an integer"))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    for spec in overrides {
        let (key, value) = parse_override(spec)?;
        table.insert(key, value);
    }
    Ok(table)
}

/// Deserialises the layered table. Going through text makes schema errors
/// quote the offending `key = value` line.
pub fn from_table<T: serde::de::DeserializeOwned>(table: toml::Table) -> Result<T> {
    let text = toml::to_string(&table).context("re-rendering config")?;
    toml::from_str(&text).map_err(|e| anyhow!("config schema error: {}", e.to_string().trim_end()))
}

impl ExperimentConfig {
    /// Loads a config file without touching it, then layers `ACE_SEED` and
    /// `--set` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let env_seed = std::env::var(SEED_ENV).ok();
        Self::from_toml(&text, env_seed.as_deref(), overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_toml(text: &str, env_seed: Option<&str>, overrides: &[String]) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let table = layer_table(table, env_seed, overrides)?;
        let config: Self = from_table(table)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn c4_target(&self) -> Result<C4Target> {
        self.target.parse().map_err(|e| anyhow!("key `target`: {e}"))
    }

    pub fn neq_kind(&self) -> NeqKind {
        match self.branch {
            BranchKind::Dense => NeqKind::Dense,
            BranchKind::Mlp => NeqKind::Mlp { hidden: self.mlp_hidden },
        }
    }

    /// Model widths with task defaults filled in.
    pub fn model_widths(&self) -> Vec<usize> {
        if !self.widths.is_empty() {
            return self.widths.clone();
        }
        match self.task {
            TaskKind::C4Toy => vec![1, 2, 1],
            _ => vec![self.features, 8, 8, self.features],
        }
    }

    pub fn objective(&self) -> Objective {
        match self.mode {
            Mode::Strict => Objective::Strict,
            Mode::Resilient => Objective::Resilient,
            Mode::Penalty => Objective::Penalty { alpha: self.alpha, beta: self.beta, n_g_samples: self.n_g_samples },
            Mode::Plain => Objective::Plain,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let slack_rule = match self.slack_rule.as_str() {
            "descent" => SlackRule::Descent,
            "ascent" => SlackRule::Ascent,
            other => bail!("key `slack_rule`: expected `descent` or `ascent`, got `{other}`"),
        };
        let optimizer = match self.optimizer.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => bail!("key `optimizer`: expected `sgd` or `adam`, got `{other}`"),
        };
        let certificate = match self.certificate.as_str() {
            "frobenius" => ConvCertificate::Frobenius,
            "exact" => ConvCertificate::Exact,
            other => bail!("key `certificate`: expected `frobenius` or `exact`, got `{other}`"),
        };
        let config = TrainConfig {
            objective: self.objective(),
            eta_p: self.eta_p,
            eta_d: self.eta_d.unwrap_or(self.eta_p),
            gamma_init: self.gamma_init,
            rho: self.rho,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            eval_every: self.eval_every,
            spectral_norm: self.spectral_norm,
            power_iters: self.power_iters,
            slack_rule,
            optimizer,
            certificate,
            eq_probes: self.eq_probes,
        };
        config.validate().map_err(|e| anyhow!("training keys: {e}"))?;
        Ok(config)
    }

    /// Checks every key before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.train_config()?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            bail!("key `noise_std` must be non-negative");
        }
        if !(self.branch_gain.is_finite()) {
            bail!("key `branch_gain` must be finite");
        }
        if self.branch == BranchKind::Mlp && self.mlp_hidden == 0 {
            bail!("key `mlp_hidden` must be positive for mlp branches");
        }
        let widths = self.model_widths();
        match self.task {
            TaskKind::C4Toy => {
                self.c4_target()?;
                if widths.len() < 2 || widths[0] != 1 || *widths.last().unwrap() != 1 || widths.contains(&0) {
                    bail!("key `widths`: c4_toy needs at least two positive channel widths starting and ending at 1, got {widths:?}");
                }
                if self.kernel % 2 == 0 {
                    bail!("key `kernel` must be odd, got {}", self.kernel);
                }
            }
            TaskKind::SetRegression => {
                if widths.len() < 2 || widths[0] != self.features || *widths.last().unwrap() != self.features || widths.contains(&0) {
                    bail!(
                        "key `widths`: set_regression needs positive widths starting and ending at features = {}, got {widths:?}",
                        self.features
                    );
                }
            }
            TaskKind::ScalarToy => {
                if !matches!(self.mode, Mode::Strict | Mode::Resilient) {
                    bail!("key `mode`: scalar_toy supports only strict and resilient");
                }
                if !self.scalar_a.is_finite() {
                    bail!("key `scalar_a` must be finite");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_toml_literals_and_fall_back_to_strings() {
        assert_eq!(parse_override("epochs=0").unwrap(), ("epochs".into(), toml::Value::Integer(0)));
        assert_eq!(parse_override("eta_p = 1e-3").unwrap().1, toml::Value::Float(1e-3));
        assert_eq!(parse_override("mode=resilient").unwrap().1, toml::Value::String("resilient".into()));
        assert_eq!(parse_override("output_dir=/tmp/a b").unwrap().1, toml::Value::String("/tmp/a b".into()));
        assert!(matches!(parse_override("widths=[1, 4, 1]").unwrap().1, toml::Value::Array(_)));
        assert!(parse_override("epochs").is_err());
        assert!(parse_override("=3").is_err());
    }

    #[test]
    fn precedence_is_file_then_env_then_set() {
        let text = "seed = 1\nepochs = 5\n";
        assert_eq!(ExperimentConfig::from_toml(text, None, &[]).unwrap().seed, 1);
        assert_eq!(ExperimentConfig::from_toml(text, Some("7"), &[]).unwrap().seed, 7);
        assert_eq!(ExperimentConfig::from_toml(text, Some("7"), &["seed=9".into()]).unwrap().seed, 9);
        assert!(ExperimentConfig::from_toml(text, Some("x"), &[]).is_err());
    }

    #[test]
    fn unknown_and_invalid_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("epoch = 3\n", None, &[]).unwrap_err();
        assert!(format!("{err:#}").contains("epoch"), "{err:#}");
        let err = ExperimentConfig::from_toml("", None, &["optimizer=rmsprop".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("optimizer"));
        assert!(ExperimentConfig::from_toml("eta_p = -1.0\n", None, &[]).is_err());
        assert!(ExperimentConfig::from_toml("task = \"c4_toy\"\nwidths = [2, 1]\n", None, &[]).is_err());
        assert!(ExperimentConfig::from_toml("task = \"scalar_toy\"\nmode = \"plain\"\n", None, &[]).is_err());
    }

    #[test]
    fn defaults_follow_the_reference_values() {
        let c = ExperimentConfig::from_toml("", None, &[]).unwrap();
        let t = c.train_config().unwrap();
        assert_eq!((t.gamma_init, t.rho, t.eta_d), (1.0, 1.0, t.eta_p));
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml(), None, &[]).unwrap(), c);
    }
}
