//! `ace sweep`: one seeded run per value of a single parameter, each in its
//! own subdirectory, aggregated into sweep.csv and sweep.svg.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Result};

use crate::config::ExperimentConfig;
use crate::run::{run_train, RunOutcome};
use crate::svg::{line_chart, Series};

/// max|γ| threshold for the `steps_to_gamma_1e-2` column.
pub const GAMMA_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    EtaD,
    GammaInit,
    Epsilon,
    Rho,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::EtaD => "eta_d",
            SweepParam::GammaInit => "gamma_init",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Rho => "rho",
        }
    }
}

impl FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eta_d" => SweepParam::EtaD,
            "gamma_init" => SweepParam::GammaInit,
            "epsilon" => SweepParam::Epsilon,
            "rho" => SweepParam::Rho,
            other => bail!("unknown sweep parameter `{other}`; expected eta_d, gamma_init, epsilon or rho"),
        })
    }
}

pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow::anyhow!("sweep value `{v}` is not a number")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("no sweep values given");
    }
    Ok(values)
}

#[derive(Debug)]
pub struct SweepEntry {
    pub value: f64,
    pub dir_name: String,
    pub result: std::result::Result<RunOutcome, String>,
}

/// One config per value, each with its own output subdirectory. All are
/// validated before any run starts.
pub fn plan(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<(String, ExperimentConfig)>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = base.clone();
            match param {
                SweepParam::EtaD => c.eta_d = Some(v),
                SweepParam::GammaInit => c.gamma_init = v,
                SweepParam::Epsilon => c.epsilon = v,
                SweepParam::Rho => c.rho = v,
            }
            let dir_name = format!("run_{i:02}_{}_{v}", param.name());
            c.output_dir = base.output_dir.join(&dir_name);
            c.validate().map_err(|e| anyhow::anyhow!("{}={v}: {e:#}", param.name()))?;
            Ok((dir_name, c))
        })
        .collect()
}

/// Runs every planned config on up to `jobs` threads. Failures are recorded,
/// not propagated.
pub fn execute(planned: Vec<(String, ExperimentConfig)>, param: SweepParam, jobs: usize) -> Vec<SweepEntry> {
    let run_one = |(dir_name, c): &(String, ExperimentConfig)| {
        let value = match param {
            SweepParam::EtaD => c.eta_d.unwrap_or(c.eta_p),
            SweepParam::GammaInit => c.gamma_init,
            SweepParam::Epsilon => c.epsilon,
            SweepParam::Rho => c.rho,
        };
        SweepEntry { value, dir_name: dir_name.clone(), result: run_train(c).map_err(|e| format!("{e:#}")) }
    };
    let jobs = jobs.max(1).min(planned.len().max(1));
    if jobs == 1 {
        return planned.iter().map(run_one).collect();
    }
    let mut slots: Vec<Option<SweepEntry>> = (0..planned.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = planned.len().div_ceil(jobs);
        for (configs, out) in planned.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            let run_one = &run_one;
            scope.spawn(move || {
                for (c, slot) in configs.iter().zip(out) {
                    *slot = Some(run_one(c));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every run reports")).collect()
}

fn field(v: f64) -> String {
    format!("{v:.16e}")
}

pub const SWEEP_HEADER: &str = "param,value,run_dir,status,final_step,loss_train,loss_val_raw,loss_val_proj,\
eq_error_exact,max_abs_gamma,max_lambda,max_u,steps_to_gamma_1e-2,error";

pub fn to_csv(param: SweepParam, entries: &[SweepEntry]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for e in entries {
        let cols = match &e.result {
            Ok(run) => {
                let r = run.last();
                [
                    "ok".to_string(),
                    r.step.to_string(),
                    field(r.loss_train),
                    field(r.loss_val_raw),
                    field(r.loss_val_proj),
                    field(r.eq_error_exact),
                    field(r.max_abs_gamma()),
                    field(r.lambdas.iter().copied().fold(0.0, f64::max)),
                    field(r.max_u()),
                    run.first_step_gamma_within(GAMMA_TOL).map_or(String::new(), |s| s.to_string()),
                    String::new(),
                ]
                .join(",")
            }
            Err(msg) => format!("failed,,,,,,,,,,\"{}\"", msg.replace('"', "'").replace('\n', " ")),
        };
        out.push_str(&format!("{},{},{},{cols}\n", param.name(), e.value, e.dir_name));
    }
    out
}

/// max|γ| over steps, one line per successful run.
pub fn plot(param: SweepParam, entries: &[SweepEntry]) -> String {
    let series: Vec<Series> = entries
        .iter()
        .filter_map(|e| {
            let run = e.result.as_ref().ok()?;
            let points = run.trace.iter().map(|r| (r.step as f64, r.max_abs_gamma())).collect();
            Some(Series::new(format!("{} = {}", param.name(), e.value), points))
        })
        .collect();
    line_chart(&format!("max |gamma| across {} values", param.name()), "step", "max |gamma|", &series)
}

/// Writes sweep.csv and sweep.svg once, after all runs.
pub fn write_outputs(dir: &Path, param: SweepParam, entries: &[SweepEntry]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("sweep.csv"), to_csv(param, entries))?;
    std::fs::write(dir.join("sweep.svg"), plot(param, entries))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_params_parse() {
        assert_eq!(parse_values("0, 5e-5,5e-4").unwrap(), vec![0.0, 5e-5, 5e-4]);
        assert!(parse_values("1,x").is_err());
        assert_eq!("eta_d".parse::<SweepParam>().unwrap(), SweepParam::EtaD);
        assert!("eta_p".parse::<SweepParam>().is_err());
    }

    #[test]
    fn plan_rejects_invalid_values_up_front() {
        let base = ExperimentConfig::default();
        assert!(plan(&base, SweepParam::Rho, &[1.0, -1.0]).is_err());
        let p = plan(&base, SweepParam::EtaD, &[0.0, 1e-3]).unwrap();
        assert_eq!(p[0].1.eta_d, Some(0.0));
        assert_ne!(p[0].1.output_dir, p[1].1.output_dir);
    }

    #[test]
    fn threaded_and_serial_sweeps_agree() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "task = \"set_regression\"\nn_samples = 20\nwidths = [2, 3, 2]\nmode = \"resilient\"\neta_p = 1e-2\nepochs = 2\nbatch_size = 4\noutput_dir = {:?}\n",
            dir.path().display().to_string()
        );
        let base = ExperimentConfig::from_toml(&text, None, &[]).unwrap();
        let planned = plan(&base, SweepParam::Rho, &[0.5, 1.0, 2.0]).unwrap();
        let serial = execute(planned.clone(), SweepParam::Rho, 1);
        let threaded = execute(planned, SweepParam::Rho, 3);
        assert_eq!(to_csv(SweepParam::Rho, &serial), to_csv(SweepParam::Rho, &threaded));
    }
}
