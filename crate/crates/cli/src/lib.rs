//! Library side of the `ace` binary: config schema, commands and plotting.

pub mod bounds;
pub mod config;
pub mod plot;
pub mod run;
pub mod svg;
pub mod sweep;

use std::path::Path;

use ace_core::gradsuite::{run_suite, Fault, SuiteSizes, GRADCHECK_TOL};
use anyhow::{bail, Context, Result};

pub use config::ExperimentConfig;

pub fn cmd_train(config_path: &Path, overrides: &[String]) -> Result<()> {
    let config = ExperimentConfig::load(config_path, overrides)?;
    let out = run::run_train(&config)?;
    let last = out.last();
    println!(
        "trained {} rows to step {}: max|gamma| {:.3e}, val loss {:.4e}, eq error {:.3e}",
        out.trace.len(),
        last.step,
        last.max_abs_gamma(),
        last.loss_val_raw,
        last.eq_error_exact
    );
    println!("artifacts in {}", out.output_dir.display());
    Ok(())
}

pub fn cmd_verify_bounds(config_path: &Path, overrides: &[String]) -> Result<()> {
    let config = bounds::BoundsConfig::load(config_path, overrides)?;
    let rows = bounds::verify(&config)?;
    if let Some(parent) = config.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&config.output, bounds::to_csv(&rows)).with_context(|| format!("writing {}", config.output.display()))?;
    let bad: Vec<_> = rows.iter().filter(|r| !r.violations.is_empty()).collect();
    println!("{} samples, {} with violations; report in {}", rows.len(), bad.len(), config.output.display());
    if bad.is_empty() {
        return Ok(());
    }
    for r in &bad {
        eprintln!("counterexample sample {} (seed {}): {}", r.sample_id, r.seed, r.violations.join("; "));
    }
    let seeds: Vec<String> = bad.iter().map(|r| r.seed.to_string()).collect();
    bail!("bound ordering violated for seeds {}", seeds.join(", "))
}

pub fn cmd_gradcheck(seed: u64, sizes: SuiteSizes, fault: bool) -> Result<()> {
    let report = run_suite(seed, sizes, fault.then_some(Fault::ScaledCubeGradient))?;
    for c in &report.checks {
        let flag = if c.worst_rel_err <= GRADCHECK_TOL { "ok  " } else { "FAIL" };
        println!("{flag} {:<24} {:.3e} ({} entries)", c.name, c.worst_rel_err, c.checked);
    }
    println!("{} checks, worst relative error {:.3e} (tolerance {GRADCHECK_TOL:e})", report.checks.len(), report.worst());
    if !report.passes() {
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        bail!("gradient check failed: {}", names.join(", "));
    }
    Ok(())
}

pub fn cmd_sweep(config_path: &Path, param: &str, values: &str, overrides: &[String], jobs: usize) -> Result<()> {
    let param: sweep::SweepParam = param.parse()?;
    let values = sweep::parse_values(values)?;
    let base = ExperimentConfig::load(config_path, overrides)?;
    let planned = sweep::plan(&base, param, &values)?;
    let entries = sweep::execute(planned, param, jobs);
    sweep::write_outputs(&base.output_dir, param, &entries)?;
    let mut failed = Vec::new();
    for e in &entries {
        match &e.result {
            Ok(run) => println!(
                "{} = {}: max|gamma| {:.3e}, max u {:.3e}, first step with max|gamma| <= {:e}: {}",
                param.name(),
                e.value,
                run.last().max_abs_gamma(),
                run.last().max_u(),
                sweep::GAMMA_TOL,
                run.first_step_gamma_within(sweep::GAMMA_TOL).map_or("never".into(), |s| s.to_string())
            ),
            Err(msg) => {
                eprintln!("{} = {} failed: {msg}", param.name(), e.value);
                failed.push(e.value.to_string());
            }
        }
    }
    println!("aggregate in {}", base.output_dir.join("sweep.csv").display());
    if !failed.is_empty() {
        bail!("{} of {} runs failed ({} = {})", failed.len(), entries.len(), param.name(), failed.join(", "));
    }
    Ok(())
}

pub fn cmd_plot(trace: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    plot::write_trace_plots(&text, out_dir)?;
    println!("plots written to {}", out_dir.display());
    Ok(())
}
