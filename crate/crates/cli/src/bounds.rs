//! `ace verify-bounds`: random models and inputs, checked against the full
//! ordering measured ≤ recursion ≤ refined ≤ coarse for both error families.

use std::path::{Path, PathBuf};

use ace_core::layers::{
    ConvCertificate, EquivariantLayer, Head, HomotopicLayer, HomotopicModel, NeqKind, NonEquivariantLayer,
};
use ace_core::metrics::{certify, CertificateReport};
use ace_core::Tensor;
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{from_table, layer_table, SEED_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Lifting + group convs, group-pool or identity head.
    C4,
    /// DeepSets linear layers.
    Deepsets,
    /// Either of the above, chosen per sample.
    Mixed,
    /// One DeepSets layer whose branch is `x ↦ s·x`; the approximation error
    /// then equals the δ recursion exactly.
    Scaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub family: Family,
    pub samples: u64,
    /// Sample `i` uses seed `seed + i`.
    pub seed: u64,
    pub max_depth: usize,
    /// Sets every γ to this value instead of drawing from [−1, 1].
    pub gamma: Option<f64>,
    pub certificate: String,
    pub output: PathBuf,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            family: Family::Mixed,
            samples: 100,
            seed: 0,
            max_depth: 4,
            gamma: None,
            certificate: "frobenius".into(),
            output: PathBuf::from("bounds.csv"),
        }
    }
}

impl BoundsConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let env_seed = std::env::var(SEED_ENV).ok();
        Self::from_toml(&text, env_seed.as_deref(), overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_toml(text: &str, env_seed: Option<&str>, overrides: &[String]) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let table = layer_table(table, env_seed, overrides)?;
        let config: Self = from_table(table)?;
        config.cert()?;
        if config.max_depth == 0 {
            bail!("key `max_depth` must be positive");
        }
        if config.gamma.is_some_and(|g| !g.is_finite()) {
            bail!("key `gamma` must be finite");
        }
        Ok(config)
    }

    pub fn cert(&self) -> Result<ConvCertificate> {
        match self.certificate.as_str() {
            "frobenius" => Ok(ConvCertificate::Frobenius),
            "exact" => Ok(ConvCertificate::Exact),
            other => bail!("key `certificate`: expected `frobenius` or `exact`, got `{other}`"),
        }
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    Ok(Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape)?)
}

fn random_neq(rng: &mut ChaCha8Rng) -> NeqKind {
    if rng.gen_bool(0.5) {
        NeqKind::Dense
    } else {
        NeqKind::Mlp { hidden: rng.gen_range(2..=5) }
    }
}

fn c4_layers(depth: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<HomotopicLayer>, Head)> {
    let side = rng.gen_range(3..=5);
    let mut c = 1;
    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let c_out = rng.gen_range(1..=2);
        let eq = if i == 0 {
            EquivariantLayer::random_c4_lifting(c, c_out, 3, side, rng)?
        } else {
            EquivariantLayer::random_c4_group(c, c_out, 3, side, rng)?
        };
        c = c_out;
        let neq = NonEquivariantLayer::random(random_neq(rng), eq.input_space(), eq.output_space(), rng)?;
        layers.push(HomotopicLayer::new(eq, neq, rng.gen_range(-1.0..1.0))?);
    }
    let head = if rng.gen_bool(0.5) { Head::GroupPool } else { Head::Identity };
    Ok((layers, head))
}

fn deepsets_layers(depth: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<HomotopicLayer>, Head)> {
    let n = rng.gen_range(2..=4);
    let mut d = rng.gen_range(1..=3);
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let d_out = rng.gen_range(1..=3);
        let eq = EquivariantLayer::random_deepsets(n, d, d_out, rng)?;
        d = d_out;
        let neq = NonEquivariantLayer::random(random_neq(rng), eq.input_space(), eq.output_space(), rng)?;
        layers.push(HomotopicLayer::new(eq, neq, rng.gen_range(-1.0..1.0))?);
    }
    Ok((layers, Head::Identity))
}

fn scaling_layers(rng: &mut ChaCha8Rng) -> Result<(Vec<HomotopicLayer>, Head)> {
    let n = rng.gen_range(2..=4);
    let d = rng.gen_range(1..=3);
    let eq = EquivariantLayer::random_deepsets(n, d, d, rng)?;
    let s = rng.gen_range(0.1..2.0);
    let dim = n * d;
    let w = Tensor::param((0..dim * dim).map(|k| if k / dim == k % dim { s } else { 0.0 }).collect(), &[dim, dim])?;
    let neq = NonEquivariantLayer::new(NeqKind::Dense, vec![w], eq.input_space(), eq.output_space())?;
    Ok((vec![HomotopicLayer::new(eq, neq, rng.gen_range(-1.0..1.0))?], Head::Identity))
}

/// The model and input for one sample, fully determined by `seed`.
pub fn sample_model(family: Family, max_depth: usize, gamma: Option<f64>, seed: u64) -> Result<(HomotopicModel, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=max_depth);
    let (layers, head) = match family {
        Family::C4 => c4_layers(depth, &mut rng)?,
        Family::Deepsets => deepsets_layers(depth, &mut rng)?,
        Family::Mixed if rng.gen_bool(0.5) => c4_layers(depth, &mut rng)?,
        Family::Mixed => deepsets_layers(depth, &mut rng)?,
        Family::Scaling => scaling_layers(&mut rng)?,
    };
    let model = HomotopicModel::new(layers, head)?;
    if let Some(g) = gamma {
        model.set_gammas(&vec![g; model.depth()])?;
    }
    let x = random_tensor(&model.input_space().shape(), &mut rng)?;
    Ok((model, x))
}

#[derive(Debug, Clone)]
pub struct BoundsRow {
    pub sample_id: u64,
    pub seed: u64,
    pub depth: usize,
    pub report: CertificateReport,
    pub violations: Vec<String>,
}

pub const BOUNDS_HEADER: &str = "sample_id,seed,depth,approx_measured,delta_recursion,thm1_refined,thm1_coarse,\
eq_measured,epsilon_recursion,thm2_refined,thm2_coarse";

/// Relative tolerance for the scaling family's tightness check.
pub const SCALING_TIGHTNESS: f64 = 1e-9;

pub fn verify(config: &BoundsConfig) -> Result<Vec<BoundsRow>> {
    let cert = config.cert()?;
    (0..config.samples)
        .map(|id| {
            let seed = config.seed.wrapping_add(id);
            let (model, x) = sample_model(config.family, config.max_depth, config.gamma, seed)?;
            let report = certify(&model, &x, cert, seed)?;
            let mut violations = report.violations();
            if config.family == Family::Scaling {
                let gap = (report.approximation_error - report.delta_recursion).abs();
                if gap > SCALING_TIGHTNESS * report.delta_recursion.max(1.0) {
                    violations.push(format!("scaling branch not tight: approx {:e} vs delta {:e}", report.approximation_error, report.delta_recursion));
                }
            }
            Ok(BoundsRow { sample_id: id, seed, depth: model.depth(), report, violations })
        })
        .collect()
}

pub fn to_csv(rows: &[BoundsRow]) -> String {
    let mut out = String::from(BOUNDS_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.report;
        let vals = [
            c.approximation_error,
            c.delta_recursion,
            c.thm1_refined,
            c.thm1_coarse,
            c.equivariance_error,
            c.epsilon_recursion,
            c.thm2_refined,
            c.thm2_coarse,
        ];
        let vals: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&format!("{},{},{},{}\n", r.sample_id, r.seed, r.depth, vals.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible_from_their_seed() {
        for family in [Family::C4, Family::Deepsets, Family::Mixed, Family::Scaling] {
            let (a, xa) = sample_model(family, 3, None, 17).unwrap();
            let (b, xb) = sample_model(family, 3, None, 17).unwrap();
            assert_eq!(a.forward(&xa).unwrap().to_vec(), b.forward(&xb).unwrap().to_vec());
        }
    }

    #[test]
    fn fixed_gamma_overrides_every_layer() {
        let (m, _) = sample_model(Family::Mixed, 4, Some(0.25), 3).unwrap();
        assert!(m.gammas().iter().all(|g| *g == 0.25));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(BoundsConfig::from_toml("famly = \"c4\"\n", None, &[]).is_err());
        assert!(BoundsConfig::from_toml("max_depth = 0\n", None, &[]).is_err());
        let c = BoundsConfig::from_toml("family = \"scaling\"\n", None, &["samples=3".into()]).unwrap();
        assert_eq!((c.family, c.samples), (Family::Scaling, 3));
    }
}
