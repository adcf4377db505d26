//! Central finite-difference checks of reverse-mode gradients.

use super::Tensor;
use crate::error::Result;

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that gradients that are
/// exactly zero compare against finite-difference noise absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    /// `max_j |analytic_j - numeric_j| / max(max|analytic|, max|numeric|, REL_ERR_FLOOR)`,
    /// worst over all inputs.
    pub worst_rel_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_rel_err <= tol
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(REL_ERR_FLOOR, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Compares the tape's gradients of `f` at `inputs` against central differences
/// with step `h`. Every input is treated as a variable.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(Tensor::requires_grad_leaf).collect();
    let loss = f(&leaves)?;
    loss.backward()?;

    let base: Vec<Vec<f64>> = inputs.iter().map(Tensor::to_vec).collect();
    let eval_at = |which: usize, j: usize, delta: f64| -> Result<f64> {
        let consts: Vec<Tensor> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = base[i].clone();
                if i == which {
                    v[j] += delta;
                }
                Tensor::new(v, t.shape()).expect("same shape")
            })
            .collect();
        Ok(f(&consts)?.item())
    };

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let mut numeric = Vec::with_capacity(leaf.numel());
        for j in 0..leaf.numel() {
            let plus = eval_at(i, j, h)?;
            let minus = eval_at(i, j, -h)?;
            numeric.push((plus - minus) / (2.0 * h));
        }
        checked += numeric.len();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        worst_rel_err: worst,
        checked,
    })
}
