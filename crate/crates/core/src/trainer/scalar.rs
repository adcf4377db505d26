use crate::constraints::{
    dual_step_resilient, dual_step_strict, lagrangian_resilient, lagrangian_strict, primal_step, DualState, Optimizer,
    SlackRule,
};
use crate::error::Result;
use crate::tasks::{ScalarToy, ScalarToyKind};
use crate::tensor::Tensor;

/// Iterates of a scalar-toy run, one entry per step (after the update).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarRun {
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
}

impl ScalarRun {
    /// Averages of (γ, λ, u) over the second half of the run.
    pub fn last_half_average(&self) -> (f64, f64, f64) {
        let start = self.gamma.len() / 2;
        let avg = |v: &[f64]| {
            let tail = &v[start..];
            if tail.is_empty() {
                0.0
            } else {
                tail.iter().sum::<f64>() / tail.len() as f64
            }
        };
        (avg(&self.gamma), avg(&self.lambda), avg(&self.u))
    }

    pub fn last(&self) -> Option<(f64, f64, f64)> {
        Some((*self.gamma.last()?, *self.lambda.last()?, *self.u.last()?))
    }
}

/// Primal–dual dynamics on the one-parameter model `γ` with `J0 = (γ − a)²`,
/// through the same Lagrangians and update rules as the full trainer.
pub fn train_scalar_toy(toy: &ScalarToy, eta_p: f64, eta_d: f64, steps: usize, gamma_init: f64) -> Result<ScalarRun> {
    let gamma = Tensor::scalar_param(gamma_init);
    let mut dual = match toy.kind {
        ScalarToyKind::StrictKkt => DualState::strict(1),
        ScalarToyKind::ResilientKkt { rho } => DualState::resilient(1, rho)?,
    };
    let mut opt = Optimizer::Sgd;
    let mut run = ScalarRun::default();
    for _ in 0..steps {
        gamma.zero_grad();
        let pre = [gamma.item()];
        let j0 = gamma.sub(&Tensor::scalar(toy.a))?.square();
        match toy.kind {
            ScalarToyKind::StrictKkt => {
                lagrangian_strict(&j0, &[gamma.clone()], &dual)?.backward()?;
                primal_step(&[gamma.clone()], eta_p, &mut opt)?;
                dual_step_strict(&mut dual, &pre, eta_d)?;
            }
            ScalarToyKind::ResilientKkt { .. } => {
                let u = Tensor::vector(dual.u.clone()).requires_grad_leaf();
                lagrangian_resilient(&j0, &[gamma.clone()], &u, &dual)?.backward()?;
                primal_step(&[gamma.clone()], eta_p, &mut opt)?;
                dual_step_resilient(&mut dual, &pre, eta_p, eta_d, SlackRule::Descent)?;
            }
        }
        run.gamma.push(gamma.item());
        run.lambda.push(dual.lambda[0]);
        run.u.push(dual.u[0]);
    }
    Ok(run)
}
