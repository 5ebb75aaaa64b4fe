//! Nonlinear forward pass and backtracking on the feedforward step.

use serde::{Deserialize, Serialize};

use crate::backward::BackwardSolution;
use crate::expansion::ExpansionSequence;
use crate::kkt_oracle::directional_derivative;
use crate::models::{CostModel, Dynamics};
use crate::trajectory::{linear_rollout, total_cost, Trajectory, DIVERGENCE_BOUND};
use crate::{DVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Acceptance threshold on the realized/predicted ratio.
    pub sigma: f64,
    /// Backtracking factor.
    pub rho: f64,
    pub alpha_min: f64,
    pub alpha_init: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            rho: 0.5,
            alpha_min: 1e-8,
            alpha_init: 1.0,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.sigma < 1.0
            && self.rho > 0.0
            && self.rho < 1.0
            && self.alpha_min > 0.0
            && self.alpha_min < self.alpha_init
            && self.alpha_init <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "line search needs 0 < sigma < 1, 0 < rho < 1, 0 < alpha_min < alpha_init <= 1: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LineSearchStatus {
    Accepted,
    FloorHit,
}

/// One candidate step. `cost` and `ratio` are NaN when the rollout diverged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSearchTrial {
    pub alpha: f64,
    pub cost: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub trajectory: Trajectory,
    /// Accepted step; zero on [`LineSearchStatus::FloorHit`].
    pub alpha: f64,
    pub trials: usize,
    pub status: LineSearchStatus,
    /// First-order prediction `d'∇J` of the full step.
    pub linear_pred: f64,
    pub trace: Vec<LineSearchTrial>,
}

/// Applies `u_t = ū_t − α k_t − K_t (x_t − x̄_t)` to the nonlinear plant.
pub fn forward_pass<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    nominal: &Trajectory,
    sol: &BackwardSolution,
    alpha: f64,
) -> Result<Trajectory> {
    let horizon = nominal.horizon();
    let mut states: Vec<DVec> = Vec::with_capacity(horizon + 1);
    let mut controls: Vec<DVec> = Vec::with_capacity(horizon);
    states.push(nominal.states[0].clone());
    for t in 0..horizon {
        let dx = &states[t] - &nominal.states[t];
        let u = &nominal.controls[t] - &sol.k[t] * alpha - &sol.gain[t] * dx;
        let next = model.step(&states[t], &u);
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
        {
            return Err(Error::Divergence { t: t + 1 });
        }
        controls.push(u);
        states.push(next);
    }
    let j = total_cost(cost, &states, &controls);
    Ok(Trajectory {
        states,
        controls,
        cost: j,
    })
}

/// Ratio test `(J_new − J_old) / (α·d'∇J) > σ`.
///
/// Fails with [`Error::NonDescent`] when `linear_pred ≥ 0`.
pub fn accept(j_old: f64, j_new: f64, alpha: f64, linear_pred: f64, sigma: f64) -> Result<bool> {
    if !(linear_pred < 0.0) {
        return Err(Error::NonDescent { linear_pred });
    }
    Ok((j_new - j_old) / (alpha * linear_pred) > sigma)
}

/// Backtracks `α = α_init, α_init·ρ, …` until [`accept`] holds or `α < α_min`.
///
/// The test's denominator uses the α = 1 direction of the linearized model,
/// `d = δu` from [`linear_rollout`], against the adjoint gradient `grad`.
pub fn line_search<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    nominal: &Trajectory,
    exp: &ExpansionSequence,
    sol: &BackwardSolution,
    grad: &[DVec],
    config: &LineSearchConfig,
) -> Result<LineSearchOutcome> {
    let direction = linear_rollout(exp, sol, 1.0);
    let linear_pred = directional_derivative(&direction.du, grad);
    if !(linear_pred < 0.0) {
        return Err(Error::NonDescent { linear_pred });
    }

    let mut trace = Vec::new();
    let mut alpha = config.alpha_init;
    while alpha >= config.alpha_min {
        match forward_pass(model, cost, nominal, sol, alpha) {
            Ok(candidate) => {
                let ratio = (candidate.cost - nominal.cost) / (alpha * linear_pred);
                trace.push(LineSearchTrial {
                    alpha,
                    cost: candidate.cost,
                    ratio,
                });
                if accept(
                    nominal.cost,
                    candidate.cost,
                    alpha,
                    linear_pred,
                    config.sigma,
                )? {
                    return Ok(LineSearchOutcome {
                        trajectory: candidate,
                        alpha,
                        trials: trace.len(),
                        status: LineSearchStatus::Accepted,
                        linear_pred,
                        trace,
                    });
                }
            }
            Err(Error::Divergence { .. }) => trace.push(LineSearchTrial {
                alpha,
                cost: f64::NAN,
                ratio: f64::NAN,
            }),
            Err(e) => return Err(e),
        }
        alpha *= config.rho;
    }
    Ok(LineSearchOutcome {
        trajectory: nominal.clone(),
        alpha: 0.0,
        trials: trace.len(),
        status: LineSearchStatus::FloorHit,
        linear_pred,
        trace,
    })
}
