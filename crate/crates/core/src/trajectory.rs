//! Trajectories, nonlinear and linearized rollouts, and cost evaluation.

use crate::backward::BackwardSolution;
use crate::expansion::ExpansionSequence;
use crate::models::{CostModel, Dynamics};
use crate::{DVec, Error, Result};

/// Any state component beyond this magnitude aborts a rollout.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// Dynamically feasible state/control sequence with its total cost.
///
/// `states` has `T + 1` entries and `controls` has `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVec>,
    pub controls: Vec<DVec>,
    pub cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Per-step stage cost, with the terminal cost as the final entry.
    pub fn stage_costs(&self, cost: &CostModel) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .states
            .iter()
            .zip(&self.controls)
            .map(|(x, u)| cost.stage_cost(x, u))
            .collect();
        out.push(cost.terminal_cost(self.states.last().expect("non-empty trajectory")));
        out
    }
}

/// Perturbations `(δx_0..δx_T, δu_0..δu_{T−1})` about a nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPath {
    pub dx: Vec<DVec>,
    pub du: Vec<DVec>,
}

impl PerturbationPath {
    pub fn zeros(horizon: usize, n: usize, m: usize) -> Self {
        Self {
            dx: vec![DVec::zeros(n); horizon + 1],
            du: vec![DVec::zeros(m); horizon],
        }
    }
}

/// `J = Σ_t c(x_t, u_t) + C_T(x_T)`.
pub fn total_cost(cost: &CostModel, states: &[DVec], controls: &[DVec]) -> f64 {
    debug_assert_eq!(states.len(), controls.len() + 1);
    let running: f64 = states
        .iter()
        .zip(controls)
        .map(|(x, u)| cost.stage_cost(x, u))
        .sum();
    running + cost.terminal_cost(&states[controls.len()])
}

/// Simulates the plant from `x0` under `controls`.
pub fn rollout<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    x0: &DVec,
    controls: &[DVec],
) -> Result<Trajectory> {
    if controls.is_empty() {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: model.state_dim(),
            got: x0.len(),
        });
    }
    if let Some(u) = controls.iter().find(|u| u.len() != model.control_dim()) {
        return Err(Error::Dimension {
            what: "control",
            expected: model.control_dim(),
            got: u.len(),
        });
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for (t, u) in controls.iter().enumerate() {
        let next = model.step(&states[t], u);
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
        {
            return Err(Error::Divergence { t: t + 1 });
        }
        states.push(next);
    }
    let cost_value = total_cost(cost, &states, controls);
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        cost: cost_value,
    })
}

/// Propagates the step `δu_t = −α k_t − K_t δx_t` through the linearized
/// dynamics `δx_{t+1} = f_x δx_t + f_u δu_t` with `δx_0 = 0`.
pub fn linear_rollout(
    expansion: &ExpansionSequence,
    gains: &BackwardSolution,
    alpha: f64,
) -> PerturbationPath {
    let horizon = expansion.horizon();
    debug_assert_eq!(gains.k.len(), horizon);
    let n = expansion.state_dim();
    let mut dx = Vec::with_capacity(horizon + 1);
    let mut du = Vec::with_capacity(horizon);
    dx.push(DVec::zeros(n));
    for (t, stage) in expansion.stages.iter().enumerate() {
        let u = -(&gains.k[t] * alpha) - &gains.gain[t] * &dx[t];
        let next = &stage.dynamics.f_x * &dx[t] + &stage.dynamics.f_u * &u;
        du.push(u);
        dx.push(next);
    }
    PerturbationPath { dx, du }
}
