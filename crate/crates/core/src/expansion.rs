//! Local models along a nominal trajectory.

use crate::models::{CostModel, DerivativeBundle, Dynamics};
use crate::trajectory::Trajectory;
use crate::{DMat, DVec, Error, Result};

/// Derivatives at one timestep of the nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct StageExpansion {
    pub dynamics: DerivativeBundle,
    pub l_x: DVec,
    pub l_xx: DMat,
    /// `R ū_t`
    pub control_gradient: DVec,
    pub r: DMat,
}

/// Per-step local model of dynamics and cost along a feasible nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionSequence {
    pub stages: Vec<StageExpansion>,
    pub terminal_x: DVec,
    pub terminal_xx: DMat,
    pub nominal_cost: f64,
}

impl ExpansionSequence {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_dim(&self) -> usize {
        self.terminal_x.len()
    }

    pub fn control_dim(&self) -> usize {
        self.stages[0].r.nrows()
    }
}

fn finite_stage(s: &StageExpansion) -> bool {
    s.dynamics.is_finite()
        && s.l_x.iter().all(|v| v.is_finite())
        && s.l_xx.iter().all(|v| v.is_finite())
        && s.control_gradient.iter().all(|v| v.is_finite())
}

/// Evaluates every derivative the backward passes and the dense QP need.
pub fn expand_along<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    traj: &Trajectory,
) -> Result<ExpansionSequence> {
    let horizon = traj.horizon();
    if traj.states.len() != horizon + 1 || horizon == 0 {
        return Err(Error::Dimension {
            what: "trajectory states",
            expected: horizon + 1,
            got: traj.states.len(),
        });
    }
    let mut stages = Vec::with_capacity(horizon);
    for (t, (x, u)) in traj.states.iter().zip(&traj.controls).enumerate() {
        let c = cost.stage_derivatives(x, u);
        let stage = StageExpansion {
            dynamics: model.derivatives(x, u),
            l_x: c.l_x,
            l_xx: c.l_xx,
            control_gradient: c.control_gradient,
            r: c.r,
        };
        if !finite_stage(&stage) {
            return Err(Error::NonFiniteDerivative { t });
        }
        stages.push(stage);
    }
    let (terminal_x, terminal_xx) = cost.terminal_derivatives(&traj.states[horizon]);
    if terminal_x
        .iter()
        .chain(terminal_xx.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteDerivative { t: horizon });
    }
    Ok(ExpansionSequence {
        stages,
        terminal_x,
        terminal_xx,
        nominal_cost: traj.cost,
    })
}
