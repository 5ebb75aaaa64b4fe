//! Outer SQP loop: expand, backward pass, line search, multiplier update.

use serde::{Deserialize, Serialize};

use crate::backward::{
    backward_ddp, backward_ilqr, backward_newton, expected_reduction, multipliers_from,
    BackwardSolution, Method, MultiplierSequence,
};
use crate::expansion::expand_along;
use crate::kkt_oracle::{cost_gradient_adjoint, directional_derivative};
use crate::linesearch::{line_search, LineSearchConfig, LineSearchStatus, LineSearchTrial};
use crate::models::{CostModel, Dynamics};
use crate::trajectory::{linear_rollout, rollout, PerturbationPath, Trajectory};
use crate::{DVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Ilqr,
    Newton,
    Ddp,
    /// DDP until its step length cools, then iLQR.
    Hybrid,
}

impl SolverMethod {
    pub const ALL: [SolverMethod; 4] = [
        SolverMethod::Ilqr,
        SolverMethod::Newton,
        SolverMethod::Ddp,
        SolverMethod::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverMethod::Ilqr => "ilqr",
            SolverMethod::Newton => "newton",
            SolverMethod::Ddp => "ddp",
            SolverMethod::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ilqr" => Ok(SolverMethod::Ilqr),
            "newton" => Ok(SolverMethod::Newton),
            "ddp" => Ok(SolverMethod::Ddp),
            "hybrid" => Ok(SolverMethod::Hybrid),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub max_iters: usize,
    /// Threshold on `‖∇J‖∞`.
    pub grad_tol: f64,
    /// Threshold on `|ΔJ_realized|`.
    pub step_tol: f64,
    pub linesearch: LineSearchConfig,
    pub hybrid_alpha_switch: f64,
    pub hybrid_patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Ilqr,
            max_iters: 200,
            grad_tol: 1e-4,
            step_tol: 1e-9,
            linesearch: LineSearchConfig::default(),
            hybrid_alpha_switch: 1e-2,
            hybrid_patience: 2,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: SolverMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.linesearch.validate()?;
        if self.max_iters == 0 || !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "max_iters, grad_tol and step_tol must be positive".into(),
            ));
        }
        if self.hybrid_patience == 0 || !(self.hybrid_alpha_switch > 0.0) {
            return Err(Error::InvalidParameter(
                "hybrid_patience and hybrid_alpha_switch must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordStatus {
    Ok,
    NonDescent,
    FloorHit,
    /// Singular or non-finite `Q_uu`, or a non-finite expansion.
    Breakdown,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Ok => "OK",
            RecordStatus::NonDescent => "NON_DESCENT",
            RecordStatus::FloorHit => "FLOOR_HIT",
            RecordStatus::Breakdown => "BREAKDOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    Converged,
    MaxIters,
    NonDescent,
    FloorHit,
    Breakdown,
}

/// One outer iteration, evaluated at the nominal it started from.
///
/// A record with `alpha == 0` and status `Ok` means the nominal already met
/// the gradient tolerance and no step was taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Nominal cost `J` at the start of the iteration.
    pub cost: f64,
    /// `ΔJ(α = 1)` from the quadratic model.
    pub predicted_reduction: f64,
    /// `J_new − J`, zero when no step was accepted.
    pub realized_reduction: f64,
    pub alpha: f64,
    pub min_quu: f64,
    pub grad_norm: f64,
    /// First-order change `d'∇J` along the full step, NaN if never computed.
    pub slope: f64,
    /// `max_t ‖δu_t‖∞` of the full step.
    pub step_norm: f64,
    pub method_active: Method,
    pub status: RecordStatus,
    pub trials: usize,
}

impl IterationRecord {
    pub fn step_taken(&self) -> bool {
        self.status == RecordStatus::Ok && self.alpha > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub reason: StopReason,
    /// Backward pass of the first iteration (the `Q_uu` profile of the initial guess).
    pub initial_backward: Option<BackwardSolution>,
    /// Line-search candidates as `(iteration, trial)`.
    pub trials: Vec<(usize, LineSearchTrial)>,
    /// Multipliers threaded by Newton-LQR at exit.
    pub multipliers: Option<MultiplierSequence>,
    /// Last backward pass evaluated.
    pub last_backward: Option<BackwardSolution>,
}

impl SolveResult {
    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.step_taken()).count()
    }

    pub fn final_cost(&self) -> f64 {
        self.trajectory.cost
    }

    /// Minimum eigenvalue of each `Q_uu,t` at the first iteration.
    pub fn initial_quu(&self) -> Vec<f64> {
        self.initial_backward
            .as_ref()
            .map(|b| b.quu_min_eig.clone())
            .unwrap_or_default()
    }
}

/// Closed thresholds: `grad_norm ≤ grad_tol`, or an accepted step with
/// `|ΔJ_realized| ≤ step_tol`.
pub fn converged(record: &IterationRecord, config: &SolverConfig) -> bool {
    record.grad_norm <= config.grad_tol
        || (record.status == RecordStatus::Ok && record.realized_reduction.abs() <= config.step_tol)
}

/// Runs the configured method from `init_controls`.
pub fn solve<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    x0: &DVec,
    init_controls: &[DVec],
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    let start = match config.method {
        SolverMethod::Ilqr => Method::Ilqr,
        SolverMethod::Newton => Method::Newton,
        SolverMethod::Ddp => Method::Ddp,
        SolverMethod::Hybrid => return hybrid_solve(model, cost, x0, init_controls, config),
    };
    run(model, cost, x0, init_controls, config, start, false)
}

/// DDP until the accepted step stays below `hybrid_alpha_switch` for
/// `hybrid_patience` consecutive iterations (or DDP fails to descend), then
/// iLQR from the current trajectory. The switch is one-way.
pub fn hybrid_solve<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    x0: &DVec,
    init_controls: &[DVec],
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    // Every admissible step is below the threshold, so the switch is immediate.
    let start = if config.hybrid_alpha_switch > config.linesearch.alpha_init {
        Method::Ilqr
    } else {
        Method::Ddp
    };
    run(model, cost, x0, init_controls, config, start, true)
}

fn backward(
    method: Method,
    exp: &crate::expansion::ExpansionSequence,
    lambda_bar: &mut Option<MultiplierSequence>,
) -> Result<BackwardSolution> {
    match method {
        Method::Ilqr => backward_ilqr(exp),
        Method::Ddp => backward_ddp(exp),
        Method::Newton => {
            if lambda_bar.is_none() {
                // Multipliers of the modified QP at δx = 0: λ̄_t = −v_t.
                let seed = backward_ilqr(exp)?;
                let zero =
                    PerturbationPath::zeros(exp.horizon(), exp.state_dim(), exp.control_dim());
                *lambda_bar = Some(multipliers_from(&seed, &zero));
            }
            backward_newton(exp, lambda_bar.as_ref().expect("initialized above"))
        }
    }
}

fn run<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    x0: &DVec,
    init_controls: &[DVec],
    config: &SolverConfig,
    start: Method,
    hybrid: bool,
) -> Result<SolveResult> {
    let mut traj = rollout(model, cost, x0, init_controls)?;
    let mut active = start;
    let mut lambda_bar: Option<MultiplierSequence> = None;
    let mut records = Vec::new();
    let mut trials = Vec::new();
    let mut initial_backward = None;
    let mut last_backward = None;
    let mut cool_streak = 0usize;
    let mut reason = StopReason::MaxIters;
    let mut is_converged = false;

    for index in 0..config.max_iters {
        let mut record = IterationRecord {
            index,
            cost: traj.cost,
            predicted_reduction: f64::NAN,
            realized_reduction: 0.0,
            alpha: 0.0,
            min_quu: f64::NAN,
            grad_norm: f64::NAN,
            slope: f64::NAN,
            step_norm: f64::NAN,
            method_active: active,
            status: RecordStatus::Ok,
            trials: 0,
        };

        let exp = match expand_along(model, cost, &traj) {
            Ok(exp) => exp,
            Err(_) => {
                record.status = RecordStatus::Breakdown;
                records.push(record);
                reason = StopReason::Breakdown;
                break;
            }
        };
        let grad = cost_gradient_adjoint(&exp);
        record.grad_norm = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);

        let sol = match backward(active, &exp, &mut lambda_bar) {
            Ok(sol) => sol,
            Err(_) => {
                record.status = RecordStatus::Breakdown;
                records.push(record);
                if hybrid && active == Method::Ddp {
                    active = Method::Ilqr;
                    continue;
                }
                reason = StopReason::Breakdown;
                break;
            }
        };
        record.predicted_reduction = expected_reduction(&sol, &exp, 1.0);
        record.min_quu = sol
            .quu_min_eig
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let direction = linear_rollout(&exp, &sol, 1.0);
        record.slope = directional_derivative(&direction.du, &grad);
        record.step_norm = direction.du.iter().map(|d| d.amax()).fold(0.0, f64::max);
        if index == 0 {
            initial_backward = Some(sol.clone());
        }

        if record.grad_norm <= config.grad_tol {
            records.push(record);
            last_backward = Some(sol);
            is_converged = true;
            reason = StopReason::Converged;
            break;
        }

        let outcome = line_search(model, cost, &traj, &exp, &sol, &grad, &config.linesearch);
        let fallback = hybrid && active == Method::Ddp;
        match outcome {
            Err(Error::NonDescent { .. }) => {
                record.status = RecordStatus::NonDescent;
                records.push(record);
                last_backward = Some(sol);
                if fallback {
                    active = Method::Ilqr;
                    continue;
                }
                reason = StopReason::NonDescent;
                break;
            }
            Err(_) => {
                record.status = RecordStatus::Breakdown;
                records.push(record);
                last_backward = Some(sol);
                if fallback {
                    active = Method::Ilqr;
                    continue;
                }
                reason = StopReason::Breakdown;
                break;
            }
            Ok(out) => {
                record.trials = out.trials;
                trials.extend(out.trace.iter().map(|trial| (index, *trial)));
                if out.status == LineSearchStatus::FloorHit {
                    record.status = RecordStatus::FloorHit;
                    records.push(record);
                    last_backward = Some(sol);
                    if fallback {
                        active = Method::Ilqr;
                        continue;
                    }
                    reason = StopReason::FloorHit;
                    break;
                }
                record.alpha = out.alpha;
                record.realized_reduction = out.trajectory.cost - traj.cost;
                if active == Method::Newton {
                    // λ = λ^q, the multipliers of the full QP step.
                    let path = linear_rollout(&exp, &sol, 1.0);
                    lambda_bar = Some(multipliers_from(&sol, &path));
                }
                traj = out.trajectory;
                records.push(record);
                last_backward = Some(sol);

                if converged(&record, config) {
                    is_converged = true;
                    reason = StopReason::Converged;
                    break;
                }
                if hybrid && active == Method::Ddp {
                    if out.alpha < config.hybrid_alpha_switch {
                        cool_streak += 1;
                    } else {
                        cool_streak = 0;
                    }
                    if cool_streak >= config.hybrid_patience {
                        active = Method::Ilqr;
                    }
                }
            }
        }
    }

    Ok(SolveResult {
        trajectory: traj,
        records,
        converged: is_converged,
        reason,
        initial_backward,
        trials,
        multipliers: lambda_bar,
        last_backward,
    })
}
