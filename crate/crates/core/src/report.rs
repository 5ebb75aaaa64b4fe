//! CSV and JSON artifacts.
//!
//! CSV dialect: comma separated, header row, LF line endings, and floats in
//! scientific notation with 17 significant digits so that every `f64`
//! round-trips exactly.

use std::fmt::Write as _;

use serde::Serialize;

use crate::backward::BackwardSolution;
use crate::models::CostModel;
use crate::solver::{IterationRecord, SolveResult, SolverMethod};
use crate::trajectory::Trajectory;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

pub const ITERATIONS_HEADER: &str =
    "iteration,method_active,J,dJ_pred,dJ_realized,alpha,min_quu,grad_norm,slope,step_norm,status,trials";

pub fn iterations_csv(records: &[IterationRecord]) -> String {
    let mut out = String::new();
    out.push_str(ITERATIONS_HEADER);
    out.push('\n');
    for r in records {
        push_row(
            &mut out,
            &[
                r.index.to_string(),
                r.method_active.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.predicted_reduction),
                fmt_f64(r.realized_reduction),
                fmt_f64(r.alpha),
                fmt_f64(r.min_quu),
                fmt_f64(r.grad_norm),
                fmt_f64(r.slope),
                fmt_f64(r.step_norm),
                r.status.as_str().to_string(),
                r.trials.to_string(),
            ],
        );
    }
    out
}

pub fn linesearch_csv(result: &SolveResult) -> String {
    let mut out = String::from("iteration,alpha,J_candidate,ratio\n");
    for (iteration, trial) in &result.trials {
        push_row(
            &mut out,
            &[
                iteration.to_string(),
                fmt_f64(trial.alpha),
                fmt_f64(trial.cost),
                fmt_f64(trial.ratio),
            ],
        );
    }
    out
}

/// Per-step `Q_uu` spectrum and gain sizes: `t, min_eig_quu, k_norm, K_norm`.
pub fn gains_csv(sol: &BackwardSolution) -> String {
    let mut out = String::from("t,min_eig_quu,k_norm,K_norm\n");
    for t in 0..sol.horizon() {
        push_row(
            &mut out,
            &[
                t.to_string(),
                fmt_f64(sol.quu_min_eig[t]),
                fmt_f64(sol.k[t].norm()),
                fmt_f64(sol.gain[t].norm()),
            ],
        );
    }
    out
}

/// One row per timestep: `t, x0..x{n-1}, u0..u{m-1}, stage_cost`. The final
/// row holds `x_T`, empty controls and the terminal cost.
pub fn trajectory_csv(traj: &Trajectory, cost: &CostModel) -> String {
    let n = traj.states[0].len();
    let m = traj.controls.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.push("stage_cost".into());
    let mut out = String::new();
    push_row(&mut out, &header);
    let stage_costs = traj.stage_costs(cost);
    for (t, x) in traj.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        match traj.controls.get(t) {
            Some(u) => row.extend(u.iter().map(|v| fmt_f64(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.push(fmt_f64(stage_costs[t]));
        push_row(&mut out, &row);
    }
    out
}

pub const COMPARE_HEADER: &str = "method,iteration,J,alpha,min_quu,grad_norm,dJ_pred";

pub fn compare_rows(out: &mut String, method: SolverMethod, records: &[IterationRecord]) {
    for r in records {
        push_row(
            out,
            &[
                method.to_string(),
                r.index.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.alpha),
                fmt_f64(r.min_quu),
                fmt_f64(r.grad_norm),
                fmt_f64(r.predicted_reduction),
            ],
        );
    }
}

/// Cost predicted by the quadratic model against a known lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRow {
    pub iteration: usize,
    pub cost: f64,
    pub predicted_change: f64,
    /// `J + ΔJ`
    pub predicted_cost: f64,
    /// `J_pred ≥ J_min`
    pub feasible: bool,
}

pub fn prediction_row(
    iteration: usize,
    cost: f64,
    predicted_change: f64,
    j_min: f64,
) -> PredictionRow {
    let predicted_cost = cost + predicted_change;
    PredictionRow {
        iteration,
        cost,
        predicted_change,
        predicted_cost,
        feasible: predicted_cost >= j_min,
    }
}

pub const PREDICTION_HEADER: &str = "method,iteration,J,dJ_pred,J_pred,feasible";

pub fn prediction_rows(
    out: &mut String,
    method: SolverMethod,
    records: &[IterationRecord],
    j_min: f64,
) {
    for r in records {
        let row = prediction_row(r.index, r.cost, r.predicted_reduction, j_min);
        push_row(
            out,
            &[
                method.to_string(),
                row.iteration.to_string(),
                fmt_f64(row.cost),
                fmt_f64(row.predicted_change),
                fmt_f64(row.predicted_cost),
                row.feasible.to_string(),
            ],
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: SolverMethod,
    pub converged: bool,
    pub reason: crate::solver::StopReason,
    pub iterations: usize,
    pub final_cost: f64,
    pub wall_time: f64,
    pub seed: u64,
}

impl RunSummary {
    pub fn new(method: SolverMethod, result: &SolveResult, wall_time: f64, seed: u64) -> Self {
        Self {
            method,
            converged: result.converged,
            reason: result.reason,
            iterations: result.records.len(),
            final_cost: result.final_cost(),
            wall_time,
            seed,
        }
    }
}

/// Writes `values` as a single CSV column under `header`, indexed by `t`.
pub fn series_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("t,{header}\n");
    for (t, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{t},{}", fmt_f64(*v));
    }
    out
}
