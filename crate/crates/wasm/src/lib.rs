//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON string so
//! the page needs no generated glue beyond `wasm-bindgen`'s. The functions
//! without the `js_` prefix hold the logic and run natively in tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trajopt::{
    CartPole, CostModel, DVec, Dynamics, Pendulum, RecordStatus, SolveResult, SolverConfig,
    SolverMethod, SystemModel,
};
use wasm_bindgen::prelude::*;

/// Upper bound on iterations a page can request.
pub const MAX_ITERS_CAP: usize = 500;

struct Problem {
    model: SystemModel,
    cost: CostModel,
    horizon: usize,
}

fn problem(system: &str) -> Result<Problem, String> {
    match system {
        "pendulum" => Ok(Problem {
            model: SystemModel::Pendulum(Pendulum::default()),
            cost: CostModel::pendulum_default(),
            horizon: Pendulum::DEFAULT_HORIZON,
        }),
        "cartpole" => Ok(Problem {
            model: SystemModel::CartPole(CartPole::default()),
            cost: CostModel::cartpole_default(),
            horizon: CartPole::DEFAULT_HORIZON,
        }),
        other => Err(format!("unknown system {other:?}")),
    }
}

/// Same generator and draw order as the command-line runner.
fn initial_controls(horizon: usize, seed: u64, amplitude: f64) -> Result<Vec<DVec>, String> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(format!(
            "amplitude must be finite and >= 0, got {amplitude}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..horizon)
        .map(|_| DVec::from_element(1, rng.random_range(-amplitude..=amplitude)))
        .collect())
}

fn run(
    system: &str,
    method: &str,
    seed: u64,
    amplitude: f64,
    max_iters: usize,
) -> Result<(Problem, SolveResult), String> {
    let p = problem(system)?;
    let method: SolverMethod = method.parse().map_err(|e: trajopt::Error| e.to_string())?;
    let config = SolverConfig {
        max_iters: max_iters.clamp(1, MAX_ITERS_CAP),
        ..SolverConfig::with_method(method)
    };
    let init = initial_controls(p.horizon, seed, amplitude)?;
    let x0 = DVec::zeros(p.model.state_dim());
    let result =
        trajopt::solve(&p.model, &p.cost, &x0, &init, &config).map_err(|e| e.to_string())?;
    Ok((p, result))
}

/// Non-finite values become `null` in JSON.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct CurvePoint {
    iteration: usize,
    cost: f64,
    alpha: f64,
    predicted: Option<f64>,
    min_quu: Option<f64>,
    grad_norm: Option<f64>,
    method: &'static str,
    status: &'static str,
}

#[derive(Serialize)]
struct Curves {
    method: String,
    converged: bool,
    reason: trajopt::StopReason,
    final_cost: f64,
    points: Vec<CurvePoint>,
}

/// Cost, accepted step length and diagnostics per iteration.
pub fn solve_curves(
    system: &str,
    method: &str,
    seed: u64,
    amplitude: f64,
    max_iters: usize,
) -> Result<String, String> {
    let (_, result) = run(system, method, seed, amplitude, max_iters)?;
    let points = result
        .records
        .iter()
        .map(|r| CurvePoint {
            iteration: r.index,
            cost: r.cost,
            alpha: r.alpha,
            predicted: finite(r.predicted_reduction),
            min_quu: finite(r.min_quu),
            grad_norm: finite(r.grad_norm),
            method: r.method_active.as_str(),
            status: r.status.as_str(),
        })
        .collect();
    let curves = Curves {
        method: method.to_string(),
        converged: result.converged,
        reason: result.reason,
        final_cost: result.final_cost(),
        points,
    };
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct QuuProfile {
    ilqr: Vec<f64>,
    ddp: Vec<f64>,
    /// `min_eig(R)`, the floor every iLQR entry respects.
    r_min: f64,
}

/// First-iteration `min eig(Q_uu,t)` for iLQR and DDP from the same guess.
pub fn quu_profile(system: &str, seed: u64, amplitude: f64) -> Result<String, String> {
    let p = problem(system)?;
    let init = initial_controls(p.horizon, seed, amplitude)?;
    let x0 = DVec::zeros(p.model.state_dim());
    let traj = trajopt::rollout(&p.model, &p.cost, &x0, &init).map_err(|e| e.to_string())?;
    let exp = trajopt::expand_along(&p.model, &p.cost, &traj).map_err(|e| e.to_string())?;
    let ilqr = trajopt::backward_ilqr(&exp).map_err(|e| e.to_string())?;
    let ddp = trajopt::backward_ddp(&exp).map_err(|e| e.to_string())?;
    let profile = QuuProfile {
        ilqr: ilqr.quu_min_eig,
        ddp: ddp.quu_min_eig,
        r_min: trajopt::linalg::min_eigenvalue(&p.cost.r),
    };
    serde_json::to_string(&profile).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TrajectoryJson {
    dt: f64,
    states: Vec<Vec<f64>>,
    controls: Vec<f64>,
    cost: f64,
    failed: bool,
}

/// Final state and control sequences of one solve.
pub fn trajectory(
    system: &str,
    method: &str,
    seed: u64,
    amplitude: f64,
    max_iters: usize,
) -> Result<String, String> {
    let (p, result) = run(system, method, seed, amplitude, max_iters)?;
    let dt = match &p.model {
        SystemModel::Pendulum(m) => m.dt,
        SystemModel::CartPole(m) => m.dt,
        SystemModel::Linear(_) => 1.0,
    };
    let failed = result.records.iter().any(|r| {
        matches!(
            r.status,
            RecordStatus::NonDescent | RecordStatus::FloorHit | RecordStatus::Breakdown
        )
    });
    let out = TrajectoryJson {
        dt,
        states: result
            .trajectory
            .states
            .iter()
            .map(|x| x.iter().copied().collect())
            .collect(),
        controls: result.trajectory.controls.iter().map(|u| u[0]).collect(),
        cost: result.final_cost(),
        failed,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = solveCurves)]
pub fn js_solve_curves(
    system: &str,
    method: &str,
    seed: u32,
    amplitude: f64,
    max_iters: u32,
) -> Result<String, String> {
    solve_curves(
        system,
        method,
        u64::from(seed),
        amplitude,
        max_iters as usize,
    )
}

#[wasm_bindgen(js_name = quuProfile)]
pub fn js_quu_profile(system: &str, seed: u32, amplitude: f64) -> Result<String, String> {
    quu_profile(system, u64::from(seed), amplitude)
}

#[wasm_bindgen(js_name = trajectory)]
pub fn js_trajectory(
    system: &str,
    method: &str,
    seed: u32,
    amplitude: f64,
    max_iters: u32,
) -> Result<String, String> {
    trajectory(
        system,
        method,
        u64::from(seed),
        amplitude,
        max_iters as usize,
    )
}
