use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use trajopt::report::{
    compare_rows, gains_csv, iterations_csv, linesearch_csv, prediction_rows, trajectory_csv,
    RunSummary, COMPARE_HEADER, PREDICTION_HEADER,
};
use trajopt::{
    backward_ilqr, backward_newton, check_derivatives, expand_along, multipliers_from, rollout,
    solve, verify_equivalence, DerivativeReport, Dynamics, EquivalenceReport, JacobianFault,
    PerturbationPath, SolveResult, SolverMethod,
};

use crate::config::{ExperimentConfig, MethodChoice, System};
use crate::CliError;

/// Lower bound of the purely quadratic costs.
const J_MIN: f64 = 0.0;
const VERIFY_HORIZONS: [usize; 4] = [1, 2, 5, 20];
const DERIVATIVE_SAMPLES: usize = 100;
const DERIVATIVE_TOL: f64 = 1e-6;
const EQUIVALENCE_TOL: f64 = 1e-8;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

struct Outcome {
    method: SolverMethod,
    result: SolveResult,
    wall_time: f64,
}

/// Solves every method concurrently from the same initial guess.
fn solve_all(
    config: &ExperimentConfig,
    methods: &[SolverMethod],
) -> Result<Vec<Outcome>, CliError> {
    let model = config.model()?;
    let cost = config.cost()?;
    let x0 = config.x0(model.state_dim())?;
    let init = config.initial_controls();
    std::thread::scope(|scope| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&method| {
                let (model, cost, x0, init) = (&model, &cost, &x0, &init);
                scope.spawn(move || {
                    let start = Instant::now();
                    let result = solve(model, cost, x0, init, &config.solver_config(method))?;
                    Ok(Outcome {
                        method,
                        result,
                        wall_time: start.elapsed().as_secs_f64(),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    })
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    system: System,
    #[serde(flatten)]
    summary: RunSummary,
    init: &'a str,
    amplitude: f64,
    horizon: usize,
}

fn init_name(config: &ExperimentConfig) -> &'static str {
    match config.init {
        crate::config::Init::Zero => "zero",
        crate::config::Init::Random => "random",
    }
}

fn write_run(dir: &Path, config: &ExperimentConfig, outcome: &Outcome) -> Result<(), CliError> {
    create_dir(dir)?;
    let cost = config.cost()?;
    let result = &outcome.result;
    write(
        &dir.join("iterations.csv"),
        &iterations_csv(&result.records),
    )?;
    write(&dir.join("linesearch.csv"), &linesearch_csv(result))?;
    write(
        &dir.join("trajectory.csv"),
        &trajectory_csv(&result.trajectory, &cost),
    )?;
    let profile = result
        .initial_backward
        .as_ref()
        .map_or_else(gains_csv_header, gains_csv);
    write(&dir.join("quu_profile.csv"), &profile)?;
    let summary = SummaryFile {
        system: config.system,
        summary: RunSummary::new(outcome.method, result, outcome.wall_time, config.seed),
        init: init_name(config),
        amplitude: config.amplitude,
        horizon: config.horizon(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&dir.join("summary.json"), &(json + "\n"))
}

fn gains_csv_header() -> String {
    "t,min_eig_quu,k_norm,K_norm\n".to_string()
}

fn print_outcome(config: &ExperimentConfig, outcome: &Outcome) {
    let r = &outcome.result;
    println!(
        "{} {}: {:?} after {} iterations, J = {:.6}, grad = {:.3e}, {:.3}s",
        config.system,
        outcome.method,
        r.reason,
        r.records.len(),
        r.final_cost(),
        r.records.last().map_or(f64::NAN, |x| x.grad_norm),
        outcome.wall_time
    );
}

/// One directory per method when several run, otherwise the output root.
pub fn cmd_run(config: &ExperimentConfig) -> Result<(), CliError> {
    let methods = config
        .method
        .clone()
        .unwrap_or(MethodChoice(vec![SolverMethod::Ilqr]))
        .0;
    let outcomes = solve_all(config, &methods)?;
    for outcome in &outcomes {
        let dir = if methods.len() > 1 {
            config.out.join(outcome.method.as_str())
        } else {
            config.out.clone()
        };
        write_run(&dir, config, outcome)?;
        print_outcome(config, outcome);
    }
    Ok(())
}

/// Writes `compare.csv` and `prediction_table.csv` under the output root.
pub fn cmd_compare(config: &ExperimentConfig) -> Result<(), CliError> {
    let methods = config.method.clone().unwrap_or_else(MethodChoice::all).0;
    let outcomes = solve_all(config, &methods)?;
    let mut compare = format!("{COMPARE_HEADER}\n");
    let mut predictions = format!("{PREDICTION_HEADER}\n");
    for outcome in &outcomes {
        compare_rows(&mut compare, outcome.method, &outcome.result.records);
        prediction_rows(
            &mut predictions,
            outcome.method,
            &outcome.result.records,
            J_MIN,
        );
        print_outcome(config, outcome);
    }
    create_dir(&config.out)?;
    write(&config.out.join("compare.csv"), &compare)?;
    write(&config.out.join("prediction_table.csv"), &predictions)
}

#[derive(Serialize)]
struct SystemReport {
    system: System,
    derivatives: DerivativeReport,
    equivalence: Vec<EquivalenceReport>,
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    systems: Vec<SystemReport>,
}

fn verify_system(
    config: &ExperimentConfig,
    system: System,
    fault: bool,
) -> Result<SystemReport, CliError> {
    let mut c = config.clone();
    if system != config.system {
        c = ExperimentConfig {
            system,
            seed: config.seed,
            amplitude: config.amplitude,
            ..ExperimentConfig::default()
        };
    }
    let model = c.model()?;
    let cost = c.cost()?;
    let derivatives = if fault {
        let faulty = JacobianFault {
            inner: model.clone(),
            row: 0,
            col: 1,
            delta: 1e-3,
        };
        check_derivatives(&faulty, &cost, DERIVATIVE_SAMPLES, DERIVATIVE_TOL, c.seed)?
    } else {
        check_derivatives(&model, &cost, DERIVATIVE_SAMPLES, DERIVATIVE_TOL, c.seed)?
    };

    let x0 = c.x0(model.state_dim())?;
    let mut equivalence = Vec::new();
    for horizon in VERIFY_HORIZONS {
        c.horizon = Some(horizon);
        let mut guess = c.clone();
        guess.init = crate::config::Init::Random;
        let controls = guess.initial_controls();
        let traj = rollout(&model, &cost, &x0, &controls)?;
        let exp = expand_along(&model, &cost, &traj)?;
        let ilqr = backward_ilqr(&exp)?;
        equivalence.push(verify_equivalence(&ilqr, &exp, None, EQUIVALENCE_TOL)?);
        let lambda = multipliers_from(
            &ilqr,
            &PerturbationPath::zeros(horizon, model.state_dim(), model.control_dim()),
        );
        let newton = backward_newton(&exp, &lambda)?;
        equivalence.push(verify_equivalence(
            &newton,
            &exp,
            Some(&lambda),
            EQUIVALENCE_TOL,
        )?);
    }
    Ok(SystemReport {
        system,
        derivatives,
        equivalence,
    })
}

/// Exit status 0 iff every derivative check and equivalence check passes.
pub fn cmd_verify(config: &ExperimentConfig, fault: bool) -> Result<(), CliError> {
    let mut systems = Vec::new();
    let mut failures = Vec::new();
    for system in System::ALL {
        let report = verify_system(config, system, fault)?;
        let d = &report.derivatives;
        match &d.failure {
            None => println!(
                "PASS {system} derivatives ({} samples, tol {:.0e})",
                d.samples, d.tol
            ),
            Some(f) => {
                println!(
                    "FAIL {system} derivatives: {} off by {:.3e} at sample {}",
                    f.derivative, f.error, f.sample
                );
                failures.push(serde_json::to_string_pretty(d).expect("report serializes"));
            }
        }
        for e in &report.equivalence {
            let tag = if e.pass { "PASS" } else { "FAIL" };
            println!(
                "{tag} {system} {} T={}: max rel err {:.3e}",
                e.variant, e.horizon, e.max_rel_err
            );
            if !e.pass {
                failures.push(serde_json::to_string_pretty(e).expect("report serializes"));
            }
        }
        systems.push(report);
    }
    let report = VerifyReport {
        pass: failures.is_empty(),
        systems,
    };
    create_dir(&config.out)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&config.out.join("verify.json"), &(json + "\n"))?;
    if failures.is_empty() {
        Ok(())
    } else {
        for f in &failures {
            eprintln!("{f}");
        }
        Err(CliError::VerifyFailed(format!(
            "{} check(s) failed",
            failures.len()
        )))
    }
}
