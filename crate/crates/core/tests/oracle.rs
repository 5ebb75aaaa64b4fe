mod common;

use common::{benchmarks, lqr_instance, random_controls, random_vec, Benchmark};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajopt::linalg::scaled_error;
use trajopt::{
    assemble_qp, backward_ilqr, backward_newton, cost_gradient_adjoint, expand_along,
    linear_rollout, multipliers_from, rollout, solve_kkt, total_cost, verify_equivalence, DMat,
    DVec, DenseQp, Dynamics, ExpansionSequence, KktSolution, MultiplierSequence, PerturbationPath,
    QpVariant, Trajectory,
};

const HORIZONS: [usize; 4] = [1, 2, 5, 20];

fn nominal(bench: &Benchmark, horizon: usize, seed: u64) -> (Trajectory, ExpansionSequence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x0 = random_vec(&mut rng, bench.model.state_dim(), 1.0);
    let controls = random_controls(seed, horizon, bench.model.control_dim(), 1.0);
    let traj = rollout(&bench.model, &bench.cost, &x0, &controls).unwrap();
    let exp = expand_along(&bench.model, &bench.cost, &traj).unwrap();
    (traj, exp)
}

/// Residual, feasibility and (for the modified QP) descent certificate.
fn check_solve(qp: &DenseQp, kkt: &KktSolution, modified: bool) {
    let scale = 1.0 + qp.g.amax() + qp.b.amax();
    assert!(kkt.residual <= 1e-9 * scale, "residual {}", kkt.residual);
    assert!((&qp.a * &kkt.dz + &qp.b).amax() <= 1e-9);
    if modified && kkt.dz.amax() > 0.0 {
        let lin = kkt.dz.dot(&qp.g);
        let curv = kkt.dz.dot(&(&qp.h * &kkt.dz));
        assert!(lin < 0.0, "not a descent direction: {lin}");
        assert!(
            (lin + curv).abs() <= 1e-9 * (1.0 + curv.abs()),
            "{lin} vs {curv}"
        );
    }
}

#[test]
fn ilqr_matches_modified_qp() {
    for bench in benchmarks() {
        for &horizon in &HORIZONS {
            for seed in 0..3 {
                let (_, exp) = nominal(&bench, horizon, seed);
                let sol = backward_ilqr(&exp).unwrap();
                let report = verify_equivalence(&sol, &exp, None, 1e-8).unwrap();
                assert!(
                    report.pass,
                    "{} T={horizon} seed={seed}: {report:?}",
                    bench.name
                );
                let qp = assemble_qp(&exp, QpVariant::Modified).unwrap();
                check_solve(&qp, &solve_kkt(&qp).unwrap(), true);
            }
        }
    }
}

#[test]
fn newton_matches_newton_qp() {
    for bench in benchmarks() {
        for &horizon in &HORIZONS {
            for seed in 0..3 {
                let (_, exp) = nominal(&bench, horizon, seed);
                let seeded = multipliers_from(
                    &backward_ilqr(&exp).unwrap(),
                    &PerturbationPath::zeros(horizon, exp.state_dim(), exp.control_dim()),
                );
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let random = MultiplierSequence {
                    lambda: (0..=horizon)
                        .map(|_| random_vec(&mut rng, exp.state_dim(), 10.0))
                        .collect(),
                };
                for lambda in [seeded, random] {
                    let sol = backward_newton(&exp, &lambda).unwrap();
                    let report = verify_equivalence(&sol, &exp, Some(&lambda), 1e-8).unwrap();
                    assert!(
                        report.pass,
                        "{} T={horizon} seed={seed}: {report:?}",
                        bench.name
                    );
                    let qp = assemble_qp(&exp, QpVariant::Newton(&lambda)).unwrap();
                    check_solve(&qp, &solve_kkt(&qp).unwrap(), false);
                }
            }
        }
    }
}

#[test]
fn wrong_multipliers_are_detected() {
    let bench = &benchmarks()[1];
    let (_, exp) = nominal(bench, 5, 7);
    let lambda = MultiplierSequence {
        lambda: vec![DVec::from_element(4, 50.0); 6],
    };
    let sol = backward_newton(&exp, &lambda).unwrap();
    let other = MultiplierSequence {
        lambda: vec![DVec::from_element(4, -50.0); 6],
    };
    let report = verify_equivalence(&sol, &exp, Some(&other), 1e-8).unwrap();
    assert!(!report.pass);
    assert!(report.worst_t < 5);
}

#[test]
fn pendulum_assembly_matches_hand_stacking() {
    let bench = &benchmarks()[0];
    let (_, exp) = nominal(bench, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lambda = MultiplierSequence {
        lambda: (0..4).map(|_| random_vec(&mut rng, 2, 5.0)).collect(),
    };
    let qp = assemble_qp(&exp, QpVariant::Newton(&lambda)).unwrap();

    // z = (x1[2], x2[2], x3[2], u0, u1, u2)
    let xi = |t: usize| 2 * (t - 1);
    let ui = |t: usize| 6 + t;
    let mut h = DMat::zeros(9, 9);
    let mut g = DVec::zeros(9);
    let mut a = DMat::zeros(6, 9);
    for t in 0..3 {
        let s = &exp.stages[t];
        h[(ui(t), ui(t))] = s.r[(0, 0)];
        g[ui(t)] = s.control_gradient[0];
        if t > 0 {
            for i in 0..2 {
                g[xi(t) + i] = s.l_x[i];
                for j in 0..2 {
                    let mut hess = s.l_xx[(i, j)];
                    let mut cross = 0.0;
                    for c in 0..2 {
                        // The dynamics constraint enters the Lagrangian as −λ̄'f.
                        hess -= lambda.lambda[t + 1][c] * s.dynamics.f_xx[c][(i, j)];
                        if j == 0 {
                            cross -= lambda.lambda[t + 1][c] * s.dynamics.f_xu[c][(i, 0)];
                        }
                    }
                    h[(xi(t) + i, xi(t) + j)] = hess;
                    if j == 0 {
                        h[(xi(t) + i, ui(t))] = cross;
                        h[(ui(t), xi(t) + i)] = cross;
                    }
                }
            }
        }
        for i in 0..2 {
            a[(2 * t + i, xi(t + 1) + i)] = 1.0;
            a[(2 * t + i, ui(t))] = -s.dynamics.f_u[(i, 0)];
            if t > 0 {
                for j in 0..2 {
                    a[(2 * t + i, xi(t) + j)] = -s.dynamics.f_x[(i, j)];
                }
            }
        }
    }
    for i in 0..2 {
        g[xi(3) + i] = exp.terminal_x[i];
        for j in 0..2 {
            h[(xi(3) + i, xi(3) + j)] = exp.terminal_xx[(i, j)];
        }
    }
    assert!(
        (&qp.h - &h).amax() <= 1e-12 * (1.0 + h.amax()),
        "{}\n{}",
        qp.h,
        h
    );
    assert_eq!(qp.g, g);
    assert_eq!(qp.a, a);
    assert_eq!(qp.b, DVec::zeros(6));
}

/// Textbook finite-horizon Riccati recursion on `(A, B, Q, R, Q_T)`.
fn riccati_gains(a: &DMat, b: &DMat, q: &DMat, r: &DMat, qt: &DMat, horizon: usize) -> Vec<DMat> {
    let mut p = qt.clone();
    let mut gains = vec![DMat::zeros(0, 0); horizon];
    for t in (0..horizon).rev() {
        let k = (r + b.transpose() * &p * b).try_inverse().unwrap() * b.transpose() * &p * a;
        p = q + a.transpose() * &p * (a - b * &k);
        gains[t] = k;
    }
    gains
}

#[test]
fn kkt_reproduces_riccati_on_lqr() {
    let (sys, cost, x0) = lqr_instance();
    let horizon = 20;
    let zero = vec![DVec::zeros(1); horizon];
    let traj = rollout(&sys, &cost, &x0, &zero).unwrap();
    let exp = expand_along(&sys, &cost, &traj).unwrap();
    let qp = assemble_qp(&exp, QpVariant::Modified).unwrap();
    let kkt = solve_kkt(&qp).unwrap();
    let path = kkt.path();

    let gains = riccati_gains(&sys.a, &sys.b, &cost.q, &cost.r, &cost.q_terminal, horizon);
    let mut x = x0.clone();
    let mut controls = Vec::new();
    for t in 0..horizon {
        let u = -&gains[t] * &x;
        assert!((&path.du[t] - &u).amax() <= 1e-10, "t={t}");
        x = &sys.a * &x + &sys.b * &u;
        assert!((&(&traj.states[t + 1] + &path.dx[t + 1]) - &x).amax() <= 1e-10);
        controls.push(u);
    }

    // The Riccati optimum is stationary for the rolled-out cost.
    let optimum = rollout(&sys, &cost, &x0, &controls).unwrap();
    let grad = cost_gradient_adjoint(&expand_along(&sys, &cost, &optimum).unwrap());
    assert!(grad.iter().map(|g| g.amax()).fold(0.0, f64::max) <= 1e-9);
}

#[test]
fn kkt_multiplier_sign_matches_value_gradient() {
    // On the LQR instance the KKT multipliers are λ_t = −v_t − V_tδx_t.
    let (sys, cost, x0) = lqr_instance();
    let traj = rollout(&sys, &cost, &x0, &vec![DVec::zeros(1); 10]).unwrap();
    let exp = expand_along(&sys, &cost, &traj).unwrap();
    let kkt = solve_kkt(&assemble_qp(&exp, QpVariant::Modified).unwrap()).unwrap();
    let sol = backward_ilqr(&exp).unwrap();
    let path = linear_rollout(&exp, &sol, 1.0);
    for (t, mu) in kkt.costates().iter().enumerate() {
        let expected = -&sol.v[t + 1] - &sol.value_hessian[t + 1] * &path.dx[t + 1];
        assert!((mu - &expected).amax() <= 1e-10 * (1.0 + expected.amax()));
    }
}

fn fd_gradient(bench: &Benchmark, x0: &DVec, controls: &[DVec]) -> Vec<DVec> {
    let j = |u: &[DVec]| {
        let traj = rollout(&bench.model, &bench.cost, x0, u).unwrap();
        total_cost(&bench.cost, &traj.states, &traj.controls)
    };
    let mut work = controls.to_vec();
    let mut grad = Vec::with_capacity(controls.len());
    for t in 0..controls.len() {
        let mut g = DVec::zeros(controls[t].len());
        for i in 0..g.len() {
            let base = controls[t][i];
            let h = 1e-5 * (1.0 + base.abs());
            work[t][i] = base + h;
            let plus = j(&work);
            work[t][i] = base - h;
            let minus = j(&work);
            work[t][i] = base;
            g[i] = (plus - minus) / (2.0 * h);
        }
        grad.push(g);
    }
    grad
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    for bench in benchmarks() {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = random_vec(&mut rng, bench.model.state_dim(), 1.0);
            let controls = random_controls(seed, 30, bench.model.control_dim(), 1.0);
            let traj = rollout(&bench.model, &bench.cost, &x0, &controls).unwrap();
            let grad =
                cost_gradient_adjoint(&expand_along(&bench.model, &bench.cost, &traj).unwrap());
            let fd = fd_gradient(&bench, &x0, &controls);
            for (a, n) in grad.iter().zip(&fd) {
                for (ai, ni) in a.iter().zip(n.iter()) {
                    worst = worst.max((ai - ni).abs() / (1.0 + ni.abs()));
                }
            }
        }
        assert!(worst <= 1e-5, "{}: {worst}", bench.name);
    }
}

/// Costates `ν_t` of the rolled-out cost, `t = 0..=T`.
fn adjoint_costates(exp: &ExpansionSequence) -> Vec<DVec> {
    let mut nu = vec![DVec::zeros(0); exp.horizon() + 1];
    nu[exp.horizon()] = exp.terminal_x.clone();
    for t in (0..exp.horizon()).rev() {
        let s = &exp.stages[t];
        nu[t] = &s.l_x + s.dynamics.f_x.tr_mul(&nu[t + 1]);
    }
    nu
}

#[test]
fn newton_step_solves_the_reduced_newton_system() {
    for bench in benchmarks() {
        let horizon = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x0 = random_vec(&mut rng, bench.model.state_dim(), 1.0);
        let controls = random_controls(21, horizon, bench.model.control_dim(), 1.0);
        let grad_at = |u: &[DVec]| {
            let traj = rollout(&bench.model, &bench.cost, &x0, u).unwrap();
            let g = cost_gradient_adjoint(&expand_along(&bench.model, &bench.cost, &traj).unwrap());
            DVec::from_iterator(horizon, g.iter().map(|v| v[0]))
        };

        // Reduced Hessian by central differences of the exact gradient.
        let mut hess = DMat::zeros(horizon, horizon);
        let mut work = controls.clone();
        for j in 0..horizon {
            let h = 1e-5;
            work[j][0] = controls[j][0] + h;
            let plus = grad_at(&work);
            work[j][0] = controls[j][0] - h;
            let minus = grad_at(&work);
            work[j][0] = controls[j][0];
            hess.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let reduced_step = -hess.lu().solve(&grad_at(&controls)).unwrap();

        let traj = rollout(&bench.model, &bench.cost, &x0, &controls).unwrap();
        let exp = expand_along(&bench.model, &bench.cost, &traj).unwrap();
        let lambda = MultiplierSequence {
            lambda: adjoint_costates(&exp).into_iter().map(|nu| -nu).collect(),
        };
        let sol = backward_newton(&exp, &lambda).unwrap();
        let du = linear_rollout(&exp, &sol, 1.0).du;
        let step = DVec::from_iterator(horizon, du.iter().map(|v| v[0]));
        let err = scaled_error(&step, &reduced_step);
        assert!(err <= 1e-6, "{}: {err}\n{step}\n{reduced_step}", bench.name);
    }
}
