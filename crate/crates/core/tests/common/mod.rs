#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajopt::{CartPole, CostModel, DMat, DVec, Dynamics, LinearSystem, Pendulum, SystemModel};

pub struct Benchmark {
    pub name: &'static str,
    pub model: SystemModel,
    pub cost: CostModel,
    pub horizon: usize,
}

impl Benchmark {
    pub fn x0(&self) -> DVec {
        DVec::zeros(self.model.state_dim())
    }
}

pub fn pendulum() -> Benchmark {
    Benchmark {
        name: "pendulum",
        model: SystemModel::Pendulum(Pendulum::default()),
        cost: CostModel::pendulum_default(),
        horizon: Pendulum::DEFAULT_HORIZON,
    }
}

pub fn cartpole() -> Benchmark {
    Benchmark {
        name: "cartpole",
        model: SystemModel::CartPole(CartPole::default()),
        cost: CostModel::cartpole_default(),
        horizon: CartPole::DEFAULT_HORIZON,
    }
}

pub fn benchmarks() -> [Benchmark; 2] {
    [pendulum(), cartpole()]
}

/// Controls drawn uniformly from `[−amplitude, amplitude]`.
pub fn random_controls(seed: u64, horizon: usize, m: usize, amplitude: f64) -> Vec<DVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon)
        .map(|_| DVec::from_fn(m, |_, _| rng.random_range(-amplitude..=amplitude)))
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, amplitude: f64) -> DVec {
    DVec::from_fn(len, |_, _| rng.random_range(-amplitude..=amplitude))
}

/// Double integrator with a quadratic cost that pulls it to the origin.
pub fn lqr_instance() -> (LinearSystem, CostModel, DVec) {
    let sys = LinearSystem::double_integrator(0.1);
    let cost = CostModel::new(
        DMat::from_diagonal(&DVec::from_vec(vec![1.0, 0.5])),
        DMat::from_element(1, 1, 0.1),
        DMat::from_diagonal(&DVec::from_vec(vec![10.0, 5.0])),
        DVec::zeros(2),
    )
    .unwrap();
    (sys, cost, DVec::from_vec(vec![1.0, -0.5]))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}
