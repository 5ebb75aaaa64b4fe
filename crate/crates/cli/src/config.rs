//! `key = value` experiment configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! `TRAJOPT_OUT`, then `--set` overrides in order, then the dedicated flags.
//! Unknown keys are rejected at every layer.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trajopt::{CartPole, CostModel, DVec, Pendulum, SolverConfig, SolverMethod, SystemModel};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Pendulum,
    Cartpole,
}

impl System {
    pub const ALL: [System; 2] = [System::Pendulum, System::Cartpole];

    pub fn as_str(self) -> &'static str {
        match self {
            System::Pendulum => "pendulum",
            System::Cartpole => "cartpole",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pendulum" => Ok(System::Pendulum),
            "cartpole" | "cart-pole" => Ok(System::Cartpole),
            other => Err(format!(
                "unknown system {other:?} (expected pendulum or cartpole)"
            )),
        }
    }
}

/// `all` or a comma-separated list of methods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodChoice(pub Vec<SolverMethod>);

impl MethodChoice {
    pub fn all() -> Self {
        MethodChoice(SolverMethod::ALL.to_vec())
    }
}

impl FromStr for MethodChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        let mut methods = Vec::new();
        for part in s.split(',') {
            let m = part
                .trim()
                .parse::<SolverMethod>()
                .map_err(|e| e.to_string())?;
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        Ok(MethodChoice(methods))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    Random,
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(Init::Zero),
            "random" => Ok(Init::Random),
            other => Err(format!("unknown init {other:?} (expected zero or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: System,
    /// `run` defaults to iLQR and `compare` to every method.
    pub method: Option<MethodChoice>,
    /// System default when unset.
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub q_diag: Option<Vec<f64>>,
    pub r_scale: f64,
    pub qt_scale: f64,
    pub x0: Option<Vec<f64>>,
    pub goal: Option<Vec<f64>>,
    pub init: Init,
    pub amplitude: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub physics: Physics,
    pub out: PathBuf,
}

/// Plant parameters; unset values keep the plant defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Physics {
    pub mass: Option<f64>,
    pub length: Option<f64>,
    pub damping: Option<f64>,
    pub cart_mass: Option<f64>,
    pub pole_mass: Option<f64>,
    pub pole_length: Option<f64>,
    pub gravity: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: System::Pendulum,
            method: None,
            horizon: None,
            dt: None,
            q_diag: None,
            r_scale: CostModel::DEFAULT_R_SCALE,
            qt_scale: CostModel::DEFAULT_QT_SCALE,
            x0: None,
            goal: None,
            init: Init::Random,
            amplitude: 1.0,
            seed: 0,
            solver: SolverConfig::default(),
            physics: Physics::default(),
            out: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "system",
    "method",
    "horizon",
    "dt",
    "q_diag",
    "r_scale",
    "qt_scale",
    "x0",
    "goal",
    "init",
    "amplitude",
    "seed",
    "max_iters",
    "grad_tol",
    "step_tol",
    "sigma",
    "rho",
    "alpha_min",
    "alpha_init",
    "hybrid_alpha_switch",
    "hybrid_patience",
    "mass",
    "length",
    "damping",
    "cart_mass",
    "pole_mass",
    "pole_length",
    "gravity",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let ls = &mut self.solver.linesearch;
        match key.trim() {
            "system" => self.system = parse(key, value)?,
            "method" => self.method = Some(parse(key, value)?),
            "horizon" => self.horizon = Some(parse(key, value)?),
            "dt" => self.dt = Some(parse(key, value)?),
            "q_diag" => self.q_diag = Some(parse_list(key, value)?),
            "r_scale" => self.r_scale = parse(key, value)?,
            "qt_scale" => self.qt_scale = parse(key, value)?,
            "x0" => self.x0 = Some(parse_list(key, value)?),
            "goal" => self.goal = Some(parse_list(key, value)?),
            "init" => self.init = parse(key, value)?,
            "amplitude" => self.amplitude = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max_iters" => self.solver.max_iters = parse(key, value)?,
            "grad_tol" => self.solver.grad_tol = parse(key, value)?,
            "step_tol" => self.solver.step_tol = parse(key, value)?,
            "sigma" => ls.sigma = parse(key, value)?,
            "rho" => ls.rho = parse(key, value)?,
            "alpha_min" => ls.alpha_min = parse(key, value)?,
            "alpha_init" => ls.alpha_init = parse(key, value)?,
            "hybrid_alpha_switch" => self.solver.hybrid_alpha_switch = parse(key, value)?,
            "hybrid_patience" => self.solver.hybrid_patience = parse(key, value)?,
            "mass" => self.physics.mass = Some(parse(key, value)?),
            "length" => self.physics.length = Some(parse(key, value)?),
            "damping" => self.physics.damping = Some(parse(key, value)?),
            "cart_mass" => self.physics.cart_mass = Some(parse(key, value)?),
            "pole_mass" => self.physics.pole_mass = Some(parse(key, value)?),
            "pole_length" => self.physics.pole_length = Some(parse(key, value)?),
            "gravity" => self.physics.gravity = Some(parse(key, value)?),
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(CliError::Config(format!(
                    "unknown key {other:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a `--set` style `key=value` string.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(key, value)
    }

    /// Applies a config file body: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.system {
            System::Pendulum => Pendulum::DEFAULT_HORIZON,
            System::Cartpole => CartPole::DEFAULT_HORIZON,
        })
    }

    pub fn model(&self) -> Result<SystemModel, CliError> {
        let p = &self.physics;
        let model = match self.system {
            System::Pendulum => {
                if p.cart_mass.or(p.pole_mass).or(p.pole_length).is_some() {
                    return Err(CliError::Config(
                        "cart_mass, pole_mass and pole_length apply to cartpole only".into(),
                    ));
                }
                let d = Pendulum::default();
                SystemModel::Pendulum(Pendulum::new(
                    p.mass.unwrap_or(d.mass),
                    p.length.unwrap_or(d.length),
                    p.gravity.unwrap_or(d.gravity),
                    p.damping.unwrap_or(d.damping),
                    self.dt.unwrap_or(d.dt),
                )?)
            }
            System::Cartpole => {
                if p.mass.or(p.length).or(p.damping).is_some() {
                    return Err(CliError::Config(
                        "mass, length and damping apply to pendulum only".into(),
                    ));
                }
                let d = CartPole::default();
                SystemModel::CartPole(CartPole::new(
                    p.cart_mass.unwrap_or(d.cart_mass),
                    p.pole_mass.unwrap_or(d.pole_mass),
                    p.pole_length.unwrap_or(d.pole_length),
                    p.gravity.unwrap_or(d.gravity),
                    self.dt.unwrap_or(d.dt),
                )?)
            }
        };
        Ok(model)
    }

    pub fn cost(&self) -> Result<CostModel, CliError> {
        let (q_default, goal_default): (&[f64], DVec) = match self.system {
            System::Pendulum => (&CostModel::PENDULUM_Q, Pendulum::goal()),
            System::Cartpole => (&CostModel::CARTPOLE_Q, CartPole::goal()),
        };
        let q = self.q_diag.as_deref().unwrap_or(q_default);
        let goal = self
            .goal
            .as_ref()
            .map_or(goal_default, |g| DVec::from_row_slice(g));
        if q.len() != goal.len() {
            return Err(CliError::Config(format!(
                "q_diag has {} entries but the state has {}",
                q.len(),
                goal.len()
            )));
        }
        Ok(CostModel::diagonal(
            q,
            1,
            self.r_scale,
            self.qt_scale,
            goal,
        )?)
    }

    pub fn x0(&self, state_dim: usize) -> Result<DVec, CliError> {
        match &self.x0 {
            None => Ok(DVec::zeros(state_dim)),
            Some(v) if v.len() == state_dim => Ok(DVec::from_row_slice(v)),
            Some(v) => Err(CliError::Config(format!(
                "x0 has {} entries but the state has {state_dim}",
                v.len()
            ))),
        }
    }

    /// Initial control guess; the same for every method given the seed.
    pub fn initial_controls(&self) -> Vec<DVec> {
        let horizon = self.horizon();
        match self.init {
            Init::Zero => vec![DVec::zeros(1); horizon],
            Init::Random => {
                let a = self.amplitude;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..horizon)
                    .map(|_| DVec::from_element(1, rng.random_range(-a..=a)))
                    .collect()
            }
        }
    }

    pub fn solver_config(&self, method: SolverMethod) -> SolverConfig {
        SolverConfig {
            method,
            ..self.solver
        }
    }

    /// Checks everything that can be checked without running a solve.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizon() == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(CliError::Config("amplitude must be finite and >= 0".into()));
        }
        let model = self.model()?;
        self.cost()?;
        self.x0(trajopt::Dynamics::state_dim(&model))?;
        self.solver.validate()?;
        Ok(())
    }
}
