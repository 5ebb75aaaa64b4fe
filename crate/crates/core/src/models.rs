//! Benchmark plants, stage costs, and their analytic derivatives.
//!
//! Every plant is discretized with explicit Euler, `x⁺ = x + dt·F(x, u)`,
//! with `u` held over the step. The continuous plants are control-affine,
//! and explicit Euler keeps the discrete map control-affine too, so the
//! control Hessian `f_uu` vanishes identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{is_symmetric, min_eigenvalue};
use crate::{DMat, DVec, Error, Result};

/// Jacobians and Hessian tensors of the discrete map at one point.
///
/// `f_xx[i]` and `f_xu[i]` are the second derivatives of output component
/// `i`. `f_uu` is not stored: it is zero for control-affine maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub f_x: DMat,
    pub f_u: DMat,
    pub f_xx: Vec<DMat>,
    pub f_xu: Vec<DMat>,
}

impl DerivativeBundle {
    pub fn zero_hessians(f_x: DMat, f_u: DMat) -> Self {
        let (n, m) = (f_x.nrows(), f_u.ncols());
        Self {
            f_x,
            f_u,
            f_xx: vec![DMat::zeros(n, n); n],
            f_xu: vec![DMat::zeros(n, m); n],
        }
    }

    /// Contracts the Hessian tensors with `w`: `(Σ_i w_i f_xx[i], Σ_i w_i f_xu[i])`.
    pub fn contract(&self, w: &DVec) -> (DMat, DMat) {
        let n = self.f_x.nrows();
        let m = self.f_u.ncols();
        let mut xx = DMat::zeros(n, n);
        let mut xu = DMat::zeros(n, m);
        for (i, wi) in w.iter().enumerate() {
            if *wi != 0.0 {
                xx += &self.f_xx[i] * *wi;
                xu += &self.f_xu[i] * *wi;
            }
        }
        (xx, xu)
    }

    pub fn is_finite(&self) -> bool {
        let fin = |m: &DMat| m.iter().all(|v| v.is_finite());
        fin(&self.f_x) && fin(&self.f_u) && self.f_xx.iter().all(fin) && self.f_xu.iter().all(fin)
    }
}

/// A discrete-time, control-affine plant.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Next state. Inputs are assumed to have matching dimensions.
    fn step(&self, x: &DVec, u: &DVec) -> DVec;
    /// Analytic derivatives of [`Dynamics::step`].
    fn derivatives(&self, x: &DVec, u: &DVec) -> DerivativeBundle;
}

impl<M: Dynamics + ?Sized> Dynamics for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        (**self).step(x, u)
    }
    fn derivatives(&self, x: &DVec, u: &DVec) -> DerivativeBundle {
        (**self).derivatives(x, u)
    }
}

fn check_inputs<M: Dynamics + ?Sized>(model: &M, x: &DVec, u: &DVec) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::Dimension {
            what: "state",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != model.control_dim() {
        return Err(Error::Dimension {
            what: "control",
            expected: model.control_dim(),
            got: u.len(),
        });
    }
    if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "state or control",
        });
    }
    Ok(())
}

/// Checked single step of the discrete dynamics.
pub fn dynamics_step<M: Dynamics + ?Sized>(model: &M, x: &DVec, u: &DVec) -> Result<DVec> {
    check_inputs(model, x, u)?;
    Ok(model.step(x, u))
}

/// Checked analytic derivatives of the discrete dynamics.
pub fn dynamics_derivatives<M: Dynamics + ?Sized>(
    model: &M,
    x: &DVec,
    u: &DVec,
) -> Result<DerivativeBundle> {
    check_inputs(model, x, u)?;
    Ok(model.derivatives(x, u))
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be > 0, got {value}"
        )))
    }
}

/// Damped pendulum, state `[θ, θ̇]`, torque input. `θ = 0` hangs down.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub dt: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: 0.1,
            dt: 0.05,
        }
    }
}

impl Pendulum {
    pub const DEFAULT_HORIZON: usize = 100;

    pub fn new(mass: f64, length: f64, gravity: f64, damping: f64, dt: f64) -> Result<Self> {
        positive("mass", mass)?;
        positive("length", length)?;
        positive("dt", dt)?;
        if !gravity.is_finite() || !damping.is_finite() || damping < 0.0 {
            return Err(Error::InvalidParameter(
                "gravity must be finite and damping >= 0".into(),
            ));
        }
        Ok(Self {
            mass,
            length,
            gravity,
            damping,
            dt,
        })
    }

    pub fn goal() -> DVec {
        DVec::from_vec(vec![std::f64::consts::PI, 0.0])
    }

    fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        let (theta, omega) = (x[0], x[1]);
        let accel =
            (u[0] - self.damping * omega - self.mass * self.gravity * self.length * theta.sin())
                / self.inertia();
        DVec::from_vec(vec![theta + self.dt * omega, omega + self.dt * accel])
    }

    fn derivatives(&self, x: &DVec, _u: &DVec) -> DerivativeBundle {
        let theta = x[0];
        let dt = self.dt;
        let g_over_l = self.gravity / self.length;
        let f_x = DMat::from_row_slice(
            2,
            2,
            &[
                1.0,
                dt,
                -dt * g_over_l * theta.cos(),
                1.0 - dt * self.damping / self.inertia(),
            ],
        );
        let f_u = DMat::from_row_slice(2, 1, &[0.0, dt / self.inertia()]);
        let mut bundle = DerivativeBundle::zero_hessians(f_x, f_u);
        bundle.f_xx[1][(0, 0)] = dt * g_over_l * theta.sin();
        bundle
    }
}

/// Value, gradient and Hessian of a scalar over `(θ, θ̇, u)`.
#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    g: [f64; 3],
    h: [[f64; 3]; 3],
}

impl Jet {
    /// `n / d` by differentiating `n = a·d` twice.
    fn quotient(n: &Jet, d: &Jet) -> Jet {
        let v = n.v / d.v;
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = (n.g[i] - v * d.g[i]) / d.v;
        }
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = (n.h[i][j] - g[i] * d.g[j] - g[j] * d.g[i] - v * d.h[i][j]) / d.v;
            }
        }
        Jet { v, g, h }
    }
}

/// Cart-pole with a point-mass pole, state `[p, ṗ, θ, θ̇]`, horizontal force
/// on the cart. `θ = 0` hangs down, `θ = π` is upright.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Pivot to pole point mass.
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.02,
        }
    }
}

impl CartPole {
    pub const DEFAULT_HORIZON: usize = 200;

    pub fn new(
        cart_mass: f64,
        pole_mass: f64,
        pole_length: f64,
        gravity: f64,
        dt: f64,
    ) -> Result<Self> {
        positive("cart_mass", cart_mass)?;
        positive("pole_mass", pole_mass)?;
        positive("pole_length", pole_length)?;
        positive("dt", dt)?;
        if !gravity.is_finite() {
            return Err(Error::InvalidParameter("gravity must be finite".into()));
        }
        Ok(Self {
            cart_mass,
            pole_mass,
            pole_length,
            gravity,
            dt,
        })
    }

    pub fn goal() -> DVec {
        DVec::from_vec(vec![0.0, 0.0, std::f64::consts::PI, 0.0])
    }

    /// Cart and pole accelerations as jets over `(θ, θ̇, u)`.
    fn accelerations(&self, theta: f64, omega: f64, u: f64) -> (Jet, Jet) {
        let (mc, mp, l, g) = (
            self.cart_mass,
            self.pole_mass,
            self.pole_length,
            self.gravity,
        );
        let total = mc + mp;
        let (s, c) = theta.sin_cos();
        let (s2, c2) = (2.0 * theta).sin_cos();
        let w2 = omega * omega;

        let den = Jet {
            v: mc + mp * s * s,
            g: [mp * s2, 0.0, 0.0],
            h: [[2.0 * mp * c2, 0.0, 0.0], [0.0; 3], [0.0; 3]],
        };
        let cart_num = Jet {
            v: u + mp * l * w2 * s + mp * g * s * c,
            g: [mp * l * w2 * c + mp * g * c2, 2.0 * mp * l * omega * s, 1.0],
            h: [
                [
                    -mp * l * w2 * s - 2.0 * mp * g * s2,
                    2.0 * mp * l * omega * c,
                    0.0,
                ],
                [2.0 * mp * l * omega * c, 2.0 * mp * l * s, 0.0],
                [0.0; 3],
            ],
        };
        // Pole numerator already divided by l.
        let pole_num = Jet {
            v: (-u * c - 0.5 * mp * l * w2 * s2 - total * g * s) / l,
            g: [
                (u * s - mp * l * w2 * c2 - total * g * c) / l,
                -mp * omega * s2,
                -c / l,
            ],
            h: [
                [
                    (u * c + 2.0 * mp * l * w2 * s2 + total * g * s) / l,
                    -2.0 * mp * omega * c2,
                    s / l,
                ],
                [-2.0 * mp * omega * c2, -mp * s2, 0.0],
                [s / l, 0.0, 0.0],
            ],
        };
        (
            Jet::quotient(&cart_num, &den),
            Jet::quotient(&pole_num, &den),
        )
    }
}

impl Dynamics for CartPole {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        let (cart, pole) = self.accelerations(x[2], x[3], u[0]);
        let dt = self.dt;
        DVec::from_vec(vec![
            x[0] + dt * x[1],
            x[1] + dt * cart.v,
            x[2] + dt * x[3],
            x[3] + dt * pole.v,
        ])
    }

    fn derivatives(&self, x: &DVec, u: &DVec) -> DerivativeBundle {
        let (cart, pole) = self.accelerations(x[2], x[3], u[0]);
        let dt = self.dt;
        let mut f_x = DMat::identity(4, 4);
        f_x[(0, 1)] = dt;
        f_x[(2, 3)] = dt;
        let mut f_u = DMat::zeros(4, 1);
        let mut bundle_xx = vec![DMat::zeros(4, 4); 4];
        let mut bundle_xu = vec![DMat::zeros(4, 1); 4];
        for (row, jet) in [(1usize, &cart), (3usize, &pole)] {
            f_x[(row, 2)] += dt * jet.g[0];
            f_x[(row, 3)] += dt * jet.g[1];
            f_u[(row, 0)] = dt * jet.g[2];
            for i in 0..2 {
                for j in 0..2 {
                    bundle_xx[row][(2 + i, 2 + j)] = dt * jet.h[i][j];
                }
                bundle_xu[row][(2 + i, 0)] = dt * jet.h[i][2];
            }
        }
        DerivativeBundle {
            f_x,
            f_u,
            f_xx: bundle_xx,
            f_xu: bundle_xu,
        }
    }
}

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMat,
    pub b: DMat,
}

impl LinearSystem {
    pub fn new(a: DMat, b: DMat) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "A must be square and non-empty".into(),
            ));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension {
                what: "B rows",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        Ok(Self { a, b })
    }

    /// Sampled double integrator, `n = 2`, `m = 1`.
    pub fn double_integrator(dt: f64) -> Self {
        Self {
            a: DMat::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            b: DMat::from_row_slice(2, 1, &[0.5 * dt * dt, dt]),
        }
    }
}

impl Dynamics for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        &self.a * x + &self.b * u
    }
    fn derivatives(&self, _x: &DVec, _u: &DVec) -> DerivativeBundle {
        DerivativeBundle::zero_hessians(self.a.clone(), self.b.clone())
    }
}

/// Any of the built-in plants.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    Pendulum(Pendulum),
    CartPole(CartPole),
    Linear(LinearSystem),
}

impl SystemModel {
    fn inner(&self) -> &dyn Dynamics {
        match self {
            SystemModel::Pendulum(p) => p,
            SystemModel::CartPole(c) => c,
            SystemModel::Linear(l) => l,
        }
    }
}

impl Dynamics for SystemModel {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner().control_dim()
    }
    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        self.inner().step(x, u)
    }
    fn derivatives(&self, x: &DVec, u: &DVec) -> DerivativeBundle {
        self.inner().derivatives(x, u)
    }
}

/// Wraps a plant and perturbs one entry of its reported `f_x`.
///
/// Exists to prove that [`check_derivatives`] catches a wrong Jacobian.
#[doc(hidden)]
#[derive(Debug, Clone)]
pub struct JacobianFault<M> {
    pub inner: M,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

impl<M: Dynamics> Dynamics for JacobianFault<M> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }
    fn step(&self, x: &DVec, u: &DVec) -> DVec {
        self.inner.step(x, u)
    }
    fn derivatives(&self, x: &DVec, u: &DVec) -> DerivativeBundle {
        let mut d = self.inner.derivatives(x, u);
        d.f_x[(self.row, self.col)] += self.delta;
        d
    }
}

/// Separable tracking cost
/// `c(x, u) = ½(x − g)'Q(x − g) + ½u'Ru`, `C_T(x) = ½(x − g)'Q_T(x − g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub q: DMat,
    pub r: DMat,
    pub q_terminal: DMat,
    pub goal: DVec,
}

/// Stage cost derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCostDerivatives {
    pub l_x: DVec,
    pub l_xx: DMat,
    /// `R u`
    pub control_gradient: DVec,
    pub r: DMat,
}

impl CostModel {
    pub fn new(q: DMat, r: DMat, q_terminal: DMat, goal: DVec) -> Result<Self> {
        let n = goal.len();
        for (name, mat) in [("Q", &q), ("Q_T", &q_terminal)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::Dimension {
                    what: "state weight",
                    expected: n,
                    got: mat.nrows(),
                });
            }
            if !is_symmetric(mat, 1e-12) || min_eigenvalue(mat) < -1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be symmetric positive semidefinite"
                )));
            }
        }
        if !is_symmetric(&r, 1e-12) || r.nrows() == 0 || min_eigenvalue(&r) <= 0.0 {
            return Err(Error::InvalidParameter(
                "R must be symmetric positive definite".into(),
            ));
        }
        Ok(Self {
            q,
            r,
            q_terminal,
            goal,
        })
    }

    /// Diagonal weights: `Q = diag(q_diag)`, `R = r_scale·I`, `Q_T = qt_scale·Q`.
    pub fn diagonal(
        q_diag: &[f64],
        control_dim: usize,
        r_scale: f64,
        qt_scale: f64,
        goal: DVec,
    ) -> Result<Self> {
        let q = DMat::from_diagonal(&DVec::from_row_slice(q_diag));
        let q_terminal = &q * qt_scale;
        Self::new(
            q,
            DMat::identity(control_dim, control_dim) * r_scale,
            q_terminal,
            goal,
        )
    }

    pub const DEFAULT_R_SCALE: f64 = 0.1;
    pub const DEFAULT_QT_SCALE: f64 = 100.0;
    pub const PENDULUM_Q: [f64; 2] = [1.0, 0.1];
    pub const CARTPOLE_Q: [f64; 4] = [1.0, 0.1, 1.0, 0.1];

    pub fn pendulum_default() -> Self {
        Self::diagonal(
            &Self::PENDULUM_Q,
            1,
            Self::DEFAULT_R_SCALE,
            Self::DEFAULT_QT_SCALE,
            Pendulum::goal(),
        )
        .expect("default pendulum weights are valid")
    }

    pub fn cartpole_default() -> Self {
        Self::diagonal(
            &Self::CARTPOLE_Q,
            1,
            Self::DEFAULT_R_SCALE,
            Self::DEFAULT_QT_SCALE,
            CartPole::goal(),
        )
        .expect("default cart-pole weights are valid")
    }

    pub fn state_dim(&self) -> usize {
        self.goal.len()
    }

    pub fn control_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn state_cost(&self, x: &DVec) -> f64 {
        let e = x - &self.goal;
        0.5 * e.dot(&(&self.q * &e))
    }

    pub fn control_cost(&self, u: &DVec) -> f64 {
        0.5 * u.dot(&(&self.r * u))
    }

    pub fn stage_cost(&self, x: &DVec, u: &DVec) -> f64 {
        self.state_cost(x) + self.control_cost(u)
    }

    pub fn terminal_cost(&self, x: &DVec) -> f64 {
        let e = x - &self.goal;
        0.5 * e.dot(&(&self.q_terminal * &e))
    }

    pub fn stage_derivatives(&self, x: &DVec, u: &DVec) -> StageCostDerivatives {
        StageCostDerivatives {
            l_x: &self.q * (x - &self.goal),
            l_xx: self.q.clone(),
            control_gradient: &self.r * u,
            r: self.r.clone(),
        }
    }

    /// `(C_T,x, C_T,xx)`
    pub fn terminal_derivatives(&self, x: &DVec) -> (DVec, DMat) {
        (&self.q_terminal * (x - &self.goal), self.q_terminal.clone())
    }
}

/// Half-width of the sampling box used by [`check_derivatives`]: every state
/// and control component is drawn uniformly from `[-3, 3]`.
pub const DERIVATIVE_CHECK_BOX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeError {
    pub derivative: String,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeFailure {
    pub derivative: String,
    pub sample: usize,
    pub error: f64,
}

/// Outcome of comparing analytic derivatives against central differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub samples: usize,
    pub tol: f64,
    pub errors: Vec<DerivativeError>,
    /// First offending derivative, in check order.
    pub failure: Option<DerivativeFailure>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn max_error(&self, name: &str) -> Option<f64> {
        self.errors
            .iter()
            .find(|e| e.derivative == name)
            .map(|e| e.max_error)
    }
}

fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

/// Central-difference Jacobian of `f` at `z`, one column per input.
fn fd_jacobian(z: &DVec, f: &dyn Fn(&DVec) -> DVec) -> DMat {
    let rows = f(z).len();
    let mut jac = DMat::zeros(rows, z.len());
    for j in 0..z.len() {
        let h = fd_step(z[j]);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += h;
        zm[j] -= h;
        let col = (f(&zp) - f(&zm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

fn entry_error(analytic: &DMat, numeric: &DMat) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / (1.0 + n.abs()))
        .fold(0.0, f64::max)
}

/// Compares analytic derivatives of `model` and `cost` against central
/// differences at `sample_count` seeded points of the box
/// [`DERIVATIVE_CHECK_BOX`].
///
/// First derivatives are differenced from the map itself; second derivatives
/// are differenced from the analytic first derivatives. The error per entry is
/// `|analytic − numeric| / (1 + |numeric|)`.
pub fn check_derivatives<M: Dynamics + ?Sized>(
    model: &M,
    cost: &CostModel,
    sample_count: usize,
    tol: f64,
    seed: u64,
) -> Result<DerivativeReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be > 0, got {tol}"
        )));
    }
    let (n, m) = (model.state_dim(), model.control_dim());
    let names = [
        "f_x", "f_u", "f_xx", "f_xu", "f_uu", "l_x", "l_xx", "c_u", "C_T,x", "C_T,xx",
    ];
    let mut max_err = [0.0f64; 10];
    let mut failure = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for sample in 0..sample_count {
        let x = DVec::from_fn(n, |_, _| {
            rng.random_range(-DERIVATIVE_CHECK_BOX..=DERIVATIVE_CHECK_BOX)
        });
        let u = DVec::from_fn(m, |_, _| {
            rng.random_range(-DERIVATIVE_CHECK_BOX..=DERIVATIVE_CHECK_BOX)
        });
        let d = model.derivatives(&x, &u);
        let mut errs = [0.0f64; 10];

        errs[0] = entry_error(&d.f_x, &fd_jacobian(&x, &|xs| model.step(xs, &u)));
        errs[1] = entry_error(&d.f_u, &fd_jacobian(&u, &|us| model.step(&x, us)));
        for i in 0..n {
            let row_x = |xs: &DVec| -> DVec { model.derivatives(xs, &u).f_x.row(i).transpose() };
            errs[2] = errs[2].max(entry_error(&d.f_xx[i], &fd_jacobian(&x, &row_x)));
            // ∂/∂x of the i-th row of f_u gives f_xu[i]'.
            let row_u = |xs: &DVec| -> DVec { model.derivatives(xs, &u).f_u.row(i).transpose() };
            errs[3] = errs[3].max(entry_error(
                &d.f_xu[i].transpose(),
                &fd_jacobian(&x, &row_u),
            ));
            let row_uu = |us: &DVec| -> DVec { model.derivatives(&x, us).f_u.row(i).transpose() };
            errs[4] = errs[4].max(entry_error(&DMat::zeros(m, m), &fd_jacobian(&u, &row_uu)));
        }

        let sd = cost.stage_derivatives(&x, &u);
        let lx_num = fd_jacobian(&x, &|xs| DVec::from_element(1, cost.state_cost(xs)));
        errs[5] = entry_error(&DMat::from_row_slice(1, n, sd.l_x.as_slice()), &lx_num);
        errs[6] = entry_error(
            &sd.l_xx,
            &fd_jacobian(&x, &|xs| cost.stage_derivatives(xs, &u).l_x),
        );
        let cu_num = fd_jacobian(&u, &|us| DVec::from_element(1, cost.control_cost(us)));
        errs[7] = entry_error(
            &DMat::from_row_slice(1, m, sd.control_gradient.as_slice()),
            &cu_num,
        )
        .max(entry_error(
            &sd.r,
            &fd_jacobian(&u, &|us| cost.stage_derivatives(&x, us).control_gradient),
        ));
        let (ct_x, ct_xx) = cost.terminal_derivatives(&x);
        let ctx_num = fd_jacobian(&x, &|xs| DVec::from_element(1, cost.terminal_cost(xs)));
        errs[8] = entry_error(&DMat::from_row_slice(1, n, ct_x.as_slice()), &ctx_num);
        errs[9] = entry_error(
            &ct_xx,
            &fd_jacobian(&x, &|xs| cost.terminal_derivatives(xs).0),
        );

        for (k, e) in errs.iter().enumerate() {
            let e = if e.is_finite() { *e } else { f64::INFINITY };
            max_err[k] = max_err[k].max(e);
            if failure.is_none() && e > tol {
                failure = Some(DerivativeFailure {
                    derivative: names[k].to_string(),
                    sample,
                    error: e,
                });
            }
        }
    }

    Ok(DerivativeReport {
        samples: sample_count,
        tol,
        errors: names
            .iter()
            .zip(max_err)
            .map(|(name, max_error)| DerivativeError {
                derivative: name.to_string(),
                max_error,
            })
            .collect(),
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn undamped() -> Pendulum {
        Pendulum::new(1.0, 1.0, 9.81, 0.0, 0.05).unwrap()
    }

    fn v(xs: &[f64]) -> DVec {
        DVec::from_row_slice(xs)
    }

    #[test]
    fn pendulum_equilibria_are_fixed_points() {
        let p = undamped();
        assert_eq!(
            dynamics_step(&p, &v(&[0.0, 0.0]), &v(&[0.0])).unwrap(),
            v(&[0.0, 0.0])
        );
        let up = dynamics_step(&p, &v(&[PI, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(up[0], PI);
        assert!(up[1].abs() < 1e-15);
    }

    #[test]
    fn pendulum_horizontal_euler_step() {
        let next = dynamics_step(&undamped(), &v(&[FRAC_PI_2, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(next[0], FRAC_PI_2);
        assert!((next[1] + 0.4905).abs() < 1e-15);
    }

    #[test]
    fn pendulum_jacobian_at_rest() {
        let d = dynamics_derivatives(&undamped(), &v(&[0.0, 0.0]), &v(&[0.0])).unwrap();
        assert!((d.f_x[(1, 0)] + 0.4905).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = undamped();
        assert!(matches!(
            dynamics_step(&p, &v(&[0.0]), &v(&[0.0])),
            Err(Error::Dimension { what: "state", .. })
        ));
        assert!(matches!(
            dynamics_step(&p, &v(&[0.0, 0.0]), &v(&[0.0, 1.0])),
            Err(Error::Dimension {
                what: "control",
                ..
            })
        ));
        assert!(matches!(
            dynamics_step(&p, &v(&[f64::NAN, 0.0]), &v(&[0.0])),
            Err(Error::NonFinite { .. })
        ));
        assert!(Pendulum::new(1.0, 1.0, 9.81, 0.0, 0.0).is_err());
        assert!(CartPole::new(1.0, 0.1, 0.5, 9.81, -0.02).is_err());
    }

    #[test]
    fn linear_system_derivatives() {
        let sys = LinearSystem::double_integrator(0.1);
        let d = dynamics_derivatives(&sys, &v(&[1.0, -2.0]), &v(&[0.3])).unwrap();
        assert_eq!(d.f_x, sys.a);
        assert_eq!(d.f_u, sys.b);
        assert!(d.f_xx.iter().all(|h| h.amax() == 0.0));
        assert!(d.f_xu.iter().all(|h| h.amax() == 0.0));
        let report = check_derivatives(
            &sys,
            &CostModel::diagonal(&[1.0, 1.0], 1, 0.1, 10.0, v(&[0.0, 0.0])).unwrap(),
            20,
            // Central-difference roundoff floor; exactness is asserted above.
            1e-9,
            1,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn cost_derivatives_at_minimum() {
        let q = DMat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cost = CostModel::new(
            q.clone(),
            DMat::identity(1, 1) * 0.1,
            q.clone() * 100.0,
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let sd = cost.stage_derivatives(&v(&[0.0, 0.0]), &v(&[0.0]));
        assert_eq!(sd.l_x, v(&[0.0, 0.0]));
        assert_eq!(sd.l_xx, q);
        assert_eq!(sd.control_gradient, v(&[0.0]));
        assert_eq!(sd.r, DMat::identity(1, 1) * 0.1);
        let swing = CostModel::pendulum_default();
        assert_eq!(
            swing.stage_derivatives(&v(&[PI, 0.0]), &v(&[0.0])).l_x,
            v(&[0.0, 0.0])
        );
    }

    #[test]
    fn cost_validation() {
        let g = v(&[0.0]);
        let one = DMat::identity(1, 1);
        assert!(CostModel::new(one.clone(), DMat::zeros(1, 1), one.clone(), g.clone()).is_err());
        assert!(CostModel::new(-one.clone(), one.clone(), one.clone(), g.clone()).is_err());
        assert!(CostModel::new(one.clone(), one.clone(), one.clone(), g).is_ok());
    }

    #[test]
    fn benchmark_derivatives_match_finite_differences() {
        let pend = check_derivatives(
            &Pendulum::default(),
            &CostModel::pendulum_default(),
            100,
            1e-5,
            7,
        )
        .unwrap();
        assert!(pend.passed(), "{pend:?}");
        let cart = check_derivatives(
            &CartPole::default(),
            &CostModel::cartpole_default(),
            100,
            1e-5,
            7,
        )
        .unwrap();
        assert!(cart.passed(), "{cart:?}");
    }

    #[test]
    fn corrupted_jacobian_is_named() {
        let faulty = JacobianFault {
            inner: Pendulum::default(),
            row: 1,
            col: 0,
            delta: 0.1,
        };
        let report =
            check_derivatives(&faulty, &CostModel::pendulum_default(), 100, 1e-5, 7).unwrap();
        let failure = report.failure.expect("fault must be detected");
        assert_eq!(failure.derivative, "f_x");
        assert_eq!(failure.sample, 0);
    }

    #[test]
    fn hessian_tensors_are_symmetric() {
        let cart = CartPole::default();
        let d = cart.derivatives(&v(&[0.3, -1.0, 2.0, 0.7]), &v(&[1.5]));
        for h in &d.f_xx {
            assert!((h - h.transpose()).amax() < 1e-15);
        }
    }
}
