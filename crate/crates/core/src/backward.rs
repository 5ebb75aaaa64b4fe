//! Backward passes.
//!
//! All three passes run the same Riccati-style sweep
//!
//! ```text
//! Q_x  = l_x + f_x'v'             Q_u  = Rū + f_u'v'
//! Q_xx = l_xx + H_xx + f_x'V'f_x  Q_ux = f_u'V'f_x + H_xu'
//! Q_uu = R + f_u'V'f_u
//! k = Q_uu⁻¹Q_u   K = Q_uu⁻¹Q_ux   v = Q_x − Q_ux'k   V = Q_xx − Q_ux'K
//! ```
//!
//! and differ only in the dynamics-curvature terms `H_xx = Σ_i w_i f_xx[i]`,
//! `H_xu = Σ_i w_i f_xu[i]`:
//!
//! | pass       | weight `w` at step `t`                         |
//! |------------|------------------------------------------------|
//! | iLQR       | none (`H = 0`)                                 |
//! | Newton-LQR | `−λ̄_{t+1}`, previous-iteration multipliers     |
//! | DDP        | `v_{t+1}`, value gradient of the same sweep    |
//!
//! Multipliers follow `λ_t = −v_t − V_t δx_t`, which is also the sign of the
//! equality multiplier of the stacked dense KKT system. Under that convention
//! the Lagrangian curvature of the dynamics constraint is `−λ_{t+1}·f_xx`, so
//! Newton-LQR contracts with `−λ̄`. At a stationary nominal `λ̄_t = −v_t` and
//! the Newton and DDP weights coincide.
//!
//! No regularization is applied. Indefinite `Q_uu` is reported through
//! [`BackwardSolution::quu_min_eig`]; only a singular or non-finite `Q_uu`
//! stops a sweep.

use serde::{Deserialize, Serialize};

use crate::expansion::ExpansionSequence;
use crate::linalg::{min_eigenvalue, symmetrize, SymmetricFactor};
use crate::trajectory::PerturbationPath;
use crate::{DMat, DVec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ilqr,
    Newton,
    Ddp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ilqr => "ilqr",
            Method::Newton => "newton",
            Method::Ddp => "ddp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value expansion and gains from one backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    /// Value gradients `v_0..v_T`.
    pub v: Vec<DVec>,
    /// Value Hessians `V_0..V_T`, symmetric.
    pub value_hessian: Vec<DMat>,
    /// Feedforward gains `k_0..k_{T−1}`.
    pub k: Vec<DVec>,
    /// Feedback gains `K_0..K_{T−1}`, each `m × n`.
    pub gain: Vec<DMat>,
    pub quu: Vec<DMat>,
    pub quu_min_eig: Vec<f64>,
    pub method: Method,
}

impl BackwardSolution {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }
}

/// Costates `λ_0..λ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSequence {
    pub lambda: Vec<DVec>,
}

impl MultiplierSequence {
    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            lambda: vec![DVec::zeros(n); horizon + 1],
        }
    }
}

enum Curvature<'a> {
    None,
    Multipliers(&'a MultiplierSequence),
    ValueGradient,
}

fn sweep(
    exp: &ExpansionSequence,
    method: Method,
    curvature: Curvature<'_>,
) -> Result<BackwardSolution> {
    let horizon = exp.horizon();
    let n = exp.state_dim();
    let mut v = vec![DVec::zeros(n); horizon + 1];
    let mut vv = vec![DMat::zeros(n, n); horizon + 1];
    let mut k = Vec::with_capacity(horizon);
    let mut gain = Vec::with_capacity(horizon);
    let mut quu = Vec::with_capacity(horizon);
    let mut quu_min_eig = Vec::with_capacity(horizon);

    v[horizon] = exp.terminal_x.clone();
    vv[horizon] = symmetrize(&exp.terminal_xx);

    for t in (0..horizon).rev() {
        let stage = &exp.stages[t];
        let (fx, fu) = (&stage.dynamics.f_x, &stage.dynamics.f_u);
        let (v_next, vv_next) = (&v[t + 1], &vv[t + 1]);

        let weight = match curvature {
            Curvature::None => None,
            Curvature::Multipliers(lambda) => Some(-&lambda.lambda[t + 1]),
            Curvature::ValueGradient => Some(v_next.clone()),
        };

        let vv_fx = vv_next * fx;
        let q_x = &stage.l_x + fx.tr_mul(v_next);
        let q_u = &stage.control_gradient + fu.tr_mul(v_next);
        let mut q_xx = &stage.l_xx + fx.tr_mul(&vv_fx);
        let mut q_ux = fu.tr_mul(&vv_fx);
        let q_uu = symmetrize(&(&stage.r + fu.tr_mul(&(vv_next * fu))));
        if let Some(w) = weight {
            let (h_xx, h_xu) = stage.dynamics.contract(&w);
            q_xx += symmetrize(&h_xx);
            q_ux += h_xu.transpose();
        }

        let factor = SymmetricFactor::new(&q_uu);
        if factor.is_singular() {
            return Err(Error::Indefinite {
                t,
                min_abs_eig: factor.min_abs_eigenvalue(),
            });
        }
        let k_t = factor.solve_vec(&q_u);
        let gain_t = factor.solve(&q_ux);
        let v_t = q_x - q_ux.tr_mul(&k_t);
        let vv_t = symmetrize(&(q_xx - q_ux.tr_mul(&gain_t)));
        if v_t.iter().chain(vv_t.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Indefinite {
                t,
                min_abs_eig: factor.min_abs_eigenvalue(),
            });
        }

        v[t] = v_t;
        vv[t] = vv_t;
        k.push(k_t);
        gain.push(gain_t);
        quu_min_eig.push(factor.min_eigenvalue());
        quu.push(q_uu);
    }
    k.reverse();
    gain.reverse();
    quu.reverse();
    quu_min_eig.reverse();

    Ok(BackwardSolution {
        v,
        value_hessian: vv,
        k,
        gain,
        quu,
        quu_min_eig,
        method,
    })
}

/// iLQR: the modified QP with cost curvature only.
///
/// With `R ≻ 0` and PSD state weights every `Q_uu` is positive definite and
/// every `V_t` is PSD.
pub fn backward_ilqr(exp: &ExpansionSequence) -> Result<BackwardSolution> {
    sweep(exp, Method::Ilqr, Curvature::None)
}

/// Newton-LQR: the full Newton QP with dynamics curvature weighted by the
/// previous multipliers `λ̄`.
pub fn backward_newton(
    exp: &ExpansionSequence,
    multipliers: &MultiplierSequence,
) -> Result<BackwardSolution> {
    if multipliers.lambda.len() != exp.horizon() + 1 {
        return Err(Error::Dimension {
            what: "multipliers",
            expected: exp.horizon() + 1,
            got: multipliers.lambda.len(),
        });
    }
    sweep(exp, Method::Newton, Curvature::Multipliers(multipliers))
}

/// DDP: dynamics curvature weighted by the value gradient of the same sweep.
pub fn backward_ddp(exp: &ExpansionSequence) -> Result<BackwardSolution> {
    sweep(exp, Method::Ddp, Curvature::ValueGradient)
}

/// `λ_t = −v_t − V_t δx_t` for `t = 0..T`.
pub fn multipliers_from(sol: &BackwardSolution, path: &PerturbationPath) -> MultiplierSequence {
    debug_assert_eq!(sol.v.len(), path.dx.len());
    MultiplierSequence {
        lambda: sol
            .v
            .iter()
            .zip(&sol.value_hessian)
            .zip(&path.dx)
            .map(|((v, vv), dx)| -(v + vv * dx))
            .collect(),
    }
}

/// Quadratic-model cost change of the step scaled by `alpha`:
/// `ΔJ(α) = −(α − α²/2) Σ_t g_t' Q_uu,t⁻¹ g_t` with `g_t = Rū_t + f_u'v_{t+1}`.
///
/// Positive values are possible when some `Q_uu` is indefinite.
pub fn expected_reduction(sol: &BackwardSolution, exp: &ExpansionSequence, alpha: f64) -> f64 {
    let curvature: f64 = exp
        .stages
        .iter()
        .enumerate()
        .map(|(t, stage)| {
            let g = &stage.control_gradient + stage.dynamics.f_u.tr_mul(&sol.v[t + 1]);
            g.dot(&sol.k[t])
        })
        .sum();
    -(alpha - 0.5 * alpha * alpha) * curvature
}

/// Minimum eigenvalue of each `Q_uu,t`.
pub fn quu_spectrum(sol: &BackwardSolution) -> Vec<f64> {
    sol.quu.iter().map(min_eigenvalue).collect()
}
