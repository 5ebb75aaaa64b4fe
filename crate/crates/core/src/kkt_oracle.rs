//! Dense whole-trajectory QPs and their KKT solves.
//!
//! This is the brute-force reference for the backward passes. The QP over
//! `z = (δx_1..δx_T, δu_0..δu_{T−1})` is assembled explicitly and the KKT
//! system
//!
//! ```text
//! [ H  A' ] [ dz ]   [ −g ]
//! [ A  0  ] [ μ  ] = [ −b ]
//! ```
//!
//! is solved by LU with partial pivoting. The constraint rows encode
//! `δx_{t+1} − f_x δx_t − f_u δu_t = 0`, so the multiplier `μ_t` of row block
//! `t` is the costate `λ_{t+1}` in the convention `λ_t = −v_t − V_t δx_t`
//! with no sign change.
//!
//! Meant for verification: matrix side is `(2n + m)·T`.

use serde::Serialize;

use crate::backward::{multipliers_from, BackwardSolution, Method, MultiplierSequence};
use crate::expansion::ExpansionSequence;
use crate::linalg::{scaled_error, symmetrize};
use crate::trajectory::{linear_rollout, PerturbationPath};
use crate::{DMat, DVec, Error, Result};

/// Which QP to build.
#[derive(Debug, Clone, Copy)]
pub enum QpVariant<'a> {
    /// Cost curvature only (the iLQR subproblem).
    Modified,
    /// Adds dynamics curvature weighted by `−λ̄_{t+1}` (the Newton subproblem).
    Newton(&'a MultiplierSequence),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpLayout {
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
}

impl QpLayout {
    /// Offset of `δx_t`, `t ∈ 1..=T`.
    pub fn x(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.horizon);
        (t - 1) * self.n
    }

    /// Offset of `δu_t`, `t ∈ 0..T`.
    pub fn u(&self, t: usize) -> usize {
        self.horizon * self.n + t * self.m
    }

    pub fn primal_len(&self) -> usize {
        self.horizon * (self.n + self.m)
    }

    pub fn dual_len(&self) -> usize {
        self.horizon * self.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMat,
    pub g: DVec,
    pub a: DMat,
    pub b: DVec,
    pub layout: QpLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub dz: DVec,
    /// `μ_t` for `t = 0..T`, stacked; equal to `λ_{t+1}`.
    pub lambda: DVec,
    /// `‖K·sol − rhs‖∞`
    pub residual: f64,
    pub layout: QpLayout,
}

impl KktSolution {
    pub fn path(&self) -> PerturbationPath {
        let l = self.layout;
        let mut dx = vec![DVec::zeros(l.n)];
        dx.extend((1..=l.horizon).map(|t| self.dz.rows(l.x(t), l.n).into_owned()));
        let du = (0..l.horizon)
            .map(|t| self.dz.rows(l.u(t), l.m).into_owned())
            .collect();
        PerturbationPath { dx, du }
    }

    /// `λ_1..λ_T`.
    pub fn costates(&self) -> Vec<DVec> {
        let l = self.layout;
        (0..l.horizon)
            .map(|t| self.lambda.rows(t * l.n, l.n).into_owned())
            .collect()
    }
}

pub fn assemble_qp(exp: &ExpansionSequence, variant: QpVariant<'_>) -> Result<DenseQp> {
    let layout = QpLayout {
        horizon: exp.horizon(),
        n: exp.state_dim(),
        m: exp.control_dim(),
    };
    if let QpVariant::Newton(lambda) = variant {
        if lambda.lambda.len() != layout.horizon + 1 {
            return Err(Error::Dimension {
                what: "multipliers",
                expected: layout.horizon + 1,
                got: lambda.lambda.len(),
            });
        }
    }
    let (horizon, n, m) = (layout.horizon, layout.n, layout.m);
    let size = layout.primal_len();
    let mut h = DMat::zeros(size, size);
    let mut g = DVec::zeros(size);
    let mut a = DMat::zeros(layout.dual_len(), size);

    for (t, stage) in exp.stages.iter().enumerate() {
        let ui = layout.u(t);
        h.view_mut((ui, ui), (m, m)).copy_from(&stage.r);
        g.rows_mut(ui, m).copy_from(&stage.control_gradient);
        if t >= 1 {
            let xi = layout.x(t);
            let mut xx = stage.l_xx.clone();
            if let QpVariant::Newton(lambda) = variant {
                let (h_xx, h_xu) = stage.dynamics.contract(&-&lambda.lambda[t + 1]);
                xx += symmetrize(&h_xx);
                h.view_mut((xi, ui), (n, m)).copy_from(&h_xu);
                h.view_mut((ui, xi), (m, n)).copy_from(&h_xu.transpose());
            }
            h.view_mut((xi, xi), (n, n)).copy_from(&xx);
            g.rows_mut(xi, n).copy_from(&stage.l_x);
            a.view_mut((t * n, xi), (n, n))
                .copy_from(&-&stage.dynamics.f_x);
        }
        let next = layout.x(t + 1);
        a.view_mut((t * n, next), (n, n)).fill_with_identity();
        a.view_mut((t * n, ui), (n, m))
            .copy_from(&-&stage.dynamics.f_u);
    }
    let xt = layout.x(horizon);
    h.view_mut((xt, xt), (n, n)).copy_from(&exp.terminal_xx);
    g.rows_mut(xt, n).copy_from(&exp.terminal_x);

    Ok(DenseQp {
        h,
        g,
        a,
        b: DVec::zeros(layout.dual_len()),
        layout,
    })
}

fn kkt_matrix(qp: &DenseQp) -> DMat {
    let (p, d) = (qp.h.nrows(), qp.a.nrows());
    let mut k = DMat::zeros(p + d, p + d);
    k.view_mut((0, 0), (p, p)).copy_from(&qp.h);
    k.view_mut((0, p), (p, d)).copy_from(&qp.a.transpose());
    k.view_mut((p, 0), (d, p)).copy_from(&qp.a);
    k
}

/// Dense KKT solve with partial pivoting.
pub fn solve_kkt(qp: &DenseQp) -> Result<KktSolution> {
    let (p, d) = (qp.h.nrows(), qp.a.nrows());
    let k = kkt_matrix(qp);
    let mut rhs = DVec::zeros(p + d);
    rhs.rows_mut(0, p).copy_from(&-&qp.g);
    rhs.rows_mut(p, d).copy_from(&-&qp.b);

    let lu = k.clone().lu();
    let diag = lu.u().diagonal().abs();
    let condition = diag.max() / diag.min();
    if !condition.is_finite() || condition > 1e15 {
        return Err(Error::SingularKkt { condition });
    }
    let sol = lu.solve(&rhs).ok_or(Error::SingularKkt { condition })?;
    let residual = (&k * &sol - &rhs).amax();
    Ok(KktSolution {
        dz: sol.rows(0, p).into_owned(),
        lambda: sol.rows(p, d).into_owned(),
        residual,
        layout: qp.layout,
    })
}

/// Exact `∇_{u_t}J` of the rolled-out cost by the adjoint recursion
/// `ν_T = C_T,x`, `ν_t = l_x + f_x'ν_{t+1}`, `∇_{u_t}J = Rū_t + f_u'ν_{t+1}`.
pub fn cost_gradient_adjoint(exp: &ExpansionSequence) -> Vec<DVec> {
    let mut nu = exp.terminal_x.clone();
    let mut grad = vec![DVec::zeros(0); exp.horizon()];
    for (t, stage) in exp.stages.iter().enumerate().rev() {
        grad[t] = &stage.control_gradient + stage.dynamics.f_u.tr_mul(&nu);
        nu = &stage.l_x + stage.dynamics.f_x.tr_mul(&nu);
    }
    grad
}

/// `d'∇J = Σ_t δu_t'∇_{u_t}J`.
pub fn directional_derivative(du: &[DVec], grad: &[DVec]) -> f64 {
    du.iter().zip(grad).map(|(d, g)| d.dot(g)).sum()
}

/// Comparison of a backward pass against the matching dense QP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub variant: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub max_rel_err: f64,
    pub max_rel_err_dx: f64,
    pub max_rel_err_du: f64,
    pub max_rel_err_lambda: f64,
    /// Timestep with the largest absolute disagreement.
    pub worst_t: usize,
    pub kkt_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

fn stack(items: &[DVec]) -> DVec {
    DVec::from_iterator(
        items.iter().map(|v| v.len()).sum(),
        items.iter().flat_map(|v| v.iter().copied()),
    )
}

/// Checks the α = 1 step and multipliers of `sol` against `solve_kkt`.
///
/// iLQR is compared with the modified QP and Newton-LQR with the Newton QP
/// built from `multipliers`. Errors are `‖a − b‖∞ / (1 + ‖b‖∞)` over the
/// stacked sequences.
pub fn verify_equivalence(
    sol: &BackwardSolution,
    exp: &ExpansionSequence,
    multipliers: Option<&MultiplierSequence>,
    tol: f64,
) -> Result<EquivalenceReport> {
    let variant = match (sol.method, multipliers) {
        (Method::Ilqr, _) => QpVariant::Modified,
        (Method::Newton, Some(lambda)) => QpVariant::Newton(lambda),
        (Method::Newton, None) => {
            return Err(Error::InvalidParameter(
                "Newton equivalence needs the multipliers the pass was built with".into(),
            ))
        }
        (Method::Ddp, _) => {
            return Err(Error::InvalidParameter(
                "DDP has no matching dense QP".into(),
            ))
        }
    };
    let qp = assemble_qp(exp, variant)?;
    let kkt = solve_kkt(&qp)?;
    let reference = kkt.path();
    let reference_lambda = kkt.costates();

    let path = linear_rollout(exp, sol, 1.0);
    let lambda = multipliers_from(sol, &path);
    let horizon = exp.horizon();

    let err_dx = scaled_error(&stack(&path.dx[1..]), &stack(&reference.dx[1..]));
    let err_du = scaled_error(&stack(&path.du), &stack(&reference.du));
    let err_lambda = scaled_error(&stack(&lambda.lambda[1..]), &stack(&reference_lambda));

    let mut worst_t = 0;
    let mut worst = -1.0;
    for t in 0..horizon {
        let diff = (&path.du[t] - &reference.du[t])
            .amax()
            .max((&path.dx[t + 1] - &reference.dx[t + 1]).amax())
            .max((&lambda.lambda[t + 1] - &reference_lambda[t]).amax());
        if diff > worst {
            worst = diff;
            worst_t = t;
        }
    }

    let max_rel_err = err_dx.max(err_du).max(err_lambda);
    Ok(EquivalenceReport {
        variant: match variant {
            QpVariant::Modified => "modified".into(),
            QpVariant::Newton(_) => "newton".into(),
        },
        horizon,
        max_rel_err,
        max_rel_err_dx: err_dx,
        max_rel_err_du: err_du,
        max_rel_err_lambda: err_lambda,
        worst_t,
        kkt_residual: kkt.residual,
        tol,
        pass: max_rel_err <= tol,
    })
}
