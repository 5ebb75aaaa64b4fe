//! Trajectory optimization through the lens of equality-constrained SQP.
//!
//! Three backward passes share one outer loop:
//!
//! * **iLQR** solves the modified QP whose Hessian keeps only the cost
//!   curvature. Its step is always a descent direction.
//! * **Newton-LQR** solves the full Newton QP, with the dynamics Hessians
//!   contracted against the multipliers of the previous iteration.
//! * **DDP** has the same shape as Newton-LQR but contracts the dynamics
//!   Hessians against the value gradient computed during the same sweep.
//!
//! The [`kkt_oracle`] module assembles the same QPs as dense KKT systems and
//! solves them directly, which certifies the Riccati recursions independently.
//!
//! Dynamics are discretized with explicit Euler so that the discrete map stays
//! affine in the control, which makes every `f_uu` block vanish.

pub mod backward;
pub mod error;
pub mod expansion;
pub mod kkt_oracle;
pub mod linalg;
pub mod linesearch;
pub mod models;
pub mod report;
pub mod solver;
pub mod trajectory;

pub use backward::{
    backward_ddp, backward_ilqr, backward_newton, expected_reduction, multipliers_from,
    quu_spectrum, BackwardSolution, Method, MultiplierSequence,
};
pub use error::{Error, Result};
pub use expansion::{expand_along, ExpansionSequence, StageExpansion};
pub use kkt_oracle::{
    assemble_qp, cost_gradient_adjoint, directional_derivative, solve_kkt, verify_equivalence,
    DenseQp, EquivalenceReport, KktSolution, QpVariant,
};
pub use linesearch::{
    accept, forward_pass, line_search, LineSearchConfig, LineSearchOutcome, LineSearchStatus,
};
pub use models::{
    check_derivatives, dynamics_derivatives, dynamics_step, CartPole, CostModel, DerivativeBundle,
    DerivativeReport, Dynamics, JacobianFault, LinearSystem, Pendulum, SystemModel,
};
pub use solver::{
    converged, hybrid_solve, solve, IterationRecord, RecordStatus, SolveResult, SolverConfig,
    SolverMethod, StopReason,
};
pub use trajectory::{linear_rollout, rollout, total_cost, PerturbationPath, Trajectory};

pub type DVec = nalgebra::DVector<f64>;
pub type DMat = nalgebra::DMatrix<f64>;
