use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rollout diverged at timestep {t}")]
    Divergence { t: usize },

    #[error("non-finite derivative at timestep {t}")]
    NonFiniteDerivative { t: usize },

    #[error("control curvature Q_uu is singular or non-finite at timestep {t} (min |eig| = {min_abs_eig:e})")]
    Indefinite { t: usize, min_abs_eig: f64 },

    #[error("direction is not a descent direction (d'grad J = {linear_pred:e})")]
    NonDescent { linear_pred: f64 },

    #[error("KKT matrix is singular (condition estimate {condition:e})")]
    SingularKkt { condition: f64 },
}
