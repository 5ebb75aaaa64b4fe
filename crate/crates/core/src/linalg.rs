//! Small dense helpers shared by the backward passes and the oracle.

use nalgebra::SymmetricEigen;

use crate::{DMat, DVec};

/// Spectral factorization `A = Q diag(w) Q'` of a symmetric matrix.
///
/// Used for the control curvature, which may be indefinite for Newton-LQR
/// and DDP. The factor both solves linear systems and exposes the spectrum.
#[derive(Debug, Clone)]
pub struct SymmetricFactor {
    vectors: DMat,
    values: DVec,
}

impl SymmetricFactor {
    pub fn new(a: &DMat) -> Self {
        let eig = SymmetricEigen::new(symmetrize(a));
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.min()
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.values.amax()
    }

    /// Numerically singular relative to its own scale, or non-finite.
    pub fn is_singular(&self) -> bool {
        if self.values.iter().any(|v| !v.is_finite()) {
            return true;
        }
        let scale = self.max_abs_eigenvalue().max(f64::MIN_POSITIVE);
        self.min_abs_eigenvalue() <= 1e-14 * scale
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DMat) -> DMat {
        let mut y = self.vectors.tr_mul(b);
        for (mut row, w) in y.row_iter_mut().zip(self.values.iter()) {
            row /= *w;
        }
        &self.vectors * y
    }

    pub fn solve_vec(&self, b: &DVec) -> DVec {
        let mut y = self.vectors.tr_mul(b);
        y.component_div_assign(&self.values);
        &self.vectors * y
    }
}

pub fn symmetrize(a: &DMat) -> DMat {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(a: &DMat) -> f64 {
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

pub fn is_symmetric(a: &DMat, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= tol * (1.0 + a.amax())
}

/// `‖a - b‖∞ / (1 + ‖b‖∞)`: relative for large references, absolute near zero.
pub fn scaled_error(a: &DVec, b: &DVec) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}
