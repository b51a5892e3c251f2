//! Regularized Gram matrices maintained under rank-one insertions.
//!
//! A [`DesignState`] tracks `V = ridge·I + Σ x xᵀ` together with its inverse
//! (Sherman–Morrison) and the log-determinant ratio
//! `log det V − d·log(ridge)`, so that Mahalanobis widths and the
//! log-det complexity are available in `O(d²)` per step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Result};

/// Number of insertions between dense re-inversions of the maintained inverse.
pub const REFRESH_INTERVAL: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    dim: usize,
    ridge: f64,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    logdet_ratio: f64,
    count: usize,
    since_refresh: usize,
}

impl DesignState {
    /// `ridge·I` with its exact inverse.
    pub fn new(dim: usize, ridge: f64) -> Result<Self> {
        if dim == 0 {
            return Err(config("design dimension must be positive"));
        }
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(config(format!("ridge must be positive and finite, got {ridge}")));
        }
        Ok(Self {
            dim,
            ridge,
            matrix: DMatrix::identity(dim, dim) * ridge,
            inverse: DMatrix::identity(dim, dim) / ridge,
            logdet_ratio: 0.0,
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Number of vectors inserted so far (zero vectors included).
    pub fn count(&self) -> usize {
        self.count
    }

    /// `log det V − d·log(ridge)`; zero at construction, never decreases.
    pub fn logdet_ratio(&self) -> f64 {
        self.logdet_ratio
    }

    /// `V ← V + x xᵀ`, updating the inverse and log-det ratio in `O(d²)`.
    ///
    /// Returns the squared Mahalanobis norm of `x` against the inverse
    /// *before* the insertion, which is the quantity the elliptical
    /// potential argument sums.
    pub fn insert(&mut self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len(), "design insert")?;
        self.count += 1;
        let u = &self.inverse * x;
        let q = x.dot(&u).max(0.0);
        if q == 0.0 {
            // zero vector: V unchanged
            return Ok(0.0);
        }
        self.matrix.ger(1.0, x, x, 1.0);
        self.inverse.ger(-1.0 / (1.0 + q), &u, &u, 1.0);
        self.logdet_ratio += q.ln_1p();
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh_inverse();
        }
        Ok(q)
    }

    /// `xᵀ V⁻¹ x`, clamped at zero.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len(), "mahalanobis")?;
        Ok(quad_form(&self.inverse, x))
    }

    /// Replaces the Sherman–Morrison inverse with a dense Cholesky inverse of
    /// the current matrix.
    pub fn refresh_inverse(&mut self) {
        if let Some(chol) = self.matrix.clone().cholesky() {
            self.inverse = chol.inverse();
        }
        self.since_refresh = 0;
    }
}

/// `xᵀ A x` for symmetric `A`, without allocating.
pub(crate) fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for (j, col) in a.column_iter().enumerate() {
        acc += x[j] * col.dot(x);
    }
    acc.max(0.0)
}

/// Upper bound `d·log(1 + n·L²/(ridge·d))` on the log-det ratio after `n`
/// insertions of vectors with norm at most `max_norm`.
pub fn logdet_ratio_bound(dim: usize, ridge: f64, n: usize, max_norm: f64) -> f64 {
    let d = dim as f64;
    d * (n as f64 * max_norm * max_norm / (ridge * d)).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn e(dim: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v
    }

    #[test]
    fn fresh_state_is_scaled_identity() {
        let s = DesignState::new(2, 1.0).unwrap();
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(s.logdet_ratio(), 0.0);
        assert_eq!(s.count(), 0);

        let s = DesignState::new(3, 20.0).unwrap();
        assert!(close(s.inverse()[(1, 1)], 0.05, 1e-15));
        assert_eq!(s.inverse()[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(DesignState::new(1, 0.0).is_err());
        assert!(DesignState::new(0, 1.0).is_err());
        assert!(DesignState::new(2, -1.0).is_err());
        assert!(DesignState::new(2, f64::NAN).is_err());
    }

    #[test]
    fn rank_one_on_identity() {
        let mut s = DesignState::new(2, 1.0).unwrap();
        let q = s.insert(&e(2, 0)).unwrap();
        assert!(close(q, 1.0, 1e-15));
        assert!(close(s.logdet_ratio(), 2f64.ln(), 1e-15));
        assert!(close(s.inverse()[(0, 0)], 0.5, 1e-15));
        assert!(close(s.inverse()[(1, 1)], 1.0, 1e-15));
        assert!(close(s.mahalanobis_sq(&e(2, 0)).unwrap(), 0.5, 1e-15));

        s.insert(&e(2, 1)).unwrap();
        assert!(close(s.logdet_ratio(), 2.0 * 2f64.ln(), 1e-15));
    }

    #[test]
    fn zero_vector_only_bumps_count() {
        let mut s = DesignState::new(3, 2.0).unwrap();
        s.insert(&DVector::from_vec(vec![0.3, 0.1, 0.0])).unwrap();
        let before = s.clone();
        s.insert(&DVector::zeros(3)).unwrap();
        assert_eq!(s.count(), before.count() + 1);
        assert_eq!(s.matrix(), before.matrix());
        assert_eq!(s.inverse(), before.inverse());
        assert_eq!(s.logdet_ratio(), before.logdet_ratio());
    }

    #[test]
    fn mahalanobis_scales_with_ridge() {
        let s = DesignState::new(2, 1.0).unwrap();
        assert_eq!(s.mahalanobis_sq(&e(2, 0)).unwrap(), 1.0);
        let s = DesignState::new(2, 4.0).unwrap();
        assert_eq!(s.mahalanobis_sq(&e(2, 0)).unwrap(), 0.25);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let mut s = DesignState::new(3, 1.0).unwrap();
        assert!(matches!(
            s.insert(&DVector::zeros(2)),
            Err(crate::Error::Usage(_))
        ));
        assert!(s.mahalanobis_sq(&DVector::zeros(4)).is_err());
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn periodic_refresh_keeps_inverse_consistent() {
        let mut s = DesignState::new(4, 1.0).unwrap();
        for k in 0..(REFRESH_INTERVAL + 7) {
            let t = k as f64;
            let x = DVector::from_vec(vec![t.sin(), (2.0 * t).cos(), 0.5, (0.3 * t).sin()]) * 0.5;
            s.insert(&x).unwrap();
        }
        let prod = s.matrix() * s.inverse();
        let err = (prod - DMatrix::<f64>::identity(4, 4)).norm();
        assert!(err < 1e-8, "frobenius error {err}");
    }
}
