//! Cholesky-backed helpers for symmetric positive-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A factored SPD matrix `A = L L^T`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    l: DMatrix<f64>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("{what}: non-finite entries")));
        }
        let chol = Cholesky::new(matrix)
            .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("{what}: degenerate diagonal")));
        }
        Ok(SpdFactor { chol, l, log_det })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `A^{-1} b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `x^T A^{-1} x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let w = self
            .l
            .solve_lower_triangular(x)
            .expect("cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Draw from `N(A^{-1} chi, A^{-1})` when `A` is a precision matrix.
    pub fn sample_canonical<R: Rng + ?Sized>(&self, chi: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let mean = self.solve(chi);
        let z = standard_normal_vec(self.dim(), rng);
        let dev = self
            .l
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal");
        mean + dev
    }

    /// Draw from `N(0, A)` when `A` is a covariance matrix.
    pub fn sample_zero_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vec(self.dim(), rng);
        &self.l * z
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}
