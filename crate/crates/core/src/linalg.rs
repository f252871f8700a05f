//! Small dense helpers shared by the level recursion and the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Replaces `m` by `(m + mᵀ)/2` and returns the largest absolute change.
pub fn symmetrize(m: &mut DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut correction = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            correction = correction.max((m[(i, j)] - avg).abs());
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    correction
}

/// Ratio of extreme eigenvalues of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Gaussian in precision form, `p(x) ∝ exp(-½ xᵀ G x − xᵀ b)`, with the
/// precision factorized once. The linear coefficient `b` is supplied per draw.
#[derive(Clone, Debug)]
pub struct PrecisionGaussian {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl PrecisionGaussian {
    /// Factorizes `precision`; `level`/`node` only label the error.
    pub fn new(precision: &DMatrix<f64>, level: usize, node: usize) -> Result<Self> {
        let chol =
            Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite { level, node })?;
        let d = precision.nrows() as f64;
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        if !log_det_half.is_finite() {
            return Err(Error::NotPositiveDefinite { level, node });
        }
        let log_norm = log_det_half - 0.5 * d * (2.0 * std::f64::consts::PI).ln();
        Ok(Self { chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `G⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `G⁻¹ M`.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(m)
    }

    /// Mean `−G⁻¹ b`.
    pub fn mean(&self, linear: &DVector<f64>) -> DVector<f64> {
        -self.chol.solve(linear)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Normalized log-density at `x`.
    pub fn log_density(&self, x: &DVector<f64>, linear: &DVector<f64>) -> f64 {
        let mean = self.mean(linear);
        let diff = x - mean;
        // ‖Lᵀ(x − μ)‖² = (x − μ)ᵀ G (x − μ)
        let w = self.chol.l().transpose() * diff;
        self.log_norm - 0.5 * w.norm_squared()
    }

    /// Draws `x` and returns it with its normalized log-density.
    pub fn draw<R: Rng + ?Sized>(&self, linear: &DVector<f64>, rng: &mut R) -> (DVector<f64>, f64) {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = self.chol.l();
        let offset = l
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        let x = self.mean(linear) + offset;
        (x, self.log_norm - 0.5 * z.norm_squared())
    }
}
