//! Batch exact GP regression with a zero mean function.
//!
//! This is the reference every sequential engine is checked against, so it
//! stays deliberately plain: one Cholesky of `K + σ_ε² I`, triangular solves
//! for everything else.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{input_dim, Kernel};
use crate::linalg::{cholesky_escalating, log_det, Chol};

/// Posterior over latent values at a set of test points.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_marginal: f64,
}

/// A conditioned exact GP, reusable for many test sets.
#[derive(Debug, Clone)]
pub struct ExactGp {
    kernel: Kernel,
    noise_var: f64,
    x: Vec<Vec<f64>>,
    chol: Chol,
    alpha: DVector<f64>,
    log_marginal: f64,
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var.is_finite() && noise_var > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "noise variance must be positive, got {noise_var}"
        )))
    }
}

impl ExactGp {
    pub fn fit(kernel: &Kernel, noise_var: f64, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        kernel.validate()?;
        check_noise(noise_var)?;
        if x.is_empty() {
            return Err(Error::config("exact GP needs at least one training point"));
        }
        check_dim(x.len(), y.len())?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(i, "non-finite target"));
        }
        let mut k = kernel.gram_symmetric(x)?;
        for i in 0..x.len() {
            k[(i, i)] += noise_var;
        }
        let (chol, _) = cholesky_escalating(&k)?;
        let y = DVector::from_column_slice(y);
        let alpha = chol.solve(&y);
        let n = x.len() as f64;
        let log_marginal =
            -0.5 * (y.dot(&alpha) + log_det(&chol) + n * (2.0 * std::f64::consts::PI).ln());
        Ok(Self {
            kernel: kernel.clone(),
            noise_var,
            x: x.to_vec(),
            chol,
            alpha,
            log_marginal,
        })
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Rows are the weight vectors `Σ_{*⊙}(Σ_{⊙⊙} + σ_ε² I)⁻¹`, one per test point.
    pub fn weights(&self, x_test: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let cross = self.cross(x_test)?;
        Ok(self.chol.solve(&cross).transpose())
    }

    fn cross(&self, x_test: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        check_dim(input_dim(&self.x)?, input_dim(x_test)?)?;
        self.kernel.gram(&self.x, x_test)
    }

    pub fn predict(&self, x_test: &[Vec<f64>]) -> Result<ExactPosterior> {
        if x_test.is_empty() {
            return Ok(ExactPosterior {
                mean: DVector::zeros(0),
                covariance: DMatrix::zeros(0, 0),
                log_marginal: self.log_marginal,
            });
        }
        let cross = self.cross(x_test)?;
        let mean = cross.transpose() * &self.alpha;
        // Only the lower triangle is read by the triangular solve.
        let mut w = cross;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut w);
        let mut covariance = self.kernel.gram_symmetric(x_test)? - w.transpose() * &w;
        crate::linalg::symmetrize(&mut covariance);
        Ok(ExactPosterior {
            mean,
            covariance,
            log_marginal: self.log_marginal,
        })
    }

    /// Posterior (mean, variance) of the latent function at one point.
    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.predict(&[x.to_vec()])?;
        Ok((p.mean[0], p.covariance[(0, 0)]))
    }
}

/// Posterior mean, covariance and log marginal likelihood in one call.
pub fn posterior(
    kernel: &Kernel,
    noise_var: f64,
    x_train: &[Vec<f64>],
    y: &[f64],
    x_test: &[Vec<f64>],
) -> Result<ExactPosterior> {
    ExactGp::fit(kernel, noise_var, x_train, y)?.predict(x_test)
}

/// `log N(y | 0, K + σ_ε² I)`.
pub fn log_marginal_likelihood(
    kernel: &Kernel,
    noise_var: f64,
    x: &[Vec<f64>],
    y: &[f64],
) -> Result<f64> {
    Ok(ExactGp::fit(kernel, noise_var, x, y)?.log_marginal())
}

/// Candidate values per hyperparameter for [`grid_search`].
#[derive(Debug, Clone, Default)]
pub struct HyperGrid {
    pub variance: Vec<f64>,
    pub lengthscale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub variance: f64,
    pub lengthscale: f64,
    /// `None` when the factorization failed for this cell.
    pub log_marginal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best: Kernel,
    pub best_index: usize,
    /// Cells in iteration order (variance outer, lengthscale inner).
    pub table: Vec<GridCell>,
}

fn with_hyperparameters(template: &Kernel, variance: f64, lengthscale: f64) -> Result<Kernel> {
    match template {
        Kernel::SquaredExponential { .. } => Kernel::squared_exponential(variance, lengthscale),
        Kernel::Matern12 { .. } => Kernel::matern12(variance, lengthscale),
        Kernel::Matern32 { .. } => Kernel::matern32(variance, lengthscale),
        _ => Err(Error::unsupported(
            "grid search covers single-component kernels only",
        )),
    }
}

/// Maximizes the log marginal likelihood over the Cartesian grid.
///
/// Ties go to the smaller lengthscale, then the smaller variance, then the
/// earlier cell.
pub fn grid_search(
    template: &Kernel,
    noise_var: f64,
    x: &[Vec<f64>],
    y: &[f64],
    grid: &HyperGrid,
) -> Result<GridSearch> {
    if grid.variance.is_empty() || grid.lengthscale.is_empty() {
        return Err(Error::config("every hyperparameter grid must be non-empty"));
    }
    let mut table = Vec::with_capacity(grid.variance.len() * grid.lengthscale.len());
    let mut best: Option<(usize, f64)> = None;
    for &variance in &grid.variance {
        for &lengthscale in &grid.lengthscale {
            let kernel = with_hyperparameters(template, variance, lengthscale)?;
            let score = match log_marginal_likelihood(&kernel, noise_var, x, y) {
                Ok(v) if v.is_finite() => Some(v),
                Ok(_) | Err(Error::Numerical(_)) => None,
                Err(e) => return Err(e),
            };
            let idx = table.len();
            table.push(GridCell {
                variance,
                lengthscale,
                log_marginal: score,
            });
            if let Some(s) = score {
                let better = match best {
                    None => true,
                    Some((b, bs)) => {
                        let cell = &table[b];
                        s > bs
                            || (s == bs
                                && (lengthscale < cell.lengthscale
                                    || (lengthscale == cell.lengthscale
                                        && variance < cell.variance)))
                    }
                };
                if better {
                    best = Some((idx, s));
                }
            }
        }
    }
    let (best_index, _) =
        best.ok_or_else(|| Error::numerical("every grid cell failed to factorize"))?;
    let cell = &table[best_index];
    Ok(GridSearch {
        best: with_hyperparameters(template, cell.variance, cell.lengthscale)?,
        best_index,
        table,
    })
}
