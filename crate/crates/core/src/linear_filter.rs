//! Kalman filtering over the weights of a basis-expansion model
//! `y_t = φ(x_t)ᵀθ_t + ε_t`.
//!
//! The covariance is held in one of two forms. A fresh prior `σ² I` stays as
//! a scaled identity minus a growing low-rank correction while the rank is
//! small relative to F; each measurement appends one column, so an update
//! costs O(F·rank) instead of O(F²). Past rank F/2, or under non-isotropic
//! process noise, the belief switches to a dense matrix for good. Both forms
//! represent the same symmetric matrix; [`GaussianBelief::covariance`]
//! always returns the dense value.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{joseph_rank_one, log_normal_pdf, symmetrize};

#[derive(Debug, Clone, PartialEq)]
enum Covariance {
    Dense(DMatrix<f64>),
    /// `diag · I − Σ_k weights[k] · factors[k] factors[k]ᵀ`
    LowRank {
        diag: f64,
        factors: Vec<DVector<f64>>,
        weights: Vec<f64>,
    },
}

/// Gaussian belief `N(mean, covariance)` over feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: Covariance,
}

/// Weight dynamics between observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// θ_t = θ_{t−1}.
    Static,
    /// θ_t = θ_{t−1} + N(0, σ_rw² I).
    RandomWalk { sigma_rw2: f64 },
    /// Back-to-prior forgetting: θ_t = √λ θ_{t−1} + N(0, (1−λ) σ_θ² I).
    BackToPrior { lambda: f64, prior_variance: f64 },
    /// θ_t = a θ_{t−1} + u + N(0, C).
    General {
        a: f64,
        u: DVector<f64>,
        c: DMatrix<f64>,
    },
}

impl Dynamics {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Dynamics::Static => Ok(()),
            Dynamics::RandomWalk { sigma_rw2 } => {
                if sigma_rw2.is_finite() && *sigma_rw2 >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "random-walk variance must be non-negative, got {sigma_rw2}"
                    )))
                }
            }
            Dynamics::BackToPrior {
                lambda,
                prior_variance,
            } => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::config(format!(
                        "forgetting factor must lie in [0, 1], got {lambda}"
                    )));
                }
                if !(prior_variance.is_finite() && *prior_variance > 0.0) {
                    return Err(Error::config("prior variance must be positive"));
                }
                Ok(())
            }
            Dynamics::General { a, u, c } => {
                if !a.is_finite() {
                    return Err(Error::config("autoregressive coefficient must be finite"));
                }
                check_dim(dim, u.len())?;
                check_dim(dim, c.nrows())?;
                check_dim(dim, c.ncols())?;
                if (c - c.transpose()).amax() > 1e-12 * (1.0 + c.amax()) {
                    return Err(Error::config("process-noise covariance must be symmetric"));
                }
                if c.clone().symmetric_eigenvalues().min() < -1e-12 * (1.0 + c.amax()) {
                    return Err(Error::config(
                        "process-noise covariance must be positive semi-definite",
                    ));
                }
                Ok(())
            }
        }
    }
}

fn scaled_identity(c: &DMatrix<f64>) -> Option<f64> {
    let d = c[(0, 0)];
    let n = c.nrows();
    for j in 0..n {
        for i in 0..n {
            let expected = if i == j { d } else { 0.0 };
            if c[(i, j)] != expected {
                return None;
            }
        }
    }
    Some(d)
}

/// Observation model for non-conjugate updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Likelihood {
    /// y ∈ {0, 1}, p(y = 1 | f) = 1 / (1 + e^{−f}).
    BernoulliLogit,
    /// y ∈ ℕ, y | f ~ Poisson(e^f).
    PoissonLog,
}

impl Likelihood {
    fn check(self, y: f64) -> Result<()> {
        let ok = match self {
            Likelihood::BernoulliLogit => y == 0.0 || y == 1.0,
            Likelihood::PoissonLog => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::data(
                0,
                format!("target {y} outside the likelihood's support"),
            ))
        }
    }

    /// (log p(y|f), d/df, d²/df²).
    pub fn derivatives(self, y: f64, f: f64) -> (f64, f64, f64) {
        match self {
            Likelihood::BernoulliLogit => {
                let softplus = if f > 0.0 {
                    f + (-f).exp().ln_1p()
                } else {
                    f.exp().ln_1p()
                };
                let sig = 1.0 / (1.0 + (-f).exp());
                (y * f - softplus, y - sig, -sig * (1.0 - sig))
            }
            Likelihood::PoissonLog => {
                let ef = f.exp();
                let log_fact = ln_factorial(y);
                (y * f - ef - log_fact, y - ef, -ef)
            }
        }
    }
}

fn ln_factorial(y: f64) -> f64 {
    (2..=(y as u64)).map(|k| (k as f64).ln()).sum()
}

/// Result of a one-dimensional Laplace approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplace1d {
    pub mode: f64,
    /// −1 / (d²/df² log posterior) at the mode.
    pub variance: f64,
    /// Laplace estimate of log p(y).
    pub log_evidence: f64,
    pub iterations: usize,
}

const NEWTON_MAX_ITER: usize = 25;
const NEWTON_TOL: f64 = 1e-9;

/// Newton iterations (with step halving) for the mode of
/// `log p(y | f) + log N(f | prior_mean, prior_var)`.
pub fn laplace_1d(prior_mean: f64, prior_var: f64, y: f64, lik: Likelihood) -> Result<Laplace1d> {
    if !(prior_var.is_finite() && prior_var > 0.0 && prior_mean.is_finite()) {
        return Err(Error::numerical(format!(
            "invalid prior marginal N({prior_mean}, {prior_var})"
        )));
    }
    lik.check(y)?;
    let objective = |f: f64| {
        let (ll, _, _) = lik.derivatives(y, f);
        ll - (f - prior_mean).powi(2) / (2.0 * prior_var)
    };
    let mut f = prior_mean;
    let mut value = objective(f);
    for it in 1..=NEWTON_MAX_ITER {
        let (_, g, h) = lik.derivatives(y, f);
        let grad = g - (f - prior_mean) / prior_var;
        let hess = h - 1.0 / prior_var;
        let mut step = -grad / hess;
        let mut next = f + step;
        let mut next_value = objective(next);
        let mut halvings = 0;
        while (next_value.is_nan() || next_value < value) && halvings < 60 {
            step *= 0.5;
            next = f + step;
            next_value = objective(next);
            halvings += 1;
        }
        f = next;
        value = next_value;
        if step.abs() < NEWTON_TOL {
            let (_, _, h) = lik.derivatives(y, f);
            let variance = 1.0 / (1.0 / prior_var - h);
            let log_evidence = value - 0.5 * (2.0 * std::f64::consts::PI * prior_var).ln()
                + 0.5 * (2.0 * std::f64::consts::PI * variance).ln();
            return Ok(Laplace1d {
                mode: f,
                variance,
                log_evidence,
                iterations: it,
            });
        }
    }
    Err(Error::numerical(format!(
        "Newton iteration did not converge in {NEWTON_MAX_ITER} steps; last iterate f = {f}"
    )))
}

impl GaussianBelief {
    /// The prior `N(0, variance · I)` over `dim` weights.
    pub fn prior(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("belief dimension must be positive"));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::config(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        Ok(Self {
            mean: DVector::zeros(dim),
            cov: Covariance::LowRank {
                diag: variance,
                factors: Vec::new(),
                weights: Vec::new(),
            },
        })
    }

    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), covariance.nrows())?;
        check_dim(mean.len(), covariance.ncols())?;
        Ok(Self {
            mean,
            cov: Covariance::Dense(covariance),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Dense covariance matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Dense(p) => p.clone(),
            Covariance::LowRank {
                diag,
                factors,
                weights,
            } => {
                let n = self.dim();
                let mut p = DMatrix::from_diagonal_element(n, n, *diag);
                for (u, w) in factors.iter().zip(weights) {
                    p.ger(-w, u, u, 1.0);
                }
                symmetrize(&mut p);
                p
            }
        }
    }

    /// Rank of the low-rank correction, or `None` once dense.
    pub fn low_rank(&self) -> Option<usize> {
        match &self.cov {
            Covariance::Dense(_) => None,
            Covariance::LowRank { factors, .. } => Some(factors.len()),
        }
    }

    fn densify(&mut self) {
        if let Covariance::LowRank { .. } = self.cov {
            self.cov = Covariance::Dense(self.covariance());
        }
    }

    fn cov_times(&self, phi: &DVector<f64>) -> DVector<f64> {
        match &self.cov {
            Covariance::Dense(p) => p * phi,
            Covariance::LowRank {
                diag,
                factors,
                weights,
            } => {
                let mut out = phi * *diag;
                for (u, w) in factors.iter().zip(weights) {
                    out.axpy(-w * u.dot(phi), u, 1.0);
                }
                out
            }
        }
    }

    /// Latent predictive moments of `f = φᵀθ`.
    pub fn predict_f(&self, phi: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(self.dim(), phi.len())?;
        let mean = phi.dot(&self.mean);
        let var = phi.dot(&self.cov_times(phi)).max(0.0);
        Ok((mean, var))
    }

    /// Propagates the belief through one step of `dynamics`.
    pub fn predict_step(&mut self, dynamics: &Dynamics) -> Result<()> {
        dynamics.validate(self.dim())?;
        match dynamics {
            Dynamics::Static => {}
            Dynamics::RandomWalk { sigma_rw2 } => match &mut self.cov {
                Covariance::Dense(p) => {
                    for i in 0..p.nrows() {
                        p[(i, i)] += sigma_rw2;
                    }
                }
                Covariance::LowRank { diag, .. } => *diag += sigma_rw2,
            },
            Dynamics::BackToPrior {
                lambda,
                prior_variance,
            } => {
                self.mean *= lambda.sqrt();
                let fresh = (1.0 - lambda) * prior_variance;
                match &mut self.cov {
                    Covariance::Dense(p) => {
                        *p *= *lambda;
                        for i in 0..p.nrows() {
                            p[(i, i)] += fresh;
                        }
                    }
                    Covariance::LowRank {
                        diag,
                        factors,
                        weights,
                    } => {
                        *diag = *lambda * *diag + fresh;
                        if *lambda == 0.0 {
                            factors.clear();
                            weights.clear();
                        } else {
                            weights.iter_mut().for_each(|w| *w *= lambda);
                        }
                    }
                }
            }
            Dynamics::General { a, u, c } => {
                self.mean *= *a;
                self.mean += u;
                let a2 = a * a;
                match scaled_identity(c) {
                    Some(extra) if self.low_rank().is_some() => {
                        if let Covariance::LowRank { diag, weights, .. } = &mut self.cov {
                            *diag = a2 * *diag + extra;
                            weights.iter_mut().for_each(|w| *w *= a2);
                        }
                    }
                    _ => {
                        self.densify();
                        if let Covariance::Dense(p) = &mut self.cov {
                            *p *= a2;
                            *p += c;
                            symmetrize(p);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Conjugate measurement update with a scalar observation.
    ///
    /// Returns the one-step predictive log density
    /// `log N(y | φᵀm, φᵀPφ + σ_ε²)` evaluated before the update.
    pub fn update_step(&mut self, phi: &DVector<f64>, y: f64, noise_var: f64) -> Result<f64> {
        check_dim(self.dim(), phi.len())?;
        if !y.is_finite() {
            return Err(Error::data(0, format!("non-finite observation {y}")));
        }
        if noise_var.is_nan() || noise_var <= 0.0 {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        let pred_mean = phi.dot(&self.mean);
        let v = self.cov_times(phi);
        let latent_var = phi.dot(&v).max(0.0);
        let s = latent_var + noise_var;
        let loglik = log_normal_pdf(y, pred_mean, s);
        self.mean.axpy((y - pred_mean) / s, &v, 1.0);
        let n = self.dim();
        match &mut self.cov {
            Covariance::Dense(p) => joseph_rank_one(p, &v, s),
            Covariance::LowRank {
                factors, weights, ..
            } => {
                factors.push(v);
                weights.push(1.0 / s);
                if 2 * factors.len() >= n {
                    self.densify();
                }
            }
        }
        Ok(loglik)
    }

    /// Laplace-style update for a non-Gaussian likelihood.
    ///
    /// The 1-D marginal of `f = φᵀθ` is conditioned on `y` by Newton
    /// iteration; the resulting Gaussian is re-expressed as a pseudo
    /// observation `(ŷ, σ̂²)` and applied with [`GaussianBelief::update_step`].
    /// Returns the Laplace summary, whose `log_evidence` is an approximate
    /// predictive log density.
    pub fn update_nonconjugate(
        &mut self,
        phi: &DVector<f64>,
        y: f64,
        lik: Likelihood,
    ) -> Result<Laplace1d> {
        let (m0, v0) = self.predict_f(phi)?;
        let lap = laplace_1d(m0, v0, y, lik)?;
        let curvature = 1.0 / lap.variance - 1.0 / v0;
        if curvature > 0.0 && curvature.is_finite() {
            let pseudo_var = 1.0 / curvature;
            let pseudo_y = lap.mode + pseudo_var * (lap.mode - m0) / v0;
            self.update_step(phi, pseudo_y, pseudo_var)?;
        }
        Ok(lap)
    }
}
