//! Sequential inference over a fixed set of inducing variables `u = f(Z)`.
//!
//! The posterior over `u` is `N(m, S)`. New observations enter through
//! `h = K_uu⁻¹ k(Z, x)`, so each step costs O(M²) regardless of how much
//! data has been seen.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{distance, input_dim, Kernel};
use crate::linalg::{cholesky_escalating, joseph_rank_one, log_normal_pdf, symmetrize, Chol};

#[derive(Debug, Clone)]
pub struct SparseState {
    kernel: Kernel,
    inducing: Vec<Vec<f64>>,
    kuu: DMatrix<f64>,
    chol: Chol,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    include_residual: bool,
    flops: u64,
}

/// Quantities tied to one input location.
struct Projection {
    /// `K_uu⁻¹ k(Z, x)`
    h: DVector<f64>,
    /// `κ(x, x) − k(Z, x)ᵀ K_uu⁻¹ k(Z, x)`
    residual: f64,
}

impl SparseState {
    /// Prior state `m = 0`, `S = K_uu` (plus jitter).
    ///
    /// With `include_residual` the conditional variance of `f(x)` given `u`
    /// is added to predictions and to the effective observation noise.
    pub fn new(kernel: &Kernel, inducing: &[Vec<f64>], include_residual: bool) -> Result<Self> {
        kernel.validate()?;
        if inducing.is_empty() {
            return Err(Error::config("need at least one inducing input"));
        }
        input_dim(inducing)?;
        let min_sep = 1e-8 * kernel.characteristic_lengthscale();
        for i in 0..inducing.len() {
            if inducing[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("inducing input {i} is not finite")));
            }
            for j in 0..i {
                if distance(&inducing[i], &inducing[j]) <= min_sep {
                    return Err(Error::config(format!(
                        "inducing inputs {j} and {i} coincide"
                    )));
                }
            }
        }
        let mut kuu = kernel.gram_symmetric(inducing)?;
        let jitter = kernel.jitter();
        for i in 0..kuu.nrows() {
            kuu[(i, i)] += jitter;
        }
        let (chol, extra) = cholesky_escalating(&kuu)?;
        for i in 0..kuu.nrows() {
            kuu[(i, i)] += extra;
        }
        let m = inducing.len();
        Ok(Self {
            kernel: kernel.clone(),
            inducing: inducing.to_vec(),
            cov: kuu.clone(),
            kuu,
            chol,
            mean: DVector::zeros(m),
            include_residual,
            flops: 0,
        })
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn inducing_inputs(&self) -> &[Vec<f64>] {
        &self.inducing
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn include_residual(&self) -> bool {
        self.include_residual
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Prior Gram `K_uu` including jitter.
    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.kuu
    }

    /// Cumulative floating-point operation count of updates.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    fn project(&self, x: &[f64]) -> Result<Projection> {
        check_dim(self.inducing[0].len(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(0, "non-finite input"));
        }
        let k = DVector::from_iterator(
            self.inducing.len(),
            self.inducing.iter().map(|z| self.kernel.eval(z, x)),
        );
        let h = self.chol.solve(&k);
        let residual = (self.kernel.eval(x, x) - k.dot(&h)).max(0.0);
        Ok(Projection { h, residual })
    }

    fn effective_noise(&self, p: &Projection, noise_var: f64) -> f64 {
        if self.include_residual {
            noise_var + p.residual
        } else {
            noise_var
        }
    }

    /// Latent predictive mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.project(x)?;
        let mean = p.h.dot(&self.mean);
        let mut var = p.h.dot(&(&self.cov * &p.h)).max(0.0);
        if self.include_residual {
            var += p.residual;
        }
        Ok((mean, var))
    }

    /// Kalman-style update with one observation; returns the one-step
    /// predictive log density of `y`.
    pub fn update(&mut self, x: &[f64], y: f64, noise_var: f64) -> Result<f64> {
        check_noise(noise_var)?;
        if !y.is_finite() {
            return Err(Error::data(0, format!("non-finite observation {y}")));
        }
        let p = self.project(x)?;
        let v = &self.cov * &p.h;
        let pred = p.h.dot(&self.mean);
        let s = p.h.dot(&v).max(0.0) + self.effective_noise(&p, noise_var);
        let ll = log_normal_pdf(y, pred, s);
        self.mean.axpy((y - pred) / s, &v, 1.0);
        joseph_rank_one(&mut self.cov, &v, s);
        self.flops += step_flops(self.inducing.len(), x.len());
        Ok(ll)
    }

    /// Information-form update with a batch of observations.
    ///
    /// Works in whitened coordinates `u = L v` with `K_uu = L Lᵀ`, where each
    /// observation adds `g gᵀ / r` (`g = L⁻¹ k`) to the precision of `v`.
    pub fn info_update(&mut self, xs: &[Vec<f64>], ys: &[f64], noise_var: f64) -> Result<()> {
        check_noise(noise_var)?;
        if xs.is_empty() {
            return Err(Error::config("information update needs a non-empty batch"));
        }
        check_dim(xs.len(), ys.len())?;
        let l = self.chol.l();
        let m = self.inducing.len();
        // Current belief in whitened coordinates.
        let mut mv = self.mean.clone();
        l.solve_lower_triangular_mut(&mut mv);
        let mut sv = self.cov.clone();
        l.solve_lower_triangular_mut(&mut sv);
        let mut svt = sv.transpose();
        l.solve_lower_triangular_mut(&mut svt);
        symmetrize(&mut svt);
        let (sv_chol, _) = cholesky_escalating(&svt)
            .map_err(|e| Error::numerical(format!("current covariance: {e}")))?;
        let mut precision = sv_chol.inverse();
        let mut shift = &precision * &mv;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            if !y.is_finite() {
                return Err(Error::data(i, format!("non-finite observation {y}")));
            }
            let p = self.project(x).map_err(|e| match e {
                Error::Data { message, .. } => Error::data(i, message),
                other => other,
            })?;
            let r = self.effective_noise(&p, noise_var);
            let g = l.transpose() * &p.h;
            precision.ger(1.0 / r, &g, &g, 1.0);
            shift.axpy(y / r, &g, 1.0);
        }
        symmetrize(&mut precision);
        let (chol, _) = cholesky_escalating(&precision)
            .map_err(|e| Error::numerical(format!("information matrix: {e}")))?;
        let new_sv = chol.inverse();
        let new_mv = chol.solve(&shift);
        self.mean = &l * new_mv;
        let mut cov = &l * new_sv * l.transpose();
        symmetrize(&mut cov);
        self.cov = cov;
        self.flops += xs.len() as u64 * step_flops(m, xs[0].len());
        Ok(())
    }
}

fn step_flops(m: usize, dim: usize) -> u64 {
    let (m, dim) = (m as u64, dim as u64);
    // kernel column, two triangular solves, S h, rank-one correction
    m * (3 * dim + 10) + 2 * m * m + 2 * m * m + 6 * m * m + 6 * m
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "noise variance must be positive, got {noise_var}"
        )))
    }
}

/// Picks `m` inducing inputs from observed inputs.
///
/// Scalar inputs use evenly spaced sample quantiles; higher-dimensional inputs
/// use k-means++ seeding refined by a few Lloyd iterations, driven by `seed`.
pub fn select_inducing(xs: &[Vec<f64>], m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::config("number of inducing inputs must be positive"));
    }
    if xs.len() < m {
        return Err(Error::config(format!(
            "cannot choose {m} inducing inputs from {} points",
            xs.len()
        )));
    }
    let dim = input_dim(xs)?;
    if dim == 1 {
        let mut sorted: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        return Ok((0..m)
            .map(|i| {
                let pos = (i as f64 + 0.5) / m as f64 * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                let frac = pos - lo as f64;
                vec![sorted[lo] + frac * (sorted[hi] - sorted[lo])]
            })
            .collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![xs[rng.random_range(0..xs.len())].clone()];
    let mut d2: Vec<f64> = xs
        .iter()
        .map(|x| distance(x, &centers[0]).powi(2))
        .collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = xs.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..xs.len())
        };
        centers.push(xs[next].clone());
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(distance(x, &centers[centers.len() - 1]).powi(2));
        }
    }
    for _ in 0..10 {
        let mut sums = vec![vec![0.0; dim]; m];
        let mut counts = vec![0usize; m];
        for x in xs {
            let c = (0..m)
                .min_by(|&a, &b| distance(x, &centers[a]).total_cmp(&distance(x, &centers[b])))
                .unwrap_or(0);
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(centers)
}
