//! Finite basis expansions of stationary GP priors.
//!
//! Both maps turn `f ~ GP(0, κ)` into `f(x) ≈ φ(x)ᵀθ` with an isotropic
//! Gaussian prior on θ whose variance is [`FeatureMap::prior_variance`]:
//!
//! * random Fourier features keep σ_f² in the prior and carry the `√(2/F)`
//!   scale in φ, so `φ(x)ᵀφ(x) = 1`;
//! * the Hilbert-space basis folds `√S(ω_k)` into φ. Under the angular
//!   convention `κ(r) = ∫ e^{isr} S(s) ds` the eigen-sum reproduces κ/(2π),
//!   so its weight prior has variance 2π.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{Kernel, Smoothness};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Rff(RffMap),
    Hsgp(HsgpMap),
}

/// Random Fourier features: `F/2` sampled spectral frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// `F/2 × D`, one frequency per row.
    frequencies: DMatrix<f64>,
    seed: u64,
    prior_variance: f64,
}

/// Hilbert-space eigenbasis on `[−L, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsgpMap {
    halfwidth: f64,
    /// `√S(kπ/(2L))` for k = 1..F.
    spectral_weights: Vec<f64>,
}

impl RffMap {
    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl HsgpMap {
    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn spectral_weights(&self) -> &[f64] {
        &self.spectral_weights
    }

    /// ω_k = kπ/(2L).
    pub fn eigenfrequency(&self, k: usize) -> f64 {
        k as f64 * PI / (2.0 * self.halfwidth)
    }
}

fn draw_matern_frequency(
    rng: &mut ChaCha8Rng,
    smoothness: Smoothness,
    lengthscale: f64,
    out: &mut [f64],
) {
    // Matérn-ν spectra are multivariate Student-t with 2ν degrees of freedom:
    // s = λ g / √χ²_{2ν}, g ~ N(0, I).
    let lambda = smoothness.rate(lengthscale);
    let chi = ChiSquared::new(2.0 * smoothness.nu()).expect("positive degrees of freedom");
    let scale = lambda / chi.sample(rng).sqrt();
    for v in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = scale * g;
    }
}

impl FeatureMap {
    /// Samples `num_features / 2` frequencies from the kernel's normalized PSD.
    pub fn sample_rff(
        kernel: &Kernel,
        num_features: usize,
        input_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        kernel.validate()?;
        if num_features < 2 || !num_features.is_multiple_of(2) {
            return Err(Error::config(format!(
                "random Fourier features need an even count >= 2, got {num_features}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::config("input dimension must be positive"));
        }
        let half = num_features / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freqs = DMatrix::zeros(half, input_dim);
        let mut row = vec![0.0; input_dim];
        for i in 0..half {
            match kernel {
                Kernel::SquaredExponential { lengthscale, .. } => {
                    for v in row.iter_mut() {
                        let g: f64 = rng.sample(StandardNormal);
                        *v = g / lengthscale;
                    }
                }
                Kernel::Matern12 { lengthscale, .. } => {
                    draw_matern_frequency(&mut rng, Smoothness::Half, *lengthscale, &mut row)
                }
                Kernel::Matern32 { lengthscale, .. } => {
                    draw_matern_frequency(&mut rng, Smoothness::ThreeHalves, *lengthscale, &mut row)
                }
                Kernel::SpectralMixture(cs) => {
                    if input_dim != 1 {
                        return Err(Error::unsupported(
                            "spectral mixture features are defined for scalar inputs only",
                        ));
                    }
                    let total: f64 = cs.iter().map(|c| c.weight).sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = &cs[cs.len() - 1];
                    for c in cs {
                        if u < c.weight {
                            pick = c;
                            break;
                        }
                        u -= c.weight;
                    }
                    let g: f64 = rng.sample(StandardNormal);
                    let s = pick.mean_frequency + pick.frequency_variance.sqrt() * g;
                    row[0] = if rng.random::<bool>() { s } else { -s };
                }
                Kernel::HidaMaternMixture(_) => {
                    return Err(Error::unsupported(
                        "random Fourier features for Hida-Matérn mixtures",
                    ))
                }
            }
            freqs.row_mut(i).copy_from_slice(&row);
        }
        Ok(FeatureMap::Rff(RffMap {
            frequencies: freqs,
            seed,
            prior_variance: kernel.total_variance(),
        }))
    }

    /// Deterministic eigenbasis with `num_features` sinusoids on `[−L, L]`.
    pub fn hsgp(kernel: &Kernel, num_features: usize, halfwidth: f64) -> Result<Self> {
        kernel.validate()?;
        if num_features == 0 {
            return Err(Error::config("HSGP needs at least one basis function"));
        }
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(Error::config(format!(
                "HSGP domain half-width must be positive, got {halfwidth}"
            )));
        }
        let spectral_weights = (1..=num_features)
            .map(|k| kernel.psd_1d(k as f64 * PI / (2.0 * halfwidth)).sqrt())
            .collect();
        Ok(FeatureMap::Hsgp(HsgpMap {
            halfwidth,
            spectral_weights,
        }))
    }

    /// Default HSGP half-width: four times the largest observed |x|.
    pub fn default_halfwidth(xs: &[f64]) -> f64 {
        let m = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m > 0.0 {
            4.0 * m
        } else {
            1.0
        }
    }

    /// Number of features F.
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => 2 * m.frequencies.nrows(),
            FeatureMap::Hsgp(m) => m.spectral_weights.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Rff(m) => m.frequencies.ncols(),
            FeatureMap::Hsgp(_) => 1,
        }
    }

    /// Prior variance of each weight θ_k.
    pub fn prior_variance(&self) -> f64 {
        match self {
            FeatureMap::Rff(m) => m.prior_variance,
            FeatureMap::Hsgp(_) => 2.0 * PI,
        }
    }

    pub fn featurize(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut out = DVector::zeros(self.dim());
        self.featurize_into(x, &mut out);
        Ok(out)
    }

    /// Writes φ(x) into `out`; dimensions must already match.
    pub fn featurize_into(&self, x: &[f64], out: &mut DVector<f64>) {
        match self {
            FeatureMap::Rff(m) => {
                let half = m.frequencies.nrows();
                let scale = (1.0 / half as f64).sqrt();
                for i in 0..half {
                    let arg: f64 = m
                        .frequencies
                        .row(i)
                        .iter()
                        .zip(x)
                        .map(|(s, xi)| s * xi)
                        .sum();
                    let (sin, cos) = arg.sin_cos();
                    out[2 * i] = scale * sin;
                    out[2 * i + 1] = scale * cos;
                }
            }
            FeatureMap::Hsgp(m) => {
                let l = m.halfwidth;
                let norm = 1.0 / l.sqrt();
                let shifted = x[0] + l;
                for (k, w) in m.spectral_weights.iter().enumerate() {
                    let omega = (k + 1) as f64 * PI / (2.0 * l);
                    out[k] = w * (omega * shifted).sin() * norm;
                }
            }
        }
    }

    /// The degenerate kernel `σ_θ² φ(x)ᵀφ(x′)` implied by the map.
    pub fn implied_kernel(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        Ok(self.prior_variance() * self.featurize(x)?.dot(&self.featurize(x2)?))
    }
}
