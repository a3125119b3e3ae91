//! Stationary covariance functions and their power spectral densities.
//!
//! All kernels are isotropic in the Euclidean distance `r = ‖x − x′‖`.
//! Spectral densities use the angular-frequency convention
//!
//! ```text
//! κ(r) = ∫ exp(i sᵀr) S(s) ds
//! ```
//!
//! so that `∫ S(s) ds = κ(0)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Smoothness of a half-integer Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// ν = 1/2, the Ornstein–Uhlenbeck kernel.
    Half,
    /// ν = 3/2.
    ThreeHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
        }
    }

    /// λ such that the kernel profile is a polynomial in λr times `exp(−λr)`.
    pub fn rate(self, lengthscale: f64) -> f64 {
        match self {
            Smoothness::Half => 1.0 / lengthscale,
            Smoothness::ThreeHalves => 3f64.sqrt() / lengthscale,
        }
    }

    /// Correlation at distance `r` (unit variance).
    pub fn correlation(self, lengthscale: f64, r: f64) -> f64 {
        let lr = self.rate(lengthscale) * r;
        match self {
            Smoothness::Half => (-lr).exp(),
            Smoothness::ThreeHalves => (1.0 + lr) * (-lr).exp(),
        }
    }

    /// Spectral density of the unit-variance kernel in `dim` input dimensions
    /// evaluated at squared frequency norm `s2`.
    pub fn spectral_density(self, lengthscale: f64, s2: f64, dim: usize) -> f64 {
        let nu = self.nu();
        let lambda = self.rate(lengthscale);
        let half_d = dim as f64 / 2.0;
        let c = gamma_half_integer(nu + half_d) / (gamma_half_integer(nu) * PI.powf(half_d));
        c * lambda.powf(2.0 * nu) / (lambda * lambda + s2).powf(nu + half_d)
    }
}

/// One Gaussian bump of a spectral-mixture PSD, mirrored to ±μ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralComponent {
    pub weight: f64,
    pub mean_frequency: f64,
    pub frequency_variance: f64,
}

/// One cosine-modulated Matérn term of a Hida–Matérn mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HidaMaternComponent {
    pub weight: f64,
    /// Phase shift `b` in radians per unit input.
    pub phase: f64,
    pub smoothness: Smoothness,
    pub lengthscale: f64,
    pub variance: f64,
}

/// A stationary covariance function.
///
/// Build through the checked constructors; every engine entry point calls
/// [`Kernel::validate`] again before use.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    SquaredExponential { variance: f64, lengthscale: f64 },
    Matern12 { variance: f64, lengthscale: f64 },
    Matern32 { variance: f64, lengthscale: f64 },
    SpectralMixture(Vec<SpectralComponent>),
    HidaMaternMixture(Vec<HidaMaternComponent>),
}

impl Kernel {
    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        let k = Kernel::SquaredExponential {
            variance,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn matern12(variance: f64, lengthscale: f64) -> Result<Self> {
        let k = Kernel::Matern12 {
            variance,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn matern32(variance: f64, lengthscale: f64) -> Result<Self> {
        let k = Kernel::Matern32 {
            variance,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn spectral_mixture(components: Vec<SpectralComponent>) -> Result<Self> {
        let k = Kernel::SpectralMixture(components);
        k.validate()?;
        Ok(k)
    }

    pub fn hida_matern(components: Vec<HidaMaternComponent>) -> Result<Self> {
        let k = Kernel::HidaMaternMixture(components);
        k.validate()?;
        Ok(k)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Kernel::SquaredExponential { .. } => "se",
            Kernel::Matern12 { .. } => "matern12",
            Kernel::Matern32 { .. } => "matern32",
            Kernel::SpectralMixture(_) => "sm",
            Kernel::HidaMaternMixture(_) => "hm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        }
        fn nonneg(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{name} must be non-negative, got {v}"
                )))
            }
        }
        match self {
            Kernel::SquaredExponential {
                variance,
                lengthscale,
            }
            | Kernel::Matern12 {
                variance,
                lengthscale,
            }
            | Kernel::Matern32 {
                variance,
                lengthscale,
            } => {
                positive("variance", *variance)?;
                positive("lengthscale", *lengthscale)
            }
            Kernel::SpectralMixture(cs) => {
                if cs.is_empty() {
                    return Err(Error::config(
                        "spectral mixture needs at least one component",
                    ));
                }
                for c in cs {
                    nonneg("component weight", c.weight)?;
                    if !c.mean_frequency.is_finite() {
                        return Err(Error::config("component mean frequency must be finite"));
                    }
                    positive("component frequency variance", c.frequency_variance)?;
                }
                positive("total weight", cs.iter().map(|c| c.weight).sum())
            }
            Kernel::HidaMaternMixture(cs) => {
                if cs.is_empty() {
                    return Err(Error::config(
                        "Hida-Matérn mixture needs at least one component",
                    ));
                }
                for c in cs {
                    nonneg("component weight", c.weight)?;
                    nonneg("component phase", c.phase)?;
                    positive("component lengthscale", c.lengthscale)?;
                    positive("component variance", c.variance)?;
                }
                positive(
                    "total variance",
                    cs.iter().map(|c| c.weight * c.variance).sum(),
                )
            }
        }
    }

    /// κ(x, x): σ_f² for single kernels, the weighted sum for mixtures.
    pub fn total_variance(&self) -> f64 {
        match self {
            Kernel::SquaredExponential { variance, .. }
            | Kernel::Matern12 { variance, .. }
            | Kernel::Matern32 { variance, .. } => *variance,
            Kernel::SpectralMixture(cs) => cs.iter().map(|c| c.weight).sum(),
            Kernel::HidaMaternMixture(cs) => cs.iter().map(|c| c.weight * c.variance).sum(),
        }
    }

    /// A representative correlation length, used for distance thresholds.
    pub fn characteristic_lengthscale(&self) -> f64 {
        match self {
            Kernel::SquaredExponential { lengthscale, .. }
            | Kernel::Matern12 { lengthscale, .. }
            | Kernel::Matern32 { lengthscale, .. } => *lengthscale,
            Kernel::SpectralMixture(cs) => cs
                .iter()
                .map(|c| 1.0 / c.frequency_variance.sqrt())
                .fold(f64::INFINITY, f64::min),
            Kernel::HidaMaternMixture(cs) => cs
                .iter()
                .map(|c| c.lengthscale)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Covariance as a function of distance `r ≥ 0`.
    pub fn eval_distance(&self, r: f64) -> f64 {
        match self {
            Kernel::SquaredExponential {
                variance,
                lengthscale,
            } => variance * (-0.5 * (r / lengthscale).powi(2)).exp(),
            Kernel::Matern12 {
                variance,
                lengthscale,
            } => variance * Smoothness::Half.correlation(*lengthscale, r),
            Kernel::Matern32 {
                variance,
                lengthscale,
            } => variance * Smoothness::ThreeHalves.correlation(*lengthscale, r),
            Kernel::SpectralMixture(cs) => cs
                .iter()
                .map(|c| {
                    c.weight
                        * (-0.5 * c.frequency_variance * r * r).exp()
                        * (c.mean_frequency * r).cos()
                })
                .sum(),
            Kernel::HidaMaternMixture(cs) => cs
                .iter()
                .map(|c| c.weight * hida_matern_component(c, r))
                .sum(),
        }
    }

    /// κ(x, x2).
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), x2.len());
        self.eval_distance(distance(x, x2))
    }

    /// Checked variant of [`Kernel::eval`].
    pub fn try_eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.validate()?;
        check_dim(x.len(), x2.len())?;
        Ok(self.eval(x, x2))
    }

    /// Spectral density at a 1-D angular frequency.
    pub fn psd_1d(&self, s: f64) -> f64 {
        match self {
            Kernel::SquaredExponential {
                variance,
                lengthscale,
            } => {
                variance * lengthscale / (2.0 * PI).sqrt()
                    * (-0.5 * (lengthscale * s).powi(2)).exp()
            }
            Kernel::Matern12 {
                variance,
                lengthscale,
            } => variance * Smoothness::Half.spectral_density(*lengthscale, s * s, 1),
            Kernel::Matern32 {
                variance,
                lengthscale,
            } => variance * Smoothness::ThreeHalves.spectral_density(*lengthscale, s * s, 1),
            Kernel::SpectralMixture(cs) => cs
                .iter()
                .map(|c| {
                    0.5 * c.weight
                        * (normal_pdf(s, c.mean_frequency, c.frequency_variance)
                            + normal_pdf(s, -c.mean_frequency, c.frequency_variance))
                })
                .sum(),
            Kernel::HidaMaternMixture(cs) => cs
                .iter()
                .map(|c| {
                    let m = |u: f64| {
                        c.variance * c.smoothness.spectral_density(c.lengthscale, u * u, 1)
                    };
                    0.5 * c.weight * (m(s - c.phase) + m(s + c.phase))
                })
                .sum(),
        }
    }

    /// Spectral density at an angular frequency vector of any dimension.
    ///
    /// Mixture kernels are defined on scalar inputs only.
    pub fn psd(&self, s: &[f64]) -> Result<f64> {
        self.validate()?;
        if s.len() == 1 {
            return Ok(self.psd_1d(s[0]));
        }
        let s2: f64 = s.iter().map(|v| v * v).sum();
        let dim = s.len();
        match self {
            Kernel::SquaredExponential {
                variance,
                lengthscale,
            } => Ok(variance
                * (lengthscale * lengthscale / (2.0 * PI)).powf(dim as f64 / 2.0)
                * (-0.5 * lengthscale * lengthscale * s2).exp()),
            Kernel::Matern12 {
                variance,
                lengthscale,
            } => Ok(variance * Smoothness::Half.spectral_density(*lengthscale, s2, dim)),
            Kernel::Matern32 {
                variance,
                lengthscale,
            } => Ok(variance * Smoothness::ThreeHalves.spectral_density(*lengthscale, s2, dim)),
            Kernel::SpectralMixture(_) | Kernel::HidaMaternMixture(_) => Err(Error::unsupported(
                "mixture kernel spectral densities are defined for scalar inputs only",
            )),
        }
    }

    /// Gram matrix with entry (i, j) = κ(xs[i], ys[j]).
    pub fn gram(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.validate()?;
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::config("gram needs non-empty point lists"));
        }
        let dim = input_dim(xs)?;
        check_dim(dim, input_dim(ys)?)?;
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            self.eval(&xs[i], &ys[j])
        }))
    }

    /// Symmetric Gram matrix of one point list; fills both triangles from one.
    pub fn gram_symmetric(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.validate()?;
        if xs.is_empty() {
            return Err(Error::config("gram needs a non-empty point list"));
        }
        input_dim(xs)?;
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval(&xs[i], &xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Diagonal jitter applied before factorizing a bare Gram matrix.
    pub fn jitter(&self) -> f64 {
        GRAM_JITTER * self.total_variance()
    }
}

/// Relative jitter for Gram factorizations.
pub const GRAM_JITTER: f64 = 1e-8;

fn hida_matern_component(c: &HidaMaternComponent, r: f64) -> f64 {
    c.variance * (c.phase * r).cos() * c.smoothness.correlation(c.lengthscale, r)
}

pub(crate) fn distance(x: &[f64], x2: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Shared input dimension of a point list.
pub fn input_dim(xs: &[Vec<f64>]) -> Result<usize> {
    let dim = xs.first().map_or(0, Vec::len);
    for (i, x) in xs.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::data(
                i,
                format!("point has dimension {}, expected {dim}", x.len()),
            ));
        }
    }
    Ok(dim)
}

/// Wraps scalar inputs as a point list.
pub fn points_1d(ts: &[f64]) -> Vec<Vec<f64>> {
    ts.iter().map(|&t| vec![t]).collect()
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Γ(x) for positive integer or half-integer `x`.
fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round();
    debug_assert!((2.0 * x - twice).abs() < 1e-12 && twice >= 1.0);
    let (mut acc, mut v) = if twice as i64 % 2 == 0 {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while v < x - 1e-9 {
        acc *= v;
        v += 1.0;
    }
    acc
}
