use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Kernel, Smoothness};
use crate::linalg::{block_diag, cholesky_escalating, expm, solve_lyapunov, symmetrize};

/// A linear time-invariant SDE `df = F f dt + L dβ`, `E[dβ dβᵀ] = q dt`,
/// observed through `y = H f + ε`, started from its stationary law
/// `N(0, P_inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSde {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// One row per output (one per site for spatiotemporal models).
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p_inf: DMatrix<f64>,
    kron: Option<KronFactor>,
}

/// `Σ_SS ⊗ temporal` structure of a separable spatiotemporal model.
#[derive(Debug, Clone, PartialEq)]
struct KronFactor {
    spatial: DMatrix<f64>,
    temporal: Box<LtiSde>,
}

/// Transition over a step Δ: `f_{t+Δ} = A f_t + N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl LtiSde {
    /// Assembles a model and solves for its stationary covariance.
    pub fn new(f: DMatrix<f64>, l: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let d = f.nrows();
        if f.ncols() != d || l.nrows() != d || h.ncols() != d || q.nrows() != l.ncols() {
            return Err(Error::config("inconsistent state-space matrix shapes"));
        }
        let lql = &l * &q * l.transpose();
        let p_inf = solve_lyapunov(&f, &lql)?;
        Ok(Self {
            f,
            l,
            h,
            q,
            p_inf,
            kron: None,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn num_outputs(&self) -> usize {
        self.h.nrows()
    }

    /// The normalized spatial Gram, for spatiotemporal models.
    pub fn spatial_correlation(&self) -> Option<&DMatrix<f64>> {
        self.kron.as_ref().map(|k| &k.spatial)
    }

    /// `F P + P Fᵀ + L q Lᵀ`; zero for a correct stationary covariance.
    pub fn lyapunov_residual(&self) -> DMatrix<f64> {
        &self.f * &self.p_inf
            + &self.p_inf * self.f.transpose()
            + &self.l * &self.q * self.l.transpose()
    }

    /// Covariance `H exp(FΔ) P_inf Hᵀ` between outputs Δ apart.
    pub fn implied_covariance(&self, delta: f64) -> Result<DMatrix<f64>> {
        let step = discretize(self, delta, &mut 0)?;
        Ok(&self.h * step.a * &self.p_inf * self.h.transpose())
    }
}

fn matern_block(smoothness: Smoothness, variance: f64, lengthscale: f64) -> [DMatrix<f64>; 4] {
    let lambda = smoothness.rate(lengthscale);
    match smoothness {
        Smoothness::Half => [
            DMatrix::from_element(1, 1, -lambda),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0 * lambda * variance),
        ],
        Smoothness::ThreeHalves => [
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda * lambda, -2.0 * lambda]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 4.0 * lambda.powi(3) * variance),
        ],
    }
}

/// Matérn block modulated by `cos(b r)` through a rotating pair of channels.
fn hida_matern_block(c: &crate::kernels::HidaMaternComponent) -> [DMatrix<f64>; 4] {
    let [f, l, h, q] = matern_block(c.smoothness, c.variance, c.lengthscale);
    let root_w = c.weight.sqrt();
    if c.phase == 0.0 {
        return [f, l, h * root_w, q];
    }
    let d = f.nrows();
    let eye2 = DMatrix::<f64>::identity(2, 2);
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -c.phase, c.phase, 0.0]);
    let f_hm = f.kronecker(&eye2) + DMatrix::<f64>::identity(d, d).kronecker(&rot);
    let l_hm = l.kronecker(&eye2);
    let h_hm = h.kronecker(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0])) * root_w;
    let q_hm = q.kronecker(&eye2);
    [f_hm, l_hm, h_hm, q_hm]
}

fn stack(blocks: Vec<[DMatrix<f64>; 4]>) -> Result<LtiSde> {
    let mut fs = Vec::new();
    let mut ls = Vec::new();
    let mut qs = Vec::new();
    let mut ps = Vec::new();
    let mut hs = Vec::new();
    for [f, l, h, q] in blocks {
        let lql = &l * &q * l.transpose();
        ps.push(solve_lyapunov(&f, &lql)?);
        fs.push(f);
        ls.push(l);
        qs.push(q);
        hs.push(h);
    }
    let d: usize = fs.iter().map(|f| f.nrows()).sum();
    let mut h = DMatrix::zeros(1, d);
    let mut col = 0;
    for hb in &hs {
        h.view_mut((0, col), (1, hb.ncols())).copy_from(hb);
        col += hb.ncols();
    }
    Ok(LtiSde {
        f: block_diag(&fs),
        l: block_diag(&ls),
        h,
        q: block_diag(&qs),
        p_inf: block_diag(&ps),
        kron: None,
    })
}

/// State-space form of a Markovian kernel.
///
/// Matérn-1/2 becomes an Ornstein–Uhlenbeck process, Matérn-3/2 a
/// two-dimensional state, and each Hida–Matérn component a Matérn block
/// rotated at its phase; mixtures stack blocks along the diagonal.
pub fn build_lti(kernel: &Kernel) -> Result<LtiSde> {
    kernel.validate()?;
    let blocks = match kernel {
        Kernel::Matern12 {
            variance,
            lengthscale,
        } => vec![matern_block(Smoothness::Half, *variance, *lengthscale)],
        Kernel::Matern32 {
            variance,
            lengthscale,
        } => vec![matern_block(
            Smoothness::ThreeHalves,
            *variance,
            *lengthscale,
        )],
        Kernel::HidaMaternMixture(cs) => cs.iter().map(hida_matern_block).collect(),
        other => {
            return Err(Error::unsupported(format!(
                "{} kernel has no finite-dimensional state-space form",
                other.family_name()
            )))
        }
    };
    stack(blocks)
}

/// Solves `F P + P Fᵀ + L q Lᵀ = 0`.
pub fn stationary_covariance(sde: &LtiSde) -> Result<DMatrix<f64>> {
    solve_lyapunov(&sde.f, &(&sde.l * &sde.q * sde.l.transpose()))
}

/// Exact discretization over a step `delta ≥ 0`. Adds the floating-point
/// operation count to `flops`.
pub fn discretize(sde: &LtiSde, delta: f64, flops: &mut u64) -> Result<DiscreteStep> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::data(
            0,
            format!("time step must be non-negative, got {delta}"),
        ));
    }
    if let Some(k) = &sde.kron {
        let inner = discretize(&k.temporal, delta, flops)?;
        let n = k.spatial.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut q = k.spatial.kronecker(&inner.q);
        symmetrize(&mut q);
        let dt = inner.a.nrows() as u64;
        *flops += (n * n) as u64 * dt * dt * 2;
        return Ok(DiscreteStep {
            a: eye.kronecker(&inner.a),
            q,
        });
    }
    let d = sde.state_dim();
    if delta == 0.0 {
        return Ok(DiscreteStep {
            a: DMatrix::identity(d, d),
            q: DMatrix::zeros(d, d),
        });
    }
    let a = expm(&(&sde.f * delta), flops);
    let mut q = &sde.p_inf - &a * &sde.p_inf * a.transpose();
    symmetrize(&mut q);
    *flops += 4 * (d * d * d) as u64 + (d * d) as u64;
    Ok(DiscreteStep { a, q })
}

/// Separable space-time model on fixed sites.
///
/// The state stacks one copy of the temporal state per site (site-major),
/// so the process noise over a step is `Σ_SS ⊗ Q_t(Δ)` with `Σ_SS` the
/// spatial Gram scaled to unit diagonal. The temporal kernel carries the
/// variance. Output row `i` reads the leading component at site `i`.
pub fn build_spatiotemporal(
    temporal: &Kernel,
    spatial: &Kernel,
    locations: &[Vec<f64>],
) -> Result<LtiSde> {
    if locations.is_empty() {
        return Err(Error::config(
            "spatiotemporal model needs at least one site",
        ));
    }
    let base = build_lti(temporal)?;
    let gram = spatial.gram_symmetric(locations)?;
    let n = locations.len();
    let spatial_corr = DMatrix::from_fn(n, n, |i, j| {
        gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt()
    });
    cholesky_escalating(&spatial_corr)
        .map_err(|e| Error::numerical(format!("spatial Gram: {e}")))?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut p_inf = spatial_corr.kronecker(&base.p_inf);
    symmetrize(&mut p_inf);
    Ok(LtiSde {
        f: eye.kronecker(&base.f),
        l: eye.kronecker(&base.l),
        h: eye.kronecker(&base.h),
        q: spatial_corr.kronecker(&base.q),
        p_inf,
        kron: Some(KronFactor {
            spatial: spatial_corr,
            temporal: Box::new(base),
        }),
    })
}
