//! A common streaming interface over the inference engines.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::exact::ExactGp;
use crate::features::FeatureMap;
use crate::kernels::Kernel;
use crate::linalg::log_normal_pdf;
use crate::linear_filter::{Dynamics, GaussianBelief, Likelihood};
use crate::markov::{LtiSde, MarkovFilter};
use crate::sparse::SparseState;

/// One-step-ahead prediction of the latent function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub mean: f64,
    /// Variance of the latent value, excluding observation noise.
    pub latent_var: f64,
    /// Gaussian observation noise; zero for non-Gaussian likelihoods.
    pub noise_var: f64,
}

impl Predictive {
    pub fn obs_var(&self) -> f64 {
        self.latent_var + self.noise_var
    }

    pub fn log_density(&self, y: f64) -> f64 {
        log_normal_pdf(y, self.mean, self.obs_var())
    }
}

/// Result of one prequential step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    /// Prediction made before seeing `y`.
    pub predictive: Predictive,
    /// `log p(y | past)`, `None` for predict-only steps.
    pub log_density: Option<f64>,
    /// Whether `log_density` is a Laplace approximation.
    pub approximate: bool,
}

/// A model that consumes a stream one record at a time.
///
/// [`SequentialModel::step`] advances any dynamics to the new record,
/// predicts at `x`, and only then conditions on `y`, so the emitted
/// prediction never depends on `y`.
pub trait SequentialModel: Send {
    fn input_dim(&self) -> usize;

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput>;

    /// Cumulative floating-point operation count, where tracked.
    fn flops(&self) -> u64 {
        0
    }
}

/// Basis-expansion model filtered in weight space.
#[derive(Debug, Clone)]
pub struct LinearFilterModel {
    map: FeatureMap,
    belief: GaussianBelief,
    dynamics: Dynamics,
    noise_var: f64,
    likelihood: Option<Likelihood>,
    phi: DVector<f64>,
}

impl LinearFilterModel {
    /// Gaussian-likelihood model with prior `N(0, prior_variance(map) I)`.
    pub fn new(map: FeatureMap, dynamics: Dynamics, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Self::build(map, dynamics, noise_var, None)
    }

    /// Model with a non-Gaussian likelihood, updated by Laplace steps.
    pub fn with_likelihood(map: FeatureMap, dynamics: Dynamics, lik: Likelihood) -> Result<Self> {
        Self::build(map, dynamics, 0.0, Some(lik))
    }

    fn build(
        map: FeatureMap,
        dynamics: Dynamics,
        noise_var: f64,
        likelihood: Option<Likelihood>,
    ) -> Result<Self> {
        dynamics.validate(map.dim())?;
        let belief = GaussianBelief::prior(map.dim(), map.prior_variance())?;
        Ok(Self {
            phi: DVector::zeros(map.dim()),
            map,
            belief,
            dynamics,
            noise_var,
            likelihood,
        })
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }
}

impl SequentialModel for LinearFilterModel {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        check_dim(self.map.input_dim(), x.len())?;
        self.map.featurize_into(x, &mut self.phi);
        self.belief.predict_step(&self.dynamics)?;
        let (mean, latent_var) = self.belief.predict_f(&self.phi)?;
        let predictive = Predictive {
            mean,
            latent_var,
            noise_var: self.noise_var,
        };
        let (log_density, approximate) = match (y, self.likelihood) {
            (None, _) => (None, false),
            (Some(y), None) => (
                Some(self.belief.update_step(&self.phi, y, self.noise_var)?),
                false,
            ),
            (Some(y), Some(lik)) => (
                Some(
                    self.belief
                        .update_nonconjugate(&self.phi, y, lik)?
                        .log_evidence,
                ),
                true,
            ),
        };
        Ok(StepOutput {
            predictive,
            log_density,
            approximate,
        })
    }
}

/// Markovian GP over time. Inputs are `[t]`, or `[t, site]` for
/// spatiotemporal models with one output per site.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    filter: MarkovFilter,
    noise_var: f64,
}

impl MarkovModel {
    pub fn new(sde: LtiSde, noise_var: f64) -> Result<Self> {
        Ok(Self {
            filter: MarkovFilter::new(sde, noise_var)?,
            noise_var,
        })
    }

    pub fn filter(&self) -> &MarkovFilter {
        &self.filter
    }

    fn row(&self, x: &[f64]) -> Result<usize> {
        check_dim(self.input_dim(), x.len())?;
        if x.len() == 1 {
            return Ok(0);
        }
        let site = x[1];
        if site < 0.0 || site.fract() != 0.0 || site >= self.filter.sde().num_outputs() as f64 {
            return Err(Error::data(0, format!("unknown site {site}")));
        }
        Ok(site as usize)
    }
}

impl SequentialModel for MarkovModel {
    fn input_dim(&self) -> usize {
        if self.filter.sde().num_outputs() == 1 {
            1
        } else {
            2
        }
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        let row = self.row(x)?;
        if self.filter.time() != Some(x[0]) {
            self.filter.advance(x[0])?;
        }
        let (mean, latent_var) = self.filter.predict_output(row)?;
        let log_density = y.map(|y| self.filter.observe(row, y)).transpose()?;
        Ok(StepOutput {
            predictive: Predictive {
                mean,
                latent_var,
                noise_var: self.noise_var,
            },
            log_density,
            approximate: false,
        })
    }

    fn flops(&self) -> u64 {
        self.filter.flops()
    }
}

/// Recursive sparse GP.
#[derive(Debug, Clone)]
pub struct SparseModel {
    state: SparseState,
    noise_var: f64,
}

impl SparseModel {
    pub fn new(state: SparseState, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self { state, noise_var })
    }

    pub fn state(&self) -> &SparseState {
        &self.state
    }
}

impl SequentialModel for SparseModel {
    fn input_dim(&self) -> usize {
        self.state.inducing_inputs()[0].len()
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        let (mean, latent_var) = self.state.predict(x)?;
        let log_density = y
            .map(|y| self.state.update(x, y, self.noise_var))
            .transpose()?;
        Ok(StepOutput {
            predictive: Predictive {
                mean,
                latent_var,
                noise_var: self.noise_var,
            },
            log_density,
            approximate: false,
        })
    }

    fn flops(&self) -> u64 {
        self.state.flops()
    }
}

/// Streaming variational sparse GP: predictions come from the current
/// state, and observations are folded in by information updates once
/// `batch` of them have accumulated.
#[derive(Debug, Clone)]
pub struct VsgpModel {
    state: SparseState,
    noise_var: f64,
    batch: usize,
    pending_x: Vec<Vec<f64>>,
    pending_y: Vec<f64>,
}

impl VsgpModel {
    pub fn new(state: SparseState, noise_var: f64, batch: usize) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(Self {
            state,
            noise_var,
            batch,
            pending_x: Vec::new(),
            pending_y: Vec::new(),
        })
    }

    pub fn state(&self) -> &SparseState {
        &self.state
    }

    /// Applies any buffered observations.
    pub fn flush(&mut self) -> Result<()> {
        if self.pending_x.is_empty() {
            return Ok(());
        }
        self.state
            .info_update(&self.pending_x, &self.pending_y, self.noise_var)?;
        self.pending_x.clear();
        self.pending_y.clear();
        Ok(())
    }
}

impl SequentialModel for VsgpModel {
    fn input_dim(&self) -> usize {
        self.state.inducing_inputs()[0].len()
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        let (mean, latent_var) = self.state.predict(x)?;
        let predictive = Predictive {
            mean,
            latent_var,
            noise_var: self.noise_var,
        };
        let log_density = match y {
            None => None,
            Some(y) => {
                if !y.is_finite() {
                    return Err(Error::data(0, format!("non-finite observation {y}")));
                }
                self.pending_x.push(x.to_vec());
                self.pending_y.push(y);
                if self.pending_x.len() >= self.batch {
                    self.flush()?;
                }
                Some(predictive.log_density(y))
            }
        };
        Ok(StepOutput {
            predictive,
            log_density,
            approximate: false,
        })
    }

    fn flops(&self) -> u64 {
        self.state.flops()
    }
}

/// Exact GP refitted on every observation; cubic per step, for short
/// streams and reference runs.
#[derive(Debug, Clone)]
pub struct ExactModel {
    kernel: Kernel,
    noise_var: f64,
    dim: usize,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    fitted: Option<ExactGp>,
}

impl ExactModel {
    pub fn new(kernel: Kernel, noise_var: f64, input_dim: usize) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self {
            kernel,
            noise_var,
            dim: input_dim,
            x: Vec::new(),
            y: Vec::new(),
            fitted: None,
        })
    }
}

impl SequentialModel for ExactModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        check_dim(self.dim, x.len())?;
        let (mean, latent_var) = match &self.fitted {
            Some(gp) => gp.predict_point(x)?,
            None => (0.0, self.kernel.eval(x, x)),
        };
        let predictive = Predictive {
            mean,
            latent_var: latent_var.max(0.0),
            noise_var: self.noise_var,
        };
        let log_density = match y {
            None => None,
            Some(y) => {
                if !y.is_finite() {
                    return Err(Error::data(0, format!("non-finite observation {y}")));
                }
                self.x.push(x.to_vec());
                self.y.push(y);
                self.fitted = Some(ExactGp::fit(
                    &self.kernel,
                    self.noise_var,
                    &self.x,
                    &self.y,
                )?);
                Some(predictive.log_density(y))
            }
        };
        Ok(StepOutput {
            predictive,
            log_density,
            approximate: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::points_1d;
    use crate::markov::build_lti;
    use approx::assert_abs_diff_eq;

    #[test]
    fn predict_only_steps_leave_state_alone() {
        let map = FeatureMap::sample_rff(&Kernel::squared_exponential(1.0, 1.0).unwrap(), 16, 1, 3)
            .unwrap();
        let mut m = LinearFilterModel::new(map, Dynamics::Static, 0.1).unwrap();
        let before = m.belief().clone();
        let out = m.step(&[0.4], None).unwrap();
        assert_eq!(out.log_density, None);
        assert_eq!(m.belief(), &before);
    }

    #[test]
    fn markov_and_exact_models_agree() {
        let kernel = Kernel::matern12(1.0, 0.8).unwrap();
        let mut a = MarkovModel::new(build_lti(&kernel).unwrap(), 0.2).unwrap();
        let mut b = ExactModel::new(kernel, 0.2, 1).unwrap();
        let mut total = (0.0, 0.0);
        for (i, t) in [0.0, 0.3, 0.9, 1.0, 2.4].iter().enumerate() {
            let y = (i as f64).sin();
            let oa = a.step(&[*t], Some(y)).unwrap();
            let ob = b.step(&[*t], Some(y)).unwrap();
            assert_abs_diff_eq!(oa.predictive.mean, ob.predictive.mean, epsilon = 1e-10);
            assert_abs_diff_eq!(
                oa.predictive.latent_var,
                ob.predictive.latent_var,
                epsilon = 1e-10
            );
            total.0 += oa.log_density.unwrap();
            total.1 += ob.log_density.unwrap();
        }
        let ts = [0.0, 0.3, 0.9, 1.0, 2.4];
        let ys: Vec<f64> = (0..5).map(|i| (i as f64).sin()).collect();
        let lml = crate::exact::log_marginal_likelihood(
            &Kernel::matern12(1.0, 0.8).unwrap(),
            0.2,
            &points_1d(&ts),
            &ys,
        )
        .unwrap();
        assert_abs_diff_eq!(total.0, lml, epsilon = 1e-10);
        assert_abs_diff_eq!(total.1, lml, epsilon = 1e-10);
    }

    #[test]
    fn laplace_steps_flag_approximate_density() {
        let map = FeatureMap::hsgp(&Kernel::matern32(1.0, 1.0).unwrap(), 12, 5.0).unwrap();
        let mut m =
            LinearFilterModel::with_likelihood(map, Dynamics::Static, Likelihood::BernoulliLogit)
                .unwrap();
        let out = m.step(&[0.5], Some(1.0)).unwrap();
        assert!(out.approximate);
        assert!(out.log_density.unwrap() < 0.0);
        assert_eq!(out.predictive.noise_var, 0.0);
    }

    #[test]
    fn unit_batch_vsgp_matches_sparse_recursion() {
        let k = Kernel::squared_exponential(1.0, 0.7).unwrap();
        let z = points_1d(&[-1.0, 0.0, 1.0, 2.0]);
        let mut a = SparseModel::new(SparseState::new(&k, &z, true).unwrap(), 0.1).unwrap();
        let mut b = VsgpModel::new(SparseState::new(&k, &z, true).unwrap(), 0.1, 1).unwrap();
        for i in 0..20 {
            let x = [-1.5 + 0.2 * i as f64];
            let y = x[0].cos();
            let oa = a.step(&x, Some(y)).unwrap();
            let ob = b.step(&x, Some(y)).unwrap();
            assert_abs_diff_eq!(
                oa.log_density.unwrap(),
                ob.log_density.unwrap(),
                epsilon = 1e-8
            );
        }
        assert!((a.state().mean() - b.state().mean()).amax() < 1e-8);
    }

    #[test]
    fn spatiotemporal_markov_model_checks_site() {
        let sde = crate::markov::build_spatiotemporal(
            &Kernel::matern12(1.0, 1.0).unwrap(),
            &Kernel::squared_exponential(1.0, 1.0).unwrap(),
            &[vec![0.0], vec![1.0]],
        )
        .unwrap();
        let mut m = MarkovModel::new(sde, 0.1).unwrap();
        assert_eq!(m.input_dim(), 2);
        m.step(&[0.0, 1.0], Some(0.5)).unwrap();
        assert!(matches!(
            m.step(&[0.0, 2.0], Some(0.5)),
            Err(Error::Data { .. })
        ));
    }
}
