use nalgebra::{DMatrix, DVector};

use super::sde::{discretize, DiscreteStep, LtiSde};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_escalating, joseph_rank_one, log_normal_pdf, symmetrize};

/// Moments kept for one time step of a filter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub t: f64,
    /// Transition from the previous step into this one.
    pub transition: DMatrix<f64>,
    pub predicted_mean: DVector<f64>,
    pub predicted_cov: DMatrix<f64>,
    pub filtered_mean: DVector<f64>,
    pub filtered_cov: DMatrix<f64>,
    /// Sum of one-step predictive log densities of the observed outputs.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub steps: Vec<FilterStep>,
    pub total_log_likelihood: f64,
    pub flops: u64,
    state_dim: usize,
}

/// Smoothed state moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedStep {
    pub t: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Incremental Kalman filter over an [`LtiSde`].
///
/// Each call to [`MarkovFilter::advance`] moves the state to a new time;
/// [`MarkovFilter::observe`] then conditions on any outputs seen there.
#[derive(Debug, Clone)]
pub struct MarkovFilter {
    sde: LtiSde,
    noise_var: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    t: Option<f64>,
    cache: Option<(f64, DiscreteStep)>,
    flops: u64,
}

impl MarkovFilter {
    pub fn new(sde: LtiSde, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        let d = sde.state_dim();
        let cov = sde.p_inf.clone();
        Ok(Self {
            sde,
            noise_var,
            mean: DVector::zeros(d),
            cov,
            t: None,
            cache: None,
            flops: 0,
        })
    }

    pub fn sde(&self) -> &LtiSde {
        &self.sde
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn time(&self) -> Option<f64> {
        self.t
    }

    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// Predicts forward to time `t`; returns the transition used.
    /// The first call only fixes the origin.
    pub fn advance(&mut self, t: f64) -> Result<DMatrix<f64>> {
        if !t.is_finite() {
            return Err(Error::data(0, format!("non-finite timestamp {t}")));
        }
        let d = self.sde.state_dim();
        let Some(prev) = self.t else {
            self.t = Some(t);
            return Ok(DMatrix::identity(d, d));
        };
        let delta = t - prev;
        if delta < 0.0 {
            return Err(Error::data(
                0,
                format!("timestamp {t} precedes previous timestamp {prev}"),
            ));
        }
        let step = match &self.cache {
            Some((cached, step)) if *cached == delta => step.clone(),
            _ => {
                let step = discretize(&self.sde, delta, &mut self.flops)?;
                self.cache = Some((delta, step.clone()));
                step
            }
        };
        self.mean = &step.a * &self.mean;
        self.cov = &step.a * &self.cov * step.a.transpose() + &step.q;
        symmetrize(&mut self.cov);
        let d3 = (d * d * d) as u64;
        self.flops += 2 * (d * d) as u64 + 4 * d3 + (d * d) as u64;
        self.t = Some(t);
        Ok(step.a)
    }

    /// Latent predictive moments of output `row`.
    pub fn predict_output(&self, row: usize) -> Result<(f64, f64)> {
        let h = self.output_row(row)?;
        let mean = h.dot(&self.mean);
        let var = (h.transpose() * &self.cov * &h)[(0, 0)].max(0.0);
        Ok((mean, var))
    }

    fn output_row(&self, row: usize) -> Result<DVector<f64>> {
        if row >= self.sde.num_outputs() {
            return Err(Error::Shape {
                expected: self.sde.num_outputs(),
                got: row + 1,
            });
        }
        Ok(self.sde.h.row(row).transpose())
    }

    /// Conditions on `y` at output `row`; returns `log p(y | past)`.
    pub fn observe(&mut self, row: usize, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::data(0, format!("non-finite observation {y}")));
        }
        let h = self.output_row(row)?;
        let d = self.sde.state_dim() as u64;
        let v = &self.cov * &h;
        let pred = h.dot(&self.mean);
        let s = h.dot(&v).max(0.0) + self.noise_var;
        let ll = log_normal_pdf(y, pred, s);
        self.mean.axpy((y - pred) / s, &v, 1.0);
        joseph_rank_one(&mut self.cov, &v, s);
        self.flops += 2 * d * d + 6 * d + 6 * d * d;
        Ok(ll)
    }
}

/// Filters a stream of `(t, outputs)` records, where `outputs[i]` is the
/// observation of output row `i` (missing entries are predict-only).
///
/// Timestamps must be non-decreasing.
pub fn kalman_filter_multi(
    sde: &LtiSde,
    times: &[f64],
    outputs: &[Vec<Option<f64>>],
    noise_var: f64,
) -> Result<FilterRun> {
    if times.len() != outputs.len() {
        return Err(Error::Shape {
            expected: times.len(),
            got: outputs.len(),
        });
    }
    let mut filter = MarkovFilter::new(sde.clone(), noise_var)?;
    let mut steps = Vec::with_capacity(times.len());
    let mut total = 0.0;
    for (i, (&t, ys)) in times.iter().zip(outputs).enumerate() {
        let transition = filter.advance(t).map_err(|e| at_index(e, i))?;
        let predicted_mean = filter.mean.clone();
        let predicted_cov = filter.cov.clone();
        if ys.len() > sde.num_outputs() {
            return Err(Error::data(
                i,
                format!(
                    "{} outputs for a model with {}",
                    ys.len(),
                    sde.num_outputs()
                ),
            ));
        }
        let mut ll = 0.0;
        for (row, y) in ys.iter().enumerate() {
            if let Some(y) = y {
                ll += filter.observe(row, *y).map_err(|e| at_index(e, i))?;
            }
        }
        total += ll;
        steps.push(FilterStep {
            t,
            transition,
            predicted_mean,
            predicted_cov,
            filtered_mean: filter.mean.clone(),
            filtered_cov: filter.cov.clone(),
            log_likelihood: ll,
        });
    }
    Ok(FilterRun {
        steps,
        total_log_likelihood: total,
        flops: filter.flops,
        state_dim: sde.state_dim(),
    })
}

/// Single-output convenience wrapper; `None` marks a predict-only step.
pub fn kalman_filter(
    sde: &LtiSde,
    times: &[f64],
    ys: &[Option<f64>],
    noise_var: f64,
) -> Result<FilterRun> {
    let outputs: Vec<Vec<Option<f64>>> = ys.iter().map(|y| vec![*y]).collect();
    kalman_filter_multi(sde, times, &outputs, noise_var)
}

fn at_index(e: Error, index: usize) -> Error {
    match e {
        Error::Data { message, .. } => Error::Data { index, message },
        other => other,
    }
}

/// Rauch–Tung–Striebel backward pass over a completed filter run.
pub fn rts_smoother(sde: &LtiSde, run: &FilterRun) -> Result<Vec<SmoothedStep>> {
    if run.state_dim != sde.state_dim() {
        return Err(Error::Usage(format!(
            "filter run has state dimension {}, model has {}",
            run.state_dim,
            sde.state_dim()
        )));
    }
    let Some(last) = run.steps.last() else {
        return Ok(Vec::new());
    };
    let mut out = vec![
        SmoothedStep {
            t: last.t,
            mean: last.filtered_mean.clone(),
            cov: last.filtered_cov.clone(),
        };
        run.steps.len()
    ];
    for k in (0..run.steps.len() - 1).rev() {
        let cur = &run.steps[k];
        let next = &run.steps[k + 1];
        // G = P_f Aᵀ P_p⁻¹, computed as (P_p⁻¹ A P_f)ᵀ.
        let (chol, _) = cholesky_escalating(&next.predicted_cov)?;
        let gain = chol
            .solve(&(&next.transition * &cur.filtered_cov))
            .transpose();
        let smoothed_next = &out[k + 1];
        let mean = &cur.filtered_mean + &gain * (&smoothed_next.mean - &next.predicted_mean);
        let mut cov = &cur.filtered_cov
            + &gain * (&smoothed_next.cov - &next.predicted_cov) * gain.transpose();
        symmetrize(&mut cov);
        out[k] = SmoothedStep {
            t: cur.t,
            mean,
            cov,
        };
    }
    Ok(out)
}
