//! Online combination of sequential models by evidence (Bayesian model
//! averaging) or by exponentiated-gradient stacking.

use crate::error::{Error, Result};
use crate::model::{SequentialModel, StepOutput};

/// Lowest log weight kept relative to the largest, just above `ln` of the
/// smallest subnormal double.
const LOG_WEIGHT_FLOOR: f64 = -745.0;
/// Cap on the exponentiated-gradient exponent.
const MAX_EG_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combiner {
    Bma,
    Stacking,
}

/// Weight vector over K members, kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    log_weights: Vec<f64>,
    combiner: Combiner,
    step_count: u64,
}

/// Outcome of a stacking step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackingStep {
    Applied,
    /// Every member assigned zero density; weights were left as they were.
    SkippedZeroDensity,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl EnsembleState {
    /// Uniform weights over `k` members.
    pub fn new(k: usize, combiner: Combiner) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("ensemble needs at least one member"));
        }
        Ok(Self {
            log_weights: vec![-(k as f64).ln(); k],
            combiner,
            step_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn combiner(&self) -> Combiner {
        self.combiner
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.len(),
                got,
            })
        }
    }

    fn renormalize(&mut self) {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for l in &mut self.log_weights {
            *l = l.max(max + LOG_WEIGHT_FLOOR);
        }
        let lse = log_sum_exp(&self.log_weights);
        for l in &mut self.log_weights {
            *l -= lse;
        }
    }

    /// `w_k ← w_k p_k(y_t | past)`, renormalized.
    pub fn bma_update(&mut self, log_liks: &[f64]) -> Result<()> {
        self.check_len(log_liks.len())?;
        if let Some(k) = log_liks.iter().position(|l| !l.is_finite()) {
            return Err(Error::numerical(format!(
                "member {k} reported a non-finite log-likelihood"
            )));
        }
        for (w, l) in self.log_weights.iter_mut().zip(log_liks) {
            *w += l;
        }
        self.renormalize();
        self.step_count += 1;
        Ok(())
    }

    /// One exponentiated-gradient ascent step on `w ↦ log Σ_k w_k p_k`
    /// with rate `√(ln K / t)`.
    pub fn stacking_update(&mut self, densities: &[f64]) -> Result<StackingStep> {
        self.check_len(densities.len())?;
        if densities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::numerical(
                "densities must be finite and non-negative",
            ));
        }
        let logs: Vec<f64> = densities.iter().map(|p| p.ln()).collect();
        self.stacking_update_log(&logs)
    }

    /// [`EnsembleState::stacking_update`] with log densities, which avoids
    /// underflow when every member is far off.
    pub fn stacking_update_log(&mut self, log_densities: &[f64]) -> Result<StackingStep> {
        self.check_len(log_densities.len())?;
        if log_densities
            .iter()
            .any(|l| l.is_nan() || *l == f64::INFINITY)
        {
            return Err(Error::numerical("log densities must be finite or −∞"));
        }
        let weighted: Vec<f64> = self
            .log_weights
            .iter()
            .zip(log_densities)
            .map(|(w, l)| w + l)
            .collect();
        let log_mix = log_sum_exp(&weighted);
        if log_mix == f64::NEG_INFINITY {
            return Ok(StackingStep::SkippedZeroDensity);
        }
        self.step_count += 1;
        let k = self.len() as f64;
        let eta = (k.ln() / self.step_count as f64).sqrt();
        for (w, l) in self.log_weights.iter_mut().zip(log_densities) {
            let grad = (l - log_mix).min(MAX_EG_EXPONENT).exp();
            *w += (eta * grad).min(MAX_EG_EXPONENT);
        }
        self.renormalize();
        Ok(StackingStep::Applied)
    }
}

/// Moment-matched mixture of member predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixturePrediction {
    pub mean: f64,
    pub var: f64,
    /// `log Σ_k w_k p_k(y)`, when member densities were supplied.
    pub log_density: Option<f64>,
}

/// Mixture mean `Σ w μ`, variance `Σ w (σ² + μ²) − (Σ w μ)²`, and density
/// `Σ w p(y)`. `members` holds `(mean, var, log p(y))` per member.
pub fn mixture_predict(
    weights: &[f64],
    members: &[(f64, f64, Option<f64>)],
) -> Result<MixturePrediction> {
    if weights.len() != members.len() {
        return Err(Error::Shape {
            expected: weights.len(),
            got: members.len(),
        });
    }
    let mean: f64 = weights.iter().zip(members).map(|(w, m)| w * m.0).sum();
    let second: f64 = weights
        .iter()
        .zip(members)
        .map(|(w, m)| w * (m.1 + m.0 * m.0))
        .sum();
    let var = (second - mean * mean).max(0.0);
    let log_density = if members.iter().all(|m| m.2.is_some()) {
        let terms: Vec<f64> = weights
            .iter()
            .zip(members)
            .map(|(w, m)| w.ln() + m.2.unwrap_or(f64::NEG_INFINITY))
            .collect();
        Some(log_sum_exp(&terms))
    } else {
        None
    };
    Ok(MixturePrediction {
        mean,
        var,
        log_density,
    })
}

/// Everything produced by one ensemble step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStep {
    pub mixture: MixturePrediction,
    /// Weights used for this step's prediction.
    pub weights: Vec<f64>,
    pub members: Vec<StepOutput>,
    /// Set when a stacking step was skipped.
    pub skipped: bool,
}

/// A bank of sequential models with online weights.
pub struct Ensemble {
    members: Vec<Box<dyn SequentialModel>>,
    state: EnsembleState,
}

impl std::fmt::Debug for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ensemble")
            .field("members", &self.members.len())
            .field("state", &self.state)
            .finish()
    }
}

impl Ensemble {
    pub fn new(members: Vec<Box<dyn SequentialModel>>, combiner: Combiner) -> Result<Self> {
        let state = EnsembleState::new(members.len(), combiner)?;
        let dim = members[0].input_dim();
        if members.iter().any(|m| m.input_dim() != dim) {
            return Err(Error::config(
                "ensemble members disagree on input dimension",
            ));
        }
        Ok(Self { members, state })
    }

    pub fn state(&self) -> &EnsembleState {
        &self.state
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Steps every member, mixes their predictions with the current weights,
    /// then updates the weights if `y` was observed.
    pub fn step_all(&mut self, x: &[f64], y: Option<f64>) -> Result<EnsembleStep> {
        let members = self
            .members
            .iter_mut()
            .map(|m| m.step(x, y))
            .collect::<Result<Vec<_>>>()?;
        let weights = self.state.weights();
        let summary: Vec<(f64, f64, Option<f64>)> = members
            .iter()
            .map(|o| (o.predictive.mean, o.predictive.obs_var(), o.log_density))
            .collect();
        let mixture = mixture_predict(&weights, &summary)?;
        let mut skipped = false;
        if y.is_some() {
            let lls: Vec<f64> = members
                .iter()
                .map(|o| o.log_density.unwrap_or(f64::NEG_INFINITY))
                .collect();
            match self.state.combiner {
                Combiner::Bma => self.state.bma_update(&lls)?,
                Combiner::Stacking => {
                    skipped =
                        self.state.stacking_update_log(&lls)? == StackingStep::SkippedZeroDensity;
                }
            }
        }
        Ok(EnsembleStep {
            mixture,
            weights,
            members,
            skipped,
        })
    }
}

impl SequentialModel for Ensemble {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn step(&mut self, x: &[f64], y: Option<f64>) -> Result<StepOutput> {
        let out = self.step_all(x, y)?;
        // The mixture is reported through its moments; observation noise is
        // already folded into the mixture variance.
        Ok(StepOutput {
            predictive: crate::model::Predictive {
                mean: out.mixture.mean,
                latent_var: out.mixture.var,
                noise_var: 0.0,
            },
            log_density: out.mixture.log_density,
            approximate: out.members.iter().any(|m| m.approximate),
        })
    }

    fn flops(&self) -> u64 {
        self.members.iter().map(|m| m.flops()).sum()
    }
}
