//! Sequential Gaussian-process inference.
//!
//! Three families of scalable engines share one kernel vocabulary:
//!
//! * [`features`] + [`linear_filter`]: finite basis expansions (random Fourier
//!   features, Hilbert-space eigenbasis) filtered as Bayesian linear models;
//! * [`markov`]: Matérn and Hida–Matérn kernels as linear SDEs, with Kalman
//!   filtering and RTS smoothing in linear time;
//! * [`sparse`]: recursive updates of inducing-variable posteriors.
//!
//! [`exact`] is the batch reference, and [`ensemble`] combines any of the
//! engines online through the [`model::SequentialModel`] trait.

pub mod ensemble;
pub mod error;
pub mod exact;
pub mod features;
pub mod kernels;
pub mod linalg;
pub mod linear_filter;
pub mod markov;
pub mod model;
pub mod sparse;

pub use ensemble::{Combiner, Ensemble, EnsembleState};
pub use error::{Error, Result};
pub use exact::{ExactGp, ExactPosterior};
pub use features::FeatureMap;
pub use kernels::{HidaMaternComponent, Kernel, Smoothness, SpectralComponent};
pub use linear_filter::{Dynamics, GaussianBelief};
pub use markov::{DiscreteStep, LtiSde};
pub use model::{Predictive, SequentialModel, StepOutput};
pub use sparse::SparseState;
