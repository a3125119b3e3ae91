//! Markovian GPs: Matérn and Hida–Matérn kernels as linear time-invariant
//! SDEs, filtered and smoothed in time linear in the number of steps.

mod filter;
mod sde;

pub use filter::{
    kalman_filter, kalman_filter_multi, rts_smoother, FilterRun, FilterStep, MarkovFilter,
    SmoothedStep,
};
pub use sde::{
    build_lti, build_spatiotemporal, discretize, stationary_covariance, DiscreteStep, LtiSde,
};
