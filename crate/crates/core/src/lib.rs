//! Spatio-temporal Bayesian hierarchical models for edge-computing workload.
//!
//! The crate fits hierarchical auto-regressive (AR) and Gaussian-process (GP)
//! space-time models to gridded workload panels with a Gibbs /
//! Metropolis-Hastings sampler, predicts at unobserved sites and future time
//! slots, and ships a task-offloading simulator that measures how much a
//! prediction-weighted compute allocation helps.
//!
//! Module map:
//!
//! * [`specfun`]: log-Gamma and the modified Bessel function `K_nu`.
//! * [`kernel`]: Matérn correlation and correlation matrices over a [`SiteGrid`].
//! * [`model`]: data panel, parameters, priors, joint log-posterior and the
//!   forward simulator.
//! * [`mcmc`]: full-conditional updates, the chain driver and summaries.
//! * [`predict`]: kriging, temporal forecasting, back-transform, smoothing.
//! * [`metrics`]: point error metrics and PMCC.
//! * [`pipeline`]: connection-record ingestion, k-means, aggregation.
//! * [`simulator`]: the offloading experiment.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod predict;
pub mod rng;
pub mod simulator;
pub mod specfun;

pub use error::{Error, Result};
pub use kernel::{CorrelationMatrix, SiteGrid};
pub use mcmc::{Chain, ChainConfig, MhTuning};
pub use model::{ModelKind, Panel, PriorSpec, Theta};
pub use predict::PredictionField;
