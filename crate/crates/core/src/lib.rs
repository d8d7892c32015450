//! Relabeling and summarizing posterior samples whose dimension varies from
//! draw to draw.
//!
//! Samples `(k, θ₁..θ_k)` produced by a trans-dimensional sampler are
//! approximated by a parametric model made of gated Gaussian components and a
//! Poisson point process (see [`model`]). The model is fitted with a
//! stochastic EM procedure ([`sem`]), which also labels every point of every
//! sample, undoing label switching across models of different dimension.
//!
//! Two reversible-jump samplers are included to produce such samples:
//! sinusoid detection in white Gaussian noise ([`sinusoid`]) and counting of
//! superimposed exponential pulses in Poisson-binned data ([`auger`]).
//! [`diagnostics`] compares fitted models with the raw samples.

pub mod auger;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod harness;
pub mod io;
pub mod model;
pub mod oracle;
pub mod rjmcmc;
pub mod rng;
pub mod robust;
pub mod samples;
pub mod sem;
pub mod sinusoid;
pub mod truncnorm;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{Allocation, ApproxModel, GaussianComponent, Label, ParamSpace, VarDimSample};
pub use samples::{Provenance, SampleSet};
pub use sem::{sem_fit, FitConfig, FitResult, InitRule};
