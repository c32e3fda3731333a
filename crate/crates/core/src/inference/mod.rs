//! Estimation and sampling built on the PAL.

pub mod diagnostics;
pub mod mcmc;
pub mod optim;
pub mod predictive;

pub use diagnostics::{chain_diagnostics, ParameterSummary};
pub use mcmc::{
    dapmmh_chain, metropolis_pal, pmmh_chain, run_algorithm, run_chain, Algorithm, Chain,
    LogLikelihood, McmcConfig, PalLikelihood, ParticleLikelihood,
};
pub use optim::{coordinate_ascent, maximize_pal, FitResult, OptimConfig};
pub use predictive::{posterior_predictive, PredictiveBands};
