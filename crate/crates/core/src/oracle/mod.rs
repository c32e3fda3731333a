//! Likelihood oracles independent of the PAL recursions: exhaustive
//! enumeration for tiny models and a bootstrap particle filter.

pub mod enumerate;
pub mod particle;
pub mod pmf;

pub use enumerate::{exact_loglik_enumerate, OracleResult};
pub use particle::{
    particle_filter, particle_filter_loglik, ParticleConfig, ParticleEnsemble, ParticleEstimate,
    Resampling,
};
