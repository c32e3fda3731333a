//! Poisson approximate likelihood (PAL) filtering, simulation and inference
//! for stochastic compartmental models.

pub mod asymptotics;
pub mod error;
pub mod filter;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod simulator;
pub mod zoo;

pub use error::{Error, Result};
pub use linalg::{CountMatrix, Matrix};
pub use model::{
    eval_kernel, normalize_counts, validate_spec, InitialDistribution, ModelFamily, ModelSpec,
    ParamVector, Parameter, Prior, Schedule, TimeMatrix, TimeVector,
};
pub use simulator::{LatentRecord, ObservationKind, ObservationSeries};
pub use filter::{log_pal, run_filter, FilterOptions, FilterTrace, IncidenceTrace, PrevalenceTrace};
