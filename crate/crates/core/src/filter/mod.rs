//! Poisson approximate likelihood filters.
//!
//! [`prevalence`] handles noisy counts of compartment occupancy; [`incidence`]
//! handles noisy transition counts, per step or aggregated over a schedule;
//! [`block`] is the block-diagonal specialization of the incidence filter.
//!
//! Log terms are accumulated in ascending time order. Entries whose intensity
//! is zero contribute nothing (0/0 = 0, 0·log 0 = 0); a positive count on such
//! an entry is reported as [`Error::Incompatible`].

pub mod block;
pub mod incidence;
pub mod prevalence;

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ModelSpec;
use crate::simulator::ObservationSeries;

pub use block::pal_incidence_block;
pub use incidence::{pal_incidence_agg, pal_incidence_unit};
pub use prevalence::{pal_prevalence, predict_prevalence, update_prevalence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOptions {
    /// Omit the data-only `log(y!)` terms.
    pub drop_constant: bool,
    /// Keep per-step intensities in the trace.
    pub record: bool,
}

impl FilterOptions {
    /// Absolute log-likelihood values with full traces.
    pub const REPORTING: FilterOptions = FilterOptions { drop_constant: false, record: true };
    /// Ratio-safe values for optimization and MCMC, no traces.
    pub const RATIO: FilterOptions = FilterOptions { drop_constant: true, record: false };
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions::REPORTING
    }
}

/// Output of a PAL filter. `I` is `Vec<f64>` for prevalence filtering and
/// [`Matrix`] for incidence filtering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterTrace<I> {
    /// `λ_t` or `Λ_t`, one per latent step.
    pub predicted: Vec<I>,
    /// `λ̄_t` or `Λ̄_t`, one per latent step.
    pub updated: Vec<I>,
    /// `μ_t` or `M_r`, one per observation.
    pub observation: Vec<I>,
    /// Observation times matching `observation` and `log_terms`.
    pub times: Vec<usize>,
    pub log_terms: Vec<f64>,
    pub total: f64,
    pub drop_constant: bool,
}

impl<I> FilterTrace<I> {
    pub(crate) fn new(drop_constant: bool) -> Self {
        FilterTrace {
            predicted: Vec::new(),
            updated: Vec::new(),
            observation: Vec::new(),
            times: Vec::new(),
            log_terms: Vec::new(),
            total: 0.0,
            drop_constant,
        }
    }

    pub(crate) fn push_term(&mut self, t: usize, term: f64) {
        self.times.push(t);
        self.log_terms.push(term);
        self.total += term;
    }
}

pub type PrevalenceTrace = FilterTrace<Vec<f64>>;
pub type IncidenceTrace = FilterTrace<Matrix>;

/// Either trace kind, as returned by [`run_filter`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AnyTrace {
    Prevalence(PrevalenceTrace),
    Incidence(IncidenceTrace),
}

impl AnyTrace {
    pub fn total(&self) -> f64 {
        match self {
            AnyTrace::Prevalence(t) => t.total,
            AnyTrace::Incidence(t) => t.total,
        }
    }

    pub fn log_terms(&self) -> &[f64] {
        match self {
            AnyTrace::Prevalence(t) => &t.log_terms,
            AnyTrace::Incidence(t) => &t.log_terms,
        }
    }
}

/// Poisson log-pmf contribution of one entry, with the zero-intensity
/// conventions. `index` and `step` only label the error.
#[inline]
pub(crate) fn poisson_term(
    mean: f64,
    y: u64,
    drop_constant: bool,
    step: usize,
    index: impl FnOnce() -> Vec<usize>,
) -> Result<f64> {
    if y == 0 {
        return Ok(-mean);
    }
    if mean <= 0.0 {
        return Err(Error::Incompatible { step, index: index() });
    }
    let mut term = -mean + y as f64 * mean.ln();
    if !drop_constant {
        term -= ln_factorial(y);
    }
    Ok(term)
}

/// Runs the filter matching the data kind. Incidence data use the block
/// filter when the spec declares a block structure.
pub fn run_filter(spec: &ModelSpec, data: &ObservationSeries, opts: FilterOptions) -> Result<AnyTrace> {
    Ok(match data {
        ObservationSeries::Prevalence(y) => AnyTrace::Prevalence(pal_prevalence(spec, y, opts)?),
        ObservationSeries::Incidence(y) => {
            if spec.blocks.is_some() {
                let times: Vec<usize> = (1..=y.len()).collect();
                AnyTrace::Incidence(pal_incidence_block(spec, &times, y, opts)?)
            } else {
                AnyTrace::Incidence(pal_incidence_unit(spec, y, opts)?)
            }
        }
        ObservationSeries::Aggregated { schedule, totals } => {
            if spec.blocks.is_some() {
                AnyTrace::Incidence(pal_incidence_block(spec, schedule, totals, opts)?)
            } else {
                AnyTrace::Incidence(pal_incidence_agg(spec, schedule, totals, opts)?)
            }
        }
    })
}

/// Total log-PAL of `data` under `spec`.
pub fn log_pal(spec: &ModelSpec, data: &ObservationSeries, drop_constant: bool) -> Result<f64> {
    let opts = FilterOptions { drop_constant, record: false };
    Ok(run_filter(spec, data, opts)?.total())
}
