//! Posterior predictive simulation from a chain.

use rand::Rng;
use serde::Serialize;

use super::diagnostics::{quantile, sorted};
use crate::error::{Error, Result};
use crate::model::ModelFamily;
use crate::rng::stream;
use crate::simulator::{simulate, ObservationKind, ObservationSeries};

/// Pointwise summaries indexed by observation event, then by flattened
/// coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveBands {
    pub mean: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl PredictiveBands {
    /// Fraction of observed coordinates inside `[lower, upper]`, restricted to
    /// the coordinate indices in `coords`.
    pub fn coverage(&self, observed: &[Vec<f64>], coords: &[usize]) -> f64 {
        let mut hit = 0;
        let mut total = 0;
        for (r, y) in observed.iter().enumerate() {
            for &c in coords {
                total += 1;
                if y[c] >= self.lower[r][c] && y[c] <= self.upper[r][c] {
                    hit += 1;
                }
            }
        }
        hit as f64 / total.max(1) as f64
    }
}

pub fn flatten_observations(data: &ObservationSeries) -> Vec<Vec<f64>> {
    match data {
        ObservationSeries::Prevalence(y) => y.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect(),
        ObservationSeries::Incidence(y) | ObservationSeries::Aggregated { totals: y, .. } => {
            y.iter().map(|m| m.as_slice().iter().map(|&x| x as f64).collect()).collect()
        }
    }
}

/// For each of `n_draws` replicates: picks a row of `draws` uniformly, builds
/// the model there and simulates a data record. Replicate `k` uses random
/// stream `k` of `seed`, so results do not depend on scheduling.
pub fn posterior_predictive(
    family: &dyn ModelFamily,
    draws: &[Vec<f64>],
    n_draws: usize,
    horizon: usize,
    kind: ObservationKind,
    seed: u64,
) -> Result<PredictiveBands> {
    if draws.is_empty() || n_draws == 0 {
        return Err(Error::Validation("posterior predictive needs a non-empty chain".into()));
    }
    let mut sims: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_draws);
    for k in 0..n_draws {
        let mut rng = stream(seed, k as u64);
        let theta = &draws[rng.random_range(0..draws.len())];
        let spec = family.build(theta)?;
        let (_, obs) = simulate(&spec, horizon, kind, &mut rng)?;
        sims.push(flatten_observations(&obs));
    }
    let events = sims[0].len();
    let width = sims[0].first().map_or(0, |v| v.len());
    let mut bands = PredictiveBands { mean: vec![], lower: vec![], upper: vec![] };
    for r in 0..events {
        let (mut mean, mut lower, mut upper) = (vec![0.0; width], vec![0.0; width], vec![0.0; width]);
        for c in 0..width {
            let values: Vec<f64> = sims.iter().map(|s| s[r][c]).collect();
            mean[c] = values.iter().sum::<f64>() / n_draws as f64;
            let s = sorted(&values);
            lower[c] = quantile(&s, 0.05);
            upper[c] = quantile(&s, 0.95);
        }
        bands.mean.push(mean);
        bands.lower.push(lower);
        bands.upper.push(upper);
    }
    Ok(bands)
}
