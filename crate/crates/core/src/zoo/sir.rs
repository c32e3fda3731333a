//! SIR for the boarding-school influenza outbreak: daily prevalence of the
//! infective compartment only.

use serde::{Deserialize, Serialize};

use super::{check_prob, check_rate, unknown_param, Configurable};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{
    normalize_unchecked, InitialDistribution, ModelSpec, PerCapitaLimits, PrevalenceModel,
    TimeMatrix, TimeVector,
};

/// Daily counts of boys confined to bed, days 1 to 14.
pub const BOARDING_SCHOOL_CASES: [u64; 14] =
    [3, 8, 26, 76, 225, 298, 258, 233, 189, 128, 68, 29, 14, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub beta: f64,
    pub gamma: f64,
    pub q: f64,
    #[serde(default = "school_initial")]
    pub initial: [u64; 3],
}

fn school_initial() -> [u64; 3] {
    [763, 1, 0]
}

impl SirConfig {
    pub fn new(beta: f64, gamma: f64, q: f64) -> Self {
        SirConfig { beta, gamma, q, initial: school_initial() }
    }
}

impl Configurable for SirConfig {
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "beta" => self.beta = value,
            "gamma" => self.gamma = value,
            "q" => self.q = value,
            _ => return Err(unknown_param("SIR", name)),
        }
        Ok(())
    }

    fn build(&self) -> Result<ModelSpec> {
        build_sir_boarding(self)
    }
}

/// Prevalence data `y` on infectives as full observation vectors `[0, y, 0]`.
pub fn boarding_observations(cases: &[u64]) -> Vec<Vec<u64>> {
    cases.iter().map(|&y| vec![0, y, 0]).collect()
}

pub fn build_sir_boarding(cfg: &SirConfig) -> Result<ModelSpec> {
    check_rate("beta", cfg.beta)?;
    check_rate("gamma", cfg.gamma)?;
    check_prob("q", cfg.q)?;
    let (beta, gamma) = (cfg.beta, cfg.gamma);
    let kernel = move |_: usize, s: &[f64]| {
        let eta = normalize_unchecked(s);
        let pi = (-beta * eta[1]).exp();
        let pr = (-gamma).exp();
        Matrix::from_row_major(3, vec![pi, 1.0 - pi, 0.0, 0.0, pr, 1.0 - pr, 0.0, 0.0, 1.0])
    };
    let n: f64 = cfg.initial.iter().sum::<u64>() as f64;
    Ok(ModelSpec::new(InitialDistribution::Deterministic(cfg.initial.to_vec()), kernel)
        .with_names(vec!["S".into(), "I".into(), "R".into()])
        .with_prevalence(PrevalenceModel {
            detection: TimeVector::constant(vec![0.0, cfg.q, 0.0]),
            misreport: TimeMatrix::constant(Matrix::identity(3)),
            clutter: TimeVector::constant(vec![0.0; 3]),
        })
        .with_limits(PerCapitaLimits {
            scale: n,
            initial: cfg.initial.iter().map(|&v| v as f64 / n).collect(),
            immigration: TimeVector::constant(vec![0.0; 3]),
            clutter: TimeVector::constant(vec![0.0; 3]),
        }))
}
