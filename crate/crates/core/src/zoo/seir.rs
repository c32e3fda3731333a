//! SEIR with binomial emigration, Poisson immigration and either prevalence or
//! incidence observation.

use serde::{Deserialize, Serialize};

use super::{check_prob, check_rate, seir_block, unknown_param, Configurable};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    normalize_unchecked, IncidenceModel, InitialDistribution, ModelSpec, PerCapitaLimits,
    PrevalenceModel, Schedule, TimeMatrix, TimeVector,
};

pub const SEIR_NAMES: [&str; 4] = ["S", "E", "I", "R"];

/// The SEIR kernel at rates `β, ρ, γ` and step `h`; the infection hazard
/// is `β · s_I / Σ s`.
pub fn seir_kernel(beta: f64, rho: f64, gamma: f64, h: f64) -> impl Fn(usize, &[f64]) -> Matrix {
    move |_, s| {
        let eta = normalize_unchecked(s);
        Matrix::from_row_major(4, seir_block(beta * eta[2], rho, gamma, h).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirPrevalence {
    pub detection: [f64; 4],
    /// Row-stochastic mis-reporting matrix.
    pub misreport: [[f64; 4]; 4],
    /// Clutter intensity per capita.
    pub clutter_rate: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirIncidence {
    /// 0-based transition `(from, to)` that is reported.
    pub entry: (usize, usize),
    pub rate: f64,
    /// Observation period in steps.
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirConfig {
    pub beta: f64,
    pub rho: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub h: f64,
    /// Population scale `n`.
    pub n: u64,
    /// Initial compartment probabilities for `Mult(n, ·)`; ignored when
    /// `initial_counts` is set.
    #[serde(default = "default_initial")]
    pub initial_probs: [f64; 4],
    #[serde(default)]
    pub initial_counts: Option<[u64; 4]>,
    /// Immigration intensity per capita and compartment.
    #[serde(default)]
    pub immigration_rate: [f64; 4],
    #[serde(default = "full_survival")]
    pub survival: [f64; 4],
    #[serde(default)]
    pub prevalence: Option<SeirPrevalence>,
    #[serde(default)]
    pub incidence: Option<SeirIncidence>,
}

fn one() -> f64 {
    1.0
}

fn default_initial() -> [f64; 4] {
    [0.99, 0.0, 0.01, 0.0]
}

fn full_survival() -> [f64; 4] {
    [1.0; 4]
}

impl SeirConfig {
    /// A closed SEIR with no observation model.
    pub fn closed(beta: f64, rho: f64, gamma: f64, n: u64) -> Self {
        SeirConfig {
            beta,
            rho,
            gamma,
            h: 1.0,
            n,
            initial_probs: default_initial(),
            initial_counts: None,
            immigration_rate: [0.0; 4],
            survival: full_survival(),
            prevalence: None,
            incidence: None,
        }
    }

    /// The simulation-study setting with prevalence observations.
    pub fn simulation_study(n: u64) -> Self {
        SeirConfig {
            immigration_rate: [0.04; 4],
            survival: [0.98; 4],
            prevalence: Some(SeirPrevalence {
                detection: [0.1, 0.1, 0.3, 0.2],
                misreport: [
                    [0.95, 0.0, 0.05, 0.0],
                    [0.3, 0.0, 0.7, 0.0],
                    [0.15, 0.0, 0.85, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                ],
                clutter_rate: [0.01; 4],
            }),
            ..SeirConfig::closed(0.5, 0.05, 0.1, n)
        }
    }
}

impl Configurable for SeirConfig {
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "beta" => self.beta = value,
            "rho" => self.rho = value,
            "gamma" => self.gamma = value,
            "h" => self.h = value,
            "q" => match &mut self.incidence {
                Some(inc) => inc.rate = value,
                None => return Err(unknown_param("SEIR (no incidence)", name)),
            },
            _ => return Err(unknown_param("SEIR", name)),
        }
        Ok(())
    }

    fn build(&self) -> Result<ModelSpec> {
        build_seir(self)
    }
}

pub fn build_seir(cfg: &SeirConfig) -> Result<ModelSpec> {
    check_rate("beta", cfg.beta)?;
    check_rate("rho", cfg.rho)?;
    check_rate("gamma", cfg.gamma)?;
    if !(cfg.h > 0.0 && cfg.h.is_finite()) {
        return Err(Error::Validation(format!("step size h must be positive, got {}", cfg.h)));
    }
    if cfg.prevalence.is_some() && cfg.incidence.is_some() {
        return Err(Error::Config("SEIR takes either prevalence or incidence observation".into()));
    }
    let n = cfg.n as f64;
    let initial = match cfg.initial_counts {
        Some(x) => InitialDistribution::Deterministic(x.to_vec()),
        None => InitialDistribution::Multinomial { n: cfg.n, probs: cfg.initial_probs.to_vec() },
    };
    let limits_initial: Vec<f64> = match cfg.initial_counts {
        Some(x) => x.iter().map(|&v| v as f64 / n).collect(),
        None => cfg.initial_probs.to_vec(),
    };
    let mut spec = ModelSpec::new(initial, seir_kernel(cfg.beta, cfg.rho, cfg.gamma, cfg.h))
        .with_survival(TimeVector::constant(cfg.survival.to_vec()))
        .with_immigration(TimeVector::constant(cfg.immigration_rate.iter().map(|a| a * n).collect()))
        .with_names(SEIR_NAMES.iter().map(|s| s.to_string()).collect());
    let mut clutter_limit = vec![0.0; 4];
    if let Some(p) = &cfg.prevalence {
        clutter_limit = p.clutter_rate.to_vec();
        spec = spec.with_prevalence(PrevalenceModel {
            detection: TimeVector::constant(p.detection.to_vec()),
            misreport: TimeMatrix::constant(Matrix::from_rows(
                &p.misreport.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            )),
            clutter: TimeVector::constant(p.clutter_rate.iter().map(|k| k * n).collect()),
        });
    }
    if let Some(inc) = &cfg.incidence {
        check_prob("q", inc.rate)?;
        if inc.entry.0 >= 4 || inc.entry.1 >= 4 || inc.period == 0 {
            return Err(Error::Config(format!("invalid SEIR incidence setting {inc:?}")));
        }
        let mut q = Matrix::zeros(4);
        q[inc.entry] = inc.rate;
        spec = spec.with_incidence(IncidenceModel {
            reporting: TimeMatrix::constant(q),
            schedule: if inc.period == 1 { Schedule::EveryStep } else { Schedule::Every(inc.period) },
            open_population: false,
        });
    }
    Ok(spec.with_limits(PerCapitaLimits {
        scale: n,
        initial: limits_initial,
        immigration: TimeVector::constant(cfg.immigration_rate.to_vec()),
        clutter: TimeVector::constant(clutter_limit),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    #[test]
    fn simulation_study_preset_is_valid() {
        let spec = build_seir(&SeirConfig::simulation_study(1000)).unwrap();
        assert!(validate_spec(&spec, 50).is_empty(), "{:?}", validate_spec(&spec, 50));
        assert_eq!(spec.initial.mean(), vec![990.0, 0.0, 10.0, 0.0]);
        assert_eq!(&*spec.immigration.at(3), &[40.0; 4]);
        assert_eq!(&*spec.prevalence.as_ref().unwrap().clutter.at(1), &[10.0; 4]);
    }

    #[test]
    fn negative_rate_rejected() {
        let mut cfg = SeirConfig::closed(0.5, 0.1, 0.1, 10);
        cfg.beta = -1.0;
        assert!(build_seir(&cfg).is_err());
        cfg.beta = 0.5;
        cfg.h = 0.0;
        assert!(build_seir(&cfg).is_err());
    }

    #[test]
    fn zero_beta_blocks_infection() {
        let k = seir_kernel(0.0, 0.1, 0.1, 1.0)(1, &[10.0, 1.0, 5.0, 0.0]);
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(0, 1)], 0.0);
    }

    #[test]
    fn step_size_composition_is_second_order() {
        // Frozen infection pressure: composing two half steps approximates one
        // full step up to O(h²) through the E→I→R chain.
        let s = [90.0, 5.0, 5.0, 0.0];
        let err = |h: f64| {
            let k1 = seir_kernel(0.5, 0.3, 0.2, h)(1, &s);
            let k2 = seir_kernel(0.5, 0.3, 0.2, 2.0 * h)(1, &s);
            k1.matmul(&k1).max_abs_diff(&k2)
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 0.05);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}
