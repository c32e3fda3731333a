//! Builders for the concrete models: SEIR, the boarding-school SIR, the
//! age-structured SEIR and the gravity-coupled measles metapopulation.

pub mod age;
pub mod measles;
pub mod seir;
pub mod sir;

use crate::error::{Error, Result};
use crate::model::{ModelFamily, ModelSpec};

pub use age::{build_age_structured, dense_age_kernel, next_generation_r0, AgeConfig};
pub use measles::{build_measles_gravity, GravityConfig, MeaslesParams, SchoolCalendar};
pub use seir::{build_seir, seir_kernel, SeirConfig, SeirIncidence, SeirPrevalence};
pub use sir::{build_sir_boarding, SirConfig, BOARDING_SCHOOL_CASES};

/// A model configuration whose scalar parameters can be set by name.
pub trait Configurable: Clone + Send + Sync {
    fn set_param(&mut self, name: &str, value: f64) -> Result<()>;
    fn build(&self) -> Result<ModelSpec>;
}

/// A [`ModelFamily`] over the named parameters of a base configuration.
#[derive(Debug, Clone)]
pub struct Family<C> {
    pub base: C,
    pub names: Vec<String>,
}

impl<C: Configurable> Family<C> {
    pub fn new(base: C, names: &[&str]) -> Self {
        Family { base, names: names.iter().map(|s| s.to_string()).collect() }
    }

    pub fn config_at(&self, theta: &[f64]) -> Result<C> {
        if theta.len() != self.names.len() {
            return Err(Error::Config(format!(
                "expected {} parameter values, got {}",
                self.names.len(),
                theta.len()
            )));
        }
        let mut cfg = self.base.clone();
        for (name, &v) in self.names.iter().zip(theta) {
            cfg.set_param(name, v)?;
        }
        Ok(cfg)
    }
}

impl<C: Configurable> ModelFamily for Family<C> {
    fn build(&self, theta: &[f64]) -> Result<ModelSpec> {
        self.config_at(theta)?.build()
    }
}

pub(crate) fn unknown_param(model: &str, name: &str) -> Error {
    Error::Config(format!("{model} model has no parameter {name:?}"))
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Validation(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

pub(crate) fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Validation(format!("{name} must lie in [0,1], got {v}")));
    }
    Ok(())
}

/// Row-major 4×4 SEIR-type block with infection hazard `f`.
pub(crate) fn seir_block(f: f64, rho: f64, gamma: f64, h: f64) -> [f64; 16] {
    let pe = (-h * f).exp();
    let pi = (-h * rho).exp();
    let pr = (-h * gamma).exp();
    [
        pe, 1.0 - pe, 0.0, 0.0, //
        0.0, pi, 1.0 - pi, 0.0, //
        0.0, 0.0, pr, 1.0 - pr, //
        0.0, 0.0, 0.0, 1.0,
    ]
}
