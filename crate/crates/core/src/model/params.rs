//! Named, bounded parameter vectors with priors and proposal scales.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Prior density on a single coordinate, restricted to the parameter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Flat,
    /// Normal(mean, sd) truncated to the parameter bounds.
    TruncatedNormal { mean: f64, sd: f64 },
}

/// Reparameterization used by transform-mode MCMC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `u = log(θ - lo)`.
    Log,
    /// `u = logit((θ - lo) / (hi - lo))`.
    Logit,
}

fn default_lower() -> f64 {
    f64::NEG_INFINITY
}

fn default_upper() -> f64 {
    f64::INFINITY
}

// JSON has no infinities: an infinite bound is written as `null` and a
// `null` bound reads back as unbounded.
macro_rules! bound_serde {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_finite() {
                    s.serialize_f64(*v)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($inf))
            }
        }
    };
}

bound_serde!(lower_bound, f64::NEG_INFINITY);
bound_serde!(upper_bound, f64::INFINITY);

fn default_prior() -> Prior {
    Prior::Flat
}

fn default_sd() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    #[serde(default = "default_lower", with = "lower_bound")]
    pub lower: f64,
    #[serde(default = "default_upper", with = "upper_bound")]
    pub upper: f64,
    #[serde(default = "default_prior")]
    pub prior: Prior,
    #[serde(default = "default_sd")]
    pub proposal_sd: f64,
}

impl Parameter {
    pub fn new(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        Parameter {
            name: name.to_string(),
            value,
            lower,
            upper,
            prior: Prior::Flat,
            proposal_sd: default_sd(),
        }
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_proposal_sd(mut self, sd: f64) -> Self {
        self.proposal_sd = sd;
        self
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    /// Log prior density at `v`; `-inf` outside the bounds.
    pub fn log_prior(&self, v: f64) -> f64 {
        if !self.contains(v) || !v.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.prior {
            Prior::Flat => 0.0,
            Prior::TruncatedNormal { mean, sd } => {
                let z = (v - mean) / sd;
                let normal = Normal::new(mean, sd).expect("positive prior sd");
                let mass = normal.cdf(self.upper) - normal.cdf(self.lower);
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - mass.ln()
            }
        }
    }

    /// Natural transform for the bounds: logit when both are finite, log when
    /// only the lower bound is.
    pub fn transform(&self) -> Transform {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => Transform::Logit,
            (true, false) => Transform::Log,
            _ => Transform::Identity,
        }
    }

    pub fn to_unconstrained(&self, v: f64) -> f64 {
        match self.transform() {
            Transform::Identity => v,
            Transform::Log => (v - self.lower).ln(),
            Transform::Logit => {
                let p = (v - self.lower) / (self.upper - self.lower);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn from_unconstrained(&self, u: f64) -> f64 {
        match self.transform() {
            Transform::Identity => u,
            Transform::Log => self.lower + u.exp(),
            Transform::Logit => {
                let p = 1.0 / (1.0 + (-u).exp());
                self.lower + (self.upper - self.lower) * p
            }
        }
    }

    /// `log |dθ/du|` at unconstrained point `u`.
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match self.transform() {
            Transform::Identity => 0.0,
            Transform::Log => u,
            Transform::Logit => {
                // log p + log(1-p) + log(hi-lo), computed stably.
                let lp = -softplus(-u);
                let lq = -softplus(u);
                lp + lq + (self.upper - self.lower).ln()
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub params: Vec<Parameter>,
}

impl ParamVector {
    pub fn new(params: Vec<Parameter>) -> Result<Self> {
        let pv = ParamVector { params };
        pv.check()?;
        Ok(pv)
    }

    pub fn check(&self) -> Result<()> {
        for p in &self.params {
            if !(p.lower < p.upper) {
                return Err(Error::Config(format!("parameter {}: empty bounds", p.name)));
            }
            if !p.contains(p.value) {
                return Err(Error::Config(format!(
                    "parameter {} = {} outside [{}, {}]",
                    p.name, p.value, p.lower, p.upper
                )));
            }
            if !(p.proposal_sd > 0.0) {
                return Err(Error::Config(format!("parameter {}: proposal_sd must be positive", p.name)));
            }
            if let Prior::TruncatedNormal { sd, .. } = p.prior {
                if !(sd > 0.0) {
                    return Err(Error::Config(format!("parameter {}: prior sd must be positive", p.name)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn set_values(&mut self, values: &[f64]) {
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = *v;
        }
    }

    pub fn in_bounds(&self, theta: &[f64]) -> bool {
        self.params.iter().zip(theta).all(|(p, v)| p.contains(*v))
    }

    /// Joint log prior (independent coordinates).
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.params
            .iter()
            .zip(theta)
            .map(|(p, v)| p.log_prior(*v))
            .sum()
    }

    pub fn proposal_sds(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.proposal_sd).collect()
    }
}
