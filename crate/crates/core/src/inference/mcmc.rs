//! Metropolis-within-Gibbs samplers: PALMH (PAL in place of the likelihood),
//! PMMH (particle-filter estimate) and delayed-acceptance PMMH (PAL screen,
//! then particle filter).

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::log_pal;
use crate::model::{ModelFamily, ParamVector};
use crate::oracle::{particle_filter, ParticleConfig};
use crate::rng::{stream, StreamRng};
use crate::simulator::ObservationSeries;

/// A log-likelihood (or estimate) of `θ`; failures are `-∞`.
pub trait LogLikelihood {
    fn loglik(&mut self, theta: &[f64]) -> f64;
}

impl<F: FnMut(&[f64]) -> f64> LogLikelihood for F {
    fn loglik(&mut self, theta: &[f64]) -> f64 {
        self(theta)
    }
}

/// Log-PAL of the family at `θ`, normalizing constant dropped.
pub struct PalLikelihood<'a> {
    pub family: &'a dyn ModelFamily,
    pub data: &'a ObservationSeries,
}

impl LogLikelihood for PalLikelihood<'_> {
    fn loglik(&mut self, theta: &[f64]) -> f64 {
        self.family
            .build(theta)
            .and_then(|spec| log_pal(&spec, self.data, true))
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Bootstrap particle filter estimate with its own random stream.
pub struct ParticleLikelihood<'a> {
    pub family: &'a dyn ModelFamily,
    pub data: &'a ObservationSeries,
    pub config: ParticleConfig,
    pub rng: StreamRng,
}

impl LogLikelihood for ParticleLikelihood<'_> {
    fn loglik(&mut self, theta: &[f64]) -> f64 {
        self.family
            .build(theta)
            .and_then(|spec| particle_filter(&spec, self.data, self.config, &mut self.rng))
            .map(|e| e.loglik)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McmcConfig {
    /// Recorded sweeps; each sweep updates every coordinate once.
    pub iterations: usize,
    /// Sweeps of proposal tuning before recording; discarded.
    pub tuning_sweeps: usize,
    pub tuning_batch: usize,
    /// Fraction of recorded sweeps discarded as burn-in.
    pub burn_in: f64,
    /// Thin the post-burn-in draws to at most this many.
    pub thin_to: Option<usize>,
    pub seed: u64,
}

impl McmcConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        McmcConfig { iterations, tuning_sweeps: 500, tuning_batch: 50, burn_in: 0.2, thin_to: Some(25_000), seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Palmh,
    Pmmh,
    Dapmmh,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "palmh" => Ok(Algorithm::Palmh),
            "pmmh" => Ok(Algorithm::Pmmh),
            "dapmmh" => Ok(Algorithm::Dapmmh),
            other => Err(Error::Config(format!("unknown MCMC algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chain {
    pub names: Vec<String>,
    /// One row per recorded sweep.
    pub draws: Vec<Vec<f64>>,
    /// Log-likelihood (estimate) of the incumbent at each draw.
    pub log_lik: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub seed: u64,
    pub proposal_sds: Vec<f64>,
    /// Per-coordinate proposals and final acceptances in the recorded phase.
    pub proposals: Vec<u64>,
    pub accepted: Vec<u64>,
    /// Delayed acceptance: proposals that passed the screening stage.
    pub stage1_accepted: Vec<u64>,
    /// Calls to the full likelihood in the recorded phase.
    pub likelihood_calls: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub elapsed_secs: f64,
}

impl Chain {
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted.iter().zip(&self.proposals).map(|(&a, &p)| a as f64 / p.max(1) as f64).collect()
    }

    pub fn stage1_rates(&self) -> Vec<f64> {
        self.stage1_accepted.iter().zip(&self.proposals).map(|(&a, &p)| a as f64 / p.max(1) as f64).collect()
    }

    /// Post-burn-in, thinned draws.
    pub fn kept(&self) -> Vec<Vec<f64>> {
        self.draws.iter().skip(self.burn_in).step_by(self.thin.max(1)).cloned().collect()
    }

    pub fn column(draws: &[Vec<f64>], c: usize) -> Vec<f64> {
        draws.iter().map(|r| r[c]).collect()
    }
}

struct State {
    theta: Vec<f64>,
    full: f64,
    screen: f64,
    prior: f64,
}

struct Counters {
    proposals: Vec<u64>,
    accepted: Vec<u64>,
    stage1: Vec<u64>,
    calls: u64,
}

impl Counters {
    fn new(d: usize) -> Self {
        Counters { proposals: vec![0; d], accepted: vec![0; d], stage1: vec![0; d], calls: 0 }
    }
}

fn sweep(
    params: &ParamVector,
    sds: &[f64],
    state: &mut State,
    full: &mut dyn LogLikelihood,
    screen: &mut Option<&mut dyn LogLikelihood>,
    rng: &mut StreamRng,
    counts: &mut Counters,
) {
    for c in 0..state.theta.len() {
        counts.proposals[c] += 1;
        let z: f64 = rng.sample(StandardNormal);
        let mut prop = state.theta.clone();
        prop[c] += sds[c] * z;
        let prior = params.log_prior(&prop);
        // Both uniforms are drawn up front so the proposal stream does not
        // depend on which stages run.
        let (u1, u2): (f64, f64) = (rng.random(), rng.random());
        if prior == f64::NEG_INFINITY {
            continue;
        }
        match screen.as_deref_mut() {
            None => {
                counts.calls += 1;
                let ll = full.loglik(&prop);
                if u1.ln() < ll + prior - state.full - state.prior {
                    counts.accepted[c] += 1;
                    *state = State { theta: prop, full: ll, screen: 0.0, prior };
                }
            }
            Some(scr) => {
                let la = scr.loglik(&prop);
                if !(u1.ln() < la + prior - state.screen - state.prior) {
                    continue;
                }
                counts.stage1[c] += 1;
                counts.calls += 1;
                let ll = full.loglik(&prop);
                if u2.ln() < (ll - state.full) - (la - state.screen) {
                    counts.accepted[c] += 1;
                    *state = State { theta: prop, full: ll, screen: la, prior };
                }
            }
        }
    }
}

/// Runs Metropolis-within-Gibbs with Gaussian random-walk proposals. With a
/// `screen` likelihood this is delayed acceptance: the screen decides first
/// and the full likelihood only runs on survivors. The incumbent's full
/// likelihood estimate is never refreshed.
pub fn run_chain(
    params: &ParamVector,
    cfg: &McmcConfig,
    full: &mut dyn LogLikelihood,
    mut screen: Option<&mut dyn LogLikelihood>,
) -> Result<Chain> {
    params.check()?;
    let start = Instant::now();
    let d = params.len();
    let mut rng = stream(cfg.seed, 0);
    let theta = params.values();
    let prior = params.log_prior(&theta);
    let full0 = full.loglik(&theta);
    let screen0 = screen.as_deref_mut().map_or(0.0, |s| s.loglik(&theta));
    if !(prior.is_finite() && full0.is_finite() && screen0.is_finite()) {
        return Err(Error::Validation(format!("chain start {theta:?} has zero posterior density")));
    }
    let mut state = State { theta, full: full0, screen: screen0, prior };
    let mut sds = params.proposal_sds();

    let batch = cfg.tuning_batch.max(1);
    let mut done = 0;
    while done < cfg.tuning_sweeps {
        let mut counts = Counters::new(d);
        for _ in 0..batch.min(cfg.tuning_sweeps - done) {
            sweep(params, &sds, &mut state, full, &mut screen, &mut rng, &mut counts);
        }
        done += batch;
        for c in 0..d {
            let rate = counts.accepted[c] as f64 / counts.proposals[c].max(1) as f64;
            if rate < 0.2 {
                sds[c] *= 0.7;
            } else if rate > 0.4 {
                sds[c] *= 1.3;
            }
        }
    }

    let mut counts = Counters::new(d);
    let mut draws = Vec::with_capacity(cfg.iterations);
    let mut log_lik = Vec::with_capacity(cfg.iterations);
    let mut log_prior = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        sweep(params, &sds, &mut state, full, &mut screen, &mut rng, &mut counts);
        draws.push(state.theta.clone());
        log_lik.push(state.full);
        log_prior.push(state.prior);
    }
    let burn_in = (cfg.burn_in.clamp(0.0, 1.0) * cfg.iterations as f64).floor() as usize;
    let remaining = cfg.iterations - burn_in;
    let thin = match cfg.thin_to {
        Some(k) if k > 0 && remaining > k => remaining.div_ceil(k),
        _ => 1,
    };
    Ok(Chain {
        names: params.names().iter().map(|s| s.to_string()).collect(),
        draws,
        log_lik,
        log_prior,
        seed: cfg.seed,
        proposal_sds: sds,
        proposals: counts.proposals,
        accepted: counts.accepted,
        stage1_accepted: counts.stage1,
        likelihood_calls: counts.calls,
        burn_in,
        thin,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// PALMH.
pub fn metropolis_pal(
    family: &dyn ModelFamily,
    data: &ObservationSeries,
    params: &ParamVector,
    cfg: &McmcConfig,
) -> Result<Chain> {
    run_chain(params, cfg, &mut PalLikelihood { family, data }, None)
}

/// PMMH with `particles` particles.
pub fn pmmh_chain(
    family: &dyn ModelFamily,
    data: &ObservationSeries,
    params: &ParamVector,
    cfg: &McmcConfig,
    particles: usize,
) -> Result<Chain> {
    let mut pf = ParticleLikelihood { family, data, config: ParticleConfig::new(particles), rng: stream(cfg.seed, 1) };
    run_chain(params, cfg, &mut pf, None)
}

/// Delayed-acceptance PMMH with a PAL screen.
pub fn dapmmh_chain(
    family: &dyn ModelFamily,
    data: &ObservationSeries,
    params: &ParamVector,
    cfg: &McmcConfig,
    particles: usize,
) -> Result<Chain> {
    let mut pf = ParticleLikelihood { family, data, config: ParticleConfig::new(particles), rng: stream(cfg.seed, 1) };
    let mut pal = PalLikelihood { family, data };
    run_chain(params, cfg, &mut pf, Some(&mut pal))
}

pub fn run_algorithm(
    algo: Algorithm,
    family: &dyn ModelFamily,
    data: &ObservationSeries,
    params: &ParamVector,
    cfg: &McmcConfig,
    particles: usize,
) -> Result<Chain> {
    match algo {
        Algorithm::Palmh => metropolis_pal(family, data, params, cfg),
        Algorithm::Pmmh => pmmh_chain(family, data, params, cfg, particles),
        Algorithm::Dapmmh => dapmmh_chain(family, data, params, cfg, particles),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::diagnostics::{ks_one_sample, mean};
    use crate::model::{Parameter, Prior};
    use statrs::distribution::{ContinuousCDF, Gamma};

    #[test]
    fn conjugate_poisson_posterior() {
        // y_i ~ Poi(θ) with a flat prior on (0, 50): posterior Gamma(1 + Σy, n).
        let y = [3.0, 5.0, 4.0, 6.0, 2.0];
        let sum: f64 = y.iter().sum();
        let n = y.len() as f64;
        let mut lik = |th: &[f64]| -n * th[0] + sum * th[0].ln();
        let params = ParamVector::new(vec![Parameter::new("theta", 4.0, 0.0, 50.0).with_proposal_sd(1.0)]).unwrap();
        let mut cfg = McmcConfig::new(100_000, 11);
        cfg.thin_to = None;
        let chain = run_chain(&params, &cfg, &mut lik, None).unwrap();
        let kept = Chain::column(&chain.kept(), 0);
        let post = Gamma::new(1.0 + sum, n).unwrap();
        // Thin to roughly independent draws for the KS comparison.
        let thinned: Vec<f64> = kept.iter().step_by(10).copied().collect();
        let d = ks_one_sample(&thinned, |v| post.cdf(v));
        assert!(d < 1.628 / (thinned.len() as f64).sqrt(), "KS {d}");
        assert!((mean(&kept) - (1.0 + sum) / n).abs() < 0.05);
    }

    #[test]
    fn flat_target_accepts_in_bounds_proposals() {
        let params = ParamVector::new(vec![Parameter::new("u", 0.5, 0.0, 1.0).with_proposal_sd(0.3)]).unwrap();
        let mut cfg = McmcConfig::new(20_000, 5);
        cfg.tuning_sweeps = 0;
        let chain = run_chain(&params, &cfg, &mut |_: &[f64]| 0.0, None).unwrap();
        // Everything in bounds is accepted, so the acceptance rate is the
        // probability that a proposal from a uniform incumbent lands in [0, 1].
        let rate = chain.acceptance_rates()[0];
        let sd: f64 = 0.3;
        let z = statrs::distribution::Normal::standard();
        let a = 1.0 / sd;
        let phi = |v: f64| statrs::distribution::Continuous::pdf(&z, v);
        let expected = 1.0 - 2.0 * sd * (a * z.sf(a) + phi(0.0) - phi(a));
        assert!((rate - expected).abs() < 0.02, "{rate} vs {expected}");
    }

    #[test]
    fn identical_screen_always_passes_stage_two() {
        let params = ParamVector::new(vec![
            Parameter::new("a", 0.0, -10.0, 10.0).with_prior(Prior::TruncatedNormal { mean: 0.0, sd: 2.0 }),
        ])
        .unwrap();
        let f = |th: &[f64]| -0.5 * (th[0] - 1.0).powi(2);
        let mut full = f;
        let mut screen = f;
        let cfg = McmcConfig::new(5_000, 9);
        let chain = run_chain(&params, &cfg, &mut full, Some(&mut screen)).unwrap();
        assert_eq!(chain.accepted, chain.stage1_accepted);
        assert_eq!(chain.likelihood_calls, chain.stage1_accepted[0]);
        assert!(chain.stage1_rates()[0] < 1.0);
    }

    #[test]
    fn delayed_and_plain_chains_agree_without_noise() {
        // With the screen equal to the exact target, delayed acceptance and
        // plain MH consume identical randomness and give the same chain.
        let params = ParamVector::new(vec![Parameter::new("a", 0.3, -5.0, 5.0)]).unwrap();
        let f = |th: &[f64]| -(th[0] - 1.0).powi(2);
        let cfg = McmcConfig::new(2_000, 3);
        let plain = run_chain(&params, &cfg, &mut { f }, None).unwrap();
        let delayed = run_chain(&params, &cfg, &mut { f }, Some(&mut { f })).unwrap();
        assert_eq!(plain.draws, delayed.draws);
    }
}
