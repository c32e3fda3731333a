//! Bootstrap particle filter with exact observation densities.
//!
//! The estimate `exp(loglik)` is unbiased for the likelihood, which is what
//! pseudo-marginal MCMC needs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CountMatrix, Matrix};
use crate::model::{eval_kernel, ModelSpec, Schedule};
use crate::rng::{binomial, multinomial_into, poisson};
use crate::simulator::{sample_initial, ObservationSeries};

use super::pmf::{incidence_log_pmf, log_sum_exp, prevalence_log_pmf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleConfig {
    pub particles: usize,
    pub resampling: Resampling,
}

impl ParticleConfig {
    pub fn new(particles: usize) -> Self {
        ParticleConfig { particles, resampling: Resampling::Multinomial }
    }
}

/// Particle states with their log-weights.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Flat `N × m` latent counts.
    pub states: Vec<u64>,
    /// Flat `N × m²` reported counts accumulated in the current window
    /// (aggregated incidence only).
    pub window: Vec<u64>,
    pub log_weights: Vec<f64>,
    pub loglik: f64,
    pub ess: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn particle(&self, k: usize) -> &[u64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEstimate {
    pub loglik: f64,
    /// Step at which every particle had zero weight, if any.
    pub zero_weight_step: Option<usize>,
    pub min_ess: f64,
}

/// Log-likelihood estimate with `n` particles and multinomial resampling.
pub fn particle_filter_loglik<R: Rng + ?Sized>(
    spec: &ModelSpec,
    data: &ObservationSeries,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(particle_filter(spec, data, ParticleConfig::new(n), rng)?.loglik)
}

/// Sorted uniforms via normalized exponential spacings.
fn sorted_uniforms<R: Rng + ?Sized>(rng: &mut R, n: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += -(1.0 - rng.random::<f64>()).ln();
        out.push(acc);
    }
    acc += -(1.0 - rng.random::<f64>()).ln();
    for u in out.iter_mut() {
        *u /= acc;
    }
}

/// Normalizes log-weights; returns `(log mean weight, ESS)`, or `None` when all
/// weights vanish.
fn normalize(log_w: &[f64], probs: &mut Vec<f64>) -> Option<(f64, f64)> {
    let lse = log_sum_exp(log_w);
    if lse == f64::NEG_INFINITY || lse.is_nan() {
        return None;
    }
    probs.clear();
    probs.extend(log_w.iter().map(|w| (w - lse).exp()));
    let ess = 1.0 / probs.iter().map(|p| p * p).sum::<f64>();
    Some((lse - (log_w.len() as f64).ln(), ess))
}

fn resample<R: Rng + ?Sized>(
    rng: &mut R,
    probs: &[f64],
    scheme: Resampling,
    uniforms: &mut Vec<f64>,
    ancestors: &mut Vec<usize>,
) {
    let n = probs.len();
    match scheme {
        Resampling::Multinomial => sorted_uniforms(rng, n, uniforms),
        Resampling::Systematic => {
            let u0 = rng.random::<f64>() / n as f64;
            uniforms.clear();
            uniforms.extend((0..n).map(|k| u0 + k as f64 / n as f64));
        }
    }
    ancestors.clear();
    let mut cum = probs[0];
    let mut j = 0;
    for &u in uniforms.iter() {
        while u > cum && j + 1 < n {
            j += 1;
            cum += probs[j];
        }
        ancestors.push(j);
    }
}

struct StepInputs {
    delta: Vec<f64>,
    alpha: Vec<f64>,
}

/// Propagates one particle in place; writes `Z_t` into `z`.
fn propagate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    t: usize,
    inputs: &StepInputs,
    x: &mut [u64],
    z: &mut CountMatrix,
    xbar: &mut [u64],
    s: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let m = spec.compartments;
    for i in 0..m {
        xbar[i] = binomial(rng, x[i], inputs.delta[i]);
        s[i] = xbar[i] as f64;
    }
    let k = eval_kernel(spec, t, s)?;
    for i in 0..m {
        multinomial_into(rng, xbar[i], k.row(i), z.row_mut(i));
    }
    x.iter_mut().for_each(|v| *v = 0);
    for i in 0..m {
        for (xj, zij) in x.iter_mut().zip(z.row(i)) {
            *xj += zij;
        }
    }
    for (xj, &a) in x.iter_mut().zip(&inputs.alpha) {
        *xj += poisson(rng, a);
    }
    Ok(())
}

/// Runs the bootstrap filter. Resampling happens at every observation time.
pub fn particle_filter<R: Rng + ?Sized>(
    spec: &ModelSpec,
    data: &ObservationSeries,
    cfg: ParticleConfig,
    rng: &mut R,
) -> Result<ParticleEstimate> {
    if cfg.particles < 2 {
        return Err(Error::Validation("particle filter needs at least 2 particles".into()));
    }
    let n = cfg.particles;
    let m = spec.compartments;
    let (schedule, incidence_targets, prevalence) = match data {
        ObservationSeries::Prevalence(y) => {
            spec.prevalence_model()?;
            ((1..=y.len()).collect::<Vec<_>>(), None, Some(y))
        }
        _ => {
            spec.incidence_model()?;
            let (s, t) = data.as_aggregated().expect("incidence data");
            (s, Some(t), None)
        }
    };
    Schedule::check(&schedule)?;
    let aggregated = matches!(data, ObservationSeries::Aggregated { .. });

    let mut ens = ParticleEnsemble {
        dim: m,
        states: Vec::with_capacity(n * m),
        window: if aggregated { vec![0; n * m * m] } else { Vec::new() },
        log_weights: vec![0.0; n],
        loglik: 0.0,
        ess: n as f64,
    };
    for _ in 0..n {
        ens.states.extend(sample_initial(spec, rng));
    }

    let mut z = CountMatrix::zeros(m);
    let mut xbar = vec![0u64; m];
    let mut s = vec![0.0; m];
    let mut probs = Vec::with_capacity(n);
    let mut uniforms = Vec::with_capacity(n);
    let mut ancestors = Vec::with_capacity(n);
    let mut scratch_states = vec![0u64; n * m];
    let mut scratch_window = vec![0u64; ens.window.len()];
    let mut min_ess = n as f64;

    let mut t = 0;
    for (r, &tau) in schedule.iter().enumerate() {
        while t < tau {
            t += 1;
            let inputs = StepInputs {
                delta: spec.survival.at(t).into_owned(),
                alpha: spec.immigration.at(t).into_owned(),
            };
            let observe_now = t == tau;
            let q_inc: Option<Matrix> = match &spec.incidence {
                Some(inc) if incidence_targets.is_some() => Some(inc.reporting.at(t).into_owned()),
                _ => None,
            };
            let prev_obs = match (&spec.prevalence, prevalence) {
                (Some(p), Some(_)) if observe_now => Some((
                    p.detection.at(t).into_owned(),
                    p.misreport.at(t).into_owned(),
                    p.clutter.at(t).into_owned(),
                )),
                _ => None,
            };
            for k in 0..n {
                let x = &mut ens.states[k * m..(k + 1) * m];
                propagate(spec, t, &inputs, x, &mut z, &mut xbar, &mut s, rng)?;
                if let Some(q) = &q_inc {
                    let target = &incidence_targets.as_ref().unwrap()[r];
                    if observe_now {
                        let lw = if aggregated {
                            // Remaining reports must come from this step.
                            let acc = &ens.window[k * m * m..(k + 1) * m * m];
                            let mut lw = 0.0;
                            for idx in 0..m * m {
                                if acc[idx] > target.as_slice()[idx] {
                                    lw = f64::NEG_INFINITY;
                                    break;
                                }
                            }
                            if lw == 0.0 {
                                let rest = CountMatrix::from_row_major(
                                    m,
                                    acc.iter().zip(target.as_slice()).map(|(a, b)| b - a).collect(),
                                );
                                lw = incidence_log_pmf(&rest, &z, q);
                            }
                            lw
                        } else {
                            incidence_log_pmf(target, &z, q)
                        };
                        ens.log_weights[k] = lw;
                    } else {
                        let acc = &mut ens.window[k * m * m..(k + 1) * m * m];
                        for ((a, &zv), &qv) in acc.iter_mut().zip(z.as_slice()).zip(q.as_slice()) {
                            *a += binomial(rng, zv, qv);
                        }
                    }
                } else if let Some((q, g, kappa)) = &prev_obs {
                    let y = &prevalence.unwrap()[t - 1];
                    ens.log_weights[k] = prevalence_log_pmf(y, x, q, g, kappa)?;
                }
            }
        }

        let Some((log_mean, ess)) = normalize(&ens.log_weights, &mut probs) else {
            ens.loglik = f64::NEG_INFINITY;
            return Ok(ParticleEstimate { loglik: f64::NEG_INFINITY, zero_weight_step: Some(tau), min_ess: 0.0 });
        };
        ens.loglik += log_mean;
        ens.ess = ess;
        min_ess = min_ess.min(ess);
        resample(rng, &probs, cfg.resampling, &mut uniforms, &mut ancestors);
        for (k, &a) in ancestors.iter().enumerate() {
            scratch_states[k * m..(k + 1) * m].copy_from_slice(&ens.states[a * m..(a + 1) * m]);
        }
        std::mem::swap(&mut ens.states, &mut scratch_states);
        if aggregated {
            // Windows restart after every observation.
            scratch_window.iter_mut().for_each(|v| *v = 0);
            std::mem::swap(&mut ens.window, &mut scratch_window);
        }
        ens.log_weights.iter_mut().for_each(|w| *w = 0.0);
    }
    Ok(ParticleEstimate { loglik: ens.loglik, zero_weight_step: None, min_ess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialDistribution, PrevalenceModel, TimeMatrix, TimeVector};
    use crate::oracle::exact_loglik_enumerate;
    use crate::rng::stream;

    #[test]
    fn deterministic_model_is_exact() {
        let spec = ModelSpec::new(InitialDistribution::Deterministic(vec![4, 2]), |_, _| Matrix::identity(2))
            .with_prevalence(PrevalenceModel {
                detection: TimeVector::constant(vec![1.0, 1.0]),
                misreport: TimeMatrix::constant(Matrix::identity(2)),
                clutter: TimeVector::constant(vec![0.0, 0.0]),
            });
        let data = ObservationSeries::Prevalence(vec![vec![4, 2]; 3]);
        for seed in 0..3 {
            let ll = particle_filter_loglik(&spec, &data, 50, &mut stream(seed, 0)).unwrap();
            assert_eq!(ll, 0.0);
        }
        let bad = ObservationSeries::Prevalence(vec![vec![4, 2], vec![3, 2]]);
        let est = particle_filter(&spec, &bad, ParticleConfig::new(10), &mut stream(0, 0)).unwrap();
        assert_eq!(est.zero_weight_step, Some(2));
        assert_eq!(est.loglik, f64::NEG_INFINITY);
    }

    #[test]
    fn resampling_schemes_agree_on_a_tiny_model() {
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![3.0, 1.0]), |_, s: &[f64]| {
            let tot = s[0] + s[1];
            let p = if tot > 0.0 { 0.5 * s[1] / tot } else { 0.0 };
            Matrix::from_rows(&[vec![1.0 - p, p], vec![0.2, 0.8]])
        })
        .with_prevalence(PrevalenceModel {
            detection: TimeVector::constant(vec![0.5, 0.7]),
            misreport: TimeMatrix::constant(Matrix::identity(2)),
            clutter: TimeVector::constant(vec![0.3, 0.3]),
        });
        let data = ObservationSeries::Prevalence(vec![vec![1, 1], vec![2, 0], vec![1, 2]]);
        let exact = exact_loglik_enumerate(&spec, &data, 40).unwrap().loglik;
        for scheme in [Resampling::Multinomial, Resampling::Systematic] {
            let cfg = ParticleConfig { particles: 4000, resampling: scheme };
            let reps: Vec<f64> = (0..20)
                .map(|k| particle_filter(&spec, &data, cfg, &mut stream(11, k)).unwrap().loglik.exp())
                .collect();
            let mean = reps.iter().sum::<f64>() / 20.0;
            assert!((mean.ln() - exact).abs() < 0.05, "{scheme:?}: {} vs {exact}", mean.ln());
        }
    }
}
