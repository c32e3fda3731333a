//! Exact likelihood by dynamic programming over the full discrete state space.
//!
//! Only feasible for tiny models (a handful of compartments, tens of
//! individuals). Poisson initial counts and immigration are truncated where the
//! upper tail drops below a tolerance; the dropped mass is reported.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::CountMatrix;
use crate::model::{eval_kernel, InitialDistribution, ModelSpec, Schedule};
use crate::simulator::ObservationSeries;

use super::pmf::{binomial_pmf_vec, ln_binomial_pmf, multinomial_outcomes, poisson_pmf_truncated, prevalence_log_pmf};

/// Poisson truncation tolerance for initial counts and immigration.
pub const POISSON_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub loglik: f64,
    /// Total probability mass dropped by Poisson truncation, relative to the
    /// mass carried at the time of truncation, summed over steps.
    pub truncated_mass: f64,
    /// Largest number of simultaneously tracked states.
    pub max_states: usize,
}

type Dist = BTreeMap<Vec<u64>, f64>;

struct Enumerator<'a> {
    spec: &'a ModelSpec,
    state_cap: u64,
    truncated: f64,
    max_states: usize,
}

impl Enumerator<'_> {
    fn check_cap(&mut self, dist: &Dist, m: usize) -> Result<()> {
        self.max_states = self.max_states.max(dist.len());
        for key in dist.keys() {
            let pop: u64 = key[..m].iter().sum();
            if pop > self.state_cap {
                return Err(Error::StateSpace(format!(
                    "population {pop} exceeds the enumeration cap {}",
                    self.state_cap
                )));
            }
        }
        Ok(())
    }

    fn initial(&mut self, extra: usize) -> Result<Dist> {
        let m = self.spec.compartments;
        let init = self.spec.initial.clone();
        let outcomes = self.initial_outcomes(&init)?;
        let mut dist = Dist::new();
        for (mut v, p) in outcomes {
            v.resize(m + extra, 0);
            *dist.entry(v).or_insert(0.0) += p;
        }
        self.check_cap(&dist, m)?;
        Ok(dist)
    }

    fn initial_outcomes(&mut self, init: &InitialDistribution) -> Result<Vec<(Vec<u64>, f64)>> {
        Ok(match init {
            InitialDistribution::Deterministic(x) => vec![(x.clone(), 1.0)],
            InitialDistribution::Multinomial { n, probs } => {
                if *n > self.state_cap {
                    return Err(Error::StateSpace(format!("initial population {n} exceeds cap")));
                }
                multinomial_outcomes(*n, probs)
            }
            InitialDistribution::VectorPoisson(l) => {
                let parts = l
                    .iter()
                    .map(|&li| {
                        let (pmf, tail) = poisson_pmf_truncated(li, POISSON_TAIL);
                        self.truncated += tail;
                        pmf.into_iter().enumerate().map(|(k, p)| (vec![k as u64], p)).collect()
                    })
                    .collect::<Vec<_>>();
                product_outcomes(parts)
            }
            InitialDistribution::Product(parts) => {
                let mut lists = Vec::with_capacity(parts.len());
                for part in parts {
                    lists.push(self.initial_outcomes(part)?);
                }
                product_outcomes(lists)
            }
        })
    }

    /// Distribution of `x̄` given `x` under binomial survival.
    fn survive(&self, x: &[u64], t: usize) -> Vec<(Vec<u64>, f64)> {
        let delta = self.spec.survival.at(t);
        let mut out: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), 1.0)];
        for (xi, d) in x.iter().zip(delta.iter()) {
            let pmf = binomial_pmf_vec(*xi, *d);
            let mut next = Vec::new();
            for (v, p) in &out {
                for (k, pk) in pmf.iter().enumerate() {
                    if *pk > 0.0 {
                        let mut w = v.clone();
                        w.push(k as u64);
                        next.push((w, p * pk));
                    }
                }
            }
            out = next;
        }
        out
    }

    fn immigration(&mut self, t: usize) -> Vec<(Vec<u64>, f64)> {
        let alpha = self.spec.immigration.at(t);
        let mut out: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), 1.0)];
        let mut dropped = 0.0;
        for &a in alpha.iter() {
            let (pmf, tail) = poisson_pmf_truncated(a, POISSON_TAIL);
            dropped += tail;
            let mut next = Vec::new();
            for (v, p) in &out {
                for (k, pk) in pmf.iter().enumerate() {
                    let mut w = v.clone();
                    w.push(k as u64);
                    next.push((w, p * pk));
                }
            }
            out = next;
        }
        self.truncated += dropped;
        out
    }

    /// One latent step for prevalence data: distribution over `x_t`.
    fn step_counts(&mut self, dist: &Dist, t: usize) -> Result<Dist> {
        let m = self.spec.compartments;
        let imm = self.immigration(t);
        let mut next = Dist::new();
        for (x, px) in dist {
            for (xbar, pb) in self.survive(x, t) {
                let s: Vec<f64> = xbar.iter().map(|&v| v as f64).collect();
                let k = eval_kernel(self.spec, t, &s)?;
                let mut partial: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
                partial.insert(vec![0; m], px * pb);
                for i in 0..m {
                    if xbar[i] == 0 {
                        continue;
                    }
                    let outcomes = multinomial_outcomes(xbar[i], k.row(i));
                    let mut acc = BTreeMap::new();
                    for (v, p) in &partial {
                        for (o, po) in &outcomes {
                            let w: Vec<u64> = v.iter().zip(o).map(|(a, b)| a + b).collect();
                            *acc.entry(w).or_insert(0.0) += p * po;
                        }
                    }
                    partial = acc;
                }
                for (v, p) in partial {
                    for (h, ph) in &imm {
                        let w: Vec<u64> = v.iter().zip(h).map(|(a, b)| a + b).collect();
                        *next.entry(w).or_insert(0.0) += p * ph;
                    }
                }
            }
        }
        self.check_cap(&next, m)?;
        Ok(next)
    }

    /// One latent step for incidence data. States carry `x` followed by the
    /// reported counts accumulated in the current window; paths whose
    /// accumulated counts exceed `target` are dropped.
    fn step_incidence(&mut self, dist: &Dist, t: usize, target: &CountMatrix) -> Result<Dist> {
        let m = self.spec.compartments;
        let q = self.spec.incidence_model()?.reporting.at(t).into_owned();
        let imm = self.immigration(t);
        let mut next = Dist::new();
        for (key, px) in dist {
            let (x, acc0) = key.split_at(m);
            for (xbar, pb) in self.survive(x, t) {
                let s: Vec<f64> = xbar.iter().map(|&v| v as f64).collect();
                let k = eval_kernel(self.spec, t, &s)?;
                // partial: (column totals, accumulated reports) -> prob
                let mut partial: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
                let mut start = vec![0u64; m];
                start.extend_from_slice(acc0);
                partial.insert(start, px * pb);
                for i in 0..m {
                    if xbar[i] == 0 {
                        continue;
                    }
                    // Row i: transition counts and their reported part.
                    let mut row_outcomes: Vec<(Vec<u64>, Vec<u64>, f64)> = Vec::new();
                    for (z, pz) in multinomial_outcomes(xbar[i], k.row(i)) {
                        let mut reports: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), pz)];
                        for j in 0..m {
                            let mut nr = Vec::new();
                            for (r, pr) in &reports {
                                for yv in 0..=z[j] {
                                    let lp = ln_binomial_pmf(yv, z[j], q[(i, j)]);
                                    if lp > f64::NEG_INFINITY {
                                        let mut w = r.clone();
                                        w.push(yv);
                                        nr.push((w, pr * lp.exp()));
                                    }
                                }
                            }
                            reports = nr;
                        }
                        for (r, pr) in reports {
                            row_outcomes.push((z.clone(), r, pr));
                        }
                    }
                    let mut acc = BTreeMap::new();
                    for (v, p) in &partial {
                        for (z, r, pr) in &row_outcomes {
                            let mut w = v.clone();
                            let mut feasible = true;
                            for j in 0..m {
                                w[j] += z[j];
                                let idx = m + i * m + j;
                                w[idx] += r[j];
                                if w[idx] > target[(i, j)] {
                                    feasible = false;
                                    break;
                                }
                            }
                            if feasible {
                                *acc.entry(w).or_insert(0.0) += p * pr;
                            }
                        }
                    }
                    partial = acc;
                }
                for (v, p) in partial {
                    for (h, ph) in &imm {
                        let mut w = v.clone();
                        for j in 0..m {
                            w[j] += h[j];
                        }
                        *next.entry(w).or_insert(0.0) += p * ph;
                    }
                }
            }
        }
        self.check_cap(&next, m)?;
        Ok(next)
    }
}

/// Exact `log p(data)` under `spec` by enumeration. `state_cap` bounds the
/// total population of any tracked state.
pub fn exact_loglik_enumerate(spec: &ModelSpec, data: &ObservationSeries, state_cap: u64) -> Result<OracleResult> {
    let m = spec.compartments;
    let mut en = Enumerator { spec, state_cap, truncated: 0.0, max_states: 0 };
    let mut loglik = 0.0;
    match data {
        ObservationSeries::Prevalence(ys) => {
            let obs = spec.prevalence_model()?;
            let mut dist = en.initial(0)?;
            for (idx, y) in ys.iter().enumerate() {
                let t = idx + 1;
                dist = en.step_counts(&dist, t)?;
                let (q, g, kappa) = (obs.detection.at(t), obs.misreport.at(t), obs.clutter.at(t));
                let mut mass = 0.0;
                for (x, p) in dist.iter_mut() {
                    let l = prevalence_log_pmf(y, x, &q, &g, &kappa)?.exp();
                    *p *= l;
                    mass += *p;
                }
                if mass <= 0.0 {
                    return Ok(OracleResult { loglik: f64::NEG_INFINITY, truncated_mass: en.truncated, max_states: en.max_states });
                }
                loglik += mass.ln();
                dist.retain(|_, p| *p > 0.0);
                dist.values_mut().for_each(|p| *p /= mass);
            }
        }
        ObservationSeries::Incidence(_) | ObservationSeries::Aggregated { .. } => {
            let (schedule, totals) = data.as_aggregated().expect("incidence data");
            Schedule::check(&schedule)?;
            let mut dist = en.initial(m * m)?;
            let mut t = 0;
            for (&tau, target) in schedule.iter().zip(&totals) {
                while t < tau {
                    t += 1;
                    dist = en.step_incidence(&dist, t, target)?;
                }
                let mut kept = Dist::new();
                let mut mass = 0.0;
                for (key, p) in dist {
                    if key[m..] == *target.as_slice() {
                        mass += p;
                        let mut k = key[..m].to_vec();
                        k.resize(m + m * m, 0);
                        *kept.entry(k).or_insert(0.0) += p;
                    }
                }
                if mass <= 0.0 {
                    return Ok(OracleResult { loglik: f64::NEG_INFINITY, truncated_mass: en.truncated, max_states: en.max_states });
                }
                loglik += mass.ln();
                kept.values_mut().for_each(|p| *p /= mass);
                dist = kept;
            }
        }
    }
    Ok(OracleResult { loglik, truncated_mass: en.truncated, max_states: en.max_states })
}

fn product_outcomes(parts: Vec<Vec<(Vec<u64>, f64)>>) -> Vec<(Vec<u64>, f64)> {
    let mut acc: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), 1.0)];
    for part in parts {
        let mut next = Vec::with_capacity(acc.len() * part.len());
        for (v, p) in &acc {
            for (w, q) in &part {
                let mut u = v.clone();
                u.extend_from_slice(w);
                next.push((u, p * q));
            }
        }
        acc = next;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{IncidenceModel, PrevalenceModel, TimeMatrix, TimeVector};
    use crate::oracle::pmf::ln_poisson_pmf;

    #[test]
    fn pure_poisson_model_matches_closed_form() {
        // x_0 ~ Pois(2), identity kernel, full detection: y_1 = x_0.
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![2.0]), |_, _| Matrix::identity(1))
            .with_prevalence(PrevalenceModel {
                detection: TimeVector::constant(vec![1.0]),
                misreport: TimeMatrix::constant(Matrix::identity(1)),
                clutter: TimeVector::constant(vec![0.0]),
            });
        let res = exact_loglik_enumerate(&spec, &ObservationSeries::Prevalence(vec![vec![3], vec![3]]), 100).unwrap();
        assert!((res.loglik - ln_poisson_pmf(3, 2.0)).abs() < 1e-12);
        assert!(res.truncated_mass < 1e-11);
    }

    #[test]
    fn marginal_over_observations_sums_to_one() {
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![1.5, 0.5]), |_, _| {
            Matrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]])
        })
        .with_prevalence(PrevalenceModel {
            detection: TimeVector::constant(vec![0.6, 0.4]),
            misreport: TimeMatrix::constant(Matrix::from_rows(&[vec![0.9, 0.1], vec![0.0, 1.0]])),
            clutter: TimeVector::constant(vec![0.1, 0.2]),
        });
        let mut total = 0.0;
        for a in 0..20u64 {
            for b in 0..20u64 {
                let data = ObservationSeries::Prevalence(vec![vec![a, b]]);
                total += exact_loglik_enumerate(&spec, &data, 60).unwrap().loglik.exp();
            }
        }
        assert!((1.0 - 1e-9..=1.0 + 1e-9).contains(&total), "{total}");
    }

    #[test]
    fn state_cap_is_enforced() {
        let spec = ModelSpec::new(InitialDistribution::Deterministic(vec![50]), |_, _| Matrix::identity(1))
            .with_incidence(IncidenceModel {
                reporting: TimeMatrix::constant(Matrix::zeros(1)),
                schedule: Schedule::EveryStep,
                open_population: false,
            });
        let data = ObservationSeries::Incidence(vec![CountMatrix::zeros(1)]);
        assert!(matches!(exact_loglik_enumerate(&spec, &data, 30), Err(Error::StateSpace(_))));
    }
}
