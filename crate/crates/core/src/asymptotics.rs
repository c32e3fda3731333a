//! Large-population limits: deterministic limit trajectories, limiting filter
//! intensities under a possibly misspecified model, and the Kullback-Leibler
//! contrast that the normalized log-PAL converges to.
//!
//! All quantities are per capita. Kernels are evaluated at `scale · s`, with
//! `scale` taken from the spec's [`PerCapitaLimits`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{eval_kernel, ModelSpec, PerCapitaLimits, Schedule};

/// Limit quantities for `t = 0..=T` (states) and `t = 1..=T` (the rest).
#[derive(Debug, Clone, Default, Serialize)]
pub struct LimitTrace {
    /// `ν_t` for trajectories, `λ̄_{t,∞}` for filter limits.
    pub states: Vec<Vec<f64>>,
    /// `ν_t` or `λ_{t,∞}`, before the observation update.
    pub predicted: Vec<Vec<f64>>,
    /// Prevalence only: `[(ν∘q)ᵀG]ᵀ + κ_∞` or `μ_{t,∞}`.
    pub intensities: Vec<Vec<f64>>,
    /// Incidence only: `N_t` or `Λ_{t,∞}`.
    pub transitions: Vec<Matrix>,
    /// Incidence only: `Σ_{window} N_t∘Q_t` or `M_{r,∞}`, one per observation.
    pub windows: Vec<Matrix>,
    /// Incidence only: observation times.
    pub times: Vec<usize>,
}

fn limits(spec: &ModelSpec) -> Result<&PerCapitaLimits> {
    spec.limits.as_ref().ok_or(Error::MissingLimits)
}

/// `(ν∘δ, K at scale·(ν∘δ))`.
fn thin_and_kernel(spec: &ModelSpec, scale: f64, nu: &[f64], t: usize) -> Result<(Vec<f64>, Matrix)> {
    let delta = spec.survival.at(t);
    let thinned: Vec<f64> = nu.iter().zip(delta.iter()).map(|(v, d)| v * d).collect();
    let s: Vec<f64> = thinned.iter().map(|v| v * scale).collect();
    let k = eval_kernel(spec, t, &s)?;
    Ok((thinned, k))
}

fn add(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// `[(x∘q)ᵀG]ᵀ + κ`.
fn observed_intensity(spec: &ModelSpec, x: &[f64], t: usize) -> Result<Vec<f64>> {
    let obs = spec.prevalence_model()?;
    let q = obs.detection.at(t);
    let xq: Vec<f64> = x.iter().zip(q.iter()).map(|(a, b)| a * b).collect();
    let kappa = limits(spec)?.clutter.at(t);
    Ok(add(obs.misreport.at(t).left_mul(&xq), &kappa))
}

/// `ν_0 = λ_{0,∞}`, `ν_t = [(ν_{t-1}∘δ_t)ᵀK_t]ᵀ + α_{t,∞}`, with the
/// observation limit `[(ν_t∘q_t)ᵀG_t]ᵀ + κ_{t,∞}`.
pub fn limit_trajectory_prevalence(spec: &ModelSpec, horizon: usize) -> Result<LimitTrace> {
    let lim = limits(spec)?;
    let mut tr = LimitTrace { states: vec![lim.initial.clone()], ..Default::default() };
    for t in 1..=horizon {
        let prev = tr.states.last().unwrap();
        let (thinned, k) = thin_and_kernel(spec, lim.scale, prev, t)?;
        let nu = add(k.left_mul(&thinned), &lim.immigration.at(t));
        tr.intensities.push(observed_intensity(spec, &nu, t)?);
        tr.predicted.push(nu.clone());
        tr.states.push(nu);
    }
    Ok(tr)
}

fn open_population(spec: &ModelSpec, horizon: usize) -> Result<bool> {
    let inc = spec.incidence_model()?;
    if inc.open_population {
        return Ok(true);
    }
    spec.is_closed(horizon).map_err(|t| Error::CaseRestriction { t })?;
    Ok(false)
}

fn observation_times(spec: &ModelSpec, horizon: usize) -> Result<Vec<usize>> {
    let times = spec.incidence_model()?.schedule.times(horizon);
    Schedule::check(&times)?;
    Ok(times)
}

/// `N_t = ((ν_{t-1}∘δ_t) ⊗ 1)∘K_t`, `ν_t = (1ᵀN_t)ᵀ + α_{t,∞}`, with window
/// totals `Σ N_t∘Q_t` at the observation times. Survival and immigration are
/// only allowed for open-population incidence models.
pub fn limit_trajectory_incidence(spec: &ModelSpec, horizon: usize) -> Result<LimitTrace> {
    let lim = limits(spec)?;
    open_population(spec, horizon)?;
    let reporting = &spec.incidence_model()?.reporting;
    let times = observation_times(spec, horizon)?;
    let m = spec.compartments;
    let mut tr = LimitTrace { states: vec![lim.initial.clone()], times: times.clone(), ..Default::default() };
    let mut window = Matrix::zeros(m);
    let mut next = times.iter().peekable();
    for t in 1..=horizon {
        let prev = tr.states.last().unwrap();
        let (thinned, k) = thin_and_kernel(spec, lim.scale, prev, t)?;
        let n_t = Matrix::from_fn(m, |i, j| thinned[i] * k[(i, j)]);
        let q = reporting.at(t);
        for (w, (a, b)) in window.as_mut_slice().iter_mut().zip(n_t.as_slice().iter().zip(q.as_slice())) {
            *w += a * b;
        }
        if next.peek() == Some(&&t) {
            next.next();
            tr.windows.push(std::mem::replace(&mut window, Matrix::zeros(m)));
        }
        let nu = add(n_t.column_sums(), &lim.immigration.at(t));
        tr.predicted.push(nu.clone());
        tr.states.push(nu);
        tr.transitions.push(n_t);
    }
    Ok(tr)
}

/// The limiting case I filter run on limiting data from `truth` under the
/// model `model`: `λ̄_{0,∞} = λ_{0,∞}(θ)`,
/// `λ_{t,∞} = [(λ̄_{t-1,∞}∘δ)ᵀK]ᵀ + α_∞`, `μ_{t,∞} = [(λ_{t,∞}∘q)ᵀG]ᵀ + κ_∞`
/// and `λ̄_{t,∞} = (1 − q + q∘G(μ_{t,∞}(θ*,θ*) ⊘ μ_{t,∞}))∘λ_{t,∞}`.
pub fn limit_filter_prevalence(truth: &ModelSpec, model: &ModelSpec, horizon: usize) -> Result<LimitTrace> {
    let target = limit_trajectory_prevalence(truth, horizon)?;
    let lim = limits(model)?;
    let obs = model.prevalence_model()?;
    let mut tr = LimitTrace { states: vec![lim.initial.clone()], ..Default::default() };
    for t in 1..=horizon {
        let prev = tr.states.last().unwrap();
        let (thinned, k) = thin_and_kernel(model, lim.scale, prev, t)?;
        let lambda = add(k.left_mul(&thinned), &lim.immigration.at(t));
        let mu = observed_intensity(model, &lambda, t)?;
        let star = &target.intensities[t - 1];
        let ratio: Vec<f64> = star
            .iter()
            .zip(&mu)
            .enumerate()
            .map(|(i, (&a, &b))| {
                if a == 0.0 {
                    Ok(0.0)
                } else if b <= 0.0 {
                    Err(Error::SupportMismatch { step: t, index: vec![i] })
                } else {
                    Ok(a / b)
                }
            })
            .collect::<Result<_>>()?;
        let routed = obs.misreport.at(t).mul_vec(&ratio);
        let q = obs.detection.at(t);
        let updated: Vec<f64> = (0..lambda.len())
            .map(|j| (1.0 - q[j] + q[j] * routed[j]) * lambda[j])
            .collect();
        tr.predicted.push(lambda);
        tr.intensities.push(mu);
        tr.states.push(updated);
    }
    Ok(tr)
}

/// The limiting case II filter: `Λ_{t,∞} = ((λ̄_{t-1,∞}∘δ) ⊗ 1)∘K`,
/// `M_{r,∞} = Σ_{window} Λ_{t,∞}∘Q_t` and at observation times
/// `Λ̄_{τ,∞} = (1 − Q)∘Λ_{τ,∞} + M_r(θ*,θ*) ∘ (Λ_{τ,∞}∘Q ⊘ M_{r,∞})`.
pub fn limit_filter_incidence(truth: &ModelSpec, model: &ModelSpec, horizon: usize) -> Result<LimitTrace> {
    let target = limit_trajectory_incidence(truth, horizon)?;
    let lim = limits(model)?;
    open_population(model, horizon)?;
    let times = observation_times(model, horizon)?;
    if times != target.times {
        return Err(Error::Config("truth and model observe at different times".into()));
    }
    let reporting = &model.incidence_model()?.reporting;
    let m = model.compartments;
    let mut tr = LimitTrace { states: vec![lim.initial.clone()], times: times.clone(), ..Default::default() };
    let mut window = Matrix::zeros(m);
    let mut r = 0;
    for t in 1..=horizon {
        let prev = tr.states.last().unwrap();
        let (thinned, k) = thin_and_kernel(model, lim.scale, prev, t)?;
        let big = Matrix::from_fn(m, |i, j| thinned[i] * k[(i, j)]);
        let q = reporting.at(t);
        for (w, (a, b)) in window.as_mut_slice().iter_mut().zip(big.as_slice().iter().zip(q.as_slice())) {
            *w += a * b;
        }
        let mut updated = big.clone();
        if r < times.len() && times[r] == t {
            let star = &target.windows[r];
            for i in 0..m {
                for j in 0..m {
                    let (a, mm, qq) = (star[(i, j)], window[(i, j)], q[(i, j)]);
                    let share = if a == 0.0 {
                        0.0
                    } else if mm <= 0.0 {
                        return Err(Error::SupportMismatch { step: r + 1, index: vec![i, j] });
                    } else {
                        a * (big[(i, j)] * qq / mm)
                    };
                    updated[(i, j)] = (1.0 - qq) * big[(i, j)] + share;
                }
            }
            tr.windows.push(std::mem::replace(&mut window, Matrix::zeros(m)));
            r += 1;
        }
        let lambda_bar = add(updated.column_sums(), &lim.immigration.at(t));
        tr.predicted.push(big.column_sums());
        tr.states.push(lambda_bar);
        tr.transitions.push(big);
    }
    Ok(tr)
}

/// `KL(Poi(a) ‖ Poi(b))` with `0 log 0 = 0`.
pub fn poisson_kl(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln() - a + b
    }
}

/// Which contrast to form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastKind {
    /// Sum over `t ≤ T` of Poisson KL between observation intensities.
    Prevalence,
    /// Sum over observation windows of Poisson KL between `M_r` entries.
    Incidence,
}

/// `−Σ KL(Poi[limit intensity under θ*] ‖ Poi[limit intensity under θ])`:
/// zero when the intensity sequences coincide and negative otherwise.
pub fn kl_contrast(truth: &ModelSpec, model: &ModelSpec, horizon: usize, kind: ContrastKind) -> Result<f64> {
    let (star, fit) = match kind {
        ContrastKind::Prevalence => {
            let star = limit_trajectory_prevalence(truth, horizon)?.intensities;
            let fit = limit_filter_prevalence(truth, model, horizon)?.intensities;
            (star, fit)
        }
        ContrastKind::Incidence => {
            let flat = |v: Vec<Matrix>| v.into_iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>();
            let star = flat(limit_trajectory_incidence(truth, horizon)?.windows);
            let fit = flat(limit_filter_incidence(truth, model, horizon)?.windows);
            (star, fit)
        }
    };
    let mut total = 0.0;
    for (a, b) in star.iter().zip(&fit) {
        for (&x, &y) in a.iter().zip(b) {
            total += poisson_kl(x, y);
        }
    }
    Ok(-total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IncidenceModel, InitialDistribution, PrevalenceModel, TimeMatrix, TimeVector};
    use crate::zoo::{build_seir, SeirConfig};

    fn limits_for(initial: Vec<f64>) -> PerCapitaLimits {
        let m = initial.len();
        PerCapitaLimits {
            scale: 1.0,
            initial,
            immigration: TimeVector::constant(vec![0.0; m]),
            clutter: TimeVector::constant(vec![0.0; m]),
        }
    }

    #[test]
    fn identity_kernel_is_fixed_point() {
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![3.0, 1.0]), |_, _| Matrix::identity(2))
            .with_prevalence(PrevalenceModel {
                detection: TimeVector::constant(vec![0.5, 0.5]),
                misreport: TimeMatrix::constant(Matrix::identity(2)),
                clutter: TimeVector::constant(vec![0.0; 2]),
            })
            .with_incidence(IncidenceModel {
                reporting: TimeMatrix::constant(Matrix::from_fn(2, |_, _| 0.5)),
                schedule: Schedule::Every(3),
                open_population: false,
            })
            .with_limits(limits_for(vec![0.75, 0.25]));
        let p = limit_trajectory_prevalence(&spec, 10).unwrap();
        let i = limit_trajectory_incidence(&spec, 10).unwrap();
        for t in 0..=10 {
            assert_eq!(p.states[t], vec![0.75, 0.25]);
            assert_eq!(i.states[t], vec![0.75, 0.25]);
        }
        assert_eq!(i.windows.len(), 3);
        assert_eq!(i.windows[0][(0, 0)], 3.0 * 0.75 * 0.5);
    }

    #[test]
    fn missing_limits_rejected() {
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![1.0]), |_, _| Matrix::identity(1));
        assert!(matches!(limit_trajectory_prevalence(&spec, 3), Err(Error::MissingLimits)));
    }

    #[test]
    fn immigration_pushes_susceptible_fraction_above_one() {
        let spec = build_seir(&SeirConfig::simulation_study(1000)).unwrap();
        let tr = limit_trajectory_prevalence(&spec, 100).unwrap();
        assert!(tr.states.iter().any(|nu| nu[0] > 1.0));
    }

    #[test]
    fn undetected_filter_limit_does_not_update() {
        let mut cfg = SeirConfig::simulation_study(1000);
        cfg.prevalence.as_mut().unwrap().detection = [0.0; 4];
        let truth = build_seir(&cfg).unwrap();
        cfg.beta = 0.2;
        let model = build_seir(&cfg).unwrap();
        let tr = limit_filter_prevalence(&truth, &model, 30).unwrap();
        for t in 1..=30 {
            assert_eq!(tr.states[t], tr.predicted[t - 1]);
        }
    }

    #[test]
    fn contrast_zero_at_truth_negative_elsewhere() {
        let truth = build_seir(&SeirConfig::simulation_study(1000)).unwrap();
        assert_eq!(kl_contrast(&truth, &truth, 50, ContrastKind::Prevalence).unwrap(), 0.0);
        let mut cfg = SeirConfig::simulation_study(1000);
        cfg.beta = 0.1;
        cfg.gamma = 0.3;
        let model = build_seir(&cfg).unwrap();
        assert!(kl_contrast(&truth, &model, 50, ContrastKind::Prevalence).unwrap() < 0.0);
    }

    #[test]
    fn poisson_kl_conventions() {
        assert_eq!(poisson_kl(0.0, 2.0), 2.0);
        assert_eq!(poisson_kl(2.0, 2.0), 0.0);
        assert!(poisson_kl(1.0, 0.0).is_infinite());
    }
}
