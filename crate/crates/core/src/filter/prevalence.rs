//! Filtering for prevalence observations.

use crate::error::{Error, Result};
use crate::model::{eval_kernel, ModelSpec};

use super::{poisson_term, FilterOptions, PrevalenceTrace};

/// `λ_t = [(λ̄_{t-1}∘δ_t)ᵀ K_t]ᵀ + α_t`, kernel evaluated at `λ̄_{t-1}∘δ_t`.
pub fn predict_prevalence(spec: &ModelSpec, lambda_bar: &[f64], t: usize) -> Result<Vec<f64>> {
    let delta = spec.survival.at(t);
    let s: Vec<f64> = lambda_bar.iter().zip(delta.iter()).map(|(l, d)| l * d).collect();
    let k = eval_kernel(spec, t, &s)?;
    let mut lambda = k.left_mul(&s);
    for (l, a) in lambda.iter_mut().zip(spec.immigration.at(t).iter()) {
        *l += a;
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: t });
    }
    Ok(lambda)
}

/// Update step: returns `(λ̄_t, μ_t, ℓ_t)`.
pub fn update_prevalence(
    spec: &ModelSpec,
    lambda: &[f64],
    y: &[u64],
    t: usize,
    drop_constant: bool,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let obs = spec.prevalence_model()?;
    let m = spec.compartments;
    if y.len() != m {
        return Err(Error::Validation(format!(
            "observation at t={t} has {} entries, expected {m}",
            y.len()
        )));
    }
    let q = obs.detection.at(t);
    let g = obs.misreport.at(t);
    let kappa = obs.clutter.at(t);

    let detected: Vec<f64> = lambda.iter().zip(q.iter()).map(|(l, q)| l * q).collect();
    let mut mu = g.left_mul(&detected);
    for (mu_i, k) in mu.iter_mut().zip(kappa.iter()) {
        *mu_i += k;
    }

    let mut log_term = 0.0;
    let mut ratio = vec![0.0; m];
    for i in 0..m {
        log_term += poisson_term(mu[i], y[i], drop_constant, t, || vec![i])?;
        if y[i] > 0 {
            ratio[i] = y[i] as f64 / mu[i];
        }
    }

    let lambda_bar: Vec<f64> = (0..m)
        .map(|j| {
            let routed: f64 = g.row(j).iter().zip(&ratio).map(|(gji, r)| gji * r).sum();
            (1.0 - q[j] + q[j] * routed) * lambda[j]
        })
        .collect();
    if lambda_bar.iter().any(|v| !v.is_finite()) || !log_term.is_finite() {
        return Err(Error::Divergence { step: t });
    }
    Ok((lambda_bar, mu, log_term))
}

/// Prevalence filter over `y_1..y_T`, started from `λ̄_0 = E[x_0]`.
pub fn pal_prevalence(spec: &ModelSpec, y: &[Vec<u64>], opts: FilterOptions) -> Result<PrevalenceTrace> {
    let mut trace = PrevalenceTrace::new(opts.drop_constant);
    let mut lambda_bar = spec.initial.mean();
    for (idx, yt) in y.iter().enumerate() {
        let t = idx + 1;
        let lambda = predict_prevalence(spec, &lambda_bar, t)?;
        let (updated, mu, term) = update_prevalence(spec, &lambda, yt, t, opts.drop_constant)?;
        trace.push_term(t, term);
        if opts.record {
            trace.predicted.push(lambda);
            trace.updated.push(updated.clone());
            trace.observation.push(mu);
        }
        lambda_bar = updated;
    }
    Ok(trace)
}
