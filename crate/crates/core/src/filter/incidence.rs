//! Filtering for incidence observations: per-step data and data aggregated
//! over an observation schedule.
//!
//! Both filters require a closed population unless the incidence model sets
//! `open_population`, in which case survival thins the intensity before the
//! transition and immigration is added after the update.

use crate::error::{Error, Result};
use crate::linalg::{CountMatrix, Matrix};
use crate::model::{eval_kernel, ModelSpec, Schedule};

use super::{poisson_term, FilterOptions, IncidenceTrace};

pub(crate) fn check_population(spec: &ModelSpec, horizon: usize) -> Result<bool> {
    let open = spec.incidence_model()?.open_population;
    if !open {
        if let Err(t) = spec.is_closed(horizon) {
            return Err(Error::CaseRestriction { t });
        }
    }
    Ok(open)
}

/// `Λ_t = (s ⊗ 1) ∘ K_t` with `s = λ̄_{t-1}` (times `δ_t` when open).
pub fn predict_incidence(spec: &ModelSpec, lambda_bar: &[f64], t: usize, open: bool) -> Result<Matrix> {
    let s: Vec<f64> = if open {
        let delta = spec.survival.at(t);
        lambda_bar.iter().zip(delta.iter()).map(|(l, d)| l * d).collect()
    } else {
        lambda_bar.to_vec()
    };
    let k = eval_kernel(spec, t, &s)?;
    let mut big = k;
    for (i, si) in s.iter().enumerate() {
        for v in big.row_mut(i) {
            *v *= si;
        }
    }
    if !big.is_finite() {
        return Err(Error::Divergence { step: t });
    }
    Ok(big)
}

fn add_immigration(spec: &ModelSpec, lambda_bar: &mut [f64], t: usize, open: bool) {
    if open {
        for (l, a) in lambda_bar.iter_mut().zip(spec.immigration.at(t).iter()) {
            *l += a;
        }
    }
}

fn check_dims(spec: &ModelSpec, y: &CountMatrix, t: usize) -> Result<()> {
    if y.dim() != spec.compartments {
        return Err(Error::Validation(format!(
            "observation at t={t} is {}x{}, expected {m}x{m}",
            y.dim(),
            y.dim(),
            m = spec.compartments
        )));
    }
    Ok(())
}

/// Per-step incidence filter over `Y_1..Y_T`.
pub fn pal_incidence_unit(spec: &ModelSpec, y: &[CountMatrix], opts: FilterOptions) -> Result<IncidenceTrace> {
    let open = check_population(spec, y.len())?;
    let reporting = &spec.incidence_model()?.reporting;
    let m = spec.compartments;
    let mut trace = IncidenceTrace::new(opts.drop_constant);
    let mut lambda_bar = spec.initial.mean();
    for (idx, yt) in y.iter().enumerate() {
        let t = idx + 1;
        check_dims(spec, yt, t)?;
        let big = predict_incidence(spec, &lambda_bar, t, open)?;
        let q = reporting.at(t);
        let mut reported = Matrix::zeros(m);
        let mut updated = Matrix::zeros(m);
        let mut term = 0.0;
        for i in 0..m {
            for j in 0..m {
                let lq = big[(i, j)] * q[(i, j)];
                reported[(i, j)] = lq;
                term += poisson_term(lq, yt[(i, j)], opts.drop_constant, t, || vec![i, j])?;
                updated[(i, j)] = yt[(i, j)] as f64 + (1.0 - q[(i, j)]) * big[(i, j)];
            }
        }
        if !term.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        lambda_bar = updated.column_sums();
        add_immigration(spec, &mut lambda_bar, t, open);
        trace.push_term(t, term);
        if opts.record {
            trace.predicted.push(big);
            trace.updated.push(updated);
            trace.observation.push(reported);
        }
    }
    Ok(trace)
}

/// Aggregated incidence filter: `totals[r-1]` is the sum of reported
/// transitions over `(schedule[r-2], schedule[r-1]]`.
pub fn pal_incidence_agg(
    spec: &ModelSpec,
    schedule: &[usize],
    totals: &[CountMatrix],
    opts: FilterOptions,
) -> Result<IncidenceTrace> {
    Schedule::check(schedule)?;
    if schedule.len() != totals.len() {
        return Err(Error::Validation(format!(
            "{} observation times but {} aggregated observations",
            schedule.len(),
            totals.len()
        )));
    }
    let horizon = schedule.last().copied().unwrap_or(0);
    let open = check_population(spec, horizon)?;
    let reporting = &spec.incidence_model()?.reporting;
    let m = spec.compartments;
    let mut trace = IncidenceTrace::new(opts.drop_constant);
    let mut lambda_bar = spec.initial.mean();
    let mut t = 0;
    for (r, (&tau, ybar)) in schedule.iter().zip(totals).enumerate() {
        check_dims(spec, ybar, tau)?;
        let mut window = Matrix::zeros(m);
        // Prediction only, up to the step before the observation time.
        while t + 1 < tau {
            t += 1;
            let big = predict_incidence(spec, &lambda_bar, t, open)?;
            let q = reporting.at(t);
            for ((w, l), qv) in window.as_mut_slice().iter_mut().zip(big.as_slice()).zip(q.as_slice()) {
                *w += l * qv;
            }
            lambda_bar = big.column_sums();
            add_immigration(spec, &mut lambda_bar, t, open);
            if opts.record {
                trace.predicted.push(big.clone());
                trace.updated.push(big);
            }
        }
        t = tau;
        let big = predict_incidence(spec, &lambda_bar, t, open)?;
        let q = reporting.at(t);
        let mut reported = Matrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                reported[(i, j)] = big[(i, j)] * q[(i, j)];
                window[(i, j)] += reported[(i, j)];
            }
        }
        let mut updated = Matrix::zeros(m);
        let mut term = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mr = window[(i, j)];
                let yv = ybar[(i, j)];
                term += poisson_term(mr, yv, opts.drop_constant, r + 1, || vec![i, j])?;
                let share = if mr > 0.0 { reported[(i, j)] / mr } else { 0.0 };
                updated[(i, j)] = (1.0 - q[(i, j)]) * big[(i, j)] + yv as f64 * share;
            }
        }
        if !term.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        lambda_bar = updated.column_sums();
        add_immigration(spec, &mut lambda_bar, t, open);
        trace.push_term(tau, term);
        if opts.record {
            trace.predicted.push(big);
            trace.updated.push(updated);
            trace.observation.push(window);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IncidenceModel, InitialDistribution, TimeMatrix, TimeVector};

    fn two_state(q: Matrix) -> ModelSpec {
        ModelSpec::new(InitialDistribution::VectorPoisson(vec![50.0, 5.0]), |_, _| {
            Matrix::from_rows(&[vec![0.8, 0.2], vec![0.1, 0.9]])
        })
        .with_incidence(IncidenceModel {
            reporting: TimeMatrix::constant(q),
            schedule: Schedule::EveryStep,
            open_population: false,
        })
    }

    #[test]
    fn full_reporting_pins_update() {
        let spec = two_state(Matrix::from_fn(2, |_, _| 1.0));
        let y = vec![CountMatrix::from_rows(&[vec![40, 9], vec![1, 4]])];
        let tr = pal_incidence_unit(&spec, &y, FilterOptions::REPORTING).unwrap();
        assert_eq!(tr.updated[0], y[0].to_real());
    }

    #[test]
    fn no_reporting_no_information() {
        let spec = two_state(Matrix::zeros(2));
        let y = vec![CountMatrix::zeros(2); 3];
        let tr = pal_incidence_unit(&spec, &y, FilterOptions::REPORTING).unwrap();
        assert_eq!(tr.total, 0.0);
        for (p, u) in tr.predicted.iter().zip(&tr.updated) {
            assert_eq!(p, u);
        }
        let agg = pal_incidence_agg(&spec, &[2, 3], &vec![CountMatrix::zeros(2); 2], FilterOptions::REPORTING).unwrap();
        assert_eq!(agg.log_terms, vec![0.0, 0.0]);
    }

    #[test]
    fn prediction_conserves_mass() {
        let spec = two_state(Matrix::zeros(2));
        let big = predict_incidence(&spec, &[7.0, 3.5], 1, false).unwrap();
        assert!((big.total() - 10.5).abs() < 1e-12);
    }

    #[test]
    fn open_population_requires_flag() {
        let spec = two_state(Matrix::zeros(2)).with_survival(TimeVector::constant(vec![0.9, 1.0]));
        let err = pal_incidence_unit(&spec, &[CountMatrix::zeros(2)], FilterOptions::RATIO).unwrap_err();
        assert!(matches!(err, Error::CaseRestriction { t: 1 }));
    }

    #[test]
    fn aggregated_window_sums_edge_intensity() {
        // Progressive chain 1 -> 2 -> 3 observed on 2 -> 3 over two steps.
        let spec = ModelSpec::new(InitialDistribution::VectorPoisson(vec![100.0, 20.0, 0.0]), |_, _| {
            Matrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.7, 0.3], vec![0.0, 0.0, 1.0]])
        })
        .with_incidence(IncidenceModel {
            reporting: TimeMatrix::constant(Matrix::from_fn(3, |i, j| if (i, j) == (1, 2) { 0.5 } else { 0.0 })),
            schedule: Schedule::Every(2),
            open_population: false,
        });
        let y = CountMatrix::from_fn(3, |i, j| if (i, j) == (1, 2) { 10 } else { 0 });
        let tr = pal_incidence_agg(&spec, &[2], &[y], FilterOptions::REPORTING).unwrap();
        // Step 1: E = 20 gives 6 on the edge; step 2: E = 50 + 14 = 64 gives 19.2.
        let expect = 0.5 * (20.0 * 0.3) + 0.5 * ((100.0 * 0.5 + 20.0 * 0.7) * 0.3);
        assert!((tr.observation[0][(1, 2)] - expect).abs() < 1e-12);
    }
}
