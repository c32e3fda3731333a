//! Exact forward simulation of the latent compartmental model and its
//! observation processes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CountMatrix;
use crate::model::{eval_kernel, InitialDistribution, ModelSpec, Schedule};
use crate::rng::{binomial, multinomial_into, poisson};

/// A simulated latent trajectory.
///
/// `x[t]` holds the counts for `t = 0..=T`; the remaining fields are indexed by
/// `t - 1` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub x: Vec<Vec<u64>>,
    /// Post-emigration counts `x̄_{t-1}`.
    pub xbar: Vec<Vec<u64>>,
    /// Transition counts `Z_t`.
    pub z: Vec<CountMatrix>,
    /// Immigrants `x̂_t`.
    pub xhat: Vec<Vec<u64>>,
}

impl LatentRecord {
    pub fn horizon(&self) -> usize {
        self.z.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Prevalence,
    Incidence,
    Aggregated,
}

impl std::str::FromStr for ObservationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prevalence" => Ok(ObservationKind::Prevalence),
            "incidence" => Ok(ObservationKind::Incidence),
            "aggregated" => Ok(ObservationKind::Aggregated),
            other => Err(Error::Config(format!("unknown observation kind {other:?}"))),
        }
    }
}

/// Observed data. Prevalence and per-step incidence are indexed by `t - 1`;
/// aggregated totals by `r - 1` with observation times `schedule[r - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservationSeries {
    Prevalence(Vec<Vec<u64>>),
    Incidence(Vec<CountMatrix>),
    Aggregated {
        schedule: Vec<usize>,
        totals: Vec<CountMatrix>,
    },
}

impl ObservationSeries {
    pub fn kind(&self) -> ObservationKind {
        match self {
            ObservationSeries::Prevalence(_) => ObservationKind::Prevalence,
            ObservationSeries::Incidence(_) => ObservationKind::Incidence,
            ObservationSeries::Aggregated { .. } => ObservationKind::Aggregated,
        }
    }

    /// Number of latent steps covered by the data.
    pub fn horizon(&self) -> usize {
        match self {
            ObservationSeries::Prevalence(y) => y.len(),
            ObservationSeries::Incidence(y) => y.len(),
            ObservationSeries::Aggregated { schedule, .. } => schedule.last().copied().unwrap_or(0),
        }
    }

    /// Number of observation events.
    pub fn len(&self) -> usize {
        match self {
            ObservationSeries::Prevalence(y) => y.len(),
            ObservationSeries::Incidence(y) => y.len(),
            ObservationSeries::Aggregated { totals, .. } => totals.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-step incidence viewed as aggregated data with `τ_r = r`.
    pub fn as_aggregated(&self) -> Option<(Vec<usize>, Vec<CountMatrix>)> {
        match self {
            ObservationSeries::Incidence(y) => Some(((1..=y.len()).collect(), y.clone())),
            ObservationSeries::Aggregated { schedule, totals } => {
                Some((schedule.clone(), totals.clone()))
            }
            ObservationSeries::Prevalence(_) => None,
        }
    }
}

/// One latent transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub x: Vec<u64>,
    pub z: CountMatrix,
    pub xbar: Vec<u64>,
    pub xhat: Vec<u64>,
}

/// Draws `x_0`.
pub fn sample_initial<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Vec<u64> {
    sample_part(&spec.initial, rng)
}

fn sample_part<R: Rng + ?Sized>(init: &InitialDistribution, rng: &mut R) -> Vec<u64> {
    match init {
        InitialDistribution::VectorPoisson(l) => l.iter().map(|&v| poisson(rng, v)).collect(),
        InitialDistribution::Multinomial { n, probs } => {
            let mut out = vec![0; probs.len()];
            multinomial_into(rng, *n, probs, &mut out);
            out
        }
        InitialDistribution::Deterministic(x) => x.clone(),
        InitialDistribution::Product(parts) => parts.iter().flat_map(|p| sample_part(p, rng)).collect(),
    }
}

/// Emigration, transition and immigration from `x_{t-1}` to `x_t`.
pub fn step_latent<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x_prev: &[u64],
    t: usize,
    rng: &mut R,
) -> Result<Step> {
    let m = spec.compartments;
    let delta = spec.survival.at(t);
    let xbar: Vec<u64> = x_prev
        .iter()
        .zip(delta.iter())
        .map(|(&x, &d)| binomial(rng, x, d))
        .collect();
    let s: Vec<f64> = xbar.iter().map(|&v| v as f64).collect();
    let k = eval_kernel(spec, t, &s)?;
    let mut z = CountMatrix::zeros(m);
    for i in 0..m {
        multinomial_into(rng, xbar[i], k.row(i), z.row_mut(i));
    }
    let alpha = spec.immigration.at(t);
    let xhat: Vec<u64> = alpha.iter().map(|&a| poisson(rng, a)).collect();
    let mut x = z.column_sums();
    for (xi, h) in x.iter_mut().zip(&xhat) {
        *xi += h;
    }
    Ok(Step { x, z, xbar, xhat })
}

/// Thinned, mis-reported, cluttered prevalence observation of `x_t`.
pub fn observe_prevalence<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: &[u64],
    t: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let obs = spec.prevalence_model()?;
    let m = spec.compartments;
    let q = obs.detection.at(t);
    let g = obs.misreport.at(t);
    let kappa = obs.clutter.at(t);
    let mut y = vec![0u64; m];
    let mut routed = vec![0u64; m];
    for j in 0..m {
        let detected = binomial(rng, x[j], q[j]);
        if detected == 0 {
            continue;
        }
        multinomial_into(rng, detected, g.row(j), &mut routed);
        for (yi, r) in y.iter_mut().zip(&routed) {
            *yi += r;
        }
    }
    for (yi, &k) in y.iter_mut().zip(kappa.iter()) {
        *yi += poisson(rng, k);
    }
    Ok(y)
}

/// Binomially thinned incidence observation of `Z_t`.
pub fn observe_incidence<R: Rng + ?Sized>(
    spec: &ModelSpec,
    z: &CountMatrix,
    t: usize,
    rng: &mut R,
) -> Result<CountMatrix> {
    let obs = spec.incidence_model()?;
    let q = obs.reporting.at(t);
    let mut y = CountMatrix::zeros(z.dim());
    for ((yv, &zv), &qv) in y.as_mut_slice().iter_mut().zip(z.as_slice()).zip(q.as_slice()) {
        *yv = binomial(rng, zv, qv);
    }
    Ok(y)
}

/// Simulates `T` steps of the latent process and the requested observations.
pub fn simulate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    horizon: usize,
    kind: ObservationKind,
    rng: &mut R,
) -> Result<(LatentRecord, ObservationSeries)> {
    if horizon == 0 {
        return Err(Error::Validation("simulation horizon must be at least 1".into()));
    }
    let schedule = match kind {
        ObservationKind::Aggregated => {
            let inc = spec.incidence_model()?;
            let times = inc.schedule.times(horizon);
            Schedule::check(&times)?;
            if let Schedule::Times(v) = &inc.schedule {
                if v.last().is_some_and(|&l| l > horizon) {
                    return Err(Error::Validation(format!(
                        "observation schedule ends at {} beyond horizon {horizon}",
                        v.last().unwrap()
                    )));
                }
            }
            times
        }
        _ => Vec::new(),
    };
    let x0 = sample_initial(spec, rng);
    let mut record = LatentRecord {
        x: Vec::with_capacity(horizon + 1),
        xbar: Vec::with_capacity(horizon),
        z: Vec::with_capacity(horizon),
        xhat: Vec::with_capacity(horizon),
    };
    record.x.push(x0);
    let mut prevalence = Vec::new();
    let mut incidence = Vec::new();
    let mut totals = Vec::new();
    let mut window = CountMatrix::zeros(spec.compartments);
    let mut next_obs = schedule.iter().copied().peekable();
    for t in 1..=horizon {
        let step = step_latent(spec, record.x.last().unwrap(), t, rng)?;
        match kind {
            ObservationKind::Prevalence => prevalence.push(observe_prevalence(spec, &step.x, t, rng)?),
            ObservationKind::Incidence => incidence.push(observe_incidence(spec, &step.z, t, rng)?),
            ObservationKind::Aggregated => {
                let y = observe_incidence(spec, &step.z, t, rng)?;
                window.add_assign(&y);
                if next_obs.peek() == Some(&t) {
                    next_obs.next();
                    totals.push(std::mem::replace(&mut window, CountMatrix::zeros(spec.compartments)));
                }
            }
        }
        record.x.push(step.x);
        record.xbar.push(step.xbar);
        record.z.push(step.z);
        record.xhat.push(step.xhat);
    }
    let series = match kind {
        ObservationKind::Prevalence => ObservationSeries::Prevalence(prevalence),
        ObservationKind::Incidence => ObservationSeries::Incidence(incidence),
        ObservationKind::Aggregated => ObservationSeries::Aggregated { schedule, totals },
    };
    Ok((record, series))
}

/// Simulates latent counts only.
pub fn simulate_latent<R: Rng + ?Sized>(
    spec: &ModelSpec,
    horizon: usize,
    rng: &mut R,
) -> Result<LatentRecord> {
    let mut x = sample_initial(spec, rng);
    let mut record = LatentRecord {
        x: vec![x.clone()],
        xbar: Vec::with_capacity(horizon),
        z: Vec::with_capacity(horizon),
        xhat: Vec::with_capacity(horizon),
    };
    for t in 1..=horizon {
        let step = step_latent(spec, &x, t, rng)?;
        x = step.x.clone();
        record.x.push(step.x);
        record.xbar.push(step.xbar);
        record.z.push(step.z);
        record.xhat.push(step.xhat);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{IncidenceModel, PrevalenceModel, TimeMatrix, TimeVector};
    use crate::rng::stream;

    fn identity(x0: Vec<u64>) -> ModelSpec {
        let m = x0.len();
        ModelSpec::new(InitialDistribution::Deterministic(x0), move |_, _| Matrix::identity(m))
    }

    #[test]
    fn identity_dynamics_are_static() {
        let spec = identity(vec![5, 0, 7]);
        let mut rng = stream(1, 0);
        let step = step_latent(&spec, &[5, 0, 7], 1, &mut rng).unwrap();
        assert_eq!(step.x, vec![5, 0, 7]);
        assert_eq!(step.z, CountMatrix::from_rows(&[vec![5, 0, 0], vec![0, 0, 0], vec![0, 0, 7]]));
    }

    #[test]
    fn total_emigration() {
        let spec = identity(vec![5, 3])
            .with_survival(TimeVector::constant(vec![0.0, 0.0]))
            .with_immigration(TimeVector::constant(vec![2.0, 0.0]));
        let mut rng = stream(2, 0);
        let step = step_latent(&spec, &[5, 3], 1, &mut rng).unwrap();
        assert_eq!(step.xbar, vec![0, 0]);
        assert_eq!(step.z, CountMatrix::zeros(2));
        assert_eq!(step.x, step.xhat);
    }

    #[test]
    fn observation_edge_cases() {
        let spec = identity(vec![4, 9]).with_prevalence(PrevalenceModel {
            detection: TimeVector::constant(vec![1.0, 1.0]),
            misreport: TimeMatrix::constant(Matrix::identity(2)),
            clutter: TimeVector::constant(vec![0.0, 0.0]),
        });
        let mut rng = stream(3, 0);
        assert_eq!(observe_prevalence(&spec, &[4, 9], 1, &mut rng).unwrap(), vec![4, 9]);

        let spec = identity(vec![4, 9]).with_incidence(IncidenceModel {
            reporting: TimeMatrix::constant(Matrix::from_fn(2, |_, _| 1.0)),
            schedule: Schedule::EveryStep,
            open_population: false,
        });
        let z = CountMatrix::from_rows(&[vec![1, 2], vec![3, 4]]);
        assert_eq!(observe_incidence(&spec, &z, 1, &mut rng).unwrap(), z);
    }

    #[test]
    fn aggregated_windows_sum_steps() {
        let kernel = |_: usize, _: &[f64]| Matrix::from_rows(&[vec![0.7, 0.3], vec![0.0, 1.0]]);
        let spec = ModelSpec::new(InitialDistribution::Deterministic(vec![200, 0]), kernel)
            .with_incidence(IncidenceModel {
                reporting: TimeMatrix::constant(Matrix::from_fn(2, |_, _| 1.0)),
                schedule: Schedule::Every(3),
                open_population: false,
            });
        let (rec, obs) = simulate(&spec, 7, ObservationKind::Aggregated, &mut stream(4, 0)).unwrap();
        let ObservationSeries::Aggregated { schedule, totals } = obs else { panic!() };
        assert_eq!(schedule, vec![3, 6]);
        let mut first = rec.z[0].clone();
        first.add_assign(&rec.z[1]);
        first.add_assign(&rec.z[2]);
        assert_eq!(totals[0], first);
    }

    #[test]
    fn simulate_is_reproducible() {
        let kernel = |_: usize, s: &[f64]| {
            let i = s[1] / (s[0] + s[1]).max(1.0);
            let p = 1.0 - (-0.8 * i).exp();
            Matrix::from_rows(&[vec![1.0 - p, p], vec![0.0, 1.0]])
        };
        let spec = ModelSpec::new(InitialDistribution::Deterministic(vec![90, 10]), kernel)
            .with_prevalence(PrevalenceModel {
                detection: TimeVector::constant(vec![0.5, 0.5]),
                misreport: TimeMatrix::constant(Matrix::identity(2)),
                clutter: TimeVector::constant(vec![0.5, 0.5]),
            });
        let a = simulate(&spec, 10, ObservationKind::Prevalence, &mut stream(9, 2)).unwrap();
        let b = simulate(&spec, 10, ObservationKind::Prevalence, &mut stream(9, 2)).unwrap();
        assert_eq!(a, b);
    }
}
