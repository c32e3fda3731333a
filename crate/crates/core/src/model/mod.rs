//! Model specification for the latent compartmental model and its observation
//! processes.
//!
//! A [`ModelSpec`] is built at a fixed parameter value: every time-varying
//! quantity is a function of the step index `t` only. Parameter handling lives
//! in [`params`]; [`ModelFamily`] maps a parameter vector to a spec.

pub mod params;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use params::{Parameter, ParamVector, Prior};

/// `(t, s) -> K` where `s` is the raw nonnegative population summary.
pub type KernelFn = dyn Fn(usize, &[f64]) -> Matrix + Send + Sync;
/// `(t, s) -> [K_1, ..., K_B]`, the diagonal blocks of a block-diagonal kernel.
pub type BlockKernelFn = dyn Fn(usize, &[f64]) -> Vec<Matrix> + Send + Sync;

/// Returns `x / sum(x)`, or the zero vector when `x` is all zero.
pub fn normalize_counts(x: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!(
            "normalize_counts: entries must be finite and nonnegative, got {v}"
        )));
    }
    Ok(normalize_unchecked(x))
}

/// [`normalize_counts`] without the sign check, for hot paths where inputs are
/// nonnegative by construction.
#[inline]
pub fn normalize_unchecked(x: &[f64]) -> Vec<f64> {
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// A vector-valued function of the time step.
#[derive(Clone)]
pub enum TimeVector {
    Constant(Vec<f64>),
    Varying(Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>),
}

impl TimeVector {
    pub fn constant(v: Vec<f64>) -> Self {
        TimeVector::Constant(v)
    }

    pub fn varying(f: impl Fn(usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        TimeVector::Varying(Arc::new(f))
    }

    pub fn at(&self, t: usize) -> Cow<'_, [f64]> {
        match self {
            TimeVector::Constant(v) => Cow::Borrowed(v),
            TimeVector::Varying(f) => Cow::Owned(f(t)),
        }
    }

    /// True when the vector is the constant `value` in every entry.
    pub fn is_constant_value(&self, value: f64) -> bool {
        matches!(self, TimeVector::Constant(v) if v.iter().all(|&x| x == value))
    }
}

impl fmt::Debug for TimeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeVector::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            TimeVector::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

/// A matrix-valued function of the time step.
#[derive(Clone)]
pub enum TimeMatrix {
    Constant(Matrix),
    Varying(Arc<dyn Fn(usize) -> Matrix + Send + Sync>),
}

impl TimeMatrix {
    pub fn constant(m: Matrix) -> Self {
        TimeMatrix::Constant(m)
    }

    pub fn varying(f: impl Fn(usize) -> Matrix + Send + Sync + 'static) -> Self {
        TimeMatrix::Varying(Arc::new(f))
    }

    pub fn at(&self, t: usize) -> Cow<'_, Matrix> {
        match self {
            TimeMatrix::Constant(m) => Cow::Borrowed(m),
            TimeMatrix::Varying(f) => Cow::Owned(f(t)),
        }
    }
}

impl fmt::Debug for TimeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeMatrix::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            TimeMatrix::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

/// Distribution of the initial counts `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// Independent Poisson counts with the given intensities.
    VectorPoisson(Vec<f64>),
    /// `n` individuals allocated multinomially over `probs`.
    Multinomial { n: u64, probs: Vec<f64> },
    /// Fixed counts.
    Deterministic(Vec<u64>),
    /// Independent blocks, concatenated in order.
    Product(Vec<InitialDistribution>),
}

impl InitialDistribution {
    pub fn dim(&self) -> usize {
        match self {
            InitialDistribution::VectorPoisson(l) => l.len(),
            InitialDistribution::Multinomial { probs, .. } => probs.len(),
            InitialDistribution::Deterministic(x) => x.len(),
            InitialDistribution::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    /// `E[x_0]`, the starting intensity of the filters.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialDistribution::VectorPoisson(l) => l.clone(),
            InitialDistribution::Multinomial { n, probs } => {
                probs.iter().map(|p| *n as f64 * p).collect()
            }
            InitialDistribution::Deterministic(x) => x.iter().map(|&v| v as f64).collect(),
            InitialDistribution::Product(parts) => parts.iter().flat_map(|p| p.mean()).collect(),
        }
    }
}

/// Prevalence observation: detection `q`, mis-reporting `G`, clutter `κ`.
#[derive(Debug, Clone)]
pub struct PrevalenceModel {
    pub detection: TimeVector,
    pub misreport: TimeMatrix,
    pub clutter: TimeVector,
}

/// Incidence observation with reporting matrix `Q` and observation schedule.
#[derive(Debug, Clone)]
pub struct IncidenceModel {
    pub reporting: TimeMatrix,
    pub schedule: Schedule,
    /// Allows emigration and immigration in incidence filtering. Survival is
    /// applied before the transition and immigrants are added after the
    /// update, as in the metapopulation filter.
    pub open_population: bool,
}

/// Observation times `τ_1 < τ_2 < …`; `τ_0 = 0` is implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    /// Every step is an observation time.
    EveryStep,
    /// Observation every `period` steps.
    Every(usize),
    /// Explicit, strictly increasing observation times.
    Times(Vec<usize>),
}

impl Schedule {
    /// Observation times up to and including `horizon`.
    pub fn times(&self, horizon: usize) -> Vec<usize> {
        match self {
            Schedule::EveryStep => (1..=horizon).collect(),
            Schedule::Every(p) => (1..=horizon / p).map(|r| r * p).collect(),
            Schedule::Times(v) => v.iter().copied().filter(|&t| t <= horizon).collect(),
        }
    }

    pub fn check(times: &[usize]) -> Result<()> {
        let mut prev = 0;
        for &t in times {
            if t <= prev {
                return Err(Error::Validation(format!(
                    "observation schedule must be strictly increasing positive integers (got {t} after {prev})"
                )));
            }
            prev = t;
        }
        Ok(())
    }
}

/// Per-capita large-population limits of the quantities that scale with `n`.
///
/// `scale` is the population size the per-capita quantities are relative to;
/// limit recursions evaluate the kernel at `scale · s` so that kernels with
/// fixed population denominators see counts on their natural scale.
#[derive(Debug, Clone)]
pub struct PerCapitaLimits {
    pub scale: f64,
    /// `λ_{0,∞}`.
    pub initial: Vec<f64>,
    /// `α_{t,∞}`.
    pub immigration: TimeVector,
    /// `κ_{t,∞}`.
    pub clutter: TimeVector,
}

/// Block-diagonal kernel description; `kernel` must equal the block
/// composition of `blocks`.
#[derive(Clone)]
pub struct BlockStructure {
    pub block_size: usize,
    pub blocks: usize,
    pub kernel: Arc<BlockKernelFn>,
}

impl fmt::Debug for BlockStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockStructure")
            .field("block_size", &self.block_size)
            .field("blocks", &self.blocks)
            .finish_non_exhaustive()
    }
}

/// A latent compartmental model with its observation processes, at a fixed
/// parameter value.
#[derive(Clone)]
pub struct ModelSpec {
    pub compartments: usize,
    pub initial: InitialDistribution,
    /// `δ_t`: probability that an individual stays in the population.
    pub survival: TimeVector,
    /// `α_t`: Poisson immigration intensity.
    pub immigration: TimeVector,
    pub kernel: Arc<KernelFn>,
    pub prevalence: Option<PrevalenceModel>,
    pub incidence: Option<IncidenceModel>,
    pub limits: Option<PerCapitaLimits>,
    pub blocks: Option<BlockStructure>,
    pub names: Vec<String>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("compartments", &self.compartments)
            .field("initial", &self.initial)
            .field("survival", &self.survival)
            .field("immigration", &self.immigration)
            .field("prevalence", &self.prevalence)
            .field("incidence", &self.incidence)
            .field("limits", &self.limits)
            .field("blocks", &self.blocks)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// A closed population with no observation model attached.
    pub fn new(
        initial: InitialDistribution,
        kernel: impl Fn(usize, &[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        let m = initial.dim();
        ModelSpec {
            compartments: m,
            initial,
            survival: TimeVector::Constant(vec![1.0; m]),
            immigration: TimeVector::Constant(vec![0.0; m]),
            kernel: Arc::new(kernel),
            prevalence: None,
            incidence: None,
            limits: None,
            blocks: None,
            names: (1..=m).map(|i| format!("c{i}")).collect(),
        }
    }

    pub fn with_survival(mut self, delta: TimeVector) -> Self {
        self.survival = delta;
        self
    }

    pub fn with_immigration(mut self, alpha: TimeVector) -> Self {
        self.immigration = alpha;
        self
    }

    pub fn with_prevalence(mut self, obs: PrevalenceModel) -> Self {
        self.prevalence = Some(obs);
        self
    }

    pub fn with_incidence(mut self, obs: IncidenceModel) -> Self {
        self.incidence = Some(obs);
        self
    }

    pub fn with_limits(mut self, limits: PerCapitaLimits) -> Self {
        self.limits = Some(limits);
        self
    }

    pub fn with_blocks(mut self, blocks: BlockStructure) -> Self {
        self.blocks = Some(blocks);
        self
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = names;
        self
    }

    /// Closed population: `δ ≡ 1` and `α ≡ 0` up to `horizon`.
    pub fn is_closed(&self, horizon: usize) -> std::result::Result<(), usize> {
        let closed_const =
            self.survival.is_constant_value(1.0) && self.immigration.is_constant_value(0.0);
        if closed_const {
            return Ok(());
        }
        for t in 1..=horizon {
            let d = self.survival.at(t);
            let a = self.immigration.at(t);
            if d.iter().any(|&v| v != 1.0) || a.iter().any(|&v| v != 0.0) {
                return Err(t);
            }
        }
        Ok(())
    }

    pub fn prevalence_model(&self) -> Result<&PrevalenceModel> {
        self.prevalence
            .as_ref()
            .ok_or_else(|| Error::Config("model has no prevalence observation".into()))
    }

    pub fn incidence_model(&self) -> Result<&IncidenceModel> {
        self.incidence
            .as_ref()
            .ok_or_else(|| Error::Config("model has no incidence observation".into()))
    }
}

/// Evaluates the transition kernel, rejecting non-finite output.
pub fn eval_kernel(spec: &ModelSpec, t: usize, s: &[f64]) -> Result<Matrix> {
    let k = (spec.kernel)(t, s);
    if k.dim() != spec.compartments || !k.is_finite() {
        return Err(Error::Kernel { t, s: s.to_vec() });
    }
    Ok(k)
}

const STOCHASTIC_TOL: f64 = 1e-12;

fn check_stochastic(k: &Matrix, what: &str, t: usize, out: &mut Vec<String>) {
    for i in 0..k.dim() {
        let row = k.row(i);
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push(format!("{what} row {} has a negative or non-finite entry at t={t}", i + 1));
            continue;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            out.push(format!("{what} row {} not stochastic at t={t} (sum {sum})", i + 1));
        }
    }
}

fn check_range(v: &[f64], lo: f64, hi: f64, what: &str, t: usize, out: &mut Vec<String>) {
    if v.iter().any(|x| !(*x >= lo && *x <= hi)) {
        if hi.is_infinite() {
            out.push(format!("{what} negative or non-finite at t={t}"));
        } else {
            out.push(format!("{what} out of [{lo},{hi}] at t={t}"));
        }
    }
}

/// Probe vectors for kernel checks: zero, uniform, unit vectors, a skewed
/// vector and the initial mean.
fn probe_vectors(spec: &ModelSpec) -> Vec<Vec<f64>> {
    let m = spec.compartments;
    let mut probes = vec![vec![0.0; m], vec![1.0; m]];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        probes.push(e);
    }
    probes.push((0..m).map(|i| (i + 1) as f64 * 37.5).collect());
    probes.push(spec.initial.mean());
    probes
}

/// Checks the model invariants for `t = 1..=horizon`. Returns one message per
/// violation; an empty list means the spec is valid.
pub fn validate_spec(spec: &ModelSpec, horizon: usize) -> Vec<String> {
    let m = spec.compartments;
    let mut out = Vec::new();
    if m == 0 {
        out.push("model has no compartments".into());
        return out;
    }
    if spec.initial.dim() != m {
        out.push(format!("initial distribution has dimension {} not {m}", spec.initial.dim()));
    }
    match &spec.initial {
        InitialDistribution::VectorPoisson(l) => check_range(l, 0.0, f64::INFINITY, "initial intensity", 0, &mut out),
        InitialDistribution::Multinomial { probs, .. } => {
            check_range(probs, 0.0, 1.0, "initial probabilities", 0, &mut out);
            let s: f64 = probs.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                out.push(format!("initial probabilities sum to {s}"));
            }
        }
        InitialDistribution::Deterministic(_) | InitialDistribution::Product(_) => {}
    }
    let probes = probe_vectors(spec);
    for t in 1..=horizon {
        let d = spec.survival.at(t);
        if d.len() != m {
            out.push(format!("delta has length {} at t={t}", d.len()));
        }
        check_range(&d, 0.0, 1.0, "delta", t, &mut out);
        let a = spec.immigration.at(t);
        if a.len() != m {
            out.push(format!("alpha has length {} at t={t}", a.len()));
        }
        check_range(&a, 0.0, f64::INFINITY, "alpha", t, &mut out);
        for s in &probes {
            let k = (spec.kernel)(t, s);
            if k.dim() != m {
                out.push(format!("kernel has dimension {} at t={t}", k.dim()));
                break;
            }
            let before = out.len();
            check_stochastic(&k, "kernel", t, &mut out);
            if out.len() > before {
                break;
            }
        }
        if let Some(p) = &spec.prevalence {
            check_range(&p.detection.at(t), 0.0, 1.0, "q", t, &mut out);
            check_stochastic(&p.misreport.at(t), "G", t, &mut out);
            check_range(&p.clutter.at(t), 0.0, f64::INFINITY, "kappa", t, &mut out);
        }
        if let Some(inc) = &spec.incidence {
            check_range(inc.reporting.at(t).as_slice(), 0.0, 1.0, "Q", t, &mut out);
        }
    }
    if let Some(inc) = &spec.incidence {
        if let Err(e) = Schedule::check(&inc.schedule.times(horizon)) {
            out.push(e.to_string());
        }
        if let Schedule::Every(0) = inc.schedule {
            out.push("observation period must be positive".into());
        }
    }
    if let Some(b) = &spec.blocks {
        if b.block_size * b.blocks != m {
            out.push(format!(
                "block structure {}x{} does not cover {m} compartments",
                b.blocks, b.block_size
            ));
        }
    }
    out
}

/// Maps a parameter vector to a model specification.
pub trait ModelFamily: Send + Sync {
    fn build(&self, theta: &[f64]) -> Result<ModelSpec>;
}

impl<F> ModelFamily for F
where
    F: Fn(&[f64]) -> Result<ModelSpec> + Send + Sync,
{
    fn build(&self, theta: &[f64]) -> Result<ModelSpec> {
        self(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_spec(m: usize) -> ModelSpec {
        ModelSpec::new(InitialDistribution::Deterministic(vec![3; m]), move |_, _| {
            Matrix::identity(m)
        })
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_counts(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_counts(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(normalize_counts(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(normalize_counts(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn validate_flags_bad_delta_and_kernel() {
        assert!(validate_spec(&identity_spec(3), 5).is_empty());

        let bad = identity_spec(2).with_survival(TimeVector::constant(vec![1.2, 1.0]));
        let v = validate_spec(&bad, 2);
        assert!(v.iter().any(|s| s.starts_with("delta out of [0,1] at t=")), "{v:?}");

        let leaky = ModelSpec::new(InitialDistribution::Deterministic(vec![1, 1, 1]), |_, _| {
            let mut k = Matrix::identity(3);
            k[(2, 2)] = 0.9;
            k
        });
        let v = validate_spec(&leaky, 1);
        assert!(v.iter().any(|s| s.starts_with("kernel row 3 not stochastic at t=")), "{v:?}");
    }

    #[test]
    fn eval_kernel_rejects_nan() {
        let spec = ModelSpec::new(InitialDistribution::Deterministic(vec![1]), |_, _| {
            Matrix::from_rows(&[vec![f64::NAN]])
        });
        assert!(matches!(eval_kernel(&spec, 4, &[1.0]), Err(Error::Kernel { t: 4, .. })));
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Every(7).times(30), vec![7, 14, 21, 28]);
        assert_eq!(Schedule::EveryStep.times(3), vec![1, 2, 3]);
        assert!(Schedule::check(&[1, 1]).is_err());
        assert!(Schedule::check(&[0]).is_err());
    }

    #[test]
    fn closedness() {
        assert!(identity_spec(2).is_closed(10).is_ok());
        let open = identity_spec(2)
            .with_immigration(TimeVector::varying(|t| vec![if t == 3 { 1.0 } else { 0.0 }, 0.0]));
        assert_eq!(open.is_closed(10), Err(3));
    }
}
