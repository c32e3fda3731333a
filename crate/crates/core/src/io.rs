//! File formats: JSON model files and CSV tables for observations, traces,
//! limits and chains.
//!
//! Observation CSVs are wide. Prevalence rows are `t,y_0,..,y_{m-1}`;
//! incidence and aggregated rows are `t,y_0_0,..,y_{m-1}_{m-1}` with the
//! transition matrix in row-major order and `t` the observation time.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::LimitTrace;
use crate::error::{Error, Result};
use crate::filter::AnyTrace;
use crate::inference::Chain;
use crate::linalg::{CountMatrix, Matrix};
use crate::model::{ModelFamily, ModelSpec, ParamVector, Parameter};
use crate::simulator::{LatentRecord, ObservationKind, ObservationSeries};
use crate::zoo::measles::{synthetic_five_cities, GravityConfig, MeaslesConfig, MeaslesParams};
use crate::zoo::{AgeConfig, Configurable, Family, SeirConfig, SirConfig};

/// Where a gravity model takes its city data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GravitySource {
    /// The built-in five-city fixture, populations multiplied by `scale`.
    Synthetic {
        #[serde(default = "one_u64")]
        scale: u64,
    },
    /// `cities.csv`, `births.csv` and `deaths.csv` in `dir`, relative to the
    /// model file.
    Csv {
        dir: PathBuf,
        #[serde(default = "default_lag")]
        birth_lag: i32,
    },
    Inline(GravityConfig),
}

fn one_u64() -> u64 {
    1
}

fn default_lag() -> i32 {
    4
}

/// One of the zoo models, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Seir(SeirConfig),
    Sir(SirConfig),
    AgeStructured(AgeConfig),
    Measles { gravity: GravitySource, params: MeaslesParams },
}

/// A model configuration with every external reference loaded.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedModel {
    Seir(SeirConfig),
    Sir(SirConfig),
    AgeStructured(AgeConfig),
    Measles(MeaslesConfig),
}

impl ModelConfig {
    /// Loads external city data; relative paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedModel> {
        Ok(match self {
            ModelConfig::Seir(c) => ResolvedModel::Seir(c.clone()),
            ModelConfig::Sir(c) => ResolvedModel::Sir(c.clone()),
            ModelConfig::AgeStructured(c) => ResolvedModel::AgeStructured(c.clone()),
            ModelConfig::Measles { gravity, params } => {
                let gravity = match gravity {
                    GravitySource::Synthetic { scale } => synthetic_five_cities().scaled(*scale),
                    GravitySource::Csv { dir, birth_lag } => GravityConfig::from_csv_dir(&base.join(dir), *birth_lag)?,
                    GravitySource::Inline(g) => g.clone(),
                };
                ResolvedModel::Measles(MeaslesConfig { gravity, params: *params })
            }
        })
    }
}

impl Configurable for ResolvedModel {
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match self {
            ResolvedModel::Seir(c) => c.set_param(name, value),
            ResolvedModel::Sir(c) => c.set_param(name, value),
            ResolvedModel::AgeStructured(c) => c.set_param(name, value),
            ResolvedModel::Measles(c) => c.set_param(name, value),
        }
    }

    fn build(&self) -> Result<ModelSpec> {
        match self {
            ResolvedModel::Seir(c) => c.build(),
            ResolvedModel::Sir(c) => c.build(),
            ResolvedModel::AgeStructured(c) => c.build(),
            ResolvedModel::Measles(c) => c.build(),
        }
    }
}

/// Everything a run needs to know about the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: ModelConfig,
    pub observation: ObservationKind,
    /// Latent steps to simulate; defaults to the data length when filtering.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Observation times for aggregated data.
    #[serde(default)]
    pub schedule: Option<Vec<usize>>,
    /// Parameters estimated by `fit` and `mcmc`, with bounds and priors.
    #[serde(default)]
    pub parameters: Vec<Parameter>,
    /// Coordinate groups for the optimizer, by parameter name. Defaults to
    /// one group per parameter.
    #[serde(default)]
    pub groups: Option<Vec<Vec<String>>>,
    /// Misspecified parameter values for limit and contrast computations.
    #[serde(default)]
    pub alternative: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, ResolvedModel)> {
        let file = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolved = file.model.resolve(base)?;
        Ok((file, resolved))
    }

    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::new(self.parameters.clone())
    }

    pub fn family(&self, model: &ResolvedModel) -> Family<ResolvedModel> {
        let names: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        Family::new(model.clone(), &names)
    }

    /// Optimizer groups as indices into `parameters`.
    pub fn group_indices(&self) -> Result<Vec<Vec<usize>>> {
        let index = |name: &str| {
            self.parameters
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| Error::Config(format!("group refers to unknown parameter {name:?}")))
        };
        match &self.groups {
            None => Ok((0..self.parameters.len()).map(|i| vec![i]).collect()),
            Some(groups) => groups.iter().map(|g| g.iter().map(|n| index(n)).collect()).collect(),
        }
    }

    /// Spec at the alternative parameter values.
    pub fn alternative_spec(&self, model: &ResolvedModel) -> Result<Option<ModelSpec>> {
        match &self.alternative {
            None => Ok(None),
            Some(theta) => Ok(Some(self.family(model).build(theta)?)),
        }
    }

    /// Simulation horizon, falling back to a model-specific default.
    pub fn horizon_for(&self, model: &ResolvedModel) -> Result<usize> {
        if let Some(h) = self.horizon {
            return Ok(h);
        }
        if let Some(s) = &self.schedule {
            return s.last().copied().ok_or_else(|| Error::Config("empty schedule".into()));
        }
        match model {
            ResolvedModel::Measles(c) => Ok(c.gravity.horizon()),
            ResolvedModel::Sir(_) => Ok(14),
            _ => Err(Error::Config("no horizon given".into())),
        }
    }
}

fn header(kind: ObservationKind, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    match kind {
        ObservationKind::Prevalence => h.extend((0..m).map(|i| format!("y_{i}"))),
        _ => h.extend((0..m * m).map(|k| format!("y_{}_{}", k / m, k % m))),
    }
    h
}

pub fn write_observations<W: Write>(data: &ObservationSeries, out: W) -> Result<()> {
    let rows: Vec<(usize, &[u64])> = match data {
        ObservationSeries::Prevalence(y) => y.iter().enumerate().map(|(i, v)| (i + 1, v.as_slice())).collect(),
        ObservationSeries::Incidence(y) => y.iter().enumerate().map(|(i, v)| (i + 1, v.as_slice())).collect(),
        ObservationSeries::Aggregated { schedule, totals } => {
            schedule.iter().zip(totals).map(|(t, v)| (*t, v.as_slice())).collect()
        }
    };
    let m = match data {
        ObservationSeries::Prevalence(y) => y.first().map_or(0, |v| v.len()),
        ObservationSeries::Incidence(y) => y.first().map_or(0, |v| v.dim()),
        ObservationSeries::Aggregated { totals, .. } => totals.first().map_or(0, |v| v.dim()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(data.kind(), m))?;
    for (t, values) in rows {
        let mut rec = vec![t.to_string()];
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads observations of the given kind for an `m`-compartment model.
pub fn read_observations<R: Read>(input: R, kind: ObservationKind, m: usize) -> Result<ObservationSeries> {
    let mut rdr = csv::Reader::from_reader(input);
    let expected = header(kind, m);
    let got: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if got != expected {
        return Err(Error::Mismatch(format!(
            "observation columns do not match a {m}-compartment {kind:?} model: expected {} columns starting {:?}, got {} starting {:?}",
            expected.len(),
            &expected[..expected.len().min(3)],
            got.len(),
            &got[..got.len().min(3)]
        )));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| -> Result<u64> {
            s.trim().parse().map_err(|_| Error::Validation(format!("row {}: {s:?} is not a count", line + 1)))
        };
        let vals: Vec<u64> = rec.iter().map(parse).collect::<Result<_>>()?;
        times.push(vals[0] as usize);
        rows.push(vals[1..].to_vec());
    }
    let consecutive = times.iter().enumerate().all(|(i, &t)| t == i + 1);
    match kind {
        ObservationKind::Prevalence | ObservationKind::Incidence if !consecutive => {
            Err(Error::Validation("per-step observations must have t = 1, 2, ..".into()))
        }
        ObservationKind::Prevalence => Ok(ObservationSeries::Prevalence(rows)),
        ObservationKind::Incidence => {
            Ok(ObservationSeries::Incidence(rows.into_iter().map(|r| CountMatrix::from_row_major(m, r)).collect()))
        }
        ObservationKind::Aggregated => {
            if times.first() == Some(&0) || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Validation("observation times must be positive and increasing".into()));
            }
            Ok(ObservationSeries::Aggregated {
                schedule: times,
                totals: rows.into_iter().map(|r| CountMatrix::from_row_major(m, r)).collect(),
            })
        }
    }
}

pub fn read_observations_file(path: &Path, kind: ObservationKind, m: usize) -> Result<ObservationSeries> {
    read_observations(std::fs::File::open(path)?, kind, m)
}

/// Latent states `x_t` as `t,x_0,..`.
pub fn write_latent<W: Write>(rec: &LatentRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = rec.x.first().map_or(0, |v| v.len());
    let mut h = vec!["t".to_string()];
    h.extend((0..m).map(|i| format!("x_{i}")));
    w.write_record(&h)?;
    for (t, x) in rec.x.iter().enumerate() {
        let mut r = vec![t.to_string()];
        r.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    // Shortest round-trip representation; deterministic across runs.
    format!("{v:?}")
}

/// Long-format intensities: `t,quantity,i,j,value`, with `j` empty for
/// vectors.
pub fn write_trace<W: Write>(trace: &AnyTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "quantity", "i", "j", "value"])?;
    let vec_rows = |w: &mut csv::Writer<W>, name: &str, times: &[usize], vs: &[Vec<f64>]| -> Result<()> {
        for (t, v) in times.iter().zip(vs) {
            for (i, x) in v.iter().enumerate() {
                w.write_record([t.to_string(), name.into(), i.to_string(), String::new(), fmt(*x)])?;
            }
        }
        Ok(())
    };
    let mat_rows = |w: &mut csv::Writer<W>, name: &str, times: &[usize], ms: &[Matrix]| -> Result<()> {
        for (t, mtx) in times.iter().zip(ms) {
            let n = mtx.dim();
            for i in 0..n {
                for j in 0..n {
                    w.write_record([t.to_string(), name.into(), i.to_string(), j.to_string(), fmt(mtx[(i, j)])])?;
                }
            }
        }
        Ok(())
    };
    match trace {
        AnyTrace::Prevalence(tr) => {
            let steps: Vec<usize> = (1..=tr.predicted.len()).collect();
            vec_rows(&mut w, "predicted", &steps, &tr.predicted)?;
            vec_rows(&mut w, "updated", &steps, &tr.updated)?;
            vec_rows(&mut w, "observation", &tr.times, &tr.observation)?;
        }
        AnyTrace::Incidence(tr) => {
            let steps: Vec<usize> = (1..=tr.predicted.len()).collect();
            mat_rows(&mut w, "predicted", &steps, &tr.predicted)?;
            mat_rows(&mut w, "updated", &steps, &tr.updated)?;
            mat_rows(&mut w, "observation", &tr.times, &tr.observation)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,log_term` per observation.
pub fn write_log_terms<W: Write>(trace: &AnyTrace, out: W) -> Result<()> {
    let (times, terms) = match trace {
        AnyTrace::Prevalence(t) => (&t.times, &t.log_terms),
        AnyTrace::Incidence(t) => (&t.times, &t.log_terms),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "log_term"])?;
    for (t, v) in times.iter().zip(terms) {
        w.write_record([t.to_string(), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format limit quantities, same layout as [`write_trace`].
pub fn write_limits<W: Write>(lim: &LimitTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "quantity", "i", "j", "value"])?;
    let mut vecs = |name: &str, first: usize, vs: &[Vec<f64>]| -> Result<()> {
        for (k, v) in vs.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                w.write_record([(first + k).to_string(), name.into(), i.to_string(), String::new(), fmt(*x)])?;
            }
        }
        Ok(())
    };
    vecs("state", 0, &lim.states)?;
    vecs("predicted", 1, &lim.predicted)?;
    vecs("intensity", 1, &lim.intensities)?;
    let mut mats = |name: &str, times: &[usize], ms: &[Matrix]| -> Result<()> {
        for (t, mtx) in times.iter().zip(ms) {
            let n = mtx.dim();
            for i in 0..n {
                for j in 0..n {
                    w.write_record([t.to_string(), name.into(), i.to_string(), j.to_string(), fmt(mtx[(i, j)])])?;
                }
            }
        }
        Ok(())
    };
    let steps: Vec<usize> = (1..=lim.transitions.len()).collect();
    mats("transition", &steps, &lim.transitions)?;
    mats("window", &lim.times, &lim.windows)?;
    w.flush()?;
    Ok(())
}

/// One row per kept draw: `iteration,<names>,log_lik,log_prior`.
pub fn write_chain<W: Write>(chain: &Chain, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut h = vec!["iteration".to_string()];
    h.extend(chain.names.iter().cloned());
    h.extend(["log_lik".to_string(), "log_prior".to_string()]);
    w.write_record(&h)?;
    for (k, draw) in chain.draws.iter().enumerate() {
        if k < chain.burn_in || !(k - chain.burn_in).is_multiple_of(chain.thin.max(1)) {
            continue;
        }
        let mut r = vec![k.to_string()];
        r.extend(draw.iter().map(|v| fmt(*v)));
        r.push(fmt(chain.log_lik[k]));
        r.push(fmt(chain.log_prior[k]));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}
