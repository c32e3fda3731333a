//! Age-structured SEIR: one SEIR block per age group, coupled through a
//! symmetric contact matrix `B`, with weekly aggregated E→I incidence.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_prob, check_rate, seir_block, unknown_param, Configurable};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    BlockStructure, IncidenceModel, InitialDistribution, ModelSpec, PerCapitaLimits, Schedule,
    TimeMatrix, TimeVector,
};

/// Initial states of the four age groups in the reference outbreak.
pub const REFERENCE_INITIAL: [[u64; 4]; 4] =
    [[948, 0, 1, 0], [1689, 0, 1, 0], [3466, 0, 1, 0], [1894, 0, 1, 0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeConfig {
    /// Symmetric contact rates `β_ij`.
    pub b: Vec<Vec<f64>>,
    pub rho: f64,
    pub gamma: f64,
    pub h: f64,
    /// Reporting rate of E→I transitions.
    pub q: f64,
    /// Observation period in steps.
    pub period: usize,
    pub initial: Vec<[u64; 4]>,
}

impl AgeConfig {
    /// Daily steps with weekly rates, 1.5-day latent and infectious periods,
    /// weekly observations.
    pub fn weekly(b: Vec<Vec<f64>>, q: f64, initial: Vec<[u64; 4]>) -> Self {
        AgeConfig { b, rho: 7.0 / 1.5, gamma: 7.0 / 1.5, h: 1.0 / 7.0, q, period: 7, initial }
    }

    pub fn groups(&self) -> usize {
        self.b.len()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.initial.iter().map(|x| x.iter().sum::<u64>() as f64).collect()
    }
}

impl Configurable for AgeConfig {
    /// Contact rates are named `b_i_j` with 1-based indices; setting one sets
    /// its mirror entry too.
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "rho" => self.rho = value,
            "gamma" => self.gamma = value,
            "q" => self.q = value,
            _ => {
                let idx: Option<(usize, usize)> = name.strip_prefix("b_").and_then(|rest| {
                    let (i, j) = rest.split_once('_')?;
                    Some((i.parse().ok()?, j.parse().ok()?))
                });
                let d = self.groups();
                match idx {
                    Some((i, j)) if (1..=d).contains(&i) && (1..=d).contains(&j) => {
                        self.b[i - 1][j - 1] = value;
                        self.b[j - 1][i - 1] = value;
                    }
                    _ => return Err(unknown_param("age-structured", name)),
                }
            }
        }
        Ok(())
    }

    fn build(&self) -> Result<ModelSpec> {
        build_age_structured(self)
    }
}

/// Per-group infection hazards `β̄ = B · s_I / Σ s`.
fn group_hazards(b: &[Vec<f64>], s: &[f64]) -> Vec<f64> {
    let total: f64 = s.iter().sum();
    if total <= 0.0 {
        return vec![0.0; b.len()];
    }
    b.iter()
        .map(|row| row.iter().enumerate().map(|(j, bij)| bij * s[4 * j + 2]).sum::<f64>() / total)
        .collect()
}

/// The full `4d × 4d` kernel formed entry by entry from dense linear algebra.
pub fn dense_age_kernel(
    b: &[Vec<f64>],
    rho: f64,
    gamma: f64,
    h: f64,
) -> impl Fn(usize, &[f64]) -> Matrix {
    let d = b.len();
    let bm = DMatrix::from_fn(d, d, |i, j| b[i][j]);
    move |_, s| {
        let total: f64 = s.iter().sum();
        let infected = DVector::from_fn(d, |j, _| if total > 0.0 { s[4 * j + 2] / total } else { 0.0 });
        let hazard = &bm * infected;
        Matrix::from_fn(4 * d, |r, c| {
            if r / 4 != c / 4 {
                return 0.0;
            }
            let stay = |rate: f64| (-h * rate).exp();
            match (r % 4, c % 4) {
                (0, 0) => stay(hazard[r / 4]),
                (0, 1) => 1.0 - stay(hazard[r / 4]),
                (1, 1) => stay(rho),
                (1, 2) => 1.0 - stay(rho),
                (2, 2) => stay(gamma),
                (2, 3) => 1.0 - stay(gamma),
                (3, 3) => 1.0,
                _ => 0.0,
            }
        })
    }
}

pub fn build_age_structured(cfg: &AgeConfig) -> Result<ModelSpec> {
    let d = cfg.groups();
    if d == 0 || cfg.b.iter().any(|r| r.len() != d) || cfg.initial.len() != d {
        return Err(Error::Config(format!(
            "contact matrix and initial states must describe the same {d} groups"
        )));
    }
    for i in 0..d {
        for j in 0..d {
            check_rate("contact rate", cfg.b[i][j])?;
            if cfg.b[i][j] != cfg.b[j][i] {
                return Err(Error::Validation(format!(
                    "contact matrix must be symmetric: b[{}][{}] != b[{}][{}]",
                    i + 1,
                    j + 1,
                    j + 1,
                    i + 1
                )));
            }
        }
    }
    check_rate("rho", cfg.rho)?;
    check_rate("gamma", cfg.gamma)?;
    check_prob("q", cfg.q)?;
    if !(cfg.h > 0.0) || cfg.period == 0 {
        return Err(Error::Validation("step size and period must be positive".into()));
    }

    let (rho, gamma, h) = (cfg.rho, cfg.gamma, cfg.h);
    let b = cfg.b.clone();
    let block_kernel = move |_: usize, s: &[f64]| {
        group_hazards(&b, s)
            .into_iter()
            .map(|f| Matrix::from_row_major(4, seir_block(f, rho, gamma, h).to_vec()))
            .collect::<Vec<_>>()
    };
    let m = 4 * d;
    let mut q = Matrix::zeros(m);
    for k in 0..d {
        q[(4 * k + 1, 4 * k + 2)] = cfg.q;
    }
    let x0: Vec<u64> = cfg.initial.iter().flatten().copied().collect();
    let n: f64 = x0.iter().sum::<u64>() as f64;
    let names = (1..=d)
        .flat_map(|k| ["S", "E", "I", "R"].map(|c| format!("{c}{k}")))
        .collect();
    Ok(ModelSpec::new(
        InitialDistribution::Deterministic(x0.clone()),
        dense_age_kernel(&cfg.b, rho, gamma, h),
    )
    .with_names(names)
    .with_incidence(IncidenceModel {
        reporting: TimeMatrix::constant(q),
        schedule: Schedule::Every(cfg.period),
        open_population: false,
    })
    .with_blocks(BlockStructure { block_size: 4, blocks: d, kernel: Arc::new(block_kernel) })
    .with_limits(PerCapitaLimits {
        scale: n,
        initial: x0.iter().map(|&v| v as f64 / n).collect(),
        immigration: TimeVector::constant(vec![0.0; m]),
        clutter: TimeVector::constant(vec![0.0; m]),
    }))
}

/// Basic reproduction number: the spectral radius of `[n_i β_ij / (n γ)]`.
///
/// The matrix is similar to the symmetric `D^{1/2} B D^{1/2} / (n γ)` with
/// `D = diag(n_i)`, so a symmetric eigensolver applies.
pub fn next_generation_r0(b: &[Vec<f64>], populations: &[f64], gamma: f64) -> Result<f64> {
    let d = b.len();
    if populations.len() != d || b.iter().any(|r| r.len() != d) || !(gamma > 0.0) {
        return Err(Error::Validation("inconsistent next-generation inputs".into()));
    }
    let n: f64 = populations.iter().sum();
    let root: Vec<f64> = populations.iter().map(|p| p.sqrt()).collect();
    let sym = DMatrix::from_fn(d, d, |i, j| root[i] * b[i][j] * root[j] / (n * gamma));
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    fn contact() -> Vec<Vec<f64>> {
        vec![
            vec![2.0, 0.5, 0.2, 0.1],
            vec![0.5, 3.0, 0.4, 0.3],
            vec![0.2, 0.4, 1.5, 0.6],
            vec![0.1, 0.3, 0.6, 1.0],
        ]
    }

    #[test]
    fn reference_initials_accepted() {
        let cfg = AgeConfig::weekly(contact(), 0.3, REFERENCE_INITIAL.to_vec());
        let spec = build_age_structured(&cfg).unwrap();
        assert_eq!(spec.compartments, 16);
        assert!(validate_spec(&spec, 28).is_empty(), "{:?}", validate_spec(&spec, 28));
    }

    #[test]
    fn asymmetric_contacts_rejected() {
        let mut b = contact();
        b[0][1] = 0.7;
        assert!(build_age_structured(&AgeConfig::weekly(b, 0.3, REFERENCE_INITIAL.to_vec())).is_err());
    }

    #[test]
    fn named_contact_sets_both_entries() {
        let mut cfg = AgeConfig::weekly(contact(), 0.3, REFERENCE_INITIAL.to_vec());
        cfg.set_param("b_2_4", 9.0).unwrap();
        assert_eq!((cfg.b[1][3], cfg.b[3][1]), (9.0, 9.0));
        assert!(cfg.set_param("b_5_1", 1.0).is_err());
    }

    #[test]
    fn single_group_r0() {
        let r0 = next_generation_r0(&[vec![3.0]], &[100.0], 1.5).unwrap();
        assert!((r0 - 2.0).abs() < 1e-12);
    }
}
