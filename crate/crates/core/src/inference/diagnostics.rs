//! Chain summaries: autocorrelation, effective sample size, batch-means Monte
//! Carlo error and the two-sample Kolmogorov-Smirnov statistic.

use serde::Serialize;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(x);
    let var: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if var == 0.0 {
        return if lag == 0 { 1.0 } else { 0.0 };
    }
    let cov: f64 = (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum();
    cov / var
}

/// Effective sample size with Geyer's initial positive sequence truncation.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64 / c0
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0);
    n as f64 / tau
}

/// Monte Carlo standard error of the mean by non-overlapping batch means with
/// `⌊√n⌋` batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::INFINITY;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    let grand = mean(&means);
    let var = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample KS statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous cdf.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(x);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sample KS critical value at level 0.01.
pub fn ks_critical_01(na: usize, nb: usize) -> f64 {
    1.628 * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mcse: f64,
    pub ess: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// `(lag, autocorrelation)`.
    pub acf: Vec<(usize, f64)>,
}

/// Per-parameter summaries of `draws` (rows are draws).
pub fn chain_diagnostics(names: &[String], draws: &[Vec<f64>], lags: &[usize]) -> Vec<ParameterSummary> {
    let d = names.len();
    (0..d)
        .map(|c| {
            let x: Vec<f64> = draws.iter().map(|r| r[c]).collect();
            let s = sorted(&x);
            let m = mean(&x);
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len().max(2) - 1) as f64).sqrt();
            ParameterSummary {
                name: names[c].clone(),
                mean: m,
                sd,
                mcse: batch_means_se(&x),
                ess: effective_sample_size(&x),
                q05: quantile(&s, 0.05),
                q50: quantile(&s, 0.5),
                q95: quantile(&s, 0.95),
                acf: lags.iter().map(|&l| (l, autocorrelation(&x, l))).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn iid_acf_near_zero() {
        let x = normals(20_000, 1);
        for lag in 1..10 {
            assert!(autocorrelation(&x, lag).abs() < 4.0 / (x.len() as f64).sqrt());
        }
        let ess = effective_sample_size(&x);
        assert!(ess > 15_000.0, "{ess}");
    }

    #[test]
    fn ar1_acf_and_ess() {
        let e = normals(100_000, 2);
        let mut x = vec![0.0; e.len()];
        for i in 1..x.len() {
            x[i] = 0.9 * x[i - 1] + e[i];
        }
        assert!((autocorrelation(&x, 1) - 0.9).abs() < 0.02);
        // Integrated autocorrelation time (1 + φ)/(1 − φ) = 19.
        let ess = effective_sample_size(&x);
        assert!((ess - 100_000.0 / 19.0).abs() < 0.2 * 100_000.0 / 19.0, "{ess}");
    }

    #[test]
    fn ks_same_and_shifted() {
        let a = normals(2000, 3);
        let b = normals(2000, 4);
        assert!(ks_statistic(&a, &b) < ks_critical_01(2000, 2000));
        let c: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        assert!(ks_statistic(&a, &c) > ks_critical_01(2000, 2000));
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&s, 0.5), 1.5);
        assert_eq!(quantile(&s, 1.0), 3.0);
    }
}
