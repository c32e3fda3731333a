//! Exact discrete probability mass functions used by the oracles.

use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::linalg::{CountMatrix, Matrix};

/// `log P(Bin(n, p) = k)`.
#[inline]
pub fn ln_binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()
}

/// `log P(Pois(λ) = k)`.
#[inline]
pub fn ln_poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_factorial(k)
}

/// Probabilities `P(Bin(n, p) = k)` for `k = 0..=n`.
pub fn binomial_pmf_vec(n: u64, p: f64) -> Vec<f64> {
    (0..=n).map(|k| ln_binomial_pmf(k, n, p).exp()).collect()
}

/// Smallest `K` such that `P(Pois(λ) > K) < tail`.
pub fn poisson_upper(lambda: f64, tail: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0u64;
    let mut cdf = 0.0;
    loop {
        cdf += ln_poisson_pmf(k, lambda).exp();
        if 1.0 - cdf < tail || k > (lambda + 50.0 * lambda.sqrt() + 100.0) as u64 {
            return k;
        }
        k += 1;
    }
}

/// Truncated Poisson pmf `[P(0), …, P(K)]` and the dropped upper tail mass.
pub fn poisson_pmf_truncated(lambda: f64, tail: f64) -> (Vec<f64>, f64) {
    let upper = poisson_upper(lambda, tail);
    let pmf: Vec<f64> = (0..=upper).map(|k| ln_poisson_pmf(k, lambda).exp()).collect();
    let kept: f64 = pmf.iter().sum();
    (pmf, (1.0 - kept).max(0.0))
}

/// All multinomial outcomes of `n` trials over `probs` with their
/// probabilities. Zero-probability categories receive no trials.
pub fn multinomial_outcomes(n: u64, probs: &[f64]) -> Vec<(Vec<u64>, f64)> {
    let mut out = Vec::new();
    let mut current = vec![0u64; probs.len()];
    let ln_n = ln_factorial(n);
    fn rec(
        k: usize,
        remaining: u64,
        probs: &[f64],
        current: &mut Vec<u64>,
        ln_acc: f64,
        out: &mut Vec<(Vec<u64>, f64)>,
    ) {
        if k == probs.len() {
            if remaining == 0 {
                out.push((current.clone(), ln_acc.exp()));
            }
            return;
        }
        let p = probs[k];
        if p <= 0.0 {
            current[k] = 0;
            rec(k + 1, remaining, probs, current, ln_acc, out);
            return;
        }
        let last_positive = probs[k + 1..].iter().all(|&q| q <= 0.0);
        let range = if last_positive { remaining..=remaining } else { 0..=remaining };
        for c in range {
            current[k] = c;
            let term = c as f64 * p.ln() - ln_factorial(c);
            rec(k + 1, remaining - c, probs, current, ln_acc + term, out);
        }
        current[k] = 0;
    }
    if n == 0 {
        out.push((current, 1.0));
        return out;
    }
    if probs.iter().all(|&p| p <= 0.0) {
        return out;
    }
    rec(0, n, probs, &mut current, ln_n, &mut out);
    out
}

/// Tail tolerance for the clutter term of the prevalence observation pmf.
pub const CLUTTER_TAIL: f64 = 1e-14;
/// Largest observation box for the general mis-reporting path.
pub const MAX_OBSERVATION_BOX: u64 = 2_000_000;

/// Exact `log p(y | x)` for the prevalence observation: binomial detection,
/// mis-reporting by the rows of `G`, additive Poisson clutter.
pub fn prevalence_log_pmf(y: &[u64], x: &[u64], q: &[f64], g: &Matrix, kappa: &[f64]) -> Result<f64> {
    let m = y.len();
    let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || g[(i, j)] == 0.0));
    if diagonal {
        let mut total = 0.0;
        for i in 0..m {
            total += coordinate_log_pmf(y[i], x[i], q[i], kappa[i]);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        return Ok(total);
    }
    general_log_pmf(y, x, q, g, kappa)
}

/// `log P(Bin(x, q) + Pois(κ) = y)`.
fn coordinate_log_pmf(y: u64, x: u64, q: f64, kappa: f64) -> f64 {
    if kappa <= 0.0 {
        return ln_binomial_pmf(y, x, q);
    }
    if q <= 0.0 || x == 0 {
        return ln_poisson_pmf(y, kappa);
    }
    // Only clutter counts within the Poisson bulk contribute.
    let clutter_max = poisson_upper(kappa, CLUTTER_TAIL);
    let k_lo = y.saturating_sub(clutter_max);
    let k_hi = y.min(x);
    if k_lo > k_hi {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (k_lo..=k_hi)
        .map(|k| ln_binomial_pmf(k, x, q) + ln_poisson_pmf(y - k, kappa))
        .collect();
    log_sum_exp(&terms)
}

fn general_log_pmf(y: &[u64], x: &[u64], q: &[f64], g: &Matrix, kappa: &[f64]) -> Result<f64> {
    let m = y.len();
    let box_size = y.iter().try_fold(1u64, |acc, &v| acc.checked_mul(v + 1));
    let box_size = match box_size {
        Some(b) if b <= MAX_OBSERVATION_BOX => b as usize,
        _ => {
            return Err(Error::StateSpace(format!(
                "observation {y:?} too large for the general mis-reporting pmf"
            )))
        }
    };
    // Mixed-radix index over the box {v : v <= y}.
    let strides: Vec<usize> = {
        let mut s = vec![1usize; m];
        for i in (0..m.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * (y[i + 1] as usize + 1);
        }
        s
    };
    let decode = |mut idx: usize| -> Vec<u64> {
        let mut v = vec![0u64; m];
        for i in 0..m {
            v[i] = (idx / strides[i]) as u64;
            idx %= strides[i];
        }
        v
    };
    let mut dist = vec![0.0; box_size];
    dist[0] = 1.0;
    for j in 0..m {
        if x[j] == 0 || q[j] <= 0.0 {
            continue;
        }
        // Source j: Mult(x_j; q_j G_j, 1 - q_j), keeping only routed vectors in the box.
        let mut probs: Vec<f64> = g.row(j).iter().map(|gv| q[j] * gv).collect();
        probs.push(1.0 - q[j]);
        let outcomes: Vec<(usize, f64)> = multinomial_outcomes(x[j], &probs)
            .into_iter()
            .filter(|(v, _)| v[..m].iter().zip(y).all(|(a, b)| a <= b))
            .map(|(v, p)| (v[..m].iter().zip(&strides).map(|(a, s)| *a as usize * s).sum(), p))
            .collect();
        let mut next = vec![0.0; box_size];
        for (idx, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let base = decode(idx);
            for &(off, po) in &outcomes {
                let target = idx + off;
                let ok = (0..m).all(|i| base[i] + ((off / strides[i]) % (y[i] as usize + 1)) as u64 <= y[i]);
                if ok && target < box_size {
                    next[target] += p * po;
                }
            }
        }
        dist = next;
    }
    let mut total = 0.0;
    for (idx, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let v = decode(idx);
        let lc: f64 = (0..m).map(|i| ln_poisson_pmf(y[i] - v[i], kappa[i])).sum();
        total += p * lc.exp();
    }
    Ok(total.ln())
}

/// Exact `log p(Y | Z)` for binomial incidence reporting.
pub fn incidence_log_pmf(y: &CountMatrix, z: &CountMatrix, q: &Matrix) -> f64 {
    let mut total = 0.0;
    for ((&yv, &zv), &qv) in y.as_slice().iter().zip(z.as_slice()).zip(q.as_slice()) {
        total += ln_binomial_pmf(yv, zv, qv);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
