//! Seeded random streams and the samplers used by the simulator and the
//! particle filter.
//!
//! Every stochastic entry point takes a `&mut impl Rng`; replicate `k` of a run
//! seeded with `s` draws from `stream(s, k)`, an independent ChaCha stream, so
//! results do not depend on scheduling order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rand::SeedableRng;

pub type StreamRng = ChaCha8Rng;

/// Independent, reproducible stream `index` of the run seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Binomial draw. Degenerate probabilities short-circuit; otherwise the
/// inversion/BTPE sampler is exact for any count.
#[inline]
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability validated above")
        .sample(rng)
}

#[inline]
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .expect("positive finite intensity")
        .sample(rng) as u64
}

/// Multinomial draw of `n` trials over `probs`, written into `out`, via
/// sequential conditional binomials. `probs` must sum to one (up to rounding);
/// the last category with positive probability absorbs the remainder.
pub fn multinomial_into<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64], out: &mut [u64]) {
    out.iter_mut().for_each(|o| *o = 0);
    if n == 0 {
        return;
    }
    let last = match probs.iter().rposition(|&p| p > 0.0) {
        Some(k) => k,
        None => return,
    };
    let mut remaining = n;
    let mut mass = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == last {
            out[k] = remaining;
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let cond = if mass > 0.0 { (p / mass).min(1.0) } else { 1.0 };
        let draw = binomial(rng, remaining, cond);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
}

pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    multinomial_into(rng, n, probs, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = stream(7, 0);
        let mut s1 = stream(7, 1);
        assert_ne!(s0.random::<u64>(), s1.random::<u64>());
    }

    #[test]
    fn degenerate_draws() {
        let mut rng = stream(1, 0);
        assert_eq!(binomial(&mut rng, 10, 0.0), 0);
        assert_eq!(binomial(&mut rng, 10, 1.0), 10);
        assert_eq!(poisson(&mut rng, 0.0), 0);
        assert_eq!(multinomial(&mut rng, 1000, &[1.0, 0.0, 0.0, 0.0]), vec![1000, 0, 0, 0]);
        assert_eq!(multinomial(&mut rng, 5, &[0.0, 0.0, 1.0]), vec![0, 0, 5]);
    }

    #[test]
    fn multinomial_conserves_trials() {
        let mut rng = stream(3, 0);
        for n in [0u64, 1, 17, 100_000] {
            let draw = multinomial(&mut rng, n, &[0.2, 0.0, 0.5, 0.3]);
            assert_eq!(draw.iter().sum::<u64>(), n);
            assert_eq!(draw[1], 0);
        }
    }
}
