//! Block coordinate ascent with bounded golden-section line searches.

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::log_pal;
use crate::model::{ModelFamily, ParamVector};
use crate::simulator::ObservationSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    /// Golden-section iterations per coordinate visit.
    pub iterations_per_coordinate: usize,
    /// Maximum number of outer cycles over all groups.
    pub outer_cycles: usize,
    /// Stop once three consecutive outer cycles each improve the objective by
    /// at most this much.
    pub tolerance: f64,
    /// Initial half-width of a line search relative to `max(|x|, 0.1)`.
    pub initial_radius: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { iterations_per_coordinate: 15, outer_cycles: 500, tolerance: 1e-9, initial_radius: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Objective after each outer cycle, starting with the initial value.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub failed_probes: usize,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

struct Search<'a, F> {
    f: &'a mut F,
    failed: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Search<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        match (self.f)(x) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => {
                self.failed += 1;
                f64::NEG_INFINITY
            }
            Err(e) => {
                debug!("objective failed at {x:?}: {e}");
                self.failed += 1;
                f64::NEG_INFINITY
            }
        }
    }
}

/// Maximizes `f` by cycling through `groups` of coordinates; within a group
/// each coordinate gets a golden-section search on
/// `[max(lo, x - w), min(hi, x + w)]`. The radius `w` halves when the optimum
/// is interior and doubles when it sits on the edge of the bracket. A probe
/// replaces the incumbent only if it is strictly better, so the trace is
/// non-decreasing.
pub fn coordinate_ascent<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    groups: &[Vec<usize>],
    cfg: &OptimConfig,
) -> Result<(Vec<f64>, f64, Vec<f64>, bool, usize)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = x0.len();
    if bounds.len() != d || groups.iter().flatten().any(|&i| i >= d) {
        return Err(Error::Config("bounds and groups must match the parameter dimension".into()));
    }
    let mut search = Search { f: &mut f, failed: 0 };
    let mut x = x0.to_vec();
    let mut best = search.eval(&x);
    if best == f64::NEG_INFINITY {
        return Err(Error::Optimization(format!("objective cannot be evaluated at the start point {x0:?}")));
    }
    let mut radius: Vec<f64> = x.iter().map(|v| cfg.initial_radius * v.abs().max(0.1)).collect();
    let mut trace = vec![best];
    let mut converged = false;
    let mut stalled = 0;

    for _ in 0..cfg.outer_cycles {
        let start = best;
        for group in groups {
            for &c in group {
                let (lo, hi) = (bounds[c].0.max(x[c] - radius[c]), bounds[c].1.min(x[c] + radius[c]));
                if !(hi > lo) {
                    continue;
                }
                let mut probe = x.clone();
                let mut at = |v: f64, s: &mut Search<'_, F>| {
                    probe[c] = v;
                    s.eval(&probe)
                };
                let (mut a, mut b) = (lo, hi);
                let mut u = b - GOLDEN * (b - a);
                let mut v = a + GOLDEN * (b - a);
                let mut fu = at(u, &mut search);
                let mut fv = at(v, &mut search);
                let (mut arg, mut val) = if fu >= fv { (u, fu) } else { (v, fv) };
                for _ in 0..cfg.iterations_per_coordinate {
                    if fu >= fv {
                        b = v;
                        v = u;
                        fv = fu;
                        u = b - GOLDEN * (b - a);
                        fu = at(u, &mut search);
                        if fu > val {
                            (arg, val) = (u, fu);
                        }
                    } else {
                        a = u;
                        u = v;
                        fu = fv;
                        v = a + GOLDEN * (b - a);
                        fv = at(v, &mut search);
                        if fv > val {
                            (arg, val) = (v, fv);
                        }
                    }
                }
                let width = hi - lo;
                if val > best {
                    let edge = (arg - lo).min(hi - arg) < 0.1 * width;
                    x[c] = arg;
                    best = val;
                    radius[c] *= if edge { 2.0 } else { 0.5 };
                } else {
                    radius[c] *= 0.5;
                }
                radius[c] = radius[c].max(1e-12 * x[c].abs().max(1.0));
            }
        }
        trace.push(best);
        stalled = if best - start <= cfg.tolerance { stalled + 1 } else { 0 };
        if stalled == 3 {
            converged = true;
            break;
        }
    }
    Ok((x, best, trace, converged, search.failed))
}

/// Maximum-PAL estimation over `params` with the given coordinate groups
/// (indices into `params`), starting from the parameter values.
pub fn maximize_pal(
    family: &dyn ModelFamily,
    data: &ObservationSeries,
    params: &ParamVector,
    groups: &[Vec<usize>],
    cfg: &OptimConfig,
) -> Result<FitResult> {
    params.check()?;
    let bounds: Vec<(f64, f64)> = params.params.iter().map(|p| (p.lower, p.upper)).collect();
    let objective = |theta: &[f64]| -> Result<f64> {
        let spec = family.build(theta)?;
        log_pal(&spec, data, false)
    };
    let (values, objective, trace, converged, failed_probes) =
        coordinate_ascent(objective, &params.values(), &bounds, groups, cfg)?;
    Ok(FitResult {
        names: params.names().iter().map(|s| s.to_string()).collect(),
        values,
        objective,
        trace,
        converged,
        failed_probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_recovered() {
        let f = |x: &[f64]| Ok(-(x[0] - 1.3).powi(2) - 2.0 * (x[1] + 0.4).powi(2) - 0.5 * (x[0] - 1.3) * (x[1] + 0.4));
        let (x, best, trace, converged, _) = coordinate_ascent(
            f,
            &[0.0, 0.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &[vec![0], vec![1]],
            &OptimConfig { tolerance: 0.0, ..OptimConfig::default() },
        )
        .unwrap();
        assert!((x[0] - 1.3).abs() < 1e-6 && (x[1] + 0.4).abs() < 1e-6, "{x:?}");
        assert!(best > -1e-11);
        assert!(converged);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Ok(x[0]);
        let (x, _, _, _, _) =
            coordinate_ascent(f, &[0.5], &[(0.0, 1.0)], &[vec![0]], &OptimConfig::default()).unwrap();
        assert!(x[0] <= 1.0 && x[0] > 0.999);
    }

    #[test]
    fn failing_probes_are_skipped() {
        let f = |x: &[f64]| {
            if x[0] > 2.0 {
                Err(Error::Validation("out".into()))
            } else {
                Ok(-(x[0] - 1.0).powi(2))
            }
        };
        let (x, _, _, _, failed) =
            coordinate_ascent(f, &[1.8], &[(0.0, 10.0)], &[vec![0]], &OptimConfig::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6);
        assert!(failed > 0);
        let bad = |_: &[f64]| -> Result<f64> { Err(Error::Validation("never".into())) };
        assert!(coordinate_ascent(bad, &[1.0], &[(0.0, 2.0)], &[vec![0]], &OptimConfig::default()).is_err());
    }
}
