//! Shared fixtures for the benchmarks.

use pal_core::rng::stream;
use pal_core::simulator::simulate;
use pal_core::zoo::measles::{synthetic_five_cities, MeaslesParams};
use pal_core::zoo::{build_measles_gravity, build_seir, build_sir_boarding, SeirConfig, SeirIncidence, SirConfig};
use pal_core::{ModelSpec, ObservationKind, ObservationSeries};

/// Boarding-school SIR with `scale` times the school population, and data
/// simulated from it.
pub fn sir_instance(scale: u64) -> (ModelSpec, ObservationSeries) {
    let mut cfg = SirConfig::new(2.0, 0.5, 0.8);
    cfg.initial = [763 * scale, scale, 0];
    let spec = build_sir_boarding(&cfg).expect("valid SIR");
    let (_, data) = simulate(&spec, 14, ObservationKind::Prevalence, &mut stream(1, scale)).expect("simulates");
    (spec, data)
}

/// SEIR with prevalence observations at population `n`, 100 steps.
pub fn seir_prevalence_instance(n: u64) -> (ModelSpec, ObservationSeries) {
    let spec = build_seir(&SeirConfig::simulation_study(n)).expect("valid SEIR");
    let (_, data) = simulate(&spec, 100, ObservationKind::Prevalence, &mut stream(2, n)).expect("simulates");
    (spec, data)
}

/// Closed SEIR with weekly E→I incidence over 20 weeks.
pub fn seir_incidence_instance(n: u64) -> (ModelSpec, ObservationSeries) {
    let mut cfg = SeirConfig::closed(2.0, 7.0 / 1.5, 7.0 / 1.5, n);
    cfg.h = 1.0 / 7.0;
    cfg.incidence = Some(SeirIncidence { entry: (1, 2), rate: 0.3, period: 7 });
    let spec = build_seir(&cfg).expect("valid SEIR");
    let (_, data) = simulate(&spec, 140, ObservationKind::Aggregated, &mut stream(3, n)).expect("simulates");
    (spec, data)
}

/// The synthetic five-city measles model over ten years.
pub fn measles_instance() -> (ModelSpec, ObservationSeries) {
    let gravity = synthetic_five_cities();
    let theta = MeaslesParams { beta_bar: 12.0, rho: 0.45, gamma: 0.7, g: 0.05, a: 0.3, c: 0.4, pi0: [0.05, 1e-4, 1e-4] };
    let spec = build_measles_gravity(&gravity, &theta).expect("valid measles model");
    let (_, data) = simulate(&spec, gravity.horizon(), ObservationKind::Aggregated, &mut stream(4, 0)).expect("simulates");
    (spec, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pal_core::log_pal;

    #[test]
    fn instances_have_finite_pal() {
        for (spec, data) in [sir_instance(1), seir_prevalence_instance(1000), seir_incidence_instance(1000), measles_instance()] {
            assert!(log_pal(&spec, &data, true).unwrap().is_finite());
        }
    }
}
