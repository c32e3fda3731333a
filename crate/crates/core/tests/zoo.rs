//! Builder validity, the city-data loader and contrast invariances of the
//! concrete models.

use std::path::Path;

use pal_core::asymptotics::{kl_contrast, ContrastKind};
use pal_core::zoo::age::REFERENCE_INITIAL;
use pal_core::zoo::measles::synthetic_five_cities;
use pal_core::zoo::{
    build_age_structured, build_measles_gravity, build_seir, build_sir_boarding, AgeConfig, GravityConfig,
    MeaslesParams, SeirConfig, SirConfig,
};
use pal_core::validate_spec;

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn assert_valid(spec: &pal_core::ModelSpec, horizon: usize, label: &str) {
    let problems = validate_spec(spec, horizon);
    assert!(problems.is_empty(), "{label}: {problems:?}");
}

#[test]
fn seir_and_sir_valid_across_parameter_grid() {
    for beta in grid(0.0, 4.0, 5) {
        for gamma in grid(0.0, 2.0, 4) {
            for rho in grid(0.0, 1.0, 3) {
                let mut cfg = SeirConfig::simulation_study(500);
                (cfg.beta, cfg.rho, cfg.gamma) = (beta, rho, gamma);
                assert_valid(&build_seir(&cfg).unwrap(), 30, "seir");
            }
            for q in grid(0.0, 1.0, 3) {
                assert_valid(&build_sir_boarding(&SirConfig::new(beta, gamma, q)).unwrap(), 14, "sir");
            }
        }
    }
}

#[test]
fn age_structured_valid_across_parameter_grid() {
    for scale in grid(0.0, 10.0, 4) {
        for q in grid(0.0, 1.0, 3) {
            let b: Vec<Vec<f64>> =
                (0..4).map(|i| (0..4).map(|j| scale * (1.0 + (i * j) as f64) / (1.0 + (i + j) as f64)).collect()).collect();
            let cfg = AgeConfig::weekly(b, q, REFERENCE_INITIAL.to_vec());
            assert_valid(&build_age_structured(&cfg).unwrap(), 21, "age");
        }
    }
}

#[test]
fn measles_valid_across_parameter_grid() {
    let gravity = synthetic_five_cities();
    for beta_bar in grid(0.0, 60.0, 3) {
        for g in grid(0.0, 800.0, 3) {
            for a in grid(0.0, 0.5, 3) {
                for c in grid(0.0, 1.0, 2) {
                    let theta = MeaslesParams { beta_bar, rho: 0.5, gamma: 0.9, g, a, c, pi0: [0.04, 1e-4, 1e-4] };
                    assert_valid(&build_measles_gravity(&gravity, &theta).unwrap(), 208, "measles");
                }
            }
        }
    }
}

#[test]
fn loads_city_tables() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/measles");
    let cfg = GravityConfig::from_csv_dir(&dir, 4).unwrap();
    assert_eq!(cfg.names, ["Northgate", "Riverside", "Eastholm"]);
    assert_eq!(cfg.populations, [820_000, 310_000, 95_000]);
    assert_eq!(cfg.years(), 4);
    assert_eq!(cfg.horizon(), 4 * 104);
    assert!((cfg.distances[0][1] - 50.0).abs() < 1e-12);
    assert!((cfg.distances[1][0] - 50.0).abs() < 1e-12);
    // Model year 1944 receives the cohort born in 1940.
    assert_eq!(cfg.births[0][0], (820_000.0f64 * 0.018).round());
    assert_eq!(cfg.births[2][3], (95_000.0f64 * 0.021).round());
    assert!((cfg.death_rates[1][2] - 0.0114).abs() < 1e-12);
    assert_eq!(cfg.reporting, [0.52, 0.61, 0.47]);

    let theta = MeaslesParams { beta_bar: 20.0, rho: 0.45, gamma: 0.8, g: 100.0, a: 0.3, c: 0.5, pi0: [0.04, 1e-4, 1e-4] };
    let spec = build_measles_gravity(&cfg, &theta).unwrap();
    assert_eq!(spec.compartments, 12);
    assert_valid(&spec, cfg.horizon(), "loaded");
}

#[test]
fn unknown_city_in_schedule_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("cities.csv"), "name,population,x,y,reporting\nA,1000,0,0,0.5\n").unwrap();
    std::fs::write(dir.join("births.csv"), "city,year,births\nB,1950,20\n").unwrap();
    std::fs::write(dir.join("deaths.csv"), "city,year,rate\nA,1950,0.01\n").unwrap();
    assert!(GravityConfig::from_csv_dir(dir, 4).is_err());
}

/// Multiplying detection probabilities and clutter by the same factor leaves
/// the best parameter on a grid unchanged.
#[test]
fn contrast_argmax_invariant_to_detection_scale() {
    let with_scale = |factor: f64, beta: f64, gamma: f64| {
        let mut cfg = SeirConfig::simulation_study(1000);
        (cfg.beta, cfg.gamma) = (beta, gamma);
        let obs = cfg.prevalence.as_mut().unwrap();
        obs.detection = obs.detection.map(|q| q * factor);
        obs.clutter_rate = obs.clutter_rate.map(|k| k * factor);
        build_seir(&cfg).unwrap()
    };
    let argmax = |factor: f64| {
        let truth = with_scale(factor, 0.5, 0.1);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for beta in [0.3, 0.4, 0.6, 0.7] {
            for gamma in [0.05, 0.15, 0.2] {
                let c = kl_contrast(&truth, &with_scale(factor, beta, gamma), 100, ContrastKind::Prevalence).unwrap();
                if c > best.0 {
                    best = (c, beta, gamma);
                }
            }
        }
        (best.1, best.2)
    };
    let base = argmax(1.0);
    for factor in [0.5, 2.0, 3.0] {
        assert_eq!(argmax(factor), base, "factor {factor}");
    }
}
