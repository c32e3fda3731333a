//! Property tests over randomly generated models and parameters.

use pal_core::asymptotics::{kl_contrast, ContrastKind};
use pal_core::filter::{pal_incidence_agg, pal_incidence_unit, FilterOptions};
use pal_core::inference::{coordinate_ascent, OptimConfig};
use pal_core::model::IncidenceModel;
use pal_core::rng::stream;
use pal_core::simulator::{simulate, simulate_latent};
use pal_core::zoo::age::REFERENCE_INITIAL;
use pal_core::zoo::measles::synthetic_five_cities;
use pal_core::zoo::{
    build_age_structured, build_measles_gravity, build_seir, build_sir_boarding, next_generation_r0, AgeConfig,
    MeaslesParams, SeirConfig, SirConfig,
};
use pal_core::{
    eval_kernel, log_pal, normalize_counts, InitialDistribution, Matrix, ModelSpec, ObservationKind,
    ObservationSeries, Schedule, TimeMatrix, TimeVector,
};
use proptest::prelude::*;
use rand::Rng;

/// A random η-dependent model with `m` compartments, seeded by `seed`.
fn random_spec(m: usize, seed: u64, open: bool) -> ModelSpec {
    let mut rng = stream(seed, 77);
    let w: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.random::<f64>() + 0.05).collect()).collect();
    let c: Vec<f64> = (0..m).map(|_| 3.0 * rng.random::<f64>()).collect();
    let kernel = move |_: usize, s: &[f64]| {
        let total: f64 = s.iter().sum();
        let rows: Vec<Vec<f64>> = w
            .iter()
            .map(|row| {
                let raw: Vec<f64> = row
                    .iter()
                    .zip(&c)
                    .zip(s)
                    .map(|((wij, cj), sj)| wij * (1.0 + cj * if total > 0.0 { sj / total } else { 0.0 }))
                    .collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|v| v / sum).collect()
            })
            .collect();
        Matrix::from_rows(&rows)
    };
    let q = Matrix::from_fn(m, |_, _| if rng.random::<f64>() < 0.3 { 0.0 } else { 0.1 + 0.8 * rng.random::<f64>() });
    let means: Vec<f64> = (0..m).map(|_| 5.0 + 45.0 * rng.random::<f64>()).collect();
    let mut spec = ModelSpec::new(InitialDistribution::VectorPoisson(means), kernel).with_incidence(IncidenceModel {
        reporting: TimeMatrix::constant(q),
        schedule: Schedule::EveryStep,
        open_population: open,
    });
    if open {
        let delta: Vec<f64> = (0..m).map(|_| 0.8 + 0.2 * rng.random::<f64>()).collect();
        let alpha: Vec<f64> = (0..m).map(|_| 3.0 * rng.random::<f64>()).collect();
        spec = spec.with_survival(TimeVector::constant(delta)).with_immigration(TimeVector::constant(alpha));
    }
    spec
}

fn measles_theta(beta_bar: f64, gamma: f64, g: f64, a: f64) -> MeaslesParams {
    MeaslesParams { beta_bar, rho: 0.45, gamma, g, a, c: 0.4, pi0: [0.05, 1e-4, 1e-4] }
}

/// Builtin models at a parameter point drawn from `u ∈ [0,1]^4`, all rates
/// strictly positive.
fn builtin_models(u: [f64; 4]) -> Vec<ModelSpec> {
    let r = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * u[i];
    let mut seir = SeirConfig::simulation_study(1000);
    seir.beta = r(0, 0.01, 3.0);
    seir.rho = r(1, 0.01, 1.0);
    seir.gamma = r(2, 0.01, 1.0);
    let sir = SirConfig::new(r(0, 0.01, 5.0), r(1, 0.01, 2.0), r(3, 0.01, 1.0));
    let b = vec![
        vec![r(0, 0.1, 8.0), 0.5, 0.2, 0.1],
        vec![0.5, r(1, 0.1, 8.0), 0.4, 0.3],
        vec![0.2, 0.4, r(2, 0.1, 8.0), 0.6],
        vec![0.1, 0.3, 0.6, 1.0],
    ];
    let age = AgeConfig::weekly(b, r(3, 0.01, 1.0), REFERENCE_INITIAL.to_vec());
    let measles = build_measles_gravity(
        &synthetic_five_cities(),
        &measles_theta(r(0, 1.0, 40.0), r(1, 0.1, 2.0), r(2, 0.001, 1.0), r(3, 0.0, 0.45)),
    );
    vec![build_seir(&seir).unwrap(), build_sir_boarding(&sir).unwrap(), build_age_structured(&age).unwrap(), measles.unwrap()]
}

fn zero_pattern(k: &Matrix) -> Vec<bool> {
    (0..k.dim()).flat_map(|i| (0..k.dim()).map(move |j| (i, j))).map(|(i, j)| k[(i, j)] == 0.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn builtin_kernels_are_stochastic(
        u in prop::array::uniform4(0.0f64..1.0),
        t in 1usize..400,
        raw in prop::collection::vec(0.0f64..1e6, 20),
    ) {
        for spec in builtin_models(u) {
            let s = &raw[..spec.compartments];
            let k = eval_kernel(&spec, t, s).unwrap();
            for i in 0..k.dim() {
                let row = k.row(i);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_support_does_not_depend_on_parameters(
        u in prop::array::uniform4(0.0f64..1.0),
        v in prop::array::uniform4(0.0f64..1.0),
        t in 1usize..400,
    ) {
        for (a, b) in builtin_models(u).iter().zip(builtin_models(v)) {
            let s: Vec<f64> = (0..a.compartments).map(|i| 100.0 + 17.0 * i as f64).collect();
            let ka = eval_kernel(a, t, &s).unwrap();
            let kb = eval_kernel(&b, t, &s).unwrap();
            prop_assert_eq!(zero_pattern(&ka), zero_pattern(&kb));
        }
    }

    #[test]
    fn normalization_is_scale_free(
        x in prop::collection::vec(0.0f64..1e4, 1..8),
        c in 1e-3f64..1e3,
    ) {
        prop_assume!(x.iter().sum::<f64>() > 0.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let a = normalize_counts(&x).unwrap();
        let b = normalize_counts(&scaled).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 4.0 * f64::EPSILON * p.max(*q).max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn transition_counts_balance(m in 2usize..5, seed in 0u64..1000, open in any::<bool>(), horizon in 1usize..12) {
        let spec = random_spec(m, seed, open);
        let rec = simulate_latent(&spec, horizon, &mut stream(seed, 1)).unwrap();
        let total0: u64 = rec.x[0].iter().sum();
        for t in 1..=horizon {
            let z = &rec.z[t - 1];
            for i in 0..m {
                let row: u64 = (0..m).map(|j| z[(i, j)]).sum();
                let col: u64 = (0..m).map(|j| z[(j, i)]).sum();
                prop_assert_eq!(row, rec.xbar[t - 1][i]);
                prop_assert_eq!(col, rec.x[t][i] - rec.xhat[t - 1][i]);
            }
            if !open {
                prop_assert_eq!(rec.x[t].iter().sum::<u64>(), total0);
            }
        }
    }

    #[test]
    fn incidence_prediction_conserves_mass(m in 2usize..5, seed in 0u64..1000, horizon in 1usize..15) {
        let spec = random_spec(m, seed, false);
        let (_, data) = simulate(&spec, horizon, ObservationKind::Incidence, &mut stream(seed, 2)).unwrap();
        let ObservationSeries::Incidence(y) = &data else { unreachable!() };
        let tr = pal_incidence_unit(&spec, y, FilterOptions::REPORTING).unwrap();
        let mut prev: Vec<f64> = spec.initial.mean();
        for t in 0..horizon {
            let lambda = &tr.predicted[t];
            let total: f64 = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| lambda[(i, j)]).sum();
            prop_assert!((total - prev.iter().sum::<f64>()).abs() <= 1e-10, "step {}: {} vs {}", t + 1, total, prev.iter().sum::<f64>());
            let bar = &tr.updated[t];
            prev = (0..m).map(|j| (0..m).map(|i| bar[(i, j)]).sum()).collect();
        }
    }

    #[test]
    fn dropping_the_constant_preserves_differences(m in 2usize..5, seed in 0u64..1000, other in 0u64..1000) {
        let a = random_spec(m, seed, false);
        let b = random_spec(m, other, false);
        let (_, data) = simulate(&a, 10, ObservationKind::Incidence, &mut stream(seed, 3)).unwrap();
        let (Ok(fa), Ok(fb)) = (log_pal(&a, &data, false), log_pal(&b, &data, false)) else {
            // b may put zero intensity on an observed entry.
            return Ok(());
        };
        let da = log_pal(&a, &data, true).unwrap();
        let db = log_pal(&b, &data, true).unwrap();
        prop_assert!(((fa - fb) - (da - db)).abs() <= 1e-10 * (1.0 + fa.abs().max(fb.abs()) / 1e3));
    }

    #[test]
    fn unit_schedule_aggregation_is_bit_identical(m in 2usize..5, seed in 0u64..1000, open in any::<bool>()) {
        let spec = random_spec(m, seed, open);
        let (_, data) = simulate(&spec, 12, ObservationKind::Incidence, &mut stream(seed, 4)).unwrap();
        let ObservationSeries::Incidence(y) = &data else { unreachable!() };
        let unit = pal_incidence_unit(&spec, y, FilterOptions::REPORTING).unwrap();
        let times: Vec<usize> = (1..=y.len()).collect();
        let agg = pal_incidence_agg(&spec, &times, y, FilterOptions::REPORTING).unwrap();
        prop_assert_eq!(unit.total.to_bits(), agg.total.to_bits());
        prop_assert_eq!(unit.predicted, agg.predicted);
        prop_assert_eq!(unit.updated, agg.updated);
    }

    #[test]
    fn contrast_is_zero_at_truth_and_negative_elsewhere(beta in 0.05f64..1.5, gamma in 0.02f64..1.0) {
        let truth = build_seir(&SeirConfig::simulation_study(1000)).unwrap();
        let mut cfg = SeirConfig::simulation_study(1000);
        cfg.beta = beta;
        cfg.gamma = gamma;
        let model = build_seir(&cfg).unwrap();
        prop_assert_eq!(kl_contrast(&truth, &truth, 60, ContrastKind::Prevalence).unwrap(), 0.0);
        prop_assert!(kl_contrast(&truth, &model, 60, ContrastKind::Prevalence).unwrap() <= 0.0);
    }

    #[test]
    fn r0_matches_power_iteration(
        upper in prop::collection::vec(0.01f64..5.0, 10),
        pops in prop::collection::vec(10.0f64..1e4, 4),
        gamma in 0.1f64..10.0,
    ) {
        let mut b = vec![vec![0.0; 4]; 4];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                b[i][j] = upper[k];
                b[j][i] = upper[k];
                k += 1;
            }
        }
        let n: f64 = pops.iter().sum();
        let a: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| pops[i] * b[i][j] / (n * gamma)).collect()).collect();
        // Positive matrix: power iteration converges to the Perron root.
        let mut v = vec![1.0; 4];
        let mut rho = 0.0;
        for _ in 0..5000 {
            let w: Vec<f64> = (0..4).map(|i| (0..4).map(|j| a[i][j] * v[j]).sum()).collect();
            let norm = w.iter().cloned().fold(0.0, f64::max);
            v = w.iter().map(|x| x / norm).collect();
            if (norm - rho).abs() <= 1e-15 * norm {
                rho = norm;
                break;
            }
            rho = norm;
        }
        let r0 = next_generation_r0(&b, &pops, gamma).unwrap();
        prop_assert!((r0 - rho).abs() <= 1e-8 * rho.max(1.0), "{} vs {}", r0, rho);
    }

    #[test]
    fn coordinate_ascent_never_decreases(
        centre in prop::array::uniform3(-3.0f64..3.0),
        start in prop::array::uniform3(-4.0f64..4.0),
        coupling in -0.4f64..0.4,
    ) {
        let f = |x: &[f64]| -> pal_core::Result<f64> {
            let d: Vec<f64> = x.iter().zip(centre).map(|(a, b)| a - b).collect();
            Ok(-(d[0] * d[0] + 2.0 * d[1] * d[1] + 0.5 * d[2] * d[2]) - coupling * d[0] * d[1] - (d[2].abs() + 1.0).ln())
        };
        let bounds = [(-5.0, 5.0); 3];
        let (_, best, trace, _, _) =
            coordinate_ascent(f, &start, &bounds, &[vec![0, 1], vec![2]], &OptimConfig::default()).unwrap();
        prop_assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*trace.last().unwrap(), best);
    }
}
