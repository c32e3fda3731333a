use std::path::Path;
use std::time::Instant;

use log::info;
use pal_core::asymptotics::{
    kl_contrast, limit_filter_incidence, limit_filter_prevalence, limit_trajectory_incidence,
    limit_trajectory_prevalence, ContrastKind, LimitTrace,
};
use pal_core::filter::{run_filter, FilterOptions};
use pal_core::inference::{
    chain_diagnostics, maximize_pal, posterior_predictive, run_algorithm, Algorithm, McmcConfig, OptimConfig,
};
use pal_core::io::{self, ModelFile, ResolvedModel};
use pal_core::oracle::{exact_loglik_enumerate, particle_filter_loglik};
use pal_core::rng::stream;
use pal_core::simulator;
use pal_core::zoo::Configurable;
use pal_core::{log_pal, Error, ModelSpec, ObservationKind, ObservationSeries};
use serde_json::json;

use crate::output::{read_input, Run};
use crate::{BenchArgs, FilterArgs, FitArgs, LimitsArgs, McmcArgs, OracleArgs, SimulateArgs, Failure};

struct Loaded {
    file: ModelFile,
    model: ResolvedModel,
    spec: ModelSpec,
}

fn load_model(run: &mut Run, path: &Path) -> Result<Loaded, Failure> {
    let bytes = read_input(path)?;
    run.input(path, &bytes);
    let text = String::from_utf8(bytes).map_err(|_| Failure::config(format!("{} is not UTF-8", path.display())))?;
    let file = ModelFile::from_json(&text)?;
    let model = file.model.resolve(path.parent().unwrap_or(Path::new(".")))?;
    let spec = model.build()?;
    Ok(Loaded { file, model, spec })
}

fn load_data(run: &mut Run, path: &Path, loaded: &Loaded) -> Result<ObservationSeries, Failure> {
    let bytes = read_input(path)?;
    run.input(path, &bytes);
    Ok(io::read_observations(bytes.as_slice(), loaded.file.observation, loaded.spec.compartments)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "simulate", args, Some(args.seed))?;
    let m = load_model(&mut run, &args.common.model)?;
    let horizon = match args.horizon {
        Some(h) => h,
        None => m.file.horizon_for(&m.model)?,
    };
    let (latent, data) = simulate_with(&m.spec, horizon, m.file.observation, args.seed)?;
    run.write_csv("observations.csv", |w| io::write_observations(&data, w))?;
    run.write_csv("latent.csv", |w| io::write_latent(&latent, w))?;
    println!("simulated {horizon} steps, {} observations", data.len());
    run.finish()
}

fn simulate_with(
    spec: &ModelSpec,
    horizon: usize,
    kind: ObservationKind,
    seed: u64,
) -> pal_core::Result<(pal_core::LatentRecord, ObservationSeries)> {
    simulator::simulate(spec, horizon, kind, &mut stream(seed, 0))
}

pub fn filter(args: &FilterArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "filter", args, None)?;
    let m = load_model(&mut run, &args.common.model)?;
    let data = load_data(&mut run, &args.data, &m)?;
    let trace = run_filter(&m.spec, &data, FilterOptions { drop_constant: args.drop_constant, record: true })?;
    run.write_csv("log_terms.csv", |w| io::write_log_terms(&trace, w))?;
    run.write_csv("trace.csv", |w| io::write_trace(&trace, w))?;
    run.write_json(
        "summary.json",
        &json!({ "log_pal": trace.total(), "drop_constant": args.drop_constant, "observations": data.len() }),
    )?;
    println!("log-PAL {}", trace.total());
    run.finish()
}

pub fn fit(args: &FitArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "fit", args, None)?;
    let m = load_model(&mut run, &args.common.model)?;
    let data = load_data(&mut run, &args.data, &m)?;
    if m.file.parameters.is_empty() {
        return Err(Failure::config("the model file lists no parameters to fit"));
    }
    let params = m.file.params()?;
    let family = m.file.family(&m.model);
    let cfg = OptimConfig {
        iterations_per_coordinate: args.line_iterations,
        outer_cycles: args.cycles,
        tolerance: args.tolerance,
        ..OptimConfig::default()
    };
    let result = maximize_pal(&family, &data, &params, &m.file.group_indices()?, &cfg)?;
    run.write_json("fit.json", &result)?;
    for (n, v) in result.names.iter().zip(&result.values) {
        println!("{n} = {v}");
    }
    println!("log-PAL {} ({})", result.objective, if result.converged { "converged" } else { "cycle limit reached" });
    run.finish()
}

pub fn mcmc(args: &McmcArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "mcmc", args, Some(args.seed))?;
    let algo: Algorithm = args.algo.parse()?;
    let m = load_model(&mut run, &args.common.model)?;
    let data = load_data(&mut run, &args.data, &m)?;
    if m.file.parameters.is_empty() {
        return Err(Failure::config("the model file lists no parameters to sample"));
    }
    if args.iterations == 0 {
        return Err(Failure::config("--iterations must be positive"));
    }
    let params = m.file.params()?;
    let family = m.file.family(&m.model);
    let cfg = McmcConfig {
        iterations: args.iterations,
        tuning_sweeps: args.tuning,
        tuning_batch: 50,
        burn_in: args.burn_in,
        thin_to: Some(args.thin_to),
        seed: args.seed,
    };
    let chain = run_algorithm(algo, &family, &data, &params, &cfg, args.particles)?;
    info!("chain finished in {:.1} s", chain.elapsed_secs);
    let kept = chain.kept();
    run.write_csv("chain.csv", |w| io::write_chain(&chain, w))?;
    run.write_json(
        "summary.json",
        &json!({
            "algorithm": args.algo,
            "kept_draws": kept.len(),
            "burn_in": chain.burn_in,
            "thin": chain.thin,
            "proposal_sds": chain.proposal_sds,
            "acceptance_rates": chain.acceptance_rates(),
            "screening_pass_rates": if algo == Algorithm::Dapmmh { Some(chain.stage1_rates()) } else { None },
            "likelihood_calls": chain.likelihood_calls,
            "parameters": chain_diagnostics(&chain.names, &kept, &[1, 5, 10, 50]),
        }),
    )?;
    if args.predictive > 0 {
        // Predictive replicates draw from streams disjoint from the chain's.
        let bands = posterior_predictive(&family, &kept, args.predictive, data.horizon(), data.kind(), args.seed ^ (1 << 63))?;
        let mut csv = String::from("event,coordinate,mean,q05,q95\n");
        for (r, mean) in bands.mean.iter().enumerate() {
            for (c, m) in mean.iter().enumerate() {
                csv.push_str(&format!("{},{c},{m:?},{:?},{:?}\n", r + 1, bands.lower[r][c], bands.upper[r][c]));
            }
        }
        run.write("predictive.csv", csv.as_bytes())?;
    }
    let rates = chain.acceptance_rates();
    for (k, n) in chain.names.iter().enumerate() {
        let col: Vec<f64> = kept.iter().map(|r| r[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
        println!("{n}: mean {mean:.5}, acceptance {:.3}", rates[k]);
    }
    run.finish()
}

fn limit_trajectory(spec: &ModelSpec, kind: ObservationKind, horizon: usize) -> pal_core::Result<LimitTrace> {
    match kind {
        ObservationKind::Prevalence => limit_trajectory_prevalence(spec, horizon),
        _ => limit_trajectory_incidence(spec, horizon),
    }
}

pub fn limits(args: &LimitsArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "limits", args, None)?;
    let m = load_model(&mut run, &args.common.model)?;
    let horizon = match args.horizon {
        Some(h) => h,
        None => m.file.horizon_for(&m.model)?,
    };
    let kind = m.file.observation;
    let truth = limit_trajectory(&m.spec, kind, horizon)?;
    run.write_csv("limit_trajectory.csv", |w| io::write_limits(&truth, w))?;
    let mut summary = json!({ "horizon": horizon });
    if let Some(alt) = m.file.alternative_spec(&m.model)? {
        let (lim, contrast_kind) = match kind {
            ObservationKind::Prevalence => (limit_filter_prevalence(&m.spec, &alt, horizon)?, ContrastKind::Prevalence),
            _ => (limit_filter_incidence(&m.spec, &alt, horizon)?, ContrastKind::Incidence),
        };
        run.write_csv("limit_filter.csv", |w| io::write_limits(&lim, w))?;
        let contrast = kl_contrast(&m.spec, &alt, horizon, contrast_kind)?;
        summary["alternative"] = json!(m.file.alternative);
        summary["contrast"] = json!(contrast);
        println!("contrast at the alternative: {contrast}");
    }
    run.write_json("summary.json", &summary)?;
    run.finish()
}

/// Runs `f(r)` for `r in 0..n` on `threads` workers; results are in `r`
/// order whatever the thread count.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    let threads = threads.clamp(1, n.max(1));
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|w| scope.spawn(move || (w..n).step_by(threads).map(|r| (r, f(r))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (r, v) in h.join().expect("worker panicked") {
                slots[r] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every slot filled")).collect()
}

pub fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "oracle", args, Some(args.seed))?;
    let m = load_model(&mut run, &args.common.model)?;
    let data = load_data(&mut run, &args.data, &m)?;
    let pal = log_pal(&m.spec, &data, false)?;
    let exact = if args.state_cap == 0 {
        json!({ "skipped": "disabled" })
    } else {
        match exact_loglik_enumerate(&m.spec, &data, args.state_cap) {
            Ok(r) => json!({ "loglik": r.loglik, "truncated_mass": r.truncated_mass, "max_states": r.max_states }),
            Err(e @ Error::StateSpace(_)) => json!({ "skipped": e.to_string() }),
            Err(e) => return Err(e.into()),
        }
    };
    let estimates = parallel_map(args.replicates, args.common.threads, |r| {
        particle_filter_loglik(&m.spec, &data, args.particles, &mut stream(args.seed, r as u64))
    })
    .into_iter()
    .collect::<pal_core::Result<Vec<f64>>>()?;
    let mut csv = String::from("replicate,loglik\n");
    for (r, v) in estimates.iter().enumerate() {
        csv.push_str(&format!("{r},{v:?}\n"));
    }
    run.write("particle.csv", csv.as_bytes())?;
    let particle = if estimates.is_empty() {
        json!(null)
    } else {
        // Unbiased on the likelihood scale: log of the mean of exp(ℓ̂).
        let top = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let k = estimates.len() as f64;
        let w: Vec<f64> = estimates.iter().map(|v| (v - top).exp()).collect();
        let mw = w.iter().sum::<f64>() / k;
        let sd = (w.iter().map(|x| (x - mw).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
        json!({
            "replicates": estimates.len(),
            "particles": args.particles,
            "log_mean_likelihood": top + mw.ln(),
            "relative_standard_error": sd / mw / k.sqrt(),
            "mean_loglik": estimates.iter().sum::<f64>() / k,
        })
    };
    run.write_json("oracle.json", &json!({ "log_pal": pal, "exact": exact, "particle": particle }))?;
    println!("log-PAL {pal}");
    run.finish()
}

fn parse_size(s: &str) -> Result<u64, Failure> {
    let v: f64 = s.trim().parse().map_err(|_| Failure::config(format!("population size {s:?} is not a number")))?;
    if !(v >= 1.0 && v.is_finite()) {
        return Err(Failure::config(format!("population size {s:?} must be at least 1")));
    }
    Ok(v.round() as u64)
}

fn scale_counts<const K: usize>(x: &[u64; K], f: f64) -> [u64; K] {
    x.map(|v| (v as f64 * f).round() as u64)
}

/// The model with its total initial population set to about `n`.
fn at_population(model: &ResolvedModel, n: u64) -> Result<ResolvedModel, Failure> {
    let mut out = model.clone();
    match &mut out {
        ResolvedModel::Sir(c) => {
            let f = n as f64 / c.initial.iter().sum::<u64>() as f64;
            c.initial = scale_counts(&c.initial, f);
        }
        ResolvedModel::Seir(c) => {
            let f = n as f64 / c.n as f64;
            c.n = n;
            if let Some(x) = &mut c.initial_counts {
                *x = scale_counts(x, f);
            }
        }
        ResolvedModel::AgeStructured(c) => {
            let f = n as f64 / c.populations().iter().sum::<f64>();
            for x in &mut c.initial {
                *x = scale_counts(x, f);
            }
        }
        ResolvedModel::Measles(c) => {
            let total: u64 = c.gravity.populations.iter().sum();
            let factor = (n as f64 / total as f64).round();
            if factor < 1.0 {
                return Err(Failure::config(format!("gravity models can only be scaled up from {total}")));
            }
            c.gravity = c.gravity.scaled(factor as u64);
        }
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let mut run = Run::start(&args.common.out, "bench", args, Some(args.seed))?;
    let m = load_model(&mut run, &args.common.model)?;
    let sizes: Vec<u64> = args.vary_n.iter().map(|s| parse_size(s)).collect::<Result<_, _>>()?;
    let reps = args.reps.max(1);
    let mut rows = Vec::new();
    let mut csv = String::from("n,pal_secs,particle_secs\n");
    for (k, &n) in sizes.iter().enumerate() {
        let spec = at_population(&m.model, n)?.build()?;
        let horizon = m.file.horizon_for(&m.model)?;
        let (_, data) = simulator::simulate(&spec, horizon, m.file.observation, &mut stream(args.seed, k as u64))?;
        const CALLS: usize = 200;
        let pal = median(
            (0..reps)
                .map(|_| {
                    let t = Instant::now();
                    for _ in 0..CALLS {
                        std::hint::black_box(log_pal(&spec, &data, true)?);
                    }
                    Ok(t.elapsed().as_secs_f64() / CALLS as f64)
                })
                .collect::<pal_core::Result<Vec<f64>>>()?,
        );
        let mut rng = stream(args.seed, 1000 + k as u64);
        let pf = median(
            (0..reps)
                .map(|_| {
                    let t = Instant::now();
                    std::hint::black_box(particle_filter_loglik(&spec, &data, args.particles, &mut rng)?);
                    Ok(t.elapsed().as_secs_f64())
                })
                .collect::<pal_core::Result<Vec<f64>>>()?,
        );
        println!("n = {n}: PAL {pal:.3e} s, particle filter {pf:.3e} s");
        csv.push_str(&format!("{n},{pal:?},{pf:?}\n"));
        rows.push((n, pal, pf));
    }
    run.write("bench.csv", csv.as_bytes())?;
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let summary = json!({
        "sizes": sizes,
        "pal_ratio": last.1 / first.1,
        "particle_ratio": last.2 / first.2,
    });
    println!("PAL ratio {:.2}, particle filter ratio {:.2}", last.1 / first.1, last.2 / first.2);
    run.write_json("bench.json", &summary)?;
    run.finish()
}
