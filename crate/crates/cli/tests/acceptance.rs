//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom; the process fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fdtnet::filters::{
    build_fdt_spec, fdt_filter_apply, validate_assumption, Response, DEFAULT_VALIDATION_SAMPLES,
};
use fdtnet::mnn::{forward_retained, gradient, Activation, MnnParams};
use fdtnet::partition::{partition_spectrum, weyl_law_fit};
use fdtnet::perturbation::{
    operator_with_spectrum, run_davis_kahan_trials, run_filter_stability_trials,
    run_nn_stability_trials, run_weyl_trials, summarize, synthetic_clustered_spectrum,
    DavisKahanTrialConfig, StabilityTrialConfig, WeylTrialConfig,
};
use fdtnet::seed::rng_for;
use fdtnet::spectral::{
    build_cycle_laplacian, build_graph_laplacian, build_torus_laplacian, sym_eig,
};
use fdtnet::wireless::{evaluate_perturbed, train_sweep, WirelessConfig};
use fdtnet::{EigenSystem, Signal};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion(id: u32, name: &str, limit: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let took = start.elapsed();
    let in_time = limit.map_or(true, |l| took <= l);
    let pass = out.pass && in_time;
    let budget = match limit {
        Some(l) => format!("{:.1}s of {}s", took.as_secs_f64(), l.as_secs()),
        None => format!("{:.1}s", took.as_secs_f64()),
    };
    println!(
        "[{}] {id:>2} {name}: {} ({budget})",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn weyl_inequality() -> Outcome {
    let cfg = WeylTrialConfig {
        trials: 500,
        min_dimension: 4,
        max_dimension: 64,
        max_epsilon: 2.0,
        seed: SEED,
    };
    let recs = run_weyl_trials(&cfg).expect("weyl trials");
    let bad = recs
        .iter()
        .filter(|r| r.report.max_shift > r.epsilon + 1e-9)
        .count();
    let worst = recs
        .iter()
        .map(|r| r.report.max_shift / r.epsilon)
        .fold(0.0, f64::max);
    outcome(
        bad == 0 && recs.len() == 500,
        format!(
            "{} trials, {bad} violations, max shift/eps = {worst:.4}",
            recs.len()
        ),
    )
}

fn davis_kahan() -> Outcome {
    let cfg = DavisKahanTrialConfig {
        trials: 200,
        min_dimension: 4,
        max_dimension: 32,
        epsilon: 0.05,
        gap_factor: 10.0,
        seed: SEED,
    };
    let recs = run_davis_kahan_trials(&cfg).expect("davis-kahan trials");
    let bad = recs
        .iter()
        .filter(|r| {
            r.report.projector_diff
                > std::f64::consts::FRAC_PI_2 * cfg.epsilon / r.report.gap + 1e-9
        })
        .count();
    let worst = recs
        .iter()
        .map(|r| r.report.projector_diff / r.report.bound)
        .fold(0.0, f64::max);
    outcome(
        bad == 0 && recs.len() == 200,
        format!(
            "{} trials, {bad} violations, max diff/bound = {worst:.4}",
            recs.len()
        ),
    )
}

fn filter_bound() -> Outcome {
    let cfg = StabilityTrialConfig::new(32, 0.2, 200, SEED);
    let reports = run_filter_stability_trials(&cfg).expect("filter trials");
    let s = summarize(&reports);
    let eps_ok = reports
        .iter()
        .all(|r| (r.epsilon - r.alpha / 2.0).abs() < 1e-9 && r.dimension <= 32);
    outcome(
        s.trials == 200 && s.violations == 0 && s.median_ratio < 0.5 && eps_ok,
        format!(
            "{} trials, {} violations, median ratio {:.2e} (< 0.5), max ratio {:.2e}",
            s.trials, s.violations, s.median_ratio, s.max_ratio
        ),
    )
}

fn network_bound() -> Outcome {
    let mut cfg = StabilityTrialConfig::new(16, 0.2, 100, SEED);
    cfg.layers = vec![1, 2, 3];
    cfg.widths = vec![1, 2, 4];
    let reports = run_nn_stability_trials(&cfg).expect("network trials");
    let s = summarize(&reports);
    // with L = 1 the network is [1, 1] whatever F is, leaving 7 distinct shapes
    let shapes: std::collections::BTreeSet<_> =
        reports.iter().map(|r| (r.layers, r.width)).collect();
    outcome(
        s.trials == 100 && s.violations == 0 && shapes.len() == 7,
        format!(
            "{} trials over {} (L, F) shapes, {} violations, max ratio {:.2e}",
            s.trials,
            shapes.len(),
            s.violations,
            s.max_ratio
        ),
    )
}

fn partition_coarsening() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/coarsening");
    let alphas: Vec<f64> = (0..20)
        .map(|k| 1e-3 * 10f64.powf(4.0 * k as f64 / 19.0))
        .collect();
    let mut failures = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let mut spec: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        spec.sort_by(f64::total_cmp);
        let parts: Vec<_> = alphas
            .iter()
            .map(|&a| partition_spectrum(&spec, a).expect("partition"))
            .collect();
        for w in parts.windows(2) {
            let count = |p: &fdtnet::partition::SpectrumPartition| p.d_count() + p.n_count();
            if !w[1].is_coarsening_of(&w[0]) || count(&w[1]) > count(&w[0]) {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("100 spectra x 20 alphas, {failures} non-monotone steps"),
    )
}

fn weyl_law_slopes() -> Outcome {
    let cycle = sym_eig(&build_cycle_laplacian(200).unwrap()).unwrap();
    let torus = sym_eig(&build_torus_laplacian(20, 20).unwrap()).unwrap();
    let s1 = weyl_law_fit(cycle.eigenvalues(), 2, 20).unwrap();
    let s2 = weyl_law_fit(torus.eigenvalues(), 4, 40).unwrap();
    outcome(
        (s1 - 2.0).abs() <= 0.1 && (s2 - 1.0).abs() <= 0.15,
        format!("cycle(200) slope {s1:.4} (2 +/- 0.1), torus(20x20) slope {s2:.4} (1 +/- 0.15)"),
    )
}

fn random_normalized_laplacian<R: Rng>(n: usize, rng: &mut R) -> EigenSystem {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x: f64 = rng.random_range(0.0..1.0);
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
    }
    let l = build_graph_laplacian(&w).unwrap();
    let s = l.spectral_norm().unwrap();
    sym_eig(&l.scaled(1.0 / s).unwrap()).unwrap()
}

fn gradient_check() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/gradient");
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let layers = rng.random_range(1..=3);
        let features: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..=3)).collect();
        let taps = rng.random_range(1..=4);
        let act = [Activation::Relu, Activation::Abs, Activation::Tanh][rng.random_range(0..3)];
        let eig = random_normalized_laplacian(n, &mut rng);
        let mut params = MnnParams::init_uniform(features.clone(), taps, act, &mut rng).unwrap();
        // scale up so the network is far from the trivial regime
        let x0: Vec<f64> = params.flatten().iter().map(|c| c * 4.0).collect();
        params.set_flat(&x0).unwrap();
        let input: Vec<Signal> = (0..features[0])
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let target: Vec<Signal> = (0..features[layers])
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let loss = |p: &MnnParams| -> f64 {
            let fm = forward_retained(p, &eig, &input).unwrap();
            fm.output()
                .iter()
                .zip(&target)
                .map(|(y, t)| 0.5 * (y - t).norm_squared())
                .sum()
        };
        let fm = forward_retained(&params, &eig, &input).unwrap();
        let lg: Vec<Signal> = fm
            .output()
            .iter()
            .zip(&target)
            .map(|(y, t)| y - t)
            .collect();
        let g = gradient(&params, &eig, &fm, &lg).unwrap();
        let analytic: Vec<f64> = g.iter().flatten().flatten().flatten().copied().collect();
        // near the round-off optimal step (cube root of machine epsilon)
        let h = 1e-5;
        for k in 0..x0.len() {
            let mut x = x0.clone();
            x[k] += h;
            params.set_flat(&x).unwrap();
            let up = loss(&params);
            x[k] -= 2.0 * h;
            params.set_flat(&x).unwrap();
            let dn = loss(&params);
            let fd = (up - dn) / (2.0 * h);
            let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-4,
        format!("50 configs, {checked} coefficients, max relative error {worst:.2e} (<= 1e-4)"),
    )
}

fn non_amplification() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/non_amplification");
    let mut validated = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut signals = 0;
    while validated < 100 {
        let n = rng.random_range(2..=32);
        let alpha = rng.random_range(0.05..0.5);
        let spectrum = synthetic_clustered_spectrum(n, alpha, &mut rng);
        let op = operator_with_spectrum(&spectrum, &mut rng).unwrap();
        let eig = sym_eig(&op).unwrap();
        let vals = eig.eigenvalues();
        let response = Response::random(&mut rng);
        let h = |l: f64| response.eval(l);
        let report =
            validate_assumption(h, vals[0], vals[n - 1], DEFAULT_VALIDATION_SAMPLES).unwrap();
        if !report.passes {
            continue;
        }
        validated += 1;
        let part = partition_spectrum(vals, alpha).unwrap();
        let spec = build_fdt_spec(h, &part, vals).unwrap();
        for _ in 0..5 {
            let f = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let fdt = fdt_filter_apply(&spec, &eig, &f).unwrap().norm() - f.norm();
            let direct = eig
                .spectral_apply(&vals.iter().map(|&l| h(l)).collect::<Vec<_>>(), &f)
                .unwrap()
                .norm()
                - f.norm();
            worst_excess = worst_excess.max(fdt).max(direct);
            signals += 1;
        }
    }
    outcome(
        worst_excess <= 1e-10,
        format!("100 validated filters, {signals} signals, max(|h f| - |f|) = {worst_excess:.3e} (<= 1e-10)"),
    )
}

fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn wireless() -> Outcome {
    let cfg = WirelessConfig::default();
    let run = train_sweep(&cfg).expect("training");
    let report = evaluate_perturbed(&run).expect("evaluation");
    let ratios: Vec<f64> = run
        .policies
        .iter()
        .map(|p| p.final_objective / p.initial_objective)
        .collect();
    let trained =
        run.policies.iter().all(|p| p.initial_objective > 0.0) && ratios.iter().all(|&r| r >= 1.2);
    let relaxed: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.relaxed_median_abs_gap)
        .collect();
    let binary: Vec<f64> = report.rows.iter().map(|r| r.median_abs_gap).collect();
    let trend = non_decreasing(&relaxed);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        trained && trend,
        format!(
            "(a) objective ratio final/initial for L=1,2,3: {} (>= 1.2) {}; (b) median |gap| relaxed [{}] {}, binary [{}]",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", "),
            if trained { "ok" } else { "not met" },
            fmt(&relaxed),
            if trend { "non-decreasing" } else { "NOT non-decreasing in L" },
            fmt(&binary),
        ),
    )
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_fdtnet");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let write = |name: &str, text: &str| std::fs::write(d.join(name), text).unwrap();
    write("m.csv", "2,-1,0,-1\n-1,2,-1,0\n0,-1,2,-1\n-1,0,-1,2\n");
    write("ev.csv", "0\n1\n1.05\n1.12\n3\n");
    write("h.json", r#"{"kind":"heat","gain":0.9,"tau":1.0}"#);
    write(
        "p.json",
        r#"{"layers":2,"features":[1,2,1],"taps":2,"activation":"tanh","coeffs":[[[[0.5,0.1]],[[0.2,-0.3]]],[[[0.4,0.1],[-0.2,0.3]]]]}"#,
    );
    write("x.csv", "1\n-1\n0.5\n2\n");
    write(
        "weyl.json",
        r#"{"trials":10,"min_dimension":3,"max_dimension":8,"max_epsilon":1.0}"#,
    );
    write(
        "dk.json",
        r#"{"trials":10,"min_dimension":3,"max_dimension":8,"epsilon":0.05,"gap_factor":10}"#,
    );
    write("stab.json", r#"{"dimension":10,"alpha":0.3,"trials":6}"#);
    write(
        "w.json",
        r#"{"scenario":{"n":5,"p_max":2.5},"training":{"iterations":3,"draws_per_step":2,"objective_draws":2},"layers":[1,2],"evaluation":{"draws":3}}"#,
    );
    let runs: Vec<Vec<&str>> = vec![
        vec!["eig", "--matrix", "m.csv"],
        vec!["eig", "--matrix", "m.csv", "--format", "csv"],
        vec!["partition", "--eigenvalues", "ev.csv", "--alpha", "0.2"],
        vec![
            "filter-response",
            "--filter",
            "h.json",
            "--eigenvalues",
            "ev.csv",
            "--alpha",
            "0.2",
            "--grid",
            "5",
        ],
        vec![
            "nn-forward",
            "--params",
            "p.json",
            "--matrix",
            "m.csv",
            "--signal",
            "x.csv",
        ],
        vec!["weyl-check", "--matrix", "m.csv", "--epsilon", "0.1"],
        vec!["weyl-check", "--config", "weyl.json", "--format", "csv"],
        vec![
            "dk-check",
            "--matrix",
            "m.csv",
            "--epsilon",
            "0.1",
            "--alpha",
            "0.5",
            "--index",
            "0",
        ],
        vec!["dk-check", "--config", "dk.json"],
        vec!["weyl-law", "--torus", "6x6", "--k-lo", "2", "--k-hi", "10"],
        vec!["filter-stability", "--config", "stab.json"],
        vec!["nn-stability", "--config", "stab.json"],
        vec!["wireless", "train", "--config", "w.json"],
        vec!["wireless", "eval", "--config", "w.json"],
    ];
    let exec = |args: &[&str]| {
        Command::new(bin)
            .current_dir(d)
            .args(args)
            .args(["--seed", "7"])
            .output()
            .expect("run fdtnet")
    };
    let mut failed = Vec::new();
    for args in &runs {
        let a = exec(args);
        let b = exec(args);
        if !a.status.success() || a.stdout.is_empty() || a.stdout != b.stdout {
            failed.push(args.join(" "));
        }
    }
    // file outputs, including the trained-policy round trip
    let to_file = |out: &str, extra: &[&str]| {
        let mut args = vec!["wireless", "train", "--config", "w.json", "-o", out];
        args.extend_from_slice(extra);
        exec(&args).status.success()
    };
    let files_ok = to_file("r1.json", &[])
        && to_file("r2.json", &[])
        && read(d, "r1.json") == read(d, "r2.json")
        && exec(&[
            "wireless",
            "eval",
            "--run",
            "r1.json",
            "-o",
            "e1.json",
            "--gap-table",
            "g1.csv",
        ])
        .status
        .success()
        && exec(&[
            "wireless",
            "eval",
            "--run",
            "r1.json",
            "-o",
            "e2.json",
            "--gap-table",
            "g2.csv",
        ])
        .status
        .success()
        && read(d, "e1.json") == read(d, "e2.json")
        && read(d, "g1.csv") == read(d, "g2.csv");
    if !files_ok {
        failed.push("wireless file outputs".into());
    }
    outcome(
        failed.is_empty(),
        format!(
            "{} invocations run twice, {} differ or fail{}",
            runs.len() + 2,
            failed.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(": {}", failed.join("; "))
            }
        ),
    )
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_default()
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "Weyl inequality", Some(secs(30)), weyl_inequality),
        criterion(2, "Davis-Kahan sin-theta", Some(secs(30)), davis_kahan),
        criterion(3, "filter bound domination", Some(secs(120)), filter_bound),
        criterion(
            4,
            "network bound domination",
            Some(secs(180)),
            network_bound,
        ),
        criterion(5, "partition coarsening", None, partition_coarsening),
        criterion(6, "Weyl-law slopes", Some(secs(10)), weyl_law_slopes),
        criterion(7, "gradient correctness", None, gradient_check),
        criterion(8, "non-amplification", None, non_amplification),
        criterion(
            9,
            "wireless training and depth trend",
            Some(secs(600)),
            wireless,
        ),
        criterion(10, "CLI determinism", None, cli_determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
