//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! The exact checks (solver, certificate, reconstruction, determinism) decide
//! the exit status. The simulation-based checks are reported but never abort
//! the run, since their outcome is a property of the algorithms rather than a
//! correctness bug.
//!
//! Runs with `harness = false` so the report is not swallowed by the test
//! runner's output capture.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cmcb::environment::EnvRun;
use cmcb::full_bandit::{DesignSet, EtePolicy};
use cmcb::full_info::EmpiricalState;
use cmcb::harness::{self, AlgorithmParams, ExperimentConfig, RunOptions};
use cmcb::linalg;
use cmcb::model::{mean_cov_value, Domain, Feedback, FeedbackKind, Instance};
use cmcb::oracles::{fit_regret_slope, grid_maximize};
use cmcb::policy::{Algorithm, Policy};
use cmcb::semi_bandit::{covariance_radius, McUcb, RadiusConstants, UcbConfig, UcbVariant};
use cmcb::solver::{feasible_supports, solve_mean_cov_qp, solve_restricted_qp};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const RUNS: usize = 50;
const SEED: u64 = 2021;

struct Report {
    lines: Vec<(bool, bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, gating: bool, detail: String, started: Instant) {
        let line = format!(
            "{} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        self.lines.push((pass, gating, line));
    }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random covariance with largest variance 1.
fn random_covariance(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
    let top = (0..d).map(|i| s[(i, i)]).fold(0.0, f64::max);
    s / top
}

fn random_instances(n: usize) -> Vec<(Vec<f64>, DMatrix<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..n)
        .map(|k| {
            let theta = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let sigma = random_covariance(&mut rng, 3);
            (theta, sigma, [0.1, 1.0, 10.0][k % 3])
        })
        .collect()
}

fn solver_oracle(report: &mut Report) {
    let started = Instant::now();
    let mut worst_full = 0.0f64;
    let mut worst_restricted = 0.0f64;
    let mut solver_beaten = false;
    for (theta, sigma, rho) in random_instances(100) {
        let f = |w: &[f64]| mean_cov_value(&theta, &sigma, rho, w);
        let (_, exact) = solve_mean_cov_qp(&theta, &sigma, rho).unwrap();
        let (_, grid) = grid_maximize(f, 3, 0.01, None).unwrap();
        let (_, exact_c) = solve_restricted_qp(&theta, &sigma, rho, 0.2).unwrap();
        let (_, grid_c) = grid_maximize(f, 3, 0.01, Some(0.2)).unwrap();
        solver_beaten |= grid > exact + 1e-12 || grid_c > exact_c + 1e-12;
        worst_full = worst_full.max((exact - grid).abs());
        worst_restricted = worst_restricted.max((exact_c - grid_c).abs());
    }
    let pass = worst_full <= 1e-3 && worst_restricted <= 1e-3 && !solver_beaten;
    report.record(
        "solver-oracle equivalence",
        pass,
        true,
        format!("100 instances, max |gap| full {worst_full:.2e}, restricted c=0.2 {worst_restricted:.2e}"),
        started,
    );
}

fn kkt_certificate(report: &mut Report) {
    let started = Instant::now();
    let mut instances = random_instances(100);
    let five_arm = Instance::synthetic_five_arm(0.1, None).unwrap();
    for rho in [0.1, 1.0, 10.0] {
        instances.push((five_arm.theta().as_slice().to_vec(), five_arm.sigma().clone(), rho));
    }
    let mut worst = (0.0f64, 0.0f64, f64::INFINITY);
    let mut bad_counts = 0;
    for (theta, sigma, rho) in &instances {
        let sols = feasible_supports(theta, sigma, *rho).unwrap();
        if sols.len() != 1 {
            bad_counts += 1;
        }
        for s in &sols {
            worst.0 = worst.0.max(s.stationarity_residual(theta, sigma, *rho));
            worst.1 = worst.1.max(s.complementary_slackness());
            worst.2 = worst.2.min(s.min_dual_u());
        }
    }
    let pass = bad_counts == 0 && worst.0 <= 1e-8 && worst.1 <= 1e-9 && worst.2 >= -1e-9;
    report.record(
        "KKT certificate",
        pass,
        true,
        format!(
            "{} instances, {bad_counts} without a unique support; stationarity {:.1e}, slackness {:.1e}, min u {:.1e}",
            instances.len(),
            worst.0,
            worst.1,
            worst.2
        ),
        started,
    );
}

fn ete_reconstruction(report: &mut Report) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut pass = true;
    let mut details = Vec::new();
    for d in [2, 3, 5, 10] {
        let design = DesignSet::build(d).unwrap();
        let (rb, rc) = design.identity_residuals();
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut policy = EtePolicy::mc_ete(design, 1.0);
        for _ in 0..d * (d + 1) / 2 {
            let w = policy.choose().unwrap();
            let y = linalg::dot(w.as_slice(), &theta);
            policy.observe(&w, &Feedback::Bandit(y)).unwrap();
        }
        let st = policy.state();
        let theta_err = st
            .theta_hat()
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let sigma_err = linalg::max_abs(st.sigma_hat());
        pass &= st.completed_rounds() == 1 && rb <= 1e-9 && rc <= 1e-9 && theta_err <= 1e-9 && sigma_err <= 1e-9;
        details.push(format!("d={d}: B {rb:.0e} C {rc:.0e} θ {theta_err:.0e} Σ {sigma_err:.0e}"));
    }
    report.record("MC-ETE reconstruction", pass, true, details.join("; "), started);
}

fn estimator_consistency(report: &mut Report) {
    let started = Instant::now();
    let inst = Instance::synthetic_five_arm(0.1, None).unwrap();
    let mut env = EnvRun::new(&inst, Domain::Full, SEED, 0).unwrap();
    let mut state = EmpiricalState::new(5);
    for _ in 0..100_000 {
        state.update(&env.sample_rewards());
    }
    let theta_err = state
        .mean()
        .iter()
        .zip(inst.theta().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let sigma_err = max_abs_diff(&state.covariance(), inst.sigma());

    let ete_inst = Instance::synthetic_five_arm(10.0, None).unwrap();
    let mut env = EnvRun::new(&ete_inst, Domain::Full, SEED, 0).unwrap();
    let mut policy = EtePolicy::mc_ete(DesignSet::build(5).unwrap(), 10.0);
    while policy.state().completed_rounds() < 10_000 {
        let w = policy.choose().unwrap();
        let fb = env.step(&w, FeedbackKind::FullBandit).unwrap();
        policy.observe(&w, &fb).unwrap();
    }
    let ete_err = max_abs_diff(policy.state().sigma_hat(), ete_inst.sigma());
    let pass = theta_err <= 0.02 && sigma_err <= 0.05 && ete_err <= 0.05;
    report.record(
        "estimator consistency",
        pass,
        false,
        format!(
            "full-info 1e5 steps: |θ̂-θ| {theta_err:.4}, |Σ̂-Σ| {sigma_err:.4}; MC-ETE 1e4 rounds ({} pulls): |Σ̂-Σ| {ete_err:.4}",
            policy.state().t()
        ),
        started,
    );
}

fn experiment(inst: &Instance, feedback: FeedbackKind, algorithms: Vec<Algorithm>, horizon: usize) -> Vec<harness::AlgorithmResult> {
    let cfg = ExperimentConfig {
        instance_path: "unused".into(),
        feedback,
        algorithms,
        horizon,
        runs: RUNS,
        master_seed: SEED,
        output_dir: "unused".into(),
        params: AlgorithmParams::default(),
    };
    harness::run_simulations(&cfg, inst, 0).unwrap()
}

fn mean_slope(result: &harness::AlgorithmResult, lo: usize, hi: usize) -> f64 {
    let slices: Vec<&[f64]> = result.traces.iter().map(|t| t.cumulative.as_slice()).collect();
    let mean = harness::mean_trace(&slices).unwrap();
    fit_regret_slope(&mean, lo, hi).unwrap().slope
}

fn rate_check(report: &mut Report) {
    let started = Instant::now();
    let horizon = 100_000;
    let fi = experiment(
        &Instance::synthetic_five_arm(0.1, None).unwrap(),
        FeedbackKind::FullInfo,
        vec![Algorithm::McEmpirical],
        horizon,
    );
    let fb = experiment(
        &Instance::synthetic_five_arm(10.0, None).unwrap(),
        FeedbackKind::FullBandit,
        vec![Algorithm::McEte],
        horizon,
    );
    let s_fi = mean_slope(&fi[0], 10_000, horizon);
    let s_fb = mean_slope(&fb[0], 10_000, horizon);
    let pass = (0.35..=0.65).contains(&s_fi) && (0.55..=0.80).contains(&s_fb);
    report.record(
        "rate check",
        pass,
        false,
        format!(
            "slope over [1e4, 1e5]: MC-Empirical {s_fi:.3} (want 0.35-0.65, regret {:.1}), MC-ETE {s_fb:.3} (want 0.55-0.80, regret {:.0})",
            fi[0].summary.last().unwrap().mean,
            fb[0].summary.last().unwrap().mean,
        ),
        started,
    );
}

fn final_mean(r: &harness::AlgorithmResult) -> f64 {
    r.summary.last().unwrap().mean
}

fn describe(results: &[(Algorithm, f64)]) -> String {
    results
        .iter()
        .map(|(a, m)| format!("{a} {m:.2}"))
        .collect::<Vec<_>>()
        .join(" < ")
}

fn ordered(results: &[(Algorithm, f64)]) -> bool {
    results.windows(2).all(|w| w[0].1 < w[1].1)
}

struct UcbRun {
    final_regret: f64,
    covered: usize,
    checks: usize,
}

fn mc_ucb_runs(inst: &Instance, horizon: usize, c: f64) -> Vec<UcbRun> {
    let marks = [100, 1_000, 10_000];
    (0..RUNS)
        .into_par_iter()
        .map(|run| {
            let mut policy = McUcb::new(5, UcbVariant::McUcb, UcbConfig::new(inst.rho(), c)).unwrap();
            let mut env = EnvRun::new(inst, Domain::Restricted(c), SEED, run as u64).unwrap();
            let (mut covered, mut checks) = (0, 0);
            let trace = harness::simulate(&mut policy, &mut env, horizon, |t, _, p: &McUcb| {
                if !marks.contains(&t) {
                    return;
                }
                let st = p.state();
                let ok = (0..5).all(|i| {
                    (0..5).all(|j| {
                        let g = covariance_radius(t, st.count(i, j), st.count(i, i), st.count(j, j), RadiusConstants::Main)
                            .unwrap();
                        (st.cov(i, j) - inst.sigma()[(i, j)]).abs() <= g
                    })
                });
                checks += 1;
                covered += ok as usize;
            })
            .unwrap();
            UcbRun {
                final_regret: trace.last(),
                covered,
                checks,
            }
        })
        .collect()
}

fn regret_ordering_and_coverage(report: &mut Report) {
    let horizon = 10_000;

    let started = Instant::now();
    let fi = experiment(
        &Instance::synthetic_five_arm(0.1, None).unwrap(),
        FeedbackKind::FullInfo,
        vec![Algorithm::McEmpirical, Algorithm::Ogd, Algorithm::LinearFi],
        horizon,
    );
    let a: Vec<(Algorithm, f64)> = fi.iter().map(|r| (r.algorithm, final_mean(r))).collect();
    let separation = a[2].1 / a[0].1;
    let pass_a = ordered(&a) && separation >= 5.0;

    let fb = experiment(
        &Instance::synthetic_five_arm(10.0, None).unwrap(),
        FeedbackKind::FullBandit,
        vec![Algorithm::McEte, Algorithm::OgdEte, Algorithm::LinearFb],
        horizon,
    );
    let c_panel: Vec<(Algorithm, f64)> = fb.iter().map(|r| (r.algorithm, final_mean(r))).collect();
    let pass_c = ordered(&c_panel);

    let c = 0.2;
    let sb_inst = Instance::synthetic_five_arm(0.1, Some(c)).unwrap();
    let ucb = mc_ucb_runs(&sb_inst, horizon, c);
    let others = experiment(
        &sb_inst,
        FeedbackKind::SemiBandit,
        vec![Algorithm::McUcbGamma, Algorithm::OlsUcbC],
        horizon,
    );
    let mut b = vec![(
        Algorithm::McUcb,
        ucb.iter().map(|r| r.final_regret).sum::<f64>() / RUNS as f64,
    )];
    b.extend(others.iter().map(|r| (r.algorithm, final_mean(r))));
    let pass_b = ordered(&b);

    report.record(
        "regret ordering",
        pass_a && pass_b && pass_c,
        false,
        format!(
            "T=1e4, {RUNS} runs, final mean regret. (a) {} [{}; LinearFI/MC-Empirical {separation:.1}x] (b) {} [{}] (c) {} [{}]",
            describe(&a),
            if pass_a { "ok" } else { "violated" },
            describe(&b),
            if pass_b { "ok" } else { "violated" },
            describe(&c_panel),
            if pass_c { "ok" } else { "violated" },
        ),
        started,
    );

    let started = Instant::now();
    let covered: usize = ucb.iter().map(|r| r.covered).sum();
    let checks: usize = ucb.iter().map(|r| r.checks).sum();
    let rate = covered as f64 / checks as f64;
    report.record(
        "confidence coverage",
        rate >= 0.95,
        false,
        format!("{covered}/{checks} (run, t) checks with every |Σ̂_ij-Σ_ij| within g_ij(t) ({:.1}%)", 100.0 * rate),
        started,
    );
}

fn collect_csvs(dir: &Path, out: &mut Vec<(String, Vec<u8>)>, root: &Path) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_csvs(&path, out, root);
        } else if path.extension().is_some_and(|e| e == "csv") {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.push((rel, fs::read(&path).unwrap()));
        }
    }
}

fn determinism(report: &mut Report) {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let inst_path = tmp.path().join("instance.json");
    Instance::synthetic_five_arm(0.1, Some(0.2)).unwrap().save(&inst_path).unwrap();
    let setups = [
        (FeedbackKind::FullInfo, vec![Algorithm::McEmpirical, Algorithm::Ogd, Algorithm::LinearFi], 2_000),
        (FeedbackKind::SemiBandit, vec![Algorithm::McUcb, Algorithm::McUcbGamma, Algorithm::OlsUcbC], 300),
        (FeedbackKind::FullBandit, vec![Algorithm::McEte, Algorithm::OgdEte, Algorithm::LinearFb], 2_000),
    ];
    let mut files = 0;
    let mut identical = true;
    for (k, (feedback, algorithms, horizon)) in setups.into_iter().enumerate() {
        let mut outputs = Vec::new();
        for (rep, workers) in [(0, 1), (1, 0)] {
            let cfg = ExperimentConfig {
                instance_path: inst_path.clone(),
                feedback,
                algorithms: algorithms.clone(),
                horizon,
                runs: 3,
                master_seed: SEED,
                output_dir: tmp.path().join(format!("{k}-{rep}")),
                params: AlgorithmParams::default(),
            };
            harness::run_experiment(&cfg, RunOptions { workers, trace_every: 1 }).unwrap();
            let mut csvs = Vec::new();
            collect_csvs(&cfg.output_dir, &mut csvs, &cfg.output_dir);
            csvs.sort();
            outputs.push(csvs);
        }
        files += outputs[0].len();
        identical &= !outputs[0].is_empty() && outputs[0] == outputs[1];
    }
    report.record(
        "determinism",
        identical,
        true,
        format!("{files} trace and summary CSVs compared byte for byte across two runs of each feedback model"),
        started,
    );
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    solver_oracle(&mut report);
    kkt_certificate(&mut report);
    ete_reconstruction(&mut report);
    determinism(&mut report);
    estimator_consistency(&mut report);
    rate_check(&mut report);
    regret_ordering_and_coverage(&mut report);

    let passed = report.lines.iter().filter(|l| l.0).count();
    println!("acceptance: {passed}/{} criteria passed", report.lines.len());
    let gating_failures: Vec<&String> = report.lines.iter().filter(|l| l.1 && !l.0).map(|l| &l.2).collect();
    if !gating_failures.is_empty() {
        eprintln!("exact criteria failed:");
        for l in gating_failures {
            eprintln!("  {l}");
        }
        std::process::exit(1);
    }
}
