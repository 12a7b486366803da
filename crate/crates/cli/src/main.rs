use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cmcb::full_bandit::DesignSet;
use cmcb::harness::{self, ExperimentConfig, RunOptions};
use cmcb::model::{mean_cov_value, Instance};
use cmcb::oracles;
use cmcb::semi_bandit::RadiusConstants;
use cmcb::solver;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "cmcb", version, about = "Continuous mean-covariance bandit simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Numerical self-checks.
    #[command(subcommand)]
    Verify(Verify),
    /// Write instance files.
    #[command(subcommand)]
    Instance(InstanceCmd),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Keep every K-th trace row.
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    radius_constants: Option<RadiusConstants>,
}

#[derive(Subcommand)]
enum Verify {
    /// Pseudo-inverse identity residuals of the full-bandit design.
    DesignSet {
        #[arg(long)]
        d: usize,
    },
    /// Exact solver against a lattice search on random instances.
    Solver {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Log-log slope of a summary CSV over [T/10, T].
    Slope {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        expect: f64,
        #[arg(long)]
        tol: f64,
    },
    /// Problem-dependent factors of the regret bounds.
    Bounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Also compute the full-bandit design factors.
        #[arg(long)]
        design: bool,
    },
}

#[derive(Subcommand)]
enum InstanceCmd {
    /// Randomized hard instance for semi-bandit learners.
    GenHardSb {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The five-arm synthetic instance.
    Synthetic {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args).map(|()| true),
        Command::Verify(v) => verify(v),
        Command::Instance(cmd) => instance(cmd).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(v) = args.eta0 {
        config.params.eta0 = v;
    }
    if let Some(v) = args.lambda {
        config.params.lambda = v;
    }
    if let Some(v) = args.gamma {
        config.params.gamma = v;
    }
    if let Some(v) = args.radius_constants {
        config.params.radius_constants = v;
    }
    let report = harness::run_experiment(
        &config,
        RunOptions {
            workers: args.workers,
            trace_every: args.trace_every,
        },
    )?;
    for (algo, regret) in &report.manifest.final_mean_regret {
        println!("{algo:<14} mean regret at T={}: {regret:.4}", config.horizon);
    }
    println!(
        "wrote {} ({:.1}s)",
        config.output_dir.display(),
        report.manifest.wall_clock_seconds
    );
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn verify(cmd: Verify) -> Result<bool> {
    match cmd {
        Verify::DesignSet { d } => {
            let design = DesignSet::build(d)?;
            let (rb, rc) = design.identity_residuals();
            let ok = rb <= 1e-9 && rc <= 1e-9;
            println!("{} d={d} d_tilde={} |B+B-I|={rb:.3e} |C+C-I|={rc:.3e}", verdict(ok), design.d_tilde());
            Ok(ok)
        }
        Verify::Solver {
            d,
            trials,
            step,
            tol,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = 0.0f64;
            for k in 0..trials {
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let sigma = random_pd(&mut rng, d);
                let rho = [0.1, 1.0, 10.0][k % 3];
                let (_, value) = solver::solve_mean_cov_qp(&theta, &sigma, rho)?;
                let (_, grid) =
                    oracles::grid_maximize(|w| mean_cov_value(&theta, &sigma, rho, w), d, step, None)?;
                if grid > value + 1e-9 {
                    println!("FAIL trial {k}: grid {grid} beats solver {value}");
                    return Ok(false);
                }
                worst = worst.max(value - grid);
            }
            let ok = worst <= tol;
            println!("{} d={d} trials={trials} step={step} max gap={worst:.3e} (tol {tol:e})", verdict(ok));
            Ok(ok)
        }
        Verify::Slope { summary, expect, tol } => {
            let rows = harness::read_summary_csv(&summary)?;
            let horizon = rows.last().map(|r| r.t).context("empty summary")?;
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.t * 10 >= horizon)
                .map(|r| (r.t as f64, r.mean))
                .collect();
            let est = oracles::fit_loglog(&points)?;
            let ok = (est.slope - expect).abs() <= tol;
            println!(
                "{} slope={:.4} expected {expect}±{tol} over [{}, {}] from {} points (R²={:.4})",
                verdict(ok),
                est.slope,
                est.t_range.0,
                est.t_range.1,
                points.len(),
                est.r_squared
            );
            Ok(ok)
        }
        Verify::Bounds {
            instance,
            lambda,
            design,
        } => {
            let inst = Instance::load(&instance)?;
            let design = if design { Some(DesignSet::build(inst.d())?) } else { None };
            let factors = oracles::bound_factors(&inst, lambda, design.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&factors)?);
            Ok(true)
        }
    }
}

fn instance(cmd: InstanceCmd) -> Result<()> {
    let (inst, out) = match cmd {
        InstanceCmd::GenHardSb {
            d,
            c,
            eps,
            seed,
            rho,
            out,
        } => {
            let hard = oracles::generate_hard_sb_instance(d, c, eps, seed, rho)?;
            match hard.boosted_arm {
                Some(j) => eprintln!("boosted arm: {j}"),
                None => eprintln!("uniform instance"),
            }
            (hard.instance, out)
        }
        InstanceCmd::Synthetic { rho, c, out } => (Instance::synthetic_five_arm(rho, c)?, out),
    };
    match out {
        Some(path) => inst.save(&path)?,
        None => println!("{}", inst.to_json_string()),
    }
    Ok(())
}
