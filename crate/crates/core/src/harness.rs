//! Multi-run experiment driver: configuration, seeded parallel simulation,
//! CSV traces and summaries, and the run manifest.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! traces/<algo>/<run>.csv   t,cum_regret
//! summary/<algo>.csv        t,mean,ci_low,ci_high
//! manifest.json
//! ```
//!
//! Every byte except the manifest's `wall_clock_seconds` is a function of the
//! configuration alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{EnvRun, RegretTrace};
use crate::error::{Error, Result};
use crate::full_bandit::{DesignSet, EtePolicy};
use crate::full_info::{LinearFi, McEmpirical, Ogd};
use crate::model::{Domain, FeedbackKind, Instance, WeightVector};
use crate::policy::{Algorithm, Policy};
use crate::semi_bandit::{McUcb, RadiusConstants, UcbConfig, UcbVariant};

/// Slack allowed when checking that a cumulative trace never decreases.
pub const MONOTONE_TOL: f64 = 1e-9;
const Z_95: f64 = 1.96;

fn default_runs() -> usize {
    50
}

fn default_eta0() -> f64 {
    0.1
}

fn default_lambda() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    1.0
}

/// Tuning knobs of the learners; each algorithm reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmParams {
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub radius_constants: RadiusConstants,
    /// Minimum positive weight for semi-bandit runs. Falls back to the
    /// instance's `c`.
    #[serde(default)]
    pub c: Option<f64>,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            eta0: default_eta0(),
            lambda: default_lambda(),
            gamma: default_gamma(),
            radius_constants: RadiusConstants::default(),
            c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths resolve against the config file's directory.
    pub instance_path: PathBuf,
    pub feedback: FeedbackKind,
    pub algorithms: Vec<Algorithm>,
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub params: AlgorithmParams,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.instance_path.is_relative() {
            config.instance_path = base.join(&config.instance_path);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    /// Checks everything that does not need the instance file.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms listed".into()));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if a.feedback() != self.feedback {
                return Err(Error::Config(format!(
                    "{a} needs {:?} feedback but the experiment uses {:?}",
                    a.feedback(),
                    self.feedback
                )));
            }
            if self.algorithms[..k].contains(a) {
                return Err(Error::Config(format!("{a} listed twice")));
            }
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        let p = &self.params;
        if !(p.eta0 >= 0.0 && p.eta0.is_finite()) {
            return Err(Error::Config(format!("eta0 must be >= 0, got {}", p.eta0)));
        }
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", p.lambda)));
        }
        if !(p.gamma >= 0.0 && p.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", p.gamma)));
        }
        if let Some(c) = p.c {
            if !(c > 0.0 && c <= 0.5) {
                return Err(Error::Config(format!("c must lie in (0, 1/2], got {c}")));
            }
        }
        Ok(())
    }

    /// Checks that depend on the instance and returns the decision domain.
    pub fn domain_for(&self, instance: &Instance) -> Result<Domain> {
        self.validate()?;
        let d = instance.d();
        match self.feedback {
            FeedbackKind::SemiBandit => {
                let c = self.params.c.or(instance.min_weight_c()).ok_or_else(|| {
                    Error::Config("semi-bandit runs need c in the params or the instance".into())
                })?;
                if !(c > 0.0 && c <= 0.5) {
                    return Err(Error::Config(format!("c must lie in (0, 1/2], got {c}")));
                }
                if self.horizon < d * d {
                    return Err(Error::Config(format!(
                        "horizon {} is shorter than the {} initialization pulls",
                        self.horizon,
                        d * d
                    )));
                }
                Ok(Domain::Restricted(c))
            }
            FeedbackKind::FullBandit => {
                if d > crate::full_bandit::MAX_DESIGN_DIM {
                    return Err(Error::Config(format!("full-bandit runs need d <= 30, got {d}")));
                }
                Ok(Domain::Full)
            }
            FeedbackKind::FullInfo => Ok(Domain::Full),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Builds a fresh learner for one run.
pub fn build_policy(
    algorithm: Algorithm,
    instance: &Instance,
    domain: Domain,
    params: &AlgorithmParams,
) -> Result<Box<dyn Policy>> {
    let d = instance.d();
    let rho = instance.rho();
    let ucb = |variant: UcbVariant| -> Result<Box<dyn Policy>> {
        let c = domain
            .min_weight()
            .ok_or_else(|| Error::Config(format!("{algorithm} needs a restricted domain")))?;
        let mut config = UcbConfig::new(rho, c);
        config.lambda = params.lambda;
        config.constants = params.radius_constants;
        Ok(Box::new(McUcb::new(d, variant, config)?))
    };
    Ok(match algorithm {
        Algorithm::McEmpirical => Box::new(McEmpirical::new(d, rho)),
        Algorithm::Ogd => Box::new(Ogd::new(d, rho, params.eta0)),
        Algorithm::LinearFi => Box::new(LinearFi::new(d)),
        Algorithm::McUcb => ucb(UcbVariant::McUcb)?,
        Algorithm::McUcbGamma => ucb(UcbVariant::Gamma(params.gamma))?,
        Algorithm::OlsUcbC => ucb(UcbVariant::OlsUcbC)?,
        Algorithm::McEte => Box::new(EtePolicy::mc_ete(DesignSet::build(d)?, rho)),
        Algorithm::OgdEte => Box::new(EtePolicy::ogd_ete(DesignSet::build(d)?, rho, params.eta0)),
        Algorithm::LinearFb => Box::new(EtePolicy::linear_fb(DesignSet::build(d)?, rho)),
    })
}

/// Plays `horizon` steps; `on_step(t, action, policy)` runs after each
/// observation.
pub fn simulate<P, F>(policy: &mut P, env: &mut EnvRun, horizon: usize, mut on_step: F) -> Result<RegretTrace>
where
    P: Policy + ?Sized,
    F: FnMut(usize, &WeightVector, &P),
{
    let kind = policy.algorithm().feedback();
    let mut trace = RegretTrace::with_capacity(env.seed(), horizon);
    for t in 1..=horizon {
        let w = policy.choose()?;
        if !w.in_domain(env.domain()) {
            return Err(Error::InvalidWeights(format!(
                "{} played {:?} outside {:?} at t={t}",
                policy.algorithm(),
                w.as_slice(),
                env.domain()
            )));
        }
        trace.record_step(env, &w)?;
        let feedback = env.step(&w, kind)?;
        policy.observe(&w, &feedback)?;
        on_step(t, &w, policy);
    }
    Ok(trace)
}

/// One row of a summary CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Powers of two up to `horizon`, then `horizon` itself.
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 1usize;
    while t < horizon {
        out.push(t);
        t = match t.checked_mul(2) {
            Some(next) => next,
            None => break,
        };
    }
    if horizon > 0 {
        out.push(horizon);
    }
    out
}

/// Mean and normal-approximation 95% interval across traces at each
/// checkpoint (1-based `t`). A single trace gives a zero-width interval.
pub fn summarize(traces: &[&[f64]], checkpoints: &[usize]) -> Result<Vec<SummaryRow>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces to summarize".into()))?;
    let len = first.len();
    if let Some(bad) = traces.iter().find(|tr| tr.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "trace lengths differ: {len} vs {}",
            bad.len()
        )));
    }
    let n = traces.len() as f64;
    checkpoints
        .iter()
        .map(|&t| {
            if t == 0 || t > len {
                return Err(Error::InvalidArgument(format!("checkpoint {t} outside 1..={len}")));
            }
            let xs = traces.iter().map(|tr| tr[t - 1]);
            let mean = xs.clone().sum::<f64>() / n;
            let half = if traces.len() > 1 {
                let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Z_95 * var.sqrt() / n.sqrt()
            } else {
                0.0
            };
            Ok(SummaryRow {
                t,
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
            })
        })
        .collect()
}

/// Mean trace across runs at every step.
pub fn mean_trace(traces: &[&[f64]]) -> Result<Vec<f64>> {
    let len = traces.first().map_or(0, |t| t.len());
    let rows = summarize(traces, &(1..=len).collect::<Vec<_>>())?;
    Ok(rows.into_iter().map(|r| r.mean).collect())
}

/// Fails on the first step where the trace drops by more than [`MONOTONE_TOL`].
pub fn check_monotone(algorithm: Algorithm, run: usize, trace: &[f64]) -> Result<()> {
    for (k, pair) in trace.windows(2).enumerate() {
        if pair[1] < pair[0] - MONOTONE_TOL {
            return Err(Error::NonMonotoneTrace {
                algorithm: algorithm.to_string(),
                run,
                t: k + 2,
                prev: pair[0],
                next: pair[1],
            });
        }
    }
    Ok(())
}

/// Trace CSV text; keeps rows with `t % every == 0` plus the last one.
pub fn trace_csv(trace: &[f64], every: usize) -> String {
    let every = every.max(1);
    let mut out = String::from("t,cum_regret\n");
    for (k, v) in trace.iter().enumerate() {
        let t = k + 1;
        if t % every == 0 || t == trace.len() {
            let _ = writeln!(out, "{t},{v}");
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("t,mean,ci_low,ci_high\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.mean, r.ci_low, r.ci_high);
    }
    out
}

fn parse_csv(path: &Path, header: &str, width: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |reason: String| Error::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(csv_err(format!("expected header `{header}`, got `{h}`"))),
        None => return Err(csv_err("empty file".into())),
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
            if fields.len() != width {
                return Err(csv_err(format!("line {}: expected {width} fields", k + 2)));
            }
            Ok(fields)
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(path: &Path, field: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Csv {
        path: path.to_path_buf(),
        reason: format!("cannot parse `{field}`"),
    })
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    parse_csv(path, "t,mean,ci_low,ci_high", 4)?
        .iter()
        .map(|f| {
            Ok(SummaryRow {
                t: parse_field(path, &f[0])?,
                mean: parse_field(path, &f[1])?,
                ci_low: parse_field(path, &f[2])?,
                ci_high: parse_field(path, &f[3])?,
            })
        })
        .collect()
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    parse_csv(path, "t,cum_regret", 2)?
        .iter()
        .map(|f| Ok((parse_field(path, &f[0])?, parse_field(path, &f[1])?)))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Keep every `trace_every`-th trace row (and the last).
    pub trace_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            trace_every: 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub f_opt: f64,
    pub optimal_action: Vec<f64>,
    pub cholesky_jitter: f64,
    /// Set when `runs == 1`: intervals are reported with zero width.
    pub single_run_intervals: bool,
    pub final_mean_regret: Vec<(Algorithm, f64)>,
    pub wall_clock_seconds: f64,
}

/// Traces of one algorithm, indexed by run.
#[derive(Debug)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub traces: Vec<RegretTrace>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub results: Vec<AlgorithmResult>,
    pub manifest: Manifest,
}

/// Runs every `(algorithm, run)` pair. Run `r` of every algorithm sees the
/// same reward sequence, drawn from the stream `(master_seed, r)`.
pub fn run_simulations(
    config: &ExperimentConfig,
    instance: &Instance,
    workers: usize,
) -> Result<Vec<AlgorithmResult>> {
    let domain = config.domain_for(instance)?;
    // Fail early on bad parameters and on an unusable instance.
    for &a in &config.algorithms {
        build_policy(a, instance, domain, &config.params)?;
    }
    EnvRun::new(instance, domain, config.master_seed, 0)?;

    let jobs: Vec<(Algorithm, usize)> = config
        .algorithms
        .iter()
        .flat_map(|&a| (0..config.runs).map(move |r| (a, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let traces: Vec<Result<RegretTrace>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(algorithm, run)| {
                let mut policy = build_policy(algorithm, instance, domain, &config.params)?;
                let mut env = EnvRun::new(instance, domain, config.master_seed, run as u64)?;
                let trace = simulate(policy.as_mut(), &mut env, config.horizon, |_, _, _| {})?;
                log::debug!("{algorithm} run {run}: final regret {}", trace.last());
                Ok(trace)
            })
            .collect()
    });

    let mut traces = traces.into_iter();
    let marks = checkpoints(config.horizon);
    config
        .algorithms
        .iter()
        .map(|&algorithm| {
            let runs: Vec<RegretTrace> = traces.by_ref().take(config.runs).collect::<Result<_>>()?;
            for (r, tr) in runs.iter().enumerate() {
                check_monotone(algorithm, r, &tr.cumulative)?;
            }
            let slices: Vec<&[f64]> = runs.iter().map(|t| t.cumulative.as_slice()).collect();
            let summary = summarize(&slices, &marks)?;
            Ok(AlgorithmResult {
                algorithm,
                traces: runs,
                summary,
            })
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs the experiment and writes traces, summaries and the manifest.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentReport> {
    let started = Instant::now();
    config.validate()?;
    let instance = Instance::load(&config.instance_path)?;
    let domain = config.domain_for(&instance)?;
    let env = EnvRun::new(&instance, domain, config.master_seed, 0)?;
    let results = run_simulations(config, &instance, options.workers)?;

    let out = &config.output_dir;
    for res in &results {
        let name = res.algorithm.name();
        for (r, tr) in res.traces.iter().enumerate() {
            let path = out.join("traces").join(name).join(format!("{r}.csv"));
            write_file(&path, &trace_csv(&tr.cumulative, options.trace_every))?;
        }
        write_file(&out.join("summary").join(format!("{name}.csv")), &summary_csv(&res.summary))?;
    }
    if config.runs == 1 {
        log::warn!("single run: confidence intervals have zero width");
    }
    let manifest = Manifest {
        config_sha256: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        f_opt: env.f_opt(),
        optimal_action: env.optimal_action().as_slice().to_vec(),
        cholesky_jitter: env.jitter(),
        single_run_intervals: config.runs == 1,
        final_mean_regret: results
            .iter()
            .map(|r| (r.algorithm, r.summary.last().map_or(0.0, |s| s.mean)))
            .collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_file(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentReport { results, manifest })
}
