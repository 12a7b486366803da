//! Seeded Gaussian reward environment and expected-regret accounting.
//!
//! Rewards are `θ_t = θ* + L z_t` with `L Lᵀ = Σ*` and `z_t` standard normal.
//! The noise stream of a run is ChaCha8 keyed by the master seed, on the
//! stream selected by the run index, so every `(master_seed, run_index)` pair
//! yields a fixed, platform-independent sequence.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg;
use crate::model::{self, check_dim, Domain, Feedback, FeedbackKind, Instance, WeightVector};
use crate::solver;

/// One simulated run of the environment.
#[derive(Debug, Clone)]
pub struct EnvRun {
    instance: Instance,
    domain: Domain,
    master_seed: u64,
    run_index: u64,
    chol: DMatrix<f64>,
    jitter: f64,
    f_opt: f64,
    w_opt: WeightVector,
    t: usize,
    rng: ChaCha8Rng,
}

impl EnvRun {
    /// Prepares a run: factors `Σ*` and solves for the optimum over `domain`.
    pub fn new(instance: &Instance, domain: Domain, master_seed: u64, run_index: u64) -> Result<Self> {
        let (chol, jitter) = linalg::cholesky_with_jitter(instance.sigma())?;
        let theta = instance.theta().as_slice();
        let (w_opt, f_opt) = match domain {
            Domain::Full => solver::solve_mean_cov_qp(theta, instance.sigma(), instance.rho())?,
            Domain::Restricted(c) => {
                solver::solve_restricted_qp(theta, instance.sigma(), instance.rho(), c)?
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(run_index);
        Ok(Self {
            instance: instance.clone(),
            domain,
            master_seed,
            run_index,
            chol,
            jitter,
            f_opt,
            w_opt,
            t: 0,
            rng,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn seed(&self) -> (u64, u64) {
        (self.master_seed, self.run_index)
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Diagonal jitter that was needed to factor `Σ*`.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    pub fn optimal_action(&self) -> &WeightVector {
        &self.w_opt
    }

    /// Number of reward vectors drawn so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Draws the next reward vector `θ_t`.
    pub fn sample_rewards(&mut self) -> Vec<f64> {
        let d = self.instance.d();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut self.rng));
        let noise = &self.chol * z;
        self.t += 1;
        self.instance
            .theta()
            .iter()
            .zip(noise.iter())
            .map(|(m, e)| m + e)
            .collect()
    }

    /// Draws `θ_t` and returns what the learner gets to see for action `w`.
    pub fn step(&mut self, w: &WeightVector, kind: FeedbackKind) -> Result<Feedback> {
        check_dim(self.instance.d(), w.dim())?;
        let theta_t = self.sample_rewards();
        Ok(emit_feedback(w, &theta_t, kind))
    }
}

/// Masks `theta_t` according to the feedback structure.
pub fn emit_feedback(w: &WeightVector, theta_t: &[f64], kind: FeedbackKind) -> Feedback {
    match kind {
        FeedbackKind::FullInfo => Feedback::Full(theta_t.to_vec()),
        FeedbackKind::SemiBandit => Feedback::Semi(
            w.as_slice()
                .iter()
                .zip(theta_t)
                .enumerate()
                .filter(|(_, (&wi, _))| wi > 0.0)
                .map(|(i, (_, &r))| (i, r))
                .collect(),
        ),
        FeedbackKind::FullBandit => Feedback::Bandit(linalg::dot(w.as_slice(), theta_t)),
    }
}

/// Cumulative expected regret of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: (u64, u64),
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn new(seed: (u64, u64)) -> Self {
        Self {
            seed,
            cumulative: Vec::new(),
        }
    }

    pub fn with_capacity(seed: (u64, u64), horizon: usize) -> Self {
        Self {
            seed,
            cumulative: Vec::with_capacity(horizon),
        }
    }

    /// Appends `f(w*) − f(w)` evaluated on the true parameters.
    pub fn record_step(&mut self, run: &EnvRun, w: &WeightVector) -> Result<f64> {
        let gap = model::suboptimality_gap(&run.instance, run.f_opt, w)?;
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.cumulative.push(prev + gap);
        Ok(gap)
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}
