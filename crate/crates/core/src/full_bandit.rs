//! Full-bandit learners built on explore-then-exploit rounds over a design set.
//!
//! The design set holds the `d` basis vectors followed by the `d(d−1)/2`
//! half-half pairs. Mean rewards of the design actions are `y = Bθ*` and their
//! variances are `z = Cσ*`, where `σ*` stacks `(Σ*_11, …, Σ*_dd, Σ*_12, …,
//! Σ*_1d, Σ*_23, …, Σ*_{d−1,d})`. Averaging over exploration rounds and
//! applying `B⁺`, `C⁺` recovers estimates of `θ*` and `Σ*`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::full_info::{argmax_lowest, mean_cov_gradient};
use crate::linalg;
use crate::model::{Feedback, WeightVector};
use crate::policy::{feedback_mismatch, Algorithm, Policy};
use crate::solver::{self, MeanCovSolver};

pub const MAX_DESIGN_DIM: usize = 30;
const IDENTITY_TOL: f64 = 1e-9;

/// Design actions and the linear maps from `(θ*, σ*)` to their reward moments.
#[derive(Debug, Clone)]
pub struct DesignSet {
    d: usize,
    actions: Vec<WeightVector>,
    pairs: Vec<(usize, usize)>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    b_pinv: DMatrix<f64>,
    c_pinv: DMatrix<f64>,
}

impl DesignSet {
    pub fn build(d: usize) -> Result<Self> {
        if !(2..=MAX_DESIGN_DIM).contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "design set needs 2 <= d <= {MAX_DESIGN_DIM}, got {d}"
            )));
        }
        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .collect();
        let mut actions: Vec<WeightVector> = (0..d).map(|i| WeightVector::vertex(d, i)).collect();
        actions.extend(pairs.iter().map(|&(i, j)| WeightVector::pair(d, i, j)));
        let dt = actions.len();

        let b = DMatrix::from_fn(dt, d, |k, i| actions[k][i]);
        let c = DMatrix::from_fn(dt, dt, |k, col| {
            let v = &actions[k];
            if col < d {
                v[col] * v[col]
            } else {
                let (i, j) = pairs[col - d];
                2.0 * v[i] * v[j]
            }
        });
        let b_pinv = linalg::left_pseudo_inverse(&b)?;
        let c_pinv = c
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("C is singular".into()))?;

        let set = Self {
            d,
            actions,
            pairs,
            b,
            c,
            b_pinv,
            c_pinv,
        };
        let (rb, rc) = set.identity_residuals();
        if rb > IDENTITY_TOL || rc > IDENTITY_TOL {
            return Err(Error::RankDeficient(format!(
                "pseudo-inverse residuals B: {rb:e}, C: {rc:e}"
            )));
        }
        Ok(set)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `d(d+1)/2`
    pub fn d_tilde(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[WeightVector] {
        &self.actions
    }

    /// Off-diagonal index pairs in stacking order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn b_pinv(&self) -> &DMatrix<f64> {
        &self.b_pinv
    }

    pub fn c_pinv(&self) -> &DMatrix<f64> {
        &self.c_pinv
    }

    /// `max|B⁺B − I|` and `max|C⁺C − I|`.
    pub fn identity_residuals(&self) -> (f64, f64) {
        let rb = &self.b_pinv * &self.b - DMatrix::<f64>::identity(self.d, self.d);
        let dt = self.d_tilde();
        let rc = &self.c_pinv * &self.c - DMatrix::<f64>::identity(dt, dt);
        (linalg::max_abs(&rb), linalg::max_abs(&rc))
    }

    /// Max absolute row sum of `C⁺`.
    pub fn c_pinv_norm(&self) -> f64 {
        self.c_pinv
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Stacks a symmetric matrix into `σ` order.
    pub fn stack(&self, sigma: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.d_tilde(),
            (0..self.d)
                .map(|i| sigma[(i, i)])
                .chain(self.pairs.iter().map(|&(i, j)| sigma[(i, j)])),
        )
    }

    /// Inverse of [`DesignSet::stack`], mirroring off-diagonal entries.
    pub fn reshape(&self, stacked: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for i in 0..self.d {
            m[(i, i)] = stacked[i];
        }
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            m[(i, j)] = stacked[self.d + k];
            m[(j, i)] = stacked[self.d + k];
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Inside an exploration round; the next pull is design action `k`.
    Exploring(usize),
    Exploiting,
}

/// Exploration bookkeeping and the `(θ̂, Σ̂)` estimates.
#[derive(Debug, Clone)]
pub struct EteState {
    design: DesignSet,
    t: usize,
    n_rounds: usize,
    in_round: Option<usize>,
    round: Vec<f64>,
    // per design action: running mean and sum of squared deviations
    y_mean: Vec<f64>,
    y_m2: Vec<f64>,
    completed: usize,
    theta_hat: Vec<f64>,
    sigma_hat: DMatrix<f64>,
    pending: Option<Phase>,
    exploit_pulls: usize,
    version: u64,
}

impl EteState {
    pub fn new(design: DesignSet) -> Self {
        let d = design.d();
        let dt = design.d_tilde();
        Self {
            design,
            t: 0,
            n_rounds: 0,
            in_round: None,
            round: vec![0.0; dt],
            y_mean: vec![0.0; dt],
            y_m2: vec![0.0; dt],
            completed: 0,
            theta_hat: vec![0.0; d],
            sigma_hat: DMatrix::zeros(d, d),
            pending: None,
            exploit_pulls: 0,
            version: 0,
        }
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Exploration rounds started so far (`N_π`).
    pub fn n_rounds(&self) -> usize {
        self.n_rounds
    }

    pub fn completed_rounds(&self) -> usize {
        self.completed
    }

    pub fn exploit_pulls(&self) -> usize {
        self.exploit_pulls
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn y_hat(&self) -> &[f64] {
        &self.y_mean
    }

    /// Biased per-action variances `ẑ`.
    pub fn z_hat(&self) -> Vec<f64> {
        let n = self.completed.max(1) as f64;
        self.y_m2.iter().map(|m| m / n).collect()
    }

    /// Decides the phase of the next pull and returns the design action to
    /// play when exploring. Exploitation happens iff `N_π(t−1) > t^{2/3}/d`.
    fn plan(&mut self) -> Phase {
        let phase = match self.in_round {
            Some(k) => Phase::Exploring(k),
            None => {
                let t_next = (self.t + 1) as f64;
                let threshold = t_next.powf(2.0 / 3.0) / self.design.d() as f64;
                if (self.n_rounds as f64) > threshold {
                    Phase::Exploiting
                } else {
                    self.n_rounds += 1;
                    self.in_round = Some(0);
                    Phase::Exploring(0)
                }
            }
        };
        if phase == Phase::Exploiting {
            assert!(self.completed > 0, "exploitation before any completed round");
        }
        self.pending = Some(phase);
        phase
    }

    fn record(&mut self, y: f64) {
        self.t += 1;
        match self.pending.take() {
            Some(Phase::Exploring(k)) => {
                self.round[k] = y;
                if k + 1 == self.design.d_tilde() {
                    self.finish_round();
                    self.in_round = None;
                } else {
                    self.in_round = Some(k + 1);
                }
            }
            Some(Phase::Exploiting) => self.exploit_pulls += 1,
            None => {}
        }
    }

    fn finish_round(&mut self) {
        self.completed += 1;
        let n = self.completed as f64;
        for k in 0..self.round.len() {
            let y = self.round[k];
            let delta = y - self.y_mean[k];
            self.y_mean[k] += delta / n;
            self.y_m2[k] += delta * (y - self.y_mean[k]);
        }
        let y_hat = DVector::from_column_slice(&self.y_mean);
        let theta = self.design.b_pinv() * y_hat;
        let z_hat = DVector::from_vec(self.z_hat());
        let sigma = self.design.c_pinv() * z_hat;
        self.theta_hat = theta.as_slice().to_vec();
        self.sigma_hat = self.design.reshape(&sigma);
        self.version += 1;
    }
}

#[derive(Debug, Clone)]
enum Exploit {
    Argmax {
        solver: MeanCovSolver,
        cached: Option<(u64, WeightVector)>,
    },
    Ogd {
        eta0: f64,
        w: WeightVector,
    },
    Linear,
}

/// Explore-then-exploit learner; the exploitation rule selects the variant.
#[derive(Debug, Clone)]
pub struct EtePolicy {
    algorithm: Algorithm,
    rho: f64,
    state: EteState,
    exploit: Exploit,
}

impl EtePolicy {
    /// Exploits with the maximizer of the estimated mean-covariance objective.
    pub fn mc_ete(design: DesignSet, rho: f64) -> Self {
        Self {
            algorithm: Algorithm::McEte,
            rho,
            state: EteState::new(design),
            exploit: Exploit::Argmax {
                solver: MeanCovSolver::new(),
                cached: None,
            },
        }
    }

    /// Exploits with projected gradient steps `η_t = η₀/√t` on the estimated
    /// objective, starting from the uniform vector.
    pub fn ogd_ete(design: DesignSet, rho: f64, eta0: f64) -> Self {
        let d = design.d();
        Self {
            algorithm: Algorithm::OgdEte,
            rho,
            state: EteState::new(design),
            exploit: Exploit::Ogd {
                eta0,
                w: WeightVector::uniform(d),
            },
        }
    }

    /// Exploits the arm with the highest estimated mean.
    pub fn linear_fb(design: DesignSet, rho: f64) -> Self {
        Self {
            algorithm: Algorithm::LinearFb,
            rho,
            state: EteState::new(design),
            exploit: Exploit::Linear,
        }
    }

    pub fn state(&self) -> &EteState {
        &self.state
    }
}

impl Policy for EtePolicy {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn choose(&mut self) -> Result<WeightVector> {
        match self.state.plan() {
            Phase::Exploring(k) => Ok(self.state.design.actions()[k].clone()),
            Phase::Exploiting => {
                let st = &self.state;
                match &mut self.exploit {
                    Exploit::Argmax { solver, cached } => {
                        if let Some((v, w)) = cached {
                            if *v == st.version {
                                return Ok(w.clone());
                            }
                        }
                        let (w, _) = solver.solve(&st.theta_hat, &st.sigma_hat, self.rho)?;
                        *cached = Some((st.version, w.clone()));
                        Ok(w)
                    }
                    Exploit::Ogd { eta0, w } => {
                        if *eta0 != 0.0 {
                            let eta = *eta0 / ((st.t + 1) as f64).sqrt();
                            let g = mean_cov_gradient(&st.theta_hat, &st.sigma_hat, self.rho, w.as_slice());
                            let stepped: Vec<f64> =
                                w.as_slice().iter().zip(&g).map(|(x, gi)| x + eta * gi).collect();
                            *w = solver::project_to_simplex(&stepped);
                        }
                        Ok(w.clone())
                    }
                    Exploit::Linear => {
                        Ok(WeightVector::vertex(st.design.d(), argmax_lowest(&st.theta_hat)))
                    }
                }
            }
        }
    }

    fn observe(&mut self, _action: &WeightVector, feedback: &Feedback) -> Result<()> {
        match feedback {
            Feedback::Bandit(y) => {
                self.state.record(*y);
                Ok(())
            }
            other => Err(feedback_mismatch(self.algorithm, other)),
        }
    }
}
