//! Full-information learners: the empirical mean-covariance maximizer and
//! the OGD and linear baselines.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{Feedback, WeightVector};
use crate::policy::{feedback_mismatch, Algorithm, Policy};
use crate::solver::{self, MeanCovSolver};

/// Running mean and biased (divide-by-`t`) covariance of observed reward vectors.
#[derive(Debug, Clone)]
pub struct EmpiricalState {
    t: usize,
    sum: Vec<f64>,
    mean: Vec<f64>,
    // Σ_s (θ_s − θ̂_t)(θ_s − θ̂_t)ᵀ, row-major
    comoment: Vec<f64>,
}

impl EmpiricalState {
    pub fn new(d: usize) -> Self {
        Self {
            t: 0,
            sum: vec![0.0; d],
            mean: vec![0.0; d],
            comoment: vec![0.0; d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.sum.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn update(&mut self, theta: &[f64]) {
        let d = self.d();
        debug_assert_eq!(theta.len(), d);
        self.t += 1;
        let t = self.t as f64;
        let old_mean = self.mean.clone();
        for i in 0..d {
            self.sum[i] += theta[i];
            self.mean[i] = self.sum[i] / t;
        }
        for i in 0..d {
            let a = theta[i] - old_mean[i];
            for j in i..d {
                let v = a * (theta[j] - self.mean[j]);
                self.comoment[i * d + j] += v;
            }
        }
        for i in 0..d {
            for j in 0..i {
                self.comoment[i * d + j] = self.comoment[j * d + i];
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.d();
        let t = self.t.max(1) as f64;
        DMatrix::from_fn(d, d, |i, j| self.comoment[i * d + j] / t)
    }
}

/// Plays the maximizer of the empirical mean-covariance objective.
#[derive(Debug, Clone)]
pub struct McEmpirical {
    rho: f64,
    state: EmpiricalState,
    solver: MeanCovSolver,
}

impl McEmpirical {
    pub fn new(d: usize, rho: f64) -> Self {
        Self {
            rho,
            state: EmpiricalState::new(d),
            solver: MeanCovSolver::new(),
        }
    }

    pub fn state(&self) -> &EmpiricalState {
        &self.state
    }
}

impl Policy for McEmpirical {
    fn algorithm(&self) -> Algorithm {
        Algorithm::McEmpirical
    }

    fn choose(&mut self) -> Result<WeightVector> {
        let d = self.state.d();
        if self.state.t() == 0 || d == 1 {
            return Ok(WeightVector::uniform(d));
        }
        let cov = self.state.covariance();
        let (w, _) = self.solver.solve(self.state.mean(), &cov, self.rho)?;
        Ok(w)
    }

    fn observe(&mut self, _action: &WeightVector, feedback: &Feedback) -> Result<()> {
        match feedback {
            Feedback::Full(theta) => {
                self.state.update(theta);
                Ok(())
            }
            other => Err(feedback_mismatch(self.algorithm(), other)),
        }
    }
}

/// Gradient `θ − 2ρΣw` of `wᵀθ − ρ·wᵀΣw`.
pub fn mean_cov_gradient(theta: &[f64], sigma: &DMatrix<f64>, rho: f64, w: &[f64]) -> Vec<f64> {
    let d = theta.len();
    (0..d)
        .map(|i| {
            let s: f64 = (0..d).map(|j| sigma[(i, j)] * w[j]).sum();
            theta[i] - 2.0 * rho * s
        })
        .collect()
}

/// Online projected gradient ascent on the instantaneous objective
/// `wᵀθ_t − ρ·wᵀΣ̂_t w`, with step `η_t = η₀/√t`.
#[derive(Debug, Clone)]
pub struct Ogd {
    rho: f64,
    eta0: f64,
    state: EmpiricalState,
    w: WeightVector,
}

impl Ogd {
    pub fn new(d: usize, rho: f64, eta0: f64) -> Self {
        Self {
            rho,
            eta0,
            state: EmpiricalState::new(d),
            w: WeightVector::uniform(d),
        }
    }

    pub fn state(&self) -> &EmpiricalState {
        &self.state
    }
}

impl Policy for Ogd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ogd
    }

    fn choose(&mut self) -> Result<WeightVector> {
        Ok(self.w.clone())
    }

    fn observe(&mut self, _action: &WeightVector, feedback: &Feedback) -> Result<()> {
        let Feedback::Full(theta) = feedback else {
            return Err(feedback_mismatch(self.algorithm(), feedback));
        };
        self.state.update(theta);
        if self.eta0 == 0.0 {
            return Ok(());
        }
        let eta = self.eta0 / (self.state.t() as f64).sqrt();
        let grad = mean_cov_gradient(theta, &self.state.covariance(), self.rho, self.w.as_slice());
        let stepped: Vec<f64> = self
            .w
            .as_slice()
            .iter()
            .zip(&grad)
            .map(|(w, g)| w + eta * g)
            .collect();
        self.w = solver::project_to_simplex(&stepped);
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Plays the arm with the highest empirical mean; ignores risk.
#[derive(Debug, Clone)]
pub struct LinearFi {
    t: usize,
    sum: Vec<f64>,
}

impl LinearFi {
    pub fn new(d: usize) -> Self {
        Self {
            t: 0,
            sum: vec![0.0; d],
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let t = self.t.max(1) as f64;
        self.sum.iter().map(|s| s / t).collect()
    }
}

impl Policy for LinearFi {
    fn algorithm(&self) -> Algorithm {
        Algorithm::LinearFi
    }

    fn choose(&mut self) -> Result<WeightVector> {
        let d = self.sum.len();
        if self.t == 0 {
            return Ok(WeightVector::uniform(d));
        }
        Ok(WeightVector::vertex(d, argmax_lowest(&self.mean())))
    }

    fn observe(&mut self, _action: &WeightVector, feedback: &Feedback) -> Result<()> {
        let Feedback::Full(theta) = feedback else {
            return Err(feedback_mismatch(self.algorithm(), feedback));
        };
        self.t += 1;
        for (s, x) in self.sum.iter_mut().zip(theta) {
            *s += x;
        }
        Ok(())
    }
}
