//! Problem instances, actions, feedback and the mean-covariance objective.
//!
//! An [`Instance`] holds the ground truth of a bandit problem: the mean reward
//! vector, the reward covariance, the risk-aversion weight and, for the
//! semi-bandit setting, the minimum positive weight `c` of the restricted
//! simplex. Actions are [`WeightVector`]s on the probability simplex.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `Σ wᵢ = 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Entries in `[-CLIP_TOL, 0)` are treated as round-off and clipped to zero.
pub const CLIP_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted for a covariance matrix.
pub const PSD_TOL: f64 = 1e-9;
/// Largest accepted relative asymmetry `max|Σ - Σᵀ| / max|Σ|` in instance files.
pub const ASYMMETRY_TOL: f64 = 1e-6;

/// Feasible action set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The full probability simplex.
    Full,
    /// Simplex points whose entries are each 0 or at least `c`.
    Restricted(f64),
}

impl Domain {
    pub fn min_weight(&self) -> Option<f64> {
        match *self {
            Domain::Full => None,
            Domain::Restricted(c) => Some(c),
        }
    }
}

/// Ground truth of a continuous mean-covariance bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    theta: DVector<f64>,
    sigma: DMatrix<f64>,
    rho: f64,
    min_weight_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceFile {
    d: usize,
    theta: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    rho: f64,
    #[serde(default)]
    c: Option<f64>,
}

impl Instance {
    /// Validates and builds an instance. `sigma` is symmetrized.
    pub fn new(
        theta: Vec<f64>,
        sigma: DMatrix<f64>,
        rho: f64,
        min_weight_c: Option<f64>,
    ) -> Result<Self> {
        let d = theta.len();
        if d < 2 {
            return Err(Error::InvalidInstance(format!("need d >= 2 arms, got {d}")));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::InvalidInstance(format!(
                "sigma is {}x{}, expected {d}x{d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if theta.iter().chain(sigma.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInstance("non-finite entry".into()));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInstance(format!("rho must be > 0, got {rho}")));
        }
        if let Some(c) = min_weight_c {
            if !(c > 0.0 && c <= 0.5) {
                return Err(Error::InvalidInstance(format!("c must lie in (0, 1/2], got {c}")));
            }
        }
        let sigma = linalg::symmetrize(&sigma);
        for i in 0..d {
            if sigma[(i, i)] > 1.0 + PSD_TOL {
                return Err(Error::InvalidInstance(format!(
                    "sigma[{i}][{i}] = {} exceeds 1",
                    sigma[(i, i)]
                )));
            }
        }
        let min_eig = linalg::min_eigenvalue(&sigma);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidInstance(format!(
                "sigma is not positive semi-definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            theta: DVector::from_vec(theta),
            sigma,
            rho,
            min_weight_c,
        })
    }

    /// Five arms with means `[0.2, 0.3, 0.2, 0.2, 0.2]`, unit variances and
    /// pairwise covariance `-0.05`.
    pub fn synthetic_five_arm(rho: f64, min_weight_c: Option<f64>) -> Result<Self> {
        let mut sigma = DMatrix::from_element(5, 5, -0.05);
        sigma.fill_diagonal(1.0);
        Self::new(vec![0.2, 0.3, 0.2, 0.2, 0.2], sigma, rho, min_weight_c)
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn min_weight_c(&self) -> Option<f64> {
        self.min_weight_c
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.theta.as_slice().to_vec(), self.sigma.clone(), rho, self.min_weight_c)
    }

    pub fn with_min_weight(&self, c: Option<f64>) -> Result<Self> {
        Self::new(self.theta.as_slice().to_vec(), self.sigma.clone(), self.rho, c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        if file.theta.len() != file.d {
            return Err(Error::InvalidInstance(format!(
                "d = {} but theta has {} entries",
                file.d,
                file.theta.len()
            )));
        }
        if file.sigma.len() != file.d || file.sigma.iter().any(|r| r.len() != file.d) {
            return Err(Error::InvalidInstance(format!("sigma must be {0}x{0}", file.d)));
        }
        let sigma = DMatrix::from_fn(file.d, file.d, |i, j| file.sigma[i][j]);
        let scale = linalg::max_abs(&sigma);
        let asym = linalg::max_abs(&(&sigma - sigma.transpose()));
        if scale > 0.0 && asym / scale > ASYMMETRY_TOL {
            return Err(Error::InvalidInstance(format!(
                "sigma is asymmetric (relative asymmetry {:e})",
                asym / scale
            )));
        }
        Self::new(file.theta, sigma, file.rho, file.c)
    }

    pub fn to_json_string(&self) -> String {
        let d = self.d();
        let file = InstanceFile {
            d,
            theta: self.theta.as_slice().to_vec(),
            sigma: (0..d)
                .map(|i| (0..d).map(|j| self.sigma[(i, j)]).collect())
                .collect(),
            rho: self.rho,
            c: self.min_weight_c,
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates `w`, clipping round-off negatives in `[-1e-12, 0)` to zero and
    /// renormalizing to an exact unit sum.
    pub fn new(mut w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        for (i, x) in w.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidWeights(format!("entry {i} is not finite")));
            }
            if *x < -CLIP_TOL {
                return Err(Error::InvalidWeights(format!("entry {i} = {x} is negative")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("entries sum to {sum}, not 1")));
        }
        if sum != 1.0 {
            w.iter_mut().for_each(|x| *x /= sum);
        }
        Ok(Self(w))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    /// Standard basis vector `e_i`.
    pub fn vertex(d: usize, i: usize) -> Self {
        let mut w = vec![0.0; d];
        w[i] = 1.0;
        Self(w)
    }

    /// Half the mass on each of arms `i` and `j` (`i != j`).
    pub fn pair(d: usize, i: usize, j: usize) -> Self {
        debug_assert_ne!(i, j);
        let mut w = vec![0.0; d];
        w[i] = 0.5;
        w[j] = 0.5;
        Self(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether every positive entry is at least `c` (up to [`SIMPLEX_TOL`]).
    pub fn in_domain(&self, domain: Domain) -> bool {
        match domain {
            Domain::Full => true,
            Domain::Restricted(c) => self.0.iter().all(|&x| x == 0.0 || x >= c - SIMPLEX_TOL),
        }
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Observation returned to the learner after a pull.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// Rewards of every base arm.
    Full(Vec<f64>),
    /// `(arm, reward)` for each arm with positive weight.
    Semi(Vec<(usize, f64)>),
    /// The weighted sum `wᵀθ_t`.
    Bandit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackKind {
    FullInfo,
    SemiBandit,
    FullBandit,
}

/// `wᵀθ − ρ·wᵀΣw` for raw parameters.
pub fn mean_cov_value(theta: &[f64], sigma: &DMatrix<f64>, rho: f64, w: &[f64]) -> f64 {
    linalg::dot(w, theta) - rho * linalg::quad_form(sigma, w)
}

pub fn objective_value(instance: &Instance, w: &WeightVector) -> Result<f64> {
    check_dim(instance.d(), w.dim())?;
    Ok(mean_cov_value(
        instance.theta.as_slice(),
        &instance.sigma,
        instance.rho,
        w.as_slice(),
    ))
}

/// `f_opt − f(w)`: the per-step expected regret of playing `w`.
pub fn suboptimality_gap(instance: &Instance, f_opt: f64, w: &WeightVector) -> Result<f64> {
    Ok(f_opt - objective_value(instance, w)?)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_arm() -> Instance {
        Instance::synthetic_five_arm(0.1, None).unwrap()
    }

    #[test]
    fn vertex_value() {
        let f = objective_value(&five_arm(), &WeightVector::vertex(5, 1)).unwrap();
        assert!((f - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uniform_value_matches_hand_arithmetic() {
        // wᵀΣw = (5·1 + 20·(−0.05)) / 25 = 0.16, wᵀθ = 0.22
        let f = objective_value(&five_arm(), &WeightVector::uniform(5)).unwrap();
        assert!((f - 0.204).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_is_linear() {
        let inst = Instance::new(vec![0.7, 0.1], DMatrix::zeros(2, 2), 3.0, None).unwrap();
        let f = objective_value(&inst, &WeightVector::vertex(2, 0)).unwrap();
        assert_eq!(f, 0.7);
        let gap = suboptimality_gap(&inst, 0.7, &WeightVector::vertex(2, 1)).unwrap();
        assert!((gap - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = objective_value(&five_arm(), &WeightVector::uniform(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 5, got: 3 }));
    }

    #[test]
    fn weight_vector_clips_round_off() {
        let w = WeightVector::new(vec![-5e-13, 0.5, 0.5 + 5e-13]).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(WeightVector::new(vec![-1e-6, 1.0 + 1e-6]).is_err());
        assert!(WeightVector::new(vec![0.3, 0.3]).is_err());
    }

    #[test]
    fn restricted_domain_membership() {
        let w = WeightVector::new(vec![0.0, 0.25, 0.75]).unwrap();
        assert!(w.in_domain(Domain::Restricted(0.2)));
        assert!(!w.in_domain(Domain::Restricted(0.3)));
    }

    #[test]
    fn instance_validation() {
        let bad_psd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Instance::new(vec![0.0, 0.0], bad_psd, 1.0, None).is_err());
        let big_diag = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.0]);
        assert!(Instance::new(vec![0.0, 0.0], big_diag, 1.0, None).is_err());
        assert!(Instance::new(vec![0.0, 0.0], DMatrix::identity(2, 2), 0.0, None).is_err());
        assert!(Instance::new(vec![0.0, 0.0], DMatrix::identity(2, 2), 1.0, Some(0.6)).is_err());
        assert!(Instance::new(vec![0.0], DMatrix::identity(1, 1), 1.0, None).is_err());
    }

    #[test]
    fn json_round_trip_and_asymmetry_check() {
        let inst = five_arm().with_min_weight(Some(0.2)).unwrap();
        let back = Instance::from_json_str(&inst.to_json_string()).unwrap();
        assert_eq!(inst, back);

        let asym = r#"{"d":2,"theta":[0.1,0.2],"sigma":[[1.0,0.1],[0.2,1.0]],"rho":1.0,"c":null}"#;
        assert!(matches!(
            Instance::from_json_str(asym),
            Err(Error::InvalidInstance(_))
        ));
        let tiny = r#"{"d":2,"theta":[0.1,0.2],"sigma":[[1.0,0.1],[0.1000000001,1.0]],"rho":1.0}"#;
        assert!(Instance::from_json_str(tiny).is_ok());
    }
}
