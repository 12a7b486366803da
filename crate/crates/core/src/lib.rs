//! Continuous mean-covariance bandits.
//!
//! A learner repeatedly picks a weight vector `w` on the probability simplex
//! and is scored by the mean-covariance utility `f(w) = wᵀθ* − ρ·wᵀΣ*w` of an
//! unknown Gaussian reward distribution `N(θ*, Σ*)`. Three feedback settings
//! are supported:
//!
//! * full information ([`full_info`]): all arm rewards are revealed;
//! * semi-bandit ([`semi_bandit`]): only rewards of positively weighted arms;
//! * full bandit ([`full_bandit`]): only the scalar `wᵀθ_t`.
//!
//! [`solver`] holds the offline maximizers, [`environment`] the seeded reward
//! generator and regret accounting, [`oracles`] independent checks, and
//! [`harness`] the multi-run experiment driver.

pub mod environment;
pub mod error;
pub mod full_bandit;
pub mod full_info;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod policy;
pub mod semi_bandit;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    objective_value, suboptimality_gap, Domain, Feedback, FeedbackKind, Instance, WeightVector,
};
pub use policy::Policy;
