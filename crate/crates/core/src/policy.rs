//! The learner interface shared by every algorithm, and algorithm selection by name.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Feedback, FeedbackKind, WeightVector};

/// An online learner: picks an action, then consumes the feedback for it.
///
/// Calls must alternate `choose`, `observe`, `choose`, ... starting at `t = 1`.
pub trait Policy: Send {
    fn algorithm(&self) -> Algorithm;

    fn choose(&mut self) -> Result<WeightVector>;

    fn observe(&mut self, action: &WeightVector, feedback: &Feedback) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    McEmpirical,
    Ogd,
    LinearFi,
    McUcb,
    McUcbGamma,
    OlsUcbC,
    McEte,
    OgdEte,
    LinearFb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::McEmpirical,
        Algorithm::Ogd,
        Algorithm::LinearFi,
        Algorithm::McUcb,
        Algorithm::McUcbGamma,
        Algorithm::OlsUcbC,
        Algorithm::McEte,
        Algorithm::OgdEte,
        Algorithm::LinearFb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::McEmpirical => "mc-empirical",
            Algorithm::Ogd => "ogd",
            Algorithm::LinearFi => "linear-fi",
            Algorithm::McUcb => "mc-ucb",
            Algorithm::McUcbGamma => "mc-ucb-gamma",
            Algorithm::OlsUcbC => "ols-ucb-c",
            Algorithm::McEte => "mc-ete",
            Algorithm::OgdEte => "ogd-ete",
            Algorithm::LinearFb => "linear-fb",
        }
    }

    pub fn feedback(&self) -> FeedbackKind {
        match self {
            Algorithm::McEmpirical | Algorithm::Ogd | Algorithm::LinearFi => FeedbackKind::FullInfo,
            Algorithm::McUcb | Algorithm::McUcbGamma | Algorithm::OlsUcbC => {
                FeedbackKind::SemiBandit
            }
            Algorithm::McEte | Algorithm::OgdEte | Algorithm::LinearFb => FeedbackKind::FullBandit,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

pub(crate) fn feedback_mismatch(algo: Algorithm, got: &Feedback) -> Error {
    let kind = match got {
        Feedback::Full(_) => "full-information",
        Feedback::Semi(_) => "semi-bandit",
        Feedback::Bandit(_) => "full-bandit",
    };
    Error::InvalidArgument(format!("{algo} cannot consume {kind} feedback"))
}
