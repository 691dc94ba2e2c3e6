//! On-policy policy-gradient learners behind a single update `f(π, O)`.
//!
//! Updates are plain gradient ascent and return fresh state; the input
//! learner is never mutated.

mod a2c;
mod returns;
mod tabular;
mod vpg;

use serde::{Deserialize, Serialize};

pub use a2c::{a2c_targets, a2c_update};
pub use returns::reward_to_go;
pub use tabular::{tabular_pg_update, TabularLearnerState};
pub use vpg::{score_gradients, vpg_gradient, vpg_surrogate, vpg_update};

use crate::error::{Error, Result};
use crate::envs::Observation;
use crate::numcore::{PolicyParams, ValueParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Vpg,
    A2c,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algo::Vpg => write!(f, "vpg"),
            Algo::A2c => write!(f, "a2c"),
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vpg" => Ok(Algo::Vpg),
            "a2c" => Ok(Algo::A2c),
            other => Err(Error::Config(format!("unknown learner algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub policy: PolicyParams,
    pub critic: Option<ValueParams>,
    pub algo: Algo,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub iteration: usize,
}

impl LearnerState {
    pub fn vpg(policy: PolicyParams, lr: f64, gamma: f64) -> Self {
        LearnerState {
            policy,
            critic: None,
            algo: Algo::Vpg,
            lr_policy: lr,
            lr_critic: 0.0,
            gamma,
            iteration: 0,
        }
    }

    pub fn a2c(policy: PolicyParams, critic: ValueParams, lr_policy: f64, lr_critic: f64, gamma: f64) -> Self {
        LearnerState {
            policy,
            critic: Some(critic),
            algo: Algo::A2c,
            lr_policy,
            lr_critic,
            gamma,
            iteration: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algo == Algo::A2c && self.critic.is_none() {
            return Err(Error::Config("A2C learner requires a critic".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.lr_policy > 0.0) {
            return Err(Error::Config("policy learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `π_{k+1} = f(π_k, O_k)` for the learner's algorithm.
pub fn learner_update(learner: &LearnerState, obs: &Observation) -> Result<LearnerState> {
    match learner.algo {
        Algo::Vpg => vpg_update(learner, obs),
        Algo::A2c => a2c_update(learner, obs),
    }
}

fn check_batch(obs: &Observation) -> Result<()> {
    if obs.trajectories.is_empty() || obs.is_empty() {
        return Err(Error::Input("empty observation".into()));
    }
    obs.validate()
}
