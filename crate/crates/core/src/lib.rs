//! Online poisoning of policy-gradient learners.
//!
//! The crate is organised around the learner/attacker game: [`envs`] produce
//! observations, [`learners`] update a policy from them, [`attack`] and
//! [`baselines`] perturb the observations before the learner sees them, and
//! [`harness`] runs the loop and records the outcome. [`vulnerability`]
//! measures how much poison a single update or a whole MDP can absorb.

pub mod attack;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod harness;
pub mod learners;
pub mod numcore;
pub mod vulnerability;

pub use error::{Error, Result};
