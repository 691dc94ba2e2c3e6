//! Environments, rollouts and exact dynamic-programming oracles for tabular
//! MDPs.

pub mod cartpole;
pub mod env;
pub mod observation;
pub mod pointmass;
pub mod river;
pub mod rollout;
pub mod tabular;

pub use cartpole::CartPole;
pub use env::{env_reset, env_step, one_hot, Env, EnvState, Step};
pub use observation::{Observation, Trajectory};
pub use pointmass::PointMass;
pub use river::{bandit_mdp, river_mdp, river_mdp_with, RiverConfig};
pub use rollout::{rollout, RolloutMode, SegmentCollector};
pub use tabular::{
    deterministic_policy, discounted_visitation, policy_evaluation, random_mdp, uniform_policy,
    value_iteration, PolicyValues, TabularMDP, TabularPolicy,
};
