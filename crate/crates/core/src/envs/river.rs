use serde::{Deserialize, Serialize};

use super::tabular::TabularMDP;

/// Chain with a tempting exit at the start and a large reward at the far end.
///
/// Positions `0..length` are river states; index `length` is the absorbing
/// terminal. At position 0, action 0 takes the bank exit: `trap_reward` and
/// the episode ends. Action 1 always moves one position downstream, and the
/// move out of the last position pays `goal_reward` and ends the episode.
/// At inner positions action 0 lets the current carry the agent back one
/// position for `step_reward`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiverConfig {
    pub length: usize,
    pub trap_reward: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for RiverConfig {
    fn default() -> Self {
        RiverConfig {
            length: 10,
            trap_reward: 1.0,
            goal_reward: 10.0,
            step_reward: 0.0,
            gamma: 0.99,
            horizon: 40,
        }
    }
}

pub fn river_mdp() -> TabularMDP {
    river_mdp_with(&RiverConfig::default())
}

pub fn river_mdp_with(cfg: &RiverConfig) -> TabularMDP {
    let len = cfg.length.max(1);
    let n = len + 1;
    let end = len;
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    let mut reward = vec![vec![0.0; 2]; n];
    for s in 0..len {
        if s == 0 {
            transition[s][0][end] = 1.0;
            reward[s][0] = cfg.trap_reward;
        } else {
            transition[s][0][s - 1] = 1.0;
            reward[s][0] = cfg.step_reward;
        }
        if s + 1 == len {
            transition[s][1][end] = 1.0;
            reward[s][1] = cfg.goal_reward;
        } else {
            transition[s][1][s + 1] = 1.0;
            reward[s][1] = cfg.step_reward;
        }
    }
    transition[end][0][end] = 1.0;
    transition[end][1][end] = 1.0;
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let mut terminal = vec![false; n];
    terminal[end] = true;
    TabularMDP {
        n_states: n,
        n_actions: 2,
        transition,
        reward,
        gamma: cfg.gamma,
        initial,
        terminal,
        horizon: cfg.horizon,
    }
}

/// Single-state bandit; every pull ends the episode.
pub fn bandit_mdp(arm_rewards: &[f64], gamma: f64) -> TabularMDP {
    let na = arm_rewards.len();
    TabularMDP {
        n_states: 2,
        n_actions: na,
        transition: vec![vec![vec![0.0, 1.0]; na]; 2],
        reward: vec![arm_rewards.to_vec(), vec![0.0; na]],
        gamma,
        initial: vec![1.0, 0.0],
        terminal: vec![false, true],
        horizon: 1,
    }
}
