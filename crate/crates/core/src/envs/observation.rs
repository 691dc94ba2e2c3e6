use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numcore::Action;

/// One contiguous piece of experience. Only the last step may be `done`;
/// when it is not, `bootstrap_state` holds the state that followed it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_state: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn ends_episode(&self) -> bool {
        self.dones.last().copied().unwrap_or(false)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// The batch of trajectories a learner rolls out in one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trajectories: Vec<Trajectory>,
    pub iteration: usize,
}

impl Observation {
    pub fn new(trajectories: Vec<Trajectory>, iteration: usize) -> Self {
        Observation {
            trajectories,
            iteration,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_steps() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for (i, tr) in self.trajectories.iter().enumerate() {
            let n = tr.rewards.len();
            if n == 0 {
                return Err(Error::Input(format!("trajectory {i} is empty")));
            }
            if tr.states.len() != n || tr.actions.len() != n || tr.dones.len() != n {
                return Err(shape_err(format!(
                    "trajectory {i}: states/actions/rewards/dones lengths differ"
                )));
            }
            if tr.dones[..n - 1].iter().any(|&d| d) {
                return Err(Error::Input(format!(
                    "trajectory {i}: done flag before the last step"
                )));
            }
        }
        Ok(())
    }

    /// All rewards, trajectory by trajectory.
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .flat_map(|t| t.rewards.iter().copied())
            .collect()
    }

    pub fn with_rewards(&self, rewards: &[f64]) -> Result<Observation> {
        if rewards.len() != self.num_steps() {
            return Err(shape_err("reward vector length does not match observation"));
        }
        let mut out = self.clone();
        let mut it = rewards.iter();
        for tr in &mut out.trajectories {
            for r in &mut tr.rewards {
                *r = *it.next().expect("length checked");
            }
        }
        Ok(out)
    }

    /// All states, flattened step-major into a single vector.
    pub fn states_flat(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .flat_map(|t| t.states.iter().flatten().copied())
            .collect()
    }

    pub fn with_states_flat(&self, flat: &[f64]) -> Result<Observation> {
        let mut out = self.clone();
        let mut off = 0;
        for tr in &mut out.trajectories {
            for s in &mut tr.states {
                let n = s.len();
                if off + n > flat.len() {
                    return Err(shape_err("state vector too short for observation"));
                }
                s.copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
        if off != flat.len() {
            return Err(shape_err("state vector too long for observation"));
        }
        Ok(out)
    }

    pub fn actions(&self) -> Vec<Action> {
        self.trajectories
            .iter()
            .flat_map(|t| t.actions.iter().cloned())
            .collect()
    }

    pub fn with_actions(&self, actions: &[Action]) -> Result<Observation> {
        if actions.len() != self.num_steps() {
            return Err(shape_err("action list length does not match observation"));
        }
        let mut out = self.clone();
        let mut it = actions.iter();
        for tr in &mut out.trajectories {
            for a in &mut tr.actions {
                *a = it.next().expect("length checked").clone();
            }
        }
        Ok(out)
    }

    /// Every state in step order.
    pub fn states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter())
    }

    /// Undiscounted return of each trajectory that ends an episode.
    pub fn episode_returns(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .filter(|t| t.ends_episode())
            .map(Trajectory::total_reward)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize, last_done: bool) -> Trajectory {
        Trajectory {
            states: vec![vec![0.0, 1.0]; n],
            actions: vec![Action::Discrete(0); n],
            rewards: (0..n).map(|i| i as f64).collect(),
            dones: (0..n).map(|i| last_done && i + 1 == n).collect(),
            bootstrap_state: None,
        }
    }

    #[test]
    fn validation_catches_inner_done() {
        let mut t = traj(3, true);
        t.dones[0] = true;
        assert!(Observation::new(vec![t], 0).validate().is_err());
        assert!(Observation::new(vec![traj(3, true), traj(2, false)], 0)
            .validate()
            .is_ok());
    }

    #[test]
    fn reward_and_state_views_round_trip() {
        let o = Observation::new(vec![traj(3, true), traj(2, false)], 0);
        assert_eq!(o.rewards(), vec![0.0, 1.0, 2.0, 0.0, 1.0]);
        let o2 = o.with_rewards(&[5.0; 5]).unwrap();
        assert_eq!(o2.rewards(), vec![5.0; 5]);
        let s = o.states_flat();
        assert_eq!(s.len(), 10);
        assert_eq!(o.with_states_flat(&s).unwrap(), o);
        assert!(o.with_states_flat(&s[..9]).is_err());
        assert_eq!(o.episode_returns(), vec![3.0]);
    }
}
