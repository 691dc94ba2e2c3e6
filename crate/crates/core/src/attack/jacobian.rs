use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::learners::{score_gradients, Algo, LearnerState};

/// Linear map from reward perturbations to VPG parameter deltas. Column
/// `t` is `lr/N · Σ_{j≤t} ∇log π(a_j|s_j) γ^{t−j}` within `t`'s trajectory,
/// `N` the number of trajectories.
#[derive(Clone, Debug)]
pub struct RewardJacobian {
    pub columns: Vec<Vec<f64>>,
}

impl RewardJacobian {
    pub fn num_params(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// `J · Δr`.
    pub fn apply(&self, dr: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_params()];
        for (col, d) in self.columns.iter().zip(dr) {
            if *d != 0.0 {
                out.iter_mut().zip(col).for_each(|(o, c)| *o += c * d);
            }
        }
        out
    }

    /// `Jᵀ · v`.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn vpg_reward_jacobian(learner: &LearnerState, obs: &Observation) -> Result<RewardJacobian> {
    if learner.algo != Algo::Vpg {
        return Err(Error::Unsupported("analytic reward Jacobian exists only for VPG".into()));
    }
    policy_reward_map(learner, obs)
}

/// Reward-to-policy map of either learner. A2C's policy step is also
/// linear in the rewards once states, actions and its critic are fixed,
/// with the batch normalized by step count instead of trajectory count.
pub(crate) fn policy_reward_map(learner: &LearnerState, obs: &Observation) -> Result<RewardJacobian> {
    let scores = score_gradients(&learner.policy, obs)?;
    let c = match learner.algo {
        Algo::Vpg => learner.lr_policy / obs.trajectories.len().max(1) as f64,
        Algo::A2c => learner.lr_policy / obs.num_steps().max(1) as f64,
    };
    let p = learner.policy.num_params();
    let mut columns = Vec::with_capacity(scores.len());
    let mut it = scores.into_iter();
    for tr in &obs.trajectories {
        let mut col = vec![0.0; p];
        for _ in 0..tr.len() {
            let g = it.next().expect("one score per step");
            for (x, gi) in col.iter_mut().zip(&g) {
                *x = learner.gamma * *x + c * gi;
            }
            columns.push(col.clone());
        }
    }
    Ok(RewardJacobian { columns })
}
