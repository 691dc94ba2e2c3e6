use super::{check_batch, Algo, LearnerState};
use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::numcore::ValueParams;

/// n-step bootstrapped returns: each segment is closed with `V(s_{T+1})`
/// unless it ended an episode.
pub fn a2c_targets(critic: &ValueParams, obs: &Observation, gamma: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(obs.num_steps());
    for tr in &obs.trajectories {
        let mut acc = match (&tr.bootstrap_state, tr.ends_episode()) {
            (Some(s), false) => critic.value(s)?,
            _ => 0.0,
        };
        let mut seg = vec![0.0; tr.len()];
        for t in (0..tr.len()).rev() {
            acc = tr.rewards[t] + gamma * acc;
            seg[t] = acc;
        }
        out.extend(seg);
    }
    Ok(out)
}

/// Synchronous advantage actor-critic step: the policy ascends
/// `mean ∇log π(a|s) (G_boot − V(s))`, the critic descends
/// `mean ½ (V(s) − G_boot)²`. No entropy bonus.
pub fn a2c_update(learner: &LearnerState, obs: &Observation) -> Result<LearnerState> {
    if learner.algo != Algo::A2c {
        return Err(Error::Config("a2c_update called on a non-A2C learner".into()));
    }
    let critic = learner
        .critic
        .as_ref()
        .ok_or_else(|| Error::Config("A2C learner requires a critic".into()))?;
    check_batch(obs)?;
    let targets = a2c_targets(critic, obs, learner.gamma)?;
    let nt = obs.num_steps() as f64;

    let mut pg = vec![0.0; learner.policy.num_params()];
    let mut vg = vec![0.0; critic.num_params()];
    let mut k = 0;
    for tr in &obs.trajectories {
        for (s, a) in tr.states.iter().zip(&tr.actions) {
            let v = critic.value(s)?;
            let adv = targets[k] - v;
            if adv != 0.0 {
                learner.policy.accumulate_log_prob_grad(s, a, adv / nt, &mut pg)?;
            }
            critic.accumulate_grad(s, (v - targets[k]) / nt, &mut vg)?;
            k += 1;
        }
    }
    if pg.iter().chain(&vg).any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite actor-critic gradient".into()));
    }
    let mut next = learner.clone();
    next.policy.add_scaled(&pg, learner.lr_policy);
    if let Some(c) = next.critic.as_mut() {
        c.add_scaled(&vg, -learner.lr_critic);
    }
    next.iteration += 1;
    Ok(next)
}
