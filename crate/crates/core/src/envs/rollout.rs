use super::env::{Env, EnvState};
use super::observation::{Observation, Trajectory};
use crate::error::{Error, Result};
use crate::numcore::{sample_action, PolicyParams, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutMode {
    /// Whole episodes.
    Episodes(usize),
    /// A fixed number of steps; the final piece may stop mid-episode.
    Steps(usize),
}

fn empty_trajectory() -> Trajectory {
    Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        bootstrap_state: None,
    }
}

fn check_compatible(policy: &PolicyParams, env: &Env) -> Result<()> {
    if policy.action_space() != env.action_space() || policy.state_dim() != env.state_dim() {
        return Err(Error::Config(
            "policy architecture does not match the environment".into(),
        ));
    }
    Ok(())
}

/// Rolls out `policy` from fresh resets; rewards are the clean environment
/// rewards.
pub fn rollout(policy: &PolicyParams, env: &Env, mode: RolloutMode, rng: &mut Rng) -> Result<Observation> {
    check_compatible(policy, env)?;
    let mut trajectories = Vec::new();
    let mut steps = 0usize;
    let more = |eps: usize, steps: usize| match mode {
        RolloutMode::Episodes(n) => eps < n,
        RolloutMode::Steps(n) => steps < n,
    };
    while more(trajectories.len(), steps) {
        let mut state = env.reset(rng);
        let mut tr = empty_trajectory();
        loop {
            let action = sample_action(&policy.forward(&state.vector)?, rng);
            let st = env.step(&state, &action, rng)?;
            tr.states.push(std::mem::take(&mut state.vector));
            tr.actions.push(action);
            tr.rewards.push(st.reward);
            tr.dones.push(st.done);
            steps += 1;
            state = st.next;
            if st.done {
                break;
            }
            if let RolloutMode::Steps(n) = mode {
                if steps >= n {
                    tr.bootstrap_state = Some(state.vector.clone());
                    break;
                }
            }
        }
        trajectories.push(tr);
    }
    Ok(Observation::new(trajectories, 0))
}

struct Copy {
    state: EnvState,
    rng: Rng,
    running_return: f64,
}

/// Parallel environment copies that persist across collections, as used by
/// n-step actor-critic learners. Each copy owns its own random stream.
pub struct SegmentCollector {
    env: Env,
    copies: Vec<Copy>,
}

impl SegmentCollector {
    pub fn new(env: Env, n_copies: usize, rng: &mut Rng) -> Self {
        let copies = (0..n_copies)
            .map(|_| {
                let mut r = rng.split();
                let state = env.reset(&mut r);
                Copy {
                    state,
                    rng: r,
                    running_return: 0.0,
                }
            })
            .collect();
        SegmentCollector { env, copies }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Collects `n_steps` steps from every copy. Segments are split at
    /// episode ends. Returns the observation and the undiscounted returns of
    /// the episodes that finished during this collection.
    pub fn collect(&mut self, policy: &PolicyParams, n_steps: usize) -> Result<(Observation, Vec<f64>)> {
        check_compatible(policy, &self.env)?;
        let mut trajectories = Vec::new();
        let mut finished = Vec::new();
        for copy in &mut self.copies {
            let mut tr = empty_trajectory();
            for k in 0..n_steps {
                let action = sample_action(&policy.forward(&copy.state.vector)?, &mut copy.rng);
                let st = self.env.step(&copy.state, &action, &mut copy.rng)?;
                tr.states.push(copy.state.vector.clone());
                tr.actions.push(action);
                tr.rewards.push(st.reward);
                tr.dones.push(st.done);
                copy.running_return += st.reward;
                if st.done {
                    finished.push(copy.running_return);
                    copy.running_return = 0.0;
                    copy.state = self.env.reset(&mut copy.rng);
                    trajectories.push(std::mem::replace(&mut tr, empty_trajectory()));
                } else {
                    copy.state = st.next;
                    if k + 1 == n_steps {
                        tr.bootstrap_state = Some(copy.state.vector.clone());
                    }
                }
            }
            if !tr.is_empty() {
                trajectories.push(tr);
            }
        }
        Ok((Observation::new(trajectories, 0), finished))
    }
}
