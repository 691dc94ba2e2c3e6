use super::returns::reward_to_go;
use super::check_batch;
use crate::envs::Observation;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{softmax, Body, Linear, PolicyParams};
use crate::numcore::Head;

/// Softmax policy stored directly as a `n_states × n_actions` logit table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularLearnerState {
    pub logits: Vec<Vec<f64>>,
    pub lr: f64,
    pub gamma: f64,
}

impl TabularLearnerState {
    pub fn new(n_states: usize, n_actions: usize, lr: f64, gamma: f64) -> Self {
        TabularLearnerState {
            logits: vec![vec![0.0; n_actions]; n_states],
            lr,
            gamma,
        }
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|z| softmax(z)).collect()
    }

    /// The same policy as a one-hot [`PolicyParams`].
    pub fn to_policy(&self) -> PolicyParams {
        let ns = self.logits.len();
        let na = self.logits.first().map_or(0, Vec::len);
        let mut w = vec![0.0; ns * na];
        for (s, row) in self.logits.iter().enumerate() {
            for (a, z) in row.iter().enumerate() {
                w[a * ns + s] = *z;
            }
        }
        PolicyParams {
            body: Body::Linear(Linear { input: ns, output: na, w }),
            head: Head::Softmax { n_actions: na },
        }
    }
}

fn state_index(s: &[f64]) -> usize {
    s.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Closed-form VPG step on the logit table:
/// `z[s] += lr/N · (e_a − π(·|s)) · G_t`.
pub fn tabular_pg_update(state: &TabularLearnerState, obs: &Observation) -> Result<TabularLearnerState> {
    check_batch(obs)?;
    let ns = state.logits.len();
    let n_traj = obs.trajectories.len() as f64;
    let probs = state.probs();
    let mut next = state.clone();
    for tr in &obs.trajectories {
        let g = reward_to_go(&tr.rewards, &tr.dones, state.gamma);
        for ((s, a), gt) in tr.states.iter().zip(&tr.actions).zip(g) {
            if s.len() != ns {
                return Err(shape_err("tabular learner expects one-hot states"));
            }
            let si = state_index(s);
            let ai = a
                .index()
                .ok_or_else(|| Error::Unsupported("tabular learner needs discrete actions".into()))?;
            let row = &mut next.logits[si];
            if ai >= row.len() {
                return Err(shape_err(format!("action {ai} out of range")));
            }
            let c = state.lr * gt / n_traj;
            for (b, z) in row.iter_mut().enumerate() {
                let ind = if b == ai { 1.0 } else { 0.0 };
                *z += c * (ind - probs[si][b]);
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{river_mdp, rollout, Env, RolloutMode};
    use crate::learners::{vpg_update, LearnerState};
    use crate::numcore::Rng;

    #[test]
    fn matches_generic_vpg_on_one_hot_policy() {
        let env = Env::Tabular(river_mdp());
        let mut rng = Rng::new(12);
        let mut tab = TabularLearnerState::new(11, 2, 0.3, 0.99);
        for s in 0..11 {
            tab.logits[s] = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        }
        let pol = tab.to_policy();
        let obs = rollout(&pol, &env, RolloutMode::Episodes(4), &mut rng).unwrap();
        let a = tabular_pg_update(&tab, &obs).unwrap().to_policy().to_flat();
        let b = vpg_update(&LearnerState::vpg(pol, 0.3, 0.99), &obs).unwrap().policy.to_flat();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_rewards_are_identity_and_single_visit_raises_its_logit() {
        use crate::envs::{one_hot, Trajectory};
        use crate::numcore::Action;
        let tab = TabularLearnerState::new(3, 3, 0.5, 0.9);
        let mk = |r: f64| {
            Observation::new(
                vec![Trajectory {
                    states: vec![one_hot(3, 1)],
                    actions: vec![Action::Discrete(2)],
                    rewards: vec![r],
                    dones: vec![true],
                    bootstrap_state: None,
                }],
                0,
            )
        };
        assert_eq!(tabular_pg_update(&tab, &mk(0.0)).unwrap(), tab);
        let next = tabular_pg_update(&tab, &mk(1.0)).unwrap();
        assert!(next.logits[1][2] > 0.0);
        assert!(next.logits[1][0] < 0.0 && next.logits[1][1] < 0.0);
        assert_eq!(next.logits[0], vec![0.0; 3]);
    }
}
