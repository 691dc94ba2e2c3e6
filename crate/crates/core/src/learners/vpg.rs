use super::returns::reward_to_go;
use super::{check_batch, Algo, LearnerState};
use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::numcore::PolicyParams;

/// Per-step `∇_θ log π_θ(a_t|s_t)`, in observation step order.
pub fn score_gradients(policy: &PolicyParams, obs: &Observation) -> Result<Vec<Vec<f64>>> {
    let n = policy.num_params();
    let mut out = Vec::with_capacity(obs.num_steps());
    for tr in &obs.trajectories {
        for (s, a) in tr.states.iter().zip(&tr.actions) {
            let mut g = vec![0.0; n];
            policy.accumulate_log_prob_grad(s, a, 1.0, &mut g)?;
            out.push(g);
        }
    }
    Ok(out)
}

/// Reward-to-go score-function estimate
/// `(1/N) Σ_i Σ_t ∇ log π(a_t|s_t) G_t`, where `N` counts trajectories.
pub fn vpg_gradient(policy: &PolicyParams, obs: &Observation, gamma: f64) -> Result<Vec<f64>> {
    let n_traj = obs.trajectories.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    for tr in &obs.trajectories {
        let g = reward_to_go(&tr.rewards, &tr.dones, gamma);
        for ((s, a), gt) in tr.states.iter().zip(&tr.actions).zip(g) {
            policy.accumulate_log_prob_grad(s, a, gt / n_traj, &mut grad)?;
        }
    }
    Ok(grad)
}

/// Empirical surrogate `(1/N) Σ_i Σ_t log π_θ(a_t|s_t) G_t` on a frozen
/// batch; its gradient is [`vpg_gradient`].
pub fn vpg_surrogate(policy: &PolicyParams, obs: &Observation, gamma: f64) -> Result<f64> {
    let n_traj = obs.trajectories.len() as f64;
    let mut total = 0.0;
    for tr in &obs.trajectories {
        let g = reward_to_go(&tr.rewards, &tr.dones, gamma);
        for ((s, a), gt) in tr.states.iter().zip(&tr.actions).zip(g) {
            total += policy.log_prob(s, a)? * gt;
        }
    }
    Ok(total / n_traj)
}

/// One step of vanilla policy gradient ascent.
pub fn vpg_update(learner: &LearnerState, obs: &Observation) -> Result<LearnerState> {
    if learner.algo != Algo::Vpg {
        return Err(Error::Config("vpg_update called on a non-VPG learner".into()));
    }
    check_batch(obs)?;
    let grad = vpg_gradient(&learner.policy, obs, learner.gamma)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite policy gradient".into()));
    }
    let mut next = learner.clone();
    next.policy.add_scaled(&grad, learner.lr_policy);
    next.iteration += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Trajectory;
    use crate::numcore::{log_prob_and_grads, Action, ActionSpace, Rng};

    fn batch(rng: &mut Rng, rewards: impl Fn(usize) -> f64) -> Observation {
        let trs = (0..3)
            .map(|i| {
                let n = 2 + i;
                Trajectory {
                    states: (0..n).map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect(),
                    actions: (0..n).map(|_| Action::Discrete(rng.index(2))).collect(),
                    rewards: (0..n).map(&rewards).collect(),
                    dones: (0..n).map(|t| t + 1 == n).collect(),
                    bootstrap_state: None,
                }
            })
            .collect();
        Observation::new(trs, 0)
    }

    #[test]
    fn zero_rewards_leave_params_unchanged() {
        let mut rng = Rng::new(5);
        let pol = PolicyParams::mlp(3, 8, ActionSpace::Discrete(2), &mut rng);
        let obs = batch(&mut rng, |_| 0.0);
        let l = LearnerState::vpg(pol.clone(), 0.1, 0.9);
        assert_eq!(vpg_update(&l, &obs).unwrap().policy, pol);
    }

    #[test]
    fn doubling_rewards_doubles_the_step() {
        let mut rng = Rng::new(6);
        let pol = PolicyParams::mlp(3, 8, ActionSpace::Discrete(2), &mut rng);
        let obs = batch(&mut rng, |t| 0.5 + t as f64);
        let obs2 = obs.with_rewards(&obs.rewards().iter().map(|r| 2.0 * r).collect::<Vec<_>>()).unwrap();
        let l = LearnerState::vpg(pol.clone(), 0.05, 0.9);
        let base = pol.to_flat();
        let d1: Vec<f64> = vpg_update(&l, &obs).unwrap().policy.to_flat().iter().zip(&base).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = vpg_update(&l, &obs2).unwrap().policy.to_flat().iter().zip(&base).map(|(a, b)| a - b).collect();
        for (x, y) in d1.iter().zip(&d2) {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn single_trajectory_matches_hand_assembly() {
        let mut rng = Rng::new(8);
        let pol = PolicyParams::mlp(3, 6, ActionSpace::Discrete(3), &mut rng);
        let tr = Trajectory {
            states: vec![vec![0.1, 0.2, 0.3], vec![-0.4, 0.0, 0.9]],
            actions: vec![Action::Discrete(2), Action::Discrete(0)],
            rewards: vec![1.0, 2.0],
            dones: vec![false, true],
            bootstrap_state: None,
        };
        let obs = Observation::new(vec![tr.clone()], 0);
        let l = LearnerState::vpg(pol.clone(), 0.1, 0.5);
        let g0 = log_prob_and_grads(&pol, &tr.states[0], &tr.actions[0]).unwrap().grad_params;
        let g1 = log_prob_and_grads(&pol, &tr.states[1], &tr.actions[1]).unwrap().grad_params;
        // G = (1 + 0.5 * 2, 2)
        let expect: Vec<f64> = pol
            .to_flat()
            .iter()
            .zip(g0.iter().zip(&g1))
            .map(|(p, (a, b))| p + 0.1 * (2.0 * a + 2.0 * b))
            .collect();
        let got = vpg_update(&l, &obs).unwrap().policy.to_flat();
        for (x, y) in got.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_observation_is_rejected() {
        let l = LearnerState::vpg(PolicyParams::tabular(2, 2), 0.1, 0.9);
        assert!(matches!(
            vpg_update(&l, &Observation::new(vec![], 0)),
            Err(Error::Input(_))
        ));
    }
}
