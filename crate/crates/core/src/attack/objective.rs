use serde::{Deserialize, Serialize};

use super::discrepancy::{distribution_distance, policy_discrepancy, policy_discrepancy_max, tv_grad_wrt_second, Measure};
use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::learners::{a2c_targets, learner_update, LearnerState};
use crate::numcore::{Action, PolicyParams, ValueParams};

/// The policy the targeted attacker wants the learner to adopt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Always pick this discrete action.
    Action(usize),
    /// Always output this mean.
    Mean(Vec<f64>),
}

impl TargetPolicy {
    pub fn action(&self) -> Action {
        match self {
            TargetPolicy::Action(a) => Action::Discrete(*a),
            TargetPolicy::Mean(m) => Action::Continuous(m.clone()),
        }
    }
}

/// Mean cross-entropy of the target action (discrete) or mean squared
/// distance to the target mean (continuous).
pub fn targeted_loss(policy: &PolicyParams, target: &TargetPolicy, states: &[Vec<f64>]) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for x in states {
        s += match target {
            TargetPolicy::Action(a) => -policy.log_prob(x, &Action::Discrete(*a))?,
            TargetPolicy::Mean(m) => {
                let out = policy.outputs(x)?;
                if out.len() != m.len() {
                    return Err(Error::Shape("target mean dimension mismatch".into()));
                }
                out.iter().zip(m).map(|(o, t)| (o - t) * (o - t)).sum()
            }
        };
    }
    Ok(s / states.len() as f64)
}

fn targeted_loss_grad(policy: &PolicyParams, target: &TargetPolicy, states: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = states.len().max(1) as f64;
    let mut grad = vec![0.0; policy.num_params()];
    for x in states {
        match target {
            TargetPolicy::Action(a) => {
                policy.accumulate_log_prob_grad(x, &Action::Discrete(*a), -1.0 / n, &mut grad)?;
            }
            TargetPolicy::Mean(m) => {
                let out = policy.outputs(x)?;
                let d: Vec<f64> = out.iter().zip(m).map(|(o, t)| 2.0 * (o - t) / n).collect();
                let (g, _) = policy.output_backward(x, &d)?;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
    Ok(grad)
}

/// What crafting minimizes, as a function of the imitated next policy.
#[derive(Clone, Debug)]
pub enum Objective {
    /// Importance-weighted advantage estimate
    /// `(1/NT) Σ π'(a|s)/π(a|s) · (G − V_ω(s))` on the clean batch.
    AttackerValue {
        states: Vec<Vec<f64>>,
        actions: Vec<Action>,
        advantages: Vec<f64>,
        base_logp: Vec<f64>,
    },
    Targeted {
        states: Vec<Vec<f64>>,
        target: TargetPolicy,
    },
    /// Negated discrepancy from `reference`: minimizing it pushes the next
    /// policy away. `worst` scores the largest per-state distance instead
    /// of the mean.
    Discrepancy {
        states: Vec<Vec<f64>>,
        reference: PolicyParams,
        measure: Measure,
        worst: bool,
    },
}

impl Objective {
    pub fn attacker_value(policy: &PolicyParams, clean: &Observation, critic: &ValueParams, gamma: f64) -> Result<Self> {
        let targets = a2c_targets(critic, clean, gamma)?;
        let mut states = Vec::with_capacity(targets.len());
        let mut actions = Vec::with_capacity(targets.len());
        let mut advantages = Vec::with_capacity(targets.len());
        let mut base_logp = Vec::with_capacity(targets.len());
        let mut k = 0;
        for tr in &clean.trajectories {
            for (s, a) in tr.states.iter().zip(&tr.actions) {
                advantages.push(targets[k] - critic.value(s)?);
                base_logp.push(policy.log_prob(s, a)?);
                states.push(s.clone());
                actions.push(a.clone());
                k += 1;
            }
        }
        Ok(Objective::AttackerValue {
            states,
            actions,
            advantages,
            base_logp,
        })
    }

    pub fn targeted(target: TargetPolicy, clean: &Observation) -> Self {
        Objective::Targeted {
            states: clean.states().cloned().collect(),
            target,
        }
    }

    pub fn discrepancy(reference: PolicyParams, clean: &Observation, measure: Measure) -> Self {
        Objective::Discrepancy {
            states: clean.states().cloned().collect(),
            reference,
            measure,
            worst: false,
        }
    }

    /// Worst-state discrepancy from `reference` over `states`.
    pub fn worst_discrepancy(reference: PolicyParams, states: Vec<Vec<f64>>, measure: Measure) -> Self {
        Objective::Discrepancy {
            states,
            reference,
            measure,
            worst: true,
        }
    }

    pub fn value(&self, next: &PolicyParams) -> Result<f64> {
        match self {
            Objective::AttackerValue {
                states,
                actions,
                advantages,
                base_logp,
            } => {
                let n = states.len().max(1) as f64;
                let mut s = 0.0;
                for i in 0..states.len() {
                    if advantages[i] == 0.0 {
                        continue;
                    }
                    let lp = next.log_prob(&states[i], &actions[i])?;
                    s += (lp - base_logp[i]).exp() * advantages[i];
                }
                Ok(s / n)
            }
            Objective::Targeted { states, target } => targeted_loss(next, target, states),
            Objective::Discrepancy {
                states,
                reference,
                measure,
                worst: false,
            } => Ok(-policy_discrepancy(reference, next, states, *measure)?),
            Objective::Discrepancy {
                states,
                reference,
                measure,
                worst: true,
            } => Ok(-policy_discrepancy_max(reference, next, states, *measure)?),
        }
    }

    /// Gradient of [`Objective::value`] w.r.t. the next policy's flat
    /// parameters, when one is available in closed form.
    pub fn grad(&self, next: &PolicyParams) -> Result<Option<Vec<f64>>> {
        match self {
            Objective::AttackerValue {
                states,
                actions,
                advantages,
                base_logp,
            } => {
                let n = states.len().max(1) as f64;
                let mut grad = vec![0.0; next.num_params()];
                for i in 0..states.len() {
                    if advantages[i] == 0.0 {
                        continue;
                    }
                    let lp = next.log_prob(&states[i], &actions[i])?;
                    let w = (lp - base_logp[i]).exp() * advantages[i] / n;
                    next.accumulate_log_prob_grad(&states[i], &actions[i], w, &mut grad)?;
                }
                Ok(Some(grad))
            }
            Objective::Targeted { states, target } => targeted_loss_grad(next, target, states).map(Some),
            Objective::Discrepancy {
                states,
                reference,
                measure,
                worst,
            } => {
                let focus = if *worst {
                    match worst_state(reference, next, states, *measure)? {
                        Some(i) => &states[i..i + 1],
                        None => return Ok(None),
                    }
                } else {
                    &states[..]
                };
                Ok(tv_grad_wrt_second(reference, next, focus, *measure)?
                    .map(|g| g.into_iter().map(|x| -x).collect()))
            }
        }
    }

    pub fn states(&self) -> &[Vec<f64>] {
        match self {
            Objective::AttackerValue { states, .. }
            | Objective::Targeted { states, .. }
            | Objective::Discrepancy { states, .. } => states,
        }
    }
}

fn worst_state(a: &PolicyParams, b: &PolicyParams, states: &[Vec<f64>], measure: Measure) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in states.iter().enumerate() {
        let d = distribution_distance(&a.forward(x)?, &b.forward(x)?, measure)?;
        if best.is_none_or(|(_, v)| d > v) {
            best = Some((i, d));
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Runs the learner's own update rule on the imitating state and scores
/// the resulting policy with the attacker objective on `obs`.
pub fn imitate_update(imitator: &LearnerState, obs: &Observation, critic: &ValueParams) -> Result<(LearnerState, f64)> {
    let objective = Objective::attacker_value(&imitator.policy, obs, critic, imitator.gamma)?;
    let next = learner_update(imitator, obs)?;
    let eta = objective.value(&next.policy)?;
    Ok((next, eta))
}

/// Full-batch gradient descent on `½ mean (V_ω(s) − G)²` against the
/// batch's discounted returns (bootstrapped with the initial critic on
/// open segments).
pub fn fit_adversarial_critic(
    critic: &ValueParams,
    obs: &Observation,
    epochs: usize,
    lr: f64,
    gamma: f64,
) -> Result<ValueParams> {
    if obs.is_empty() {
        return Err(Error::Input("empty observation".into()));
    }
    let targets = a2c_targets(critic, obs, gamma)?;
    let states: Vec<&Vec<f64>> = obs.states().collect();
    let n = states.len() as f64;
    let mut w = critic.clone();
    for _ in 0..epochs {
        let mut g = vec![0.0; w.num_params()];
        for (s, t) in states.iter().zip(&targets) {
            let v = w.value(s)?;
            w.accumulate_grad(s, (v - t) / n, &mut g)?;
        }
        w.add_scaled(&g, -lr);
    }
    Ok(w)
}

pub fn critic_mse(critic: &ValueParams, obs: &Observation, targets: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (x, t) in obs.states().zip(targets) {
        let d = critic.value(x)? - t;
        s += d * d;
    }
    Ok(s / targets.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Trajectory;
    use crate::numcore::{ActionSpace, Rng};

    fn batch(rng: &mut Rng, rewards: f64) -> Observation {
        let trs = (0..3)
            .map(|_| Trajectory {
                states: (0..4).map(|_| vec![rng.normal(), rng.normal()]).collect(),
                actions: (0..4).map(|_| Action::Discrete(rng.index(2))).collect(),
                rewards: vec![rewards; 4],
                dones: vec![false, false, false, true],
                bootstrap_state: None,
            })
            .collect();
        Observation::new(trs, 0)
    }

    #[test]
    fn zero_rewards_and_zero_critic_give_zero_objective() {
        let mut rng = Rng::new(1);
        let pol = PolicyParams::mlp(2, 4, ActionSpace::Discrete(2), &mut rng);
        let obs = batch(&mut rng, 0.0);
        let (_, eta) = imitate_update(&LearnerState::vpg(pol, 0.1, 0.9), &obs, &ValueParams::zeros(2, 4)).unwrap();
        assert_eq!(eta, 0.0);
    }

    #[test]
    fn unchanged_policy_scores_mean_advantage() {
        let mut rng = Rng::new(2);
        let pol = PolicyParams::mlp(2, 4, ActionSpace::Discrete(2), &mut rng);
        let obs = batch(&mut rng, 0.0);
        let critic = ValueParams::new(2, 4, &mut rng);
        let (next, eta) = imitate_update(&LearnerState::vpg(pol.clone(), 0.1, 0.9), &obs, &critic).unwrap();
        assert_eq!(next.policy, pol);
        let mean_adv: f64 = obs.states().map(|s| -critic.value(s).unwrap()).sum::<f64>() / 12.0;
        assert!((eta - mean_adv).abs() < 1e-12);
    }

    #[test]
    fn targeted_loss_examples() {
        let uniform = PolicyParams::tabular(1, 2);
        let s = vec![vec![1.0]];
        assert!((targeted_loss(&uniform, &TargetPolicy::Action(1), &s).unwrap() - 2f64.ln()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for z in [0.0, 1.0, 2.0, 5.0] {
            let p = uniform.with_flat(&[0.0, z]).unwrap();
            let l = targeted_loss(&p, &TargetPolicy::Action(1), &s).unwrap();
            assert!(l < prev);
            prev = l;
        }
        // probability 1 − 1e-9 on the target
        let z = (1.0f64 / 1e-9 - 1.0).ln();
        let p = uniform.with_flat(&[0.0, z]).unwrap();
        assert!((targeted_loss(&p, &TargetPolicy::Action(1), &s).unwrap() - 1e-9).abs() < 1e-12);
    }

    #[test]
    fn critic_fit_reduces_error_and_converges_on_constant_return() {
        let mut rng = Rng::new(3);
        let obs = batch(&mut rng, 0.0);
        let critic = ValueParams::new(2, 8, &mut rng);
        let t = vec![0.0; 12];
        let before = critic_mse(&critic, &obs, &t).unwrap();
        let after = critic_mse(&fit_adversarial_critic(&critic, &obs, 20, 0.05, 0.9).unwrap(), &obs, &t).unwrap();
        assert!(after < before);
        assert_eq!(fit_adversarial_critic(&critic, &obs, 0, 0.05, 0.9).unwrap(), critic);

        let one = Observation::new(
            vec![Trajectory {
                states: vec![vec![0.3, -0.2]],
                actions: vec![Action::Discrete(0)],
                rewards: vec![1.5],
                dones: vec![true],
                bootstrap_state: None,
            }],
            0,
        );
        let fitted = fit_adversarial_critic(&critic, &one, 2000, 0.1, 0.9).unwrap();
        assert!((fitted.value(&[0.3, -0.2]).unwrap() - 1.5).abs() < 0.01);
    }
}
