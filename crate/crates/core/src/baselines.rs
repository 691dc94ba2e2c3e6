//! Reference attackers: random poisoning on a random schedule, AC-P
//! (VA2C-P crafting on a random schedule) and targeted FGSM on states.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attack::{attacker_step, flip_cap, project_onto_power, total_effort, Aim, AttackConfig, AttackerState, PoisonOutcome, TargetPolicy, When};
use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::learners::LearnerState;
use crate::numcore::{Action, ActionSpace, Head, PolicyParams, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Acp,
    FgsmTargeted,
}

/// Uniform `C`-subset of the 1-based iterations `1..=K`.
pub fn random_schedule(budget: usize, horizon: usize, rng: &mut Rng) -> BTreeSet<usize> {
    rng.subset(horizon, budget.min(horizon)).into_iter().map(|i| i + 1).collect()
}

/// Perturbation of effort exactly `eps` in a uniformly random direction.
/// Discrete actions flip `⌊εN⌋` random steps to random other actions.
pub fn random_perturb(obs: &Observation, aim: Aim, eps: f64, rng: &mut Rng) -> Result<Observation> {
    if !(eps > 0.0) || obs.is_empty() {
        return Ok(obs.clone());
    }
    let n = obs.num_steps();
    let root_n = (n as f64).sqrt();
    match aim {
        Aim::Rewards => {
            let u = rng.unit_vector(n);
            let r: Vec<f64> = obs.rewards().iter().zip(&u).map(|(r, d)| r + eps * root_n * d).collect();
            obs.with_rewards(&r)
        }
        Aim::States => {
            // random split of the ℓ1 budget over steps, random direction per step
            let shares = rng.simplex(n);
            let mut flat = obs.states_flat();
            let width = flat.len() / n;
            for (t, share) in shares.iter().enumerate() {
                let u = rng.unit_vector(width);
                for (x, d) in flat[t * width..(t + 1) * width].iter_mut().zip(&u) {
                    *x += eps * root_n * share * d;
                }
            }
            obs.with_states_flat(&flat)
        }
        Aim::Actions => {
            let acts = obs.actions();
            let out: Vec<Action> = match acts.first() {
                Some(Action::Discrete(_)) => {
                    let n_actions = acts.iter().filter_map(Action::index).max().unwrap_or(0) + 1;
                    random_flips(&acts, n_actions.max(2), eps, rng)
                }
                _ => {
                    let shares = rng.simplex(n);
                    acts.iter()
                        .zip(&shares)
                        .map(|(a, share)| match a {
                            Action::Continuous(v) => {
                                let u = rng.unit_vector(v.len());
                                Action::Continuous(v.iter().zip(&u).map(|(x, d)| x + eps * root_n * share * d).collect())
                            }
                            other => other.clone(),
                        })
                        .collect()
                }
            };
            obs.with_actions(&out)
        }
        Aim::Hybrid => Err(Error::Input("random poisoning needs a single aim".into())),
    }
}

fn random_flips(acts: &[Action], n_actions: usize, eps: f64, rng: &mut Rng) -> Vec<Action> {
    let mut out = acts.to_vec();
    for t in rng.subset(acts.len(), flip_cap(eps, acts.len())) {
        let a = acts[t].index().unwrap_or(0);
        let b = (a + 1 + rng.index(n_actions - 1)) % n_actions;
        out[t] = Action::Discrete(b);
    }
    out
}

/// Like [`random_perturb`] but with the action space known up front.
pub fn random_perturb_in(obs: &Observation, aim: Aim, eps: f64, space: ActionSpace, rng: &mut Rng) -> Result<Observation> {
    match (aim, space) {
        (Aim::Actions, ActionSpace::Discrete(n)) if eps > 0.0 && !obs.is_empty() && n >= 2 => {
            obs.with_actions(&random_flips(&obs.actions(), n, eps, rng))
        }
        _ => random_perturb(obs, aim, eps, rng),
    }
}

/// Random-poisoning baseline turn: perturbs on scheduled iterations only.
pub fn random_step(
    obs: &Observation,
    aim: Aim,
    eps: f64,
    space: ActionSpace,
    scheduled: bool,
    rng: &mut Rng,
) -> Result<(Observation, f64)> {
    if !scheduled {
        return Ok((obs.clone(), 0.0));
    }
    let p = random_perturb_in(obs, aim, eps, space, rng)?;
    // guard against rounding just above the cap
    let p = project_onto_power(aim, obs, &p, eps, None)?;
    let e = total_effort(aim, obs, &p)?;
    Ok((p, e))
}

/// AC-P: VA2C-P crafting, delivered on a pre-drawn random schedule.
pub fn acp_step(
    state: &mut AttackerState,
    cfg: &AttackConfig,
    learner: Option<&LearnerState>,
    obs: &Observation,
    schedule: &BTreeSet<usize>,
) -> Result<PoisonOutcome> {
    let k = state.psi_history.len() + 1;
    attacker_step(state, cfg, learner, obs, When::Scheduled(schedule.contains(&k)))
}

/// `s + ε · sign(∇_s π(a†|s))` with `a†` the target's action at `s`.
pub fn fgsm_targeted_step(policy: &PolicyParams, state: &[f64], target: &TargetPolicy, eps: f64) -> Result<Vec<f64>> {
    let a = match (&policy.head, target) {
        (Head::Softmax { n_actions }, TargetPolicy::Action(a)) if a < n_actions => *a,
        (Head::Softmax { .. }, TargetPolicy::Action(a)) => {
            return Err(Error::Domain(format!("target action {a} out of range")))
        }
        _ => return Err(Error::Unsupported("FGSM targets discrete-action policies only".into())),
    };
    if !(eps > 0.0) {
        return Ok(state.to_vec());
    }
    let grad = action_prob_state_grad(policy, state, a)?;
    Ok(sign_step(state, &grad, eps))
}

pub(crate) fn sign_step(state: &[f64], grad: &[f64], eps: f64) -> Vec<f64> {
    state
        .iter()
        .zip(grad)
        .map(|(s, g)| s + eps * crate::attack::sign(*g))
        .collect()
}

/// `∇_s π(a|s)` for a softmax policy.
fn action_prob_state_grad(policy: &PolicyParams, state: &[f64], a: usize) -> Result<Vec<f64>> {
    let dist = policy.forward(state)?;
    let p = dist.probs().expect("softmax head");
    // ∂p_a/∂z_j = p_a (δ_aj − p_j)
    let d_out: Vec<f64> = (0..p.len())
        .map(|j| p[a] * (if j == a { 1.0 } else { 0.0 } - p[j]))
        .collect();
    Ok(policy.output_backward(state, &d_out)?.1)
}

/// Applies FGSM to every state of the batch. Returns the poisoned batch
/// and the largest per-state ∞-norm perturbation.
pub fn fgsm_poison(policy: &PolicyParams, obs: &Observation, target: &TargetPolicy, eps: f64) -> Result<(Observation, f64)> {
    let mut flat = Vec::with_capacity(obs.states_flat().len());
    let mut linf: f64 = 0.0;
    for s in obs.states() {
        let p = fgsm_targeted_step(policy, s, target, eps)?;
        linf = s.iter().zip(&p).fold(linf, |m, (a, b)| m.max((a - b).abs()));
        flat.extend(p);
    }
    Ok((obs.with_states_flat(&flat)?, linf))
}
