use serde::{Deserialize, Serialize};

use super::effort::{extract, flip_cap, inject, Layout};
use super::jacobian::{policy_reward_map, RewardJacobian};
use super::objective::Objective;
use super::Aim;
use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::learners::{learner_update, Algo, LearnerState};
use crate::numcore::{Action, Head, PolicyParams, Rng};

/// Projected gradient descent knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdConfig {
    /// Step length as a fraction of the power `ε`, measured in effort units.
    pub step_frac: f64,
    pub max_iters: usize,
    /// Finite-difference step, scaled by `1 + |value|`.
    pub fd_delta: f64,
    pub tol: f64,
    /// Coordinates sampled per finite-difference gradient; 0 means all.
    pub fd_coords: usize,
    /// Extra random starts on the power sphere for the discrepancy
    /// objective, whose gradient vanishes at the clean point.
    pub restarts: usize,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            step_frac: 0.05,
            max_iters: 30,
            fd_delta: 1e-3,
            tol: 1e-6,
            fd_coords: 256,
            restarts: 3,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("pgd.max_iters must be at least 1".into()));
        }
        if !(self.step_frac > 0.0) || !(self.fd_delta > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::Config("pgd step_frac and fd_delta must be positive, tol non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Crafted {
    pub obs: Observation,
    pub clean_next: LearnerState,
    pub poisoned_next: LearnerState,
    pub clean_value: f64,
    pub value: f64,
    /// Per-step objective decrease of the committed flips (discrete actions).
    pub gains: Option<Vec<f64>>,
}

struct Evaluator<'a> {
    imitator: &'a LearnerState,
    clean: &'a Observation,
    aim: Aim,
    objective: &'a Objective,
    clean_next: &'a PolicyParams,
    base: Vec<f64>,
    /// Exact reward-to-policy map, when the update is linear in the aim.
    jac: Option<RewardJacobian>,
    /// Whether the gradient may go through `jac` instead of finite
    /// differences.
    analytic_grad: bool,
}

impl Evaluator<'_> {
    fn next_policy(&self, d: &[f64]) -> Result<PolicyParams> {
        if let Some(j) = &self.jac {
            let mut p = self.clean_next.clone();
            p.add_scaled(&j.apply(d), 1.0);
            return Ok(p);
        }
        let x: Vec<f64> = self.base.iter().zip(d).map(|(a, b)| a + b).collect();
        Ok(learner_update(self.imitator, &inject(self.aim, self.clean, &x)?)?.policy)
    }

    fn value(&self, d: &[f64]) -> Result<f64> {
        let v = self.objective.value(&self.next_policy(d)?)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    }

    fn grad(&self, d: &[f64], at: f64, pgd: &PgdConfig, rng: &mut Rng) -> Result<Vec<f64>> {
        if let (Some(j), true) = (&self.jac, self.analytic_grad) {
            if let Some(g) = self.objective.grad(&self.next_policy(d)?)? {
                return Ok(j.transpose_apply(&g));
            }
        }
        let n = d.len();
        let coords: Vec<usize> = if pgd.fd_coords == 0 || pgd.fd_coords >= n {
            (0..n).collect()
        } else {
            rng.subset(n, pgd.fd_coords)
        };
        let mut g = vec![0.0; n];
        let mut probe = d.to_vec();
        for i in coords {
            let h = pgd.fd_delta * (1.0 + (self.base[i] + d[i]).abs());
            probe[i] = d[i] + h;
            let f = self.value(&probe)?;
            probe[i] = d[i];
            if f.is_finite() {
                g[i] = (f - at) / h;
            }
        }
        Ok(g)
    }
}

fn is_discrete(obs: &Observation) -> bool {
    matches!(
        obs.trajectories.first().and_then(|t| t.actions.first()),
        Some(Action::Discrete(_))
    )
}

/// Approximately minimizes `objective` over the power ball of one poison
/// aim. Reward poison against VPG uses the exact reward Jacobian; other
/// pairs use forward finite differences through the learner's update.
/// Discrete actions are flipped greedily under the flip cap.
pub fn craft_poison(
    imitator: &LearnerState,
    clean: &Observation,
    aim: Aim,
    eps: f64,
    objective: &Objective,
    pgd: &PgdConfig,
    rng: &mut Rng,
) -> Result<Crafted> {
    if aim == Aim::Hybrid {
        return Err(Error::Input("craft one aim at a time; hybrid is chosen by the caller".into()));
    }
    let clean_next = learner_update(imitator, clean)?;
    let clean_value = objective.value(&clean_next.policy)?;
    let unchanged = |clean_next: LearnerState| Crafted {
        obs: clean.clone(),
        poisoned_next: clean_next.clone(),
        clean_next,
        clean_value,
        value: clean_value,
        gains: None,
    };
    if !(eps > 0.0) {
        return Ok(unchanged(clean_next));
    }
    if aim == Aim::Actions && is_discrete(clean) {
        return craft_discrete_actions(imitator, clean, eps, objective, pgd, rng, clean_next, clean_value);
    }

    let layout = Layout::for_aim(aim, clean)?;
    // A2C's reward map only speeds up evaluation; its gradient stays a
    // finite-difference estimate
    let jac = if aim == Aim::Rewards {
        Some(policy_reward_map(imitator, clean)?)
    } else {
        None
    };
    let ev = Evaluator {
        imitator,
        clean,
        aim,
        objective,
        clean_next: &clean_next.policy,
        base: extract(aim, clean),
        jac,
        analytic_grad: imitator.algo == Algo::Vpg,
    };
    let n = ev.base.len();
    let mut starts = vec![vec![0.0; n]];
    if matches!(objective, Objective::Discrepancy { .. }) {
        for _ in 0..pgd.restarts {
            let mut d = rng.unit_vector(n);
            let e = layout.effort(&d);
            d.iter_mut().for_each(|x| *x *= eps / e);
            layout.project(&mut d, eps);
            starts.push(d);
        }
    }

    let mut best_d = vec![0.0; n];
    let mut best_f = clean_value;
    for start in starts {
        let mut d = start;
        let mut f = ev.value(&d)?;
        let mut beta = pgd.step_frac * eps;
        for _ in 0..pgd.max_iters {
            let g = ev.grad(&d, f, pgd, rng)?;
            let gn = layout.effort(&g);
            if !(gn > 0.0) || !gn.is_finite() {
                break;
            }
            let mut cand: Vec<f64> = d.iter().zip(&g).map(|(x, gi)| x - beta / gn * gi).collect();
            layout.project(&mut cand, eps);
            let fc = ev.value(&cand)?;
            if fc < f {
                let gain = f - fc;
                d = cand;
                f = fc;
                if gain < pgd.tol {
                    break;
                }
            } else {
                beta *= 0.5;
                if beta < 1e-9 * eps {
                    break;
                }
            }
        }
        if f < best_f {
            best_f = f;
            best_d = d;
        }
    }

    if best_d.iter().all(|x| *x == 0.0) {
        return Ok(unchanged(clean_next));
    }
    let x: Vec<f64> = ev.base.iter().zip(&best_d).map(|(a, b)| a + b).collect();
    let obs = inject(aim, clean, &x)?;
    let poisoned_next = learner_update(imitator, &obs)?;
    let value = objective.value(&poisoned_next.policy)?;
    if !(value <= clean_value) {
        return Ok(unchanged(clean_next));
    }
    Ok(Crafted {
        obs,
        clean_next,
        poisoned_next,
        clean_value,
        value,
        gains: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn craft_discrete_actions(
    imitator: &LearnerState,
    clean: &Observation,
    eps: f64,
    objective: &Objective,
    pgd: &PgdConfig,
    rng: &mut Rng,
    clean_next: LearnerState,
    clean_value: f64,
) -> Result<Crafted> {
    let n_actions = match imitator.policy.head {
        Head::Softmax { n_actions } => n_actions,
        Head::Gaussian { .. } => return Err(Error::Shape("discrete actions with a Gaussian policy".into())),
    };
    let base = clean.actions();
    let n = base.len();
    let eval = |acts: &[Action]| -> Result<f64> {
        let v = objective.value(&learner_update(imitator, &clean.with_actions(acts)?)?.policy)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };
    let steps: Vec<usize> = if pgd.fd_coords == 0 || pgd.fd_coords >= n {
        (0..n).collect()
    } else {
        rng.subset(n, pgd.fd_coords)
    };
    let mut gain = vec![0.0; n];
    let mut alt = vec![None; n];
    let mut trial = base.clone();
    for &t in &steps {
        let a = base[t].index().unwrap_or(0);
        for b in (0..n_actions).filter(|&b| b != a) {
            trial[t] = Action::Discrete(b);
            let g = clean_value - eval(&trial)?;
            if g > gain[t] {
                gain[t] = g;
                alt[t] = Some(b);
            }
        }
        trial[t] = base[t].clone();
    }
    let mut order: Vec<usize> = (0..n).filter(|&t| alt[t].is_some()).collect();
    order.sort_by(|&a, &b| gain[b].total_cmp(&gain[a]).then(a.cmp(&b)));

    let cap = flip_cap(eps, n);
    let mut committed = base.clone();
    let mut cur = clean_value;
    let mut flips = 0;
    let mut kept = vec![0.0; n];
    for t in order {
        if flips >= cap {
            break;
        }
        let prev = committed[t].clone();
        committed[t] = Action::Discrete(alt[t].expect("filtered"));
        let f = eval(&committed)?;
        if f < cur {
            kept[t] = cur - f;
            cur = f;
            flips += 1;
        } else {
            committed[t] = prev;
        }
    }
    if flips == 0 {
        return Ok(Crafted {
            obs: clean.clone(),
            poisoned_next: clean_next.clone(),
            clean_next,
            clean_value,
            value: clean_value,
            gains: Some(kept),
        });
    }
    let obs = clean.with_actions(&committed)?;
    let poisoned_next = learner_update(imitator, &obs)?;
    let value = objective.value(&poisoned_next.policy)?;
    Ok(Crafted {
        obs,
        clean_next,
        poisoned_next,
        clean_value,
        value,
        gains: Some(kept),
    })
}
