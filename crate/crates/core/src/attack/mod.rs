//! The VA2C-P attacker.
//!
//! Each learner iteration the attacker fits a critic to the clean batch,
//! predicts the learner's next policy with and without poison, crafts the
//! poison by projected gradient descent, and spends budget only on the
//! iterations whose policy discrepancy ranks high enough.

mod craft;
mod discrepancy;
mod effort;
mod jacobian;
mod objective;

use serde::{Deserialize, Serialize};

pub use craft::{craft_poison, Crafted, PgdConfig};
pub(crate) use discrepancy::sign;
pub use discrepancy::{distribution_distance, policy_discrepancy, policy_discrepancy_max, Measure};
pub use effort::{flip_cap, project_onto_power, total_effort, POWER_SLACK};
pub use jacobian::{vpg_reward_jacobian, RewardJacobian};
pub use objective::{critic_mse, fit_adversarial_critic, imitate_update, targeted_loss, Objective, TargetPolicy};

use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::learners::LearnerState;
use crate::numcore::{PolicyParams, Rng, ValueParams};

/// Which part of the observation is poisoned. The declaration order is the
/// hybrid tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aim {
    Rewards,
    Actions,
    States,
    Hybrid,
}

impl std::fmt::Display for Aim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Aim::Rewards => "rewards",
            Aim::Actions => "actions",
            Aim::States => "states",
            Aim::Hybrid => "hybrid",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Aim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rewards" => Ok(Aim::Rewards),
            "actions" => Ok(Aim::Actions),
            "states" => Ok(Aim::States),
            "hybrid" => Ok(Aim::Hybrid),
            other => Err(Error::Config(format!("unknown poison aim `{other}`"))),
        }
    }
}

/// Whether the attacker may read the learner's parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    #[default]
    White,
    Black,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    #[default]
    NonTargeted,
    Targeted(TargetPolicy),
}

/// Separate powers for the hybrid aim's candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridPower {
    pub rewards: f64,
    pub actions: f64,
    pub states: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            hidden: 16,
            epochs: 5,
            lr: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub aim: Aim,
    /// Power `ε`.
    pub eps: f64,
    /// Budget `C`: most iterations that may be poisoned.
    pub budget: usize,
    /// Horizon `K`: learner iterations in the run.
    pub horizon: usize,
    #[serde(default)]
    pub access: Access,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default)]
    pub pgd: PgdConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_eps: Option<HybridPower>,
    #[serde(default)]
    pub critic: CriticConfig,
}

impl AttackConfig {
    pub fn new(aim: Aim, eps: f64, budget: usize, horizon: usize) -> Self {
        AttackConfig {
            aim,
            eps,
            budget,
            horizon,
            access: Access::White,
            goal: Goal::NonTargeted,
            measure: Measure::Tv,
            pgd: PgdConfig::default(),
            hybrid_eps: None,
            critic: CriticConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("attack horizon K must be positive".into()));
        }
        if self.budget > self.horizon {
            return Err(Error::Config(format!(
                "budget C = {} exceeds horizon K = {}",
                self.budget, self.horizon
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Config("attack power must be finite and non-negative".into()));
        }
        if let Some(h) = &self.hybrid_eps {
            if [h.rewards, h.actions, h.states].iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::Config("hybrid powers must be non-negative".into()));
            }
        }
        self.pgd.validate()
    }

    /// Power cap for one concrete aim.
    pub fn power_for(&self, aim: Aim) -> f64 {
        match (&self.hybrid_eps, aim) {
            (Some(h), Aim::Rewards) => h.rewards,
            (Some(h), Aim::Actions) => h.actions,
            (Some(h), Aim::States) => h.states,
            _ => self.eps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttackerState {
    pub critic: ValueParams,
    /// Learner copy (white box) or the attacker's own estimate (black box).
    pub imitator: LearnerState,
    pub psi_history: Vec<f64>,
    pub spent: usize,
    pub rng: Rng,
}

impl AttackerState {
    /// Black-box attackers start from a fresh initialization of the
    /// learner's architecture and hyperparameters.
    pub fn new(cfg: &AttackConfig, learner: &LearnerState, mut rng: Rng) -> Self {
        let critic = ValueParams::new(learner.policy.state_dim(), cfg.critic.hidden, &mut rng);
        let imitator = match cfg.access {
            Access::White => learner.clone(),
            Access::Black => {
                let mut l = learner.clone();
                l.policy = learner.policy.fresh_like(&mut rng);
                l.critic = learner.critic.as_ref().map(|c| c.fresh_like(&mut rng));
                l.iteration = 0;
                l
            }
        };
        AttackerState {
            critic,
            imitator,
            psi_history: Vec::new(),
            spent: 0,
            rng,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PoisonOutcome {
    pub delivered: Observation,
    pub attacked: bool,
    pub psi_hat: f64,
    pub effort: f64,
    /// Power cap that applies to `aim`.
    pub power: f64,
    pub aim: Aim,
    pub clean_next: PolicyParams,
    pub poisoned_next: PolicyParams,
}

/// `k` is 1-based. Attacks iff budget remains and the latest entry of
/// `psi` reaches the nearest-rank quantile of `psi` at level
/// `1 − (C − c)/(K − k)`, clamped to `[0, 1]`; the last iteration spends
/// whatever budget is left.
pub fn decide_attack(psi: &[f64], budget: usize, spent: usize, horizon: usize, k: usize) -> bool {
    if spent >= budget {
        return false;
    }
    if k >= horizon {
        return true;
    }
    let Some(&cur) = psi.last() else {
        return false;
    };
    let level = (1.0 - (budget - spent) as f64 / (horizon - k) as f64).clamp(0.0, 1.0);
    let mut sorted = psi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    cur >= sorted[rank - 1]
}

/// Aim with the largest discrepancy; exact ties go to the earlier aim in
/// declaration order.
pub fn hybrid_select(per_aim: &[(Aim, f64)]) -> Result<Aim> {
    let mut items = per_aim.to_vec();
    items.sort_by_key(|(a, _)| *a);
    let mut best: Option<(Aim, f64)> = None;
    for (a, v) in items {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::Input("hybrid selection over no aims".into()))
}

/// How the attacker decides whether to deliver this iteration's poison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum When {
    /// The adaptive quantile rule.
    Quantile,
    /// A fixed decision made elsewhere (random schedules).
    Scheduled(bool),
}

/// One attacker turn, called once per learner iteration before the
/// learner updates.
pub fn attacker_step(
    state: &mut AttackerState,
    cfg: &AttackConfig,
    learner: Option<&LearnerState>,
    obs: &Observation,
    when: When,
) -> Result<PoisonOutcome> {
    let imitator = match cfg.access {
        Access::White => learner
            .ok_or_else(|| Error::Config("white-box attacker needs the learner's parameters".into()))?
            .clone(),
        Access::Black => state.imitator.clone(),
    };
    let k = state.psi_history.len() + 1;
    state.critic = fit_adversarial_critic(&state.critic, obs, cfg.critic.epochs, cfg.critic.lr, imitator.gamma)?;
    let objective = match &cfg.goal {
        Goal::NonTargeted => Objective::attacker_value(&imitator.policy, obs, &state.critic, imitator.gamma)?,
        Goal::Targeted(t) => Objective::targeted(t.clone(), obs),
    };
    let states: Vec<Vec<f64>> = obs.states().cloned().collect();

    let aims: Vec<Aim> = if cfg.aim == Aim::Hybrid {
        vec![Aim::Rewards, Aim::Actions, Aim::States]
    } else {
        vec![cfg.aim]
    };
    let mut candidates = Vec::with_capacity(aims.len());
    for aim in aims {
        let c = craft_poison(&imitator, obs, aim, cfg.power_for(aim), &objective, &cfg.pgd, &mut state.rng)?;
        let psi = policy_discrepancy(&c.clean_next.policy, &c.poisoned_next.policy, &states, cfg.measure)?;
        candidates.push((aim, psi, c));
    }
    let chosen = hybrid_select(&candidates.iter().map(|(a, p, _)| (*a, *p)).collect::<Vec<_>>())?;
    let (aim, psi_hat, crafted) = candidates
        .into_iter()
        .find(|(a, _, _)| *a == chosen)
        .expect("selected aim was evaluated");

    state.psi_history.push(psi_hat);
    let attack = match when {
        When::Quantile => decide_attack(&state.psi_history, cfg.budget, state.spent, cfg.horizon, k),
        When::Scheduled(b) => b && state.spent < cfg.budget,
    };
    let power = cfg.power_for(aim);
    let (delivered, effort, next) = if attack {
        state.spent += 1;
        let e = total_effort(aim, obs, &crafted.obs)?;
        (crafted.obs, e, crafted.poisoned_next.clone())
    } else {
        (obs.clone(), 0.0, crafted.clean_next.clone())
    };
    state.imitator = match cfg.access {
        Access::White => imitator,
        Access::Black => next,
    };
    Ok(PoisonOutcome {
        delivered,
        attacked: attack,
        psi_hat,
        effort,
        power,
        aim,
        clean_next: crafted.clean_next.policy,
        poisoned_next: crafted.poisoned_next.policy,
    })
}

/// VA2C-P: [`attacker_step`] with the adaptive quantile schedule.
pub fn va2cp_step(
    state: &mut AttackerState,
    cfg: &AttackConfig,
    learner: Option<&LearnerState>,
    obs: &Observation,
) -> Result<PoisonOutcome> {
    attacker_step(state, cfg, learner, obs, When::Quantile)
}
