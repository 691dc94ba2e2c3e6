//! The learner-vs-attacker game loop, run configs, sweeps and report files.

mod config;
mod io;
mod radius;
mod sweep;

use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    load_config, AttackerConfig, AttackerKind, EnvConfig, LearnerConfig, PolicyArch, RadiusConfig, RunConfig,
    RunSection,
};
pub use io::{
    read_summaries, report, write_csv, write_radius_csv, write_run, write_summary_json, RadiusRow, CSV_HEADER,
};
pub use radius::run_radius;
pub use sweep::{aggregate, load_sweep, run_sweep, AggregateRow, SweepAxes, SweepResult, SweepRun, SweepSpec};

use crate::attack::{
    policy_discrepancy, va2cp_step, AttackConfig, AttackerState, Goal, PoisonOutcome, TargetPolicy,
    POWER_SLACK,
};
use crate::baselines::{acp_step, fgsm_poison, random_schedule, random_step};
use crate::envs::{one_hot, policy_evaluation, rollout, Env, Observation, RolloutMode, SegmentCollector};
use crate::error::{Error, Result};
use crate::learners::{learner_update, Algo, LearnerState};
use crate::numcore::{ActionSpace, PolicyParams, Rng};

/// Finished episodes averaged for the A2C reward column.
const REWARD_WINDOW: usize = 10;

/// One learner iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub k: usize,
    /// Mean undiscounted return of the clean episodes behind this iteration.
    pub reward: f64,
    pub attacked: bool,
    pub psi_hat: f64,
    pub effort: f64,
    /// Attacks delivered so far.
    pub budget: usize,
    pub wall_ms: f64,
    /// Power cap the effort is checked against.
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub key: String,
    pub seed: u64,
    pub iterations: usize,
    /// Mean reward over the last 10% of iterations.
    pub final_reward: f64,
    pub total_attacks: usize,
    pub budget: usize,
    /// Exact discounted `η` on tabular environments, Monte-Carlo mean
    /// return otherwise.
    pub eval_return: f64,
    /// Share of each action in evaluation episodes (discrete actions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_fractions: Option<Vec<f64>>,
    /// Share of the configured target action, with or without an attacker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_fraction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub rows: Vec<Row>,
    pub summary: Summary,
    pub learner: LearnerState,
    /// `(k, policy)` every `checkpoint_period` iterations.
    pub checkpoints: Vec<(usize, PolicyParams)>,
}

/// Stable identifier of a config, independent of the seed.
pub fn run_key(cfg: &RunConfig) -> String {
    let env = match &cfg.env {
        EnvConfig::River(_) => "river",
        EnvConfig::Bandit { .. } => "bandit",
        EnvConfig::Random { .. } => "random_mdp",
        EnvConfig::Tabular { .. } => "tabular",
        EnvConfig::Cartpole(_) => "cartpole",
        EnvConfig::Pointmass(_) => "pointmass",
    };
    let a = &cfg.attacker;
    let mut key = format!("{env}/{}/{}", cfg.learner.algo, a.kind);
    if a.kind != AttackerKind::None {
        let budget = a.budget_for(cfg.run.iterations).unwrap_or(0);
        key.push_str(&format!("/{}/eps={}/C={budget}", a.aim, a.eps));
        if a.access == crate::attack::Access::Black {
            key.push_str("/black");
        }
    }
    key
}

/// Mean return of `policy`: exact discounted `η` on tabular environments,
/// mean undiscounted episode return over `episodes` rollouts otherwise.
pub fn evaluate_policy(policy: &PolicyParams, env: &Env, episodes: usize, rng: &mut Rng) -> Result<f64> {
    if let Some(mdp) = env.tabular() {
        let table = tabular_table(policy, mdp.n_states)?;
        return Ok(policy_evaluation(mdp, &table)?.eta);
    }
    if episodes < 1 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    let obs = rollout(policy, env, RolloutMode::Episodes(episodes), rng)?;
    Ok(mean(&obs.episode_returns()))
}

/// Action probabilities of a policy over one-hot tabular states.
pub fn tabular_table(policy: &PolicyParams, n_states: usize) -> Result<Vec<Vec<f64>>> {
    (0..n_states)
        .map(|s| {
            policy
                .forward(&one_hot(n_states, s))?
                .probs()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Unsupported("tabular evaluation needs a softmax policy".into()))
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn action_fractions(obs: &Observation, n: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n];
    let acts = obs.actions();
    for a in &acts {
        if let Some(i) = a.index() {
            counts[i] += 1;
        }
    }
    let total = acts.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

enum Adversary {
    None,
    Random { cfg: AttackConfig, schedule: BTreeSet<usize>, rng: Rng },
    Crafting { cfg: AttackConfig, state: Box<AttackerState>, schedule: Option<BTreeSet<usize>> },
    Fgsm { cfg: AttackConfig, target: TargetPolicy, schedule: BTreeSet<usize> },
}

struct Turn {
    delivered: Observation,
    attacked: bool,
    psi_hat: f64,
    effort: f64,
    power: f64,
}

impl Turn {
    fn clean(obs: &Observation) -> Self {
        Turn {
            delivered: obs.clone(),
            attacked: false,
            psi_hat: 0.0,
            effort: 0.0,
            power: 0.0,
        }
    }
}

impl From<PoisonOutcome> for Turn {
    fn from(o: PoisonOutcome) -> Self {
        Turn {
            delivered: o.delivered,
            attacked: o.attacked,
            psi_hat: o.psi_hat,
            effort: o.effort,
            power: o.power,
        }
    }
}

fn realized_discrepancy(learner: &LearnerState, clean: &Observation, poisoned: &Observation, cfg: &AttackConfig) -> Result<f64> {
    let a = learner_update(learner, clean)?;
    let b = learner_update(learner, poisoned)?;
    let states: Vec<Vec<f64>> = clean.states().cloned().collect();
    policy_discrepancy(&a.policy, &b.policy, &states, cfg.measure)
}

impl Adversary {
    fn build(cfg: &RunConfig, learner: &LearnerState, root: &mut Rng) -> Result<Self> {
        let mut atk_rng = root.split();
        let mut sched_rng = root.split();
        let kind = cfg.attacker.kind;
        if kind == AttackerKind::None {
            return Ok(Adversary::None);
        }
        let acfg = cfg.attacker.attack_config(cfg.run.iterations)?;
        let schedule = random_schedule(acfg.budget, acfg.horizon, &mut sched_rng);
        Ok(match kind {
            AttackerKind::None => unreachable!(),
            AttackerKind::Random => Adversary::Random { cfg: acfg, schedule, rng: atk_rng },
            AttackerKind::Acp | AttackerKind::Va2cp => {
                let state = AttackerState::new(&acfg, learner, atk_rng.split());
                Adversary::Crafting {
                    cfg: acfg,
                    state: Box::new(state),
                    schedule: (kind == AttackerKind::Acp).then_some(schedule),
                }
            }
            AttackerKind::Fgsm => {
                let target = match &acfg.goal {
                    Goal::Targeted(t) => t.clone(),
                    Goal::NonTargeted => return Err(Error::Config("FGSM needs a targeted goal".into())),
                };
                Adversary::Fgsm { cfg: acfg, target, schedule }
            }
        })
    }

    fn turn(&mut self, k: usize, learner: &LearnerState, obs: &Observation, space: ActionSpace) -> Result<Turn> {
        match self {
            Adversary::None => Ok(Turn::clean(obs)),
            Adversary::Random { cfg, schedule, rng } => {
                let scheduled = schedule.contains(&k);
                let (delivered, effort) = random_step(obs, cfg.aim, cfg.eps, space, scheduled, rng)?;
                let psi_hat = if scheduled {
                    realized_discrepancy(learner, obs, &delivered, cfg)?
                } else {
                    0.0
                };
                Ok(Turn {
                    delivered,
                    attacked: scheduled,
                    psi_hat,
                    effort,
                    power: cfg.eps,
                })
            }
            Adversary::Crafting { cfg, state, schedule } => {
                let outcome = match schedule {
                    Some(s) => acp_step(state, cfg, Some(learner), obs, s)?,
                    None => va2cp_step(state, cfg, Some(learner), obs)?,
                };
                Ok(outcome.into())
            }
            Adversary::Fgsm { cfg, target, schedule } => {
                if !schedule.contains(&k) {
                    return Ok(Turn::clean(obs));
                }
                let (delivered, linf) = fgsm_poison(&learner.policy, obs, target, cfg.eps)?;
                let psi_hat = realized_discrepancy(learner, obs, &delivered, cfg)?;
                Ok(Turn {
                    delivered,
                    attacked: true,
                    psi_hat,
                    effort: linf,
                    power: cfg.eps,
                })
            }
        }
    }

    fn budget(&self) -> usize {
        match self {
            Adversary::None => 0,
            Adversary::Random { cfg, .. } | Adversary::Crafting { cfg, .. } | Adversary::Fgsm { cfg, .. } => cfg.budget,
        }
    }
}

/// Runs `K` iterations of rollout, attacker turn and learner update on the
/// delivered batch.
///
/// Every iteration checks the feasibility invariants: effort within the
/// power cap, attacks within the budget, and clean delivery whenever the
/// attacker holds back. A violation aborts the run with
/// [`Error::Invariant`].
pub fn run_game(cfg: &RunConfig) -> Result<RunLog> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let space = env.action_space();
    let mut root = Rng::new(cfg.run.seed);
    let mut init_rng = root.split();
    let mut roll_rng = root.split();
    let mut eval_rng = root.split();
    let mut learner = cfg.learner.build(&env, &mut init_rng)?;
    let mut adversary = Adversary::build(cfg, &learner, &mut root)?;
    let budget = adversary.budget();
    let mut collector = match cfg.learner.algo {
        Algo::A2c => Some(SegmentCollector::new(env.clone(), cfg.learner.n_envs, &mut roll_rng)),
        Algo::Vpg => None,
    };

    let iterations = cfg.run.iterations;
    let mut rows = Vec::with_capacity(iterations);
    let mut checkpoints = Vec::new();
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(REWARD_WINDOW);
    let mut last_reward = 0.0;
    let mut attacks = 0usize;
    for k in 1..=iterations {
        let t0 = Instant::now();
        let obs = match collector.as_mut() {
            Some(c) => {
                let (obs, finished) = c.collect(&learner.policy, cfg.learner.n_steps)?;
                for r in finished {
                    if recent.len() == REWARD_WINDOW {
                        recent.pop_front();
                    }
                    recent.push_back(r);
                }
                if !recent.is_empty() {
                    last_reward = mean(recent.make_contiguous());
                }
                obs
            }
            None => {
                let obs = rollout(&learner.policy, &env, RolloutMode::Episodes(cfg.learner.episodes), &mut roll_rng)?;
                last_reward = mean(&obs.episode_returns());
                obs
            }
        };

        let turn = adversary.turn(k, &learner, &obs, space)?;
        if turn.attacked {
            attacks += 1;
        } else if turn.delivered != obs {
            return Err(Error::Invariant(format!("iteration {k}: poisoned data delivered without an attack")));
        }
        if attacks > budget {
            return Err(Error::Invariant(format!("iteration {k}: {attacks} attacks exceed budget {budget}")));
        }
        if turn.effort > turn.power * (1.0 + POWER_SLACK) {
            return Err(Error::Invariant(format!(
                "iteration {k}: effort {} exceeds power {}",
                turn.effort, turn.power
            )));
        }

        learner = learner_update(&learner, &turn.delivered)?;
        if !learner.policy.all_finite() {
            return Err(Error::Numeric(format!("iteration {k}: learner parameters diverged")));
        }
        if cfg.run.checkpoint_period > 0 && k % cfg.run.checkpoint_period == 0 {
            checkpoints.push((k, learner.policy.clone()));
        }
        rows.push(Row {
            k,
            reward: last_reward,
            attacked: turn.attacked,
            psi_hat: turn.psi_hat,
            effort: turn.effort,
            budget: attacks,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            power: turn.power,
        });
    }

    let tail = iterations.div_ceil(10).max(1);
    let final_reward = mean(&rows[rows.len() - tail..].iter().map(|r| r.reward).collect::<Vec<_>>());
    let eval_return = evaluate_policy(&learner.policy, &env, cfg.run.eval_episodes, &mut eval_rng)?;
    let (action_fractions, target_fraction) = match space {
        ActionSpace::Discrete(n) => {
            let obs = rollout(&learner.policy, &env, RolloutMode::Episodes(cfg.run.eval_episodes), &mut eval_rng)?;
            let fr = action_fractions(&obs, n);
            let tf = match &cfg.attacker.goal {
                Goal::Targeted(TargetPolicy::Action(a)) if *a < n => Some(fr[*a]),
                _ => None,
            };
            (Some(fr), tf)
        }
        ActionSpace::Continuous(_) => (None, None),
    };
    Ok(RunLog {
        rows,
        summary: Summary {
            key: run_key(cfg),
            seed: cfg.run.seed,
            iterations,
            final_reward,
            total_attacks: attacks,
            budget,
            eval_return,
            action_fractions,
            target_fraction,
        },
        learner,
        checkpoints,
    })
}
