use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{Access, Aim, AttackConfig, CriticConfig, Goal, HybridPower, Measure, PgdConfig};
use crate::envs::{bandit_mdp, random_mdp, river_mdp_with, CartPole, Env, PointMass, RiverConfig, TabularMDP};
use crate::error::{Error, Result};
use crate::learners::{Algo, LearnerState};
use crate::numcore::{ActionSpace, PolicyParams, Rng, ValueParams};
use crate::vulnerability::{PolicySampling, RadiusSearch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvConfig {
    River(RiverConfig),
    Bandit {
        arms: Vec<f64>,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    /// Random tabular instance drawn from its own seed.
    Random {
        n_states: usize,
        n_actions: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Tabular MDP stored as TOML; relative paths resolve against the
    /// config file's directory.
    Tabular { path: PathBuf },
    Cartpole(CartPole),
    Pointmass(PointMass),
}

fn default_gamma() -> f64 {
    0.99
}

impl EnvConfig {
    pub fn build(&self) -> Result<Env> {
        let env = match self {
            EnvConfig::River(c) => Env::Tabular(river_mdp_with(c)),
            EnvConfig::Bandit { arms, gamma } => {
                if arms.is_empty() {
                    return Err(Error::Config("bandit needs at least one arm".into()));
                }
                Env::Tabular(bandit_mdp(arms, *gamma))
            }
            EnvConfig::Random { n_states, n_actions, gamma, seed } => {
                if *n_states == 0 || *n_actions == 0 {
                    return Err(Error::Config("random MDP needs states and actions".into()));
                }
                Env::Tabular(random_mdp(*n_states, *n_actions, *gamma, &mut Rng::new(*seed)))
            }
            EnvConfig::Tabular { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read MDP file {}: {e}", path.display())))?;
                Env::Tabular(TabularMDP::from_toml_str(&text)?)
            }
            EnvConfig::Cartpole(c) => Env::CartPole(c.clone()),
            EnvConfig::Pointmass(p) => Env::PointMass(p.clone()),
        };
        if let Env::Tabular(m) = &env {
            m.validate()?;
        }
        Ok(env)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let EnvConfig::Tabular { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyArch {
    #[default]
    Mlp,
    /// One logit per (state, action); tabular environments only.
    Tabular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub algo: Algo,
    pub policy: PolicyArch,
    pub hidden: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub critic_hidden: usize,
    pub gamma: f64,
    /// Episodes per iteration (VPG).
    pub episodes: usize,
    /// Parallel environment copies (A2C).
    pub n_envs: usize,
    /// Steps per copy per iteration (A2C).
    pub n_steps: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            algo: Algo::Vpg,
            policy: PolicyArch::Mlp,
            hidden: 64,
            lr_policy: 0.01,
            lr_critic: 0.01,
            critic_hidden: 64,
            gamma: 0.99,
            episodes: 10,
            n_envs: 16,
            n_steps: 5,
        }
    }
}

impl LearnerConfig {
    pub fn build(&self, env: &Env, rng: &mut Rng) -> Result<LearnerState> {
        let dim = env.state_dim();
        let space = env.action_space();
        let policy = match self.policy {
            PolicyArch::Mlp => PolicyParams::mlp(dim, self.hidden, space, rng),
            PolicyArch::Tabular => match (env.tabular(), space) {
                (Some(m), ActionSpace::Discrete(n)) => PolicyParams::tabular(m.n_states, n),
                _ => return Err(Error::Config("tabular policies need a tabular environment".into())),
            },
        };
        let learner = match self.algo {
            Algo::Vpg => LearnerState::vpg(policy, self.lr_policy, self.gamma),
            Algo::A2c => {
                let critic = ValueParams::new(dim, self.critic_hidden, rng);
                LearnerState::a2c(policy, critic, self.lr_policy, self.lr_critic, self.gamma)
            }
        };
        learner.validate()?;
        Ok(learner)
    }

    fn validate(&self) -> Result<()> {
        let counts = match self.algo {
            Algo::Vpg => self.episodes,
            Algo::A2c => self.n_envs.min(self.n_steps),
        };
        if counts == 0 || self.hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::Config("learner sizes must be positive".into()));
        }
        if !(self.lr_policy > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackerKind {
    #[default]
    None,
    Random,
    Acp,
    Va2cp,
    Fgsm,
}

impl std::fmt::Display for AttackerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackerKind::None => "none",
            AttackerKind::Random => "random",
            AttackerKind::Acp => "acp",
            AttackerKind::Va2cp => "va2cp",
            AttackerKind::Fgsm => "fgsm",
        })
    }
}

impl std::str::FromStr for AttackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackerKind::None),
            "random" => Ok(AttackerKind::Random),
            "acp" => Ok(AttackerKind::Acp),
            "va2cp" => Ok(AttackerKind::Va2cp),
            "fgsm" => Ok(AttackerKind::Fgsm),
            other => Err(Error::Config(format!("unknown attacker `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerConfig {
    #[serde(default, alias = "attacker")]
    pub kind: AttackerKind,
    #[serde(default = "default_aim")]
    pub aim: Aim,
    #[serde(default)]
    pub eps: f64,
    /// Absolute budget `C`; takes precedence over `budget_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// `C/K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_ratio: Option<f64>,
    #[serde(default)]
    pub access: Access,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default)]
    pub pgd: PgdConfig,
    #[serde(default)]
    pub critic: CriticConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_eps: Option<HybridPower>,
}

fn default_aim() -> Aim {
    Aim::Rewards
}

impl Default for AttackerConfig {
    fn default() -> Self {
        AttackerConfig {
            kind: AttackerKind::None,
            aim: Aim::Rewards,
            eps: 0.0,
            budget: None,
            budget_ratio: None,
            access: Access::White,
            goal: Goal::NonTargeted,
            measure: Measure::Tv,
            pgd: PgdConfig::default(),
            critic: CriticConfig::default(),
            hybrid_eps: None,
        }
    }
}

impl AttackerConfig {
    /// Budget `C` for a run of `horizon` iterations.
    pub fn budget_for(&self, horizon: usize) -> Result<usize> {
        match (self.budget, self.budget_ratio) {
            (Some(c), _) => Ok(c),
            (None, Some(r)) if (0.0..=1.0).contains(&r) => Ok(((r * horizon as f64) + 1e-9).floor() as usize),
            (None, Some(r)) => Err(Error::Config(format!("budget_ratio {r} outside [0, 1]"))),
            (None, None) if self.kind == AttackerKind::None => Ok(0),
            (None, None) => Err(Error::Config("attacker needs `budget` or `budget_ratio`".into())),
        }
    }

    pub fn attack_config(&self, horizon: usize) -> Result<AttackConfig> {
        let cfg = AttackConfig {
            aim: self.aim,
            eps: self.eps,
            budget: self.budget_for(horizon)?,
            horizon,
            access: self.access,
            goal: self.goal.clone(),
            measure: self.measure,
            pgd: self.pgd.clone(),
            hybrid_eps: self.hybrid_eps.clone(),
            critic: self.critic.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Learner iterations `K`.
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Episodes for the final evaluation of non-tabular policies.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Write a policy checkpoint every this many iterations; 0 disables.
    #[serde(default)]
    pub checkpoint_period: usize,
}

fn default_eval_episodes() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    #[serde(default = "default_aim")]
    pub aim: Aim,
    /// Discrepancy levels to probe.
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub search: RadiusSearch,
    #[serde(default)]
    pub sampling: PolicySampling,
    /// States sampled for the robustness radius; 0 skips it.
    #[serde(default)]
    pub robustness_states: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub attacker: AttackerConfig,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<RadiusConfig>,
}

impl RunConfig {
    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.run.iterations < 1 {
            return Err(Error::Config("run.iterations must be at least 1".into()));
        }
        if self.run.eval_episodes < 1 {
            return Err(Error::Config("run.eval_episodes must be at least 1".into()));
        }
        self.learner.validate()?;
        let env = self.env.build()?;
        if self.learner.policy == PolicyArch::Tabular && env.tabular().is_none() {
            return Err(Error::Config("tabular policies need a tabular environment".into()));
        }
        if self.attacker.kind != AttackerKind::None {
            let cfg = self.attacker.attack_config(self.run.iterations)?;
            if self.attacker.kind == AttackerKind::Fgsm {
                if !matches!(env.action_space(), ActionSpace::Discrete(_)) {
                    return Err(Error::Unsupported("FGSM targets discrete-action learners only".into()));
                }
                if !matches!(cfg.goal, Goal::Targeted(_)) {
                    return Err(Error::Config("FGSM needs a targeted goal".into()));
                }
            }
            if self.attacker.kind == AttackerKind::Random && cfg.aim == Aim::Hybrid {
                return Err(Error::Config("random poisoning needs a single aim".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Reads and validates a run config. Relative MDP paths resolve against the
/// file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = RunConfig::from_toml_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.env.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIVER: &str = r#"
[env]
name = "river"
length = 6

[learner]
algo = "vpg"
policy = "tabular"
lr_policy = 0.5

[attacker]
kind = "va2cp"
aim = "rewards"
eps = 0.5
budget_ratio = 0.3

[run]
iterations = 20
seed = 7
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(RIVER).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.attacker.budget_for(20).unwrap(), 6);
        assert!(matches!(&cfg.env, EnvConfig::River(r) if r.length == 6));
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let typo = RIVER.replace("eps = 0.5", "epz = 0.5");
        let e = RunConfig::from_toml_str(&typo).unwrap_err().to_string();
        assert!(e.contains("epz"), "{e}");
        let missing = RIVER.replace("iterations = 20", "");
        let e = RunConfig::from_toml_str(&missing).unwrap_err().to_string();
        assert!(e.contains("iterations"), "{e}");
        let env_typo = RIVER.replace("length = 6", "lenght = 6");
        let e = RunConfig::from_toml_str(&env_typo).unwrap_err().to_string();
        assert!(e.contains("lenght"), "{e}");
    }

    #[test]
    fn attacker_alias_and_targeted_goal() {
        let text = r#"
[env]
name = "cartpole"
[learner]
algo = "a2c"
[attacker]
attacker = "fgsm"
aim = "states"
eps = 0.1
budget = 3
goal = { targeted = { action = 1 } }
[run]
iterations = 5
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.attacker.kind, AttackerKind::Fgsm);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.attacker.goal = Goal::NonTargeted;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn invalid_configs_fail_before_running() {
        let mut cfg = RunConfig::from_toml_str(RIVER).unwrap();
        cfg.attacker.budget = Some(21);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::from_toml_str(RIVER).unwrap();
        cfg.run.iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::from_toml_str(RIVER).unwrap();
        cfg.env = EnvConfig::Cartpole(CartPole::default());
        assert!(cfg.validate().is_err());
    }
}
