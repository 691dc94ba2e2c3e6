use super::cartpole::CartPole;
use super::pointmass::PointMass;
use super::tabular::TabularMDP;
use crate::error::{Error, Result};
use crate::numcore::{Action, ActionSpace, Rng};

#[derive(Clone, Debug, PartialEq)]
pub enum Env {
    Tabular(TabularMDP),
    CartPole(CartPole),
    PointMass(PointMass),
}

/// Environment state. Tabular states carry their index and are observed as
/// one-hot vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub index: Option<usize>,
    pub vector: Vec<f64>,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

impl Env {
    pub fn state_dim(&self) -> usize {
        match self {
            Env::Tabular(m) => m.n_states,
            Env::CartPole(_) => 4,
            Env::PointMass(p) => 2 * p.dim,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Tabular(m) => ActionSpace::Discrete(m.n_actions),
            Env::CartPole(_) => ActionSpace::Discrete(2),
            Env::PointMass(p) => ActionSpace::Continuous(p.dim),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::Tabular(m) => m.horizon,
            Env::CartPole(c) => c.horizon,
            Env::PointMass(p) => p.horizon,
        }
    }

    pub fn tabular(&self) -> Option<&TabularMDP> {
        match self {
            Env::Tabular(m) => Some(m),
            _ => None,
        }
    }

    fn tabular_state(m: &TabularMDP, s: usize, step: usize) -> EnvState {
        EnvState {
            index: Some(s),
            vector: one_hot(m.n_states, s),
            step,
        }
    }

    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        match self {
            Env::Tabular(m) => {
                let s = sample_index(&m.initial, rng);
                Env::tabular_state(m, s, 0)
            }
            Env::CartPole(c) => EnvState {
                index: None,
                vector: c.reset(rng),
                step: 0,
            },
            Env::PointMass(p) => EnvState {
                index: None,
                vector: p.reset(rng),
                step: 0,
            },
        }
    }

    pub fn step(&self, state: &EnvState, action: &Action, rng: &mut Rng) -> Result<Step> {
        let step = state.step + 1;
        let horizon_hit = step >= self.horizon();
        match (self, action) {
            (Env::Tabular(m), Action::Discrete(a)) if *a < m.n_actions => {
                let s = state
                    .index
                    .ok_or_else(|| Error::Domain("tabular env needs an indexed state".into()))?;
                let s2 = sample_index(&m.transition[s][*a], rng);
                Ok(Step {
                    next: Env::tabular_state(m, s2, step),
                    reward: m.reward[s][*a],
                    done: m.terminal[s2] || horizon_hit,
                })
            }
            (Env::CartPole(c), Action::Discrete(a)) if *a < 2 => {
                let (v, failed) = c.dynamics(&state.vector, *a == 1);
                Ok(Step {
                    next: EnvState {
                        index: None,
                        vector: v,
                        step,
                    },
                    reward: 1.0,
                    done: failed || horizon_hit,
                })
            }
            (Env::PointMass(p), Action::Continuous(a)) if a.len() == p.dim => {
                let (v, reward) = p.dynamics(&state.vector, a);
                Ok(Step {
                    next: EnvState {
                        index: None,
                        vector: v,
                        step,
                    },
                    reward,
                    done: horizon_hit,
                })
            }
            _ => Err(Error::Domain(format!("invalid action {action:?} for this environment"))),
        }
    }
}

/// Inverse-CDF draw that never lands on a zero-probability entry.
pub(crate) fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform01();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn env_reset(env: &Env, rng: &mut Rng) -> EnvState {
    env.reset(rng)
}

pub fn env_step(env: &Env, state: &EnvState, action: &Action, rng: &mut Rng) -> Result<Step> {
    env.step(state, action, rng)
}
