use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stochastic tabular policy: one probability row per state.
pub type TabularPolicy = Vec<Vec<f64>>;

const SIMPLEX_TOL: f64 = 1e-9;
const DIRECT_SOLVE_MAX_STATES: usize = 200;
const FIXED_POINT_TOL: f64 = 1e-10;

/// Finite MDP with explicit transition and reward tables.
///
/// Terminal states are absorbing and worth zero: entering one ends the
/// episode, and their values, action values and advantages are all 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularMDP {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub terminal: Vec<bool>,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValues {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub advantage: Vec<Vec<f64>>,
    pub eta: f64,
}

impl TabularMDP {
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::Config("tabular MDP needs at least one state and action".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.transition.len() != ns
            || self.reward.len() != ns
            || self.initial.len() != ns
            || self.terminal.len() != ns
        {
            return Err(Error::Shape("tabular MDP tables do not match n_states".into()));
        }
        for s in 0..ns {
            if self.transition[s].len() != na || self.reward[s].len() != na {
                return Err(Error::Shape(format!("state {s}: tables do not match n_actions")));
            }
            for a in 0..na {
                let row = &self.transition[s][a];
                if row.len() != ns {
                    return Err(Error::Shape(format!("P[{s}][{a}] has wrong length")));
                }
                if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("P[{s}][{a}] is not a distribution")));
                }
                if !self.reward[s][a].is_finite() {
                    return Err(Error::Config(format!("R[{s}][{a}] is not finite")));
                }
            }
        }
        if self.initial.iter().any(|&p| !(p >= 0.0)) || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("initial distribution is not a simplex".into()));
        }
        if self
            .initial
            .iter()
            .zip(&self.terminal)
            .any(|(&p, &t)| t && p > 0.0)
        {
            return Err(Error::Config("initial distribution puts mass on a terminal state".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mdp: TabularMDP = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("tabular MDP serializes")
    }

    pub fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::Domain("policy has wrong number of rows".into()));
        }
        for (s, row) in policy.iter().enumerate() {
            if row.len() != self.n_actions
                || row.iter().any(|&p| p < -SIMPLEX_TOL)
                || (row.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
            {
                return Err(Error::Domain(format!("policy row {s} is not a simplex")));
            }
        }
        Ok(())
    }

    /// State-to-state kernel and expected reward under `policy`, with
    /// terminal rows zeroed.
    fn induced_chain(&self, policy: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                let w = policy[s][a];
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward[s][a];
                for s2 in 0..n {
                    p[(s, s2)] += w * self.transition[s][a][s2];
                }
            }
        }
        (p, r)
    }

    fn q_from_v(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        if self.terminal[s] {
                            0.0
                        } else {
                            self.reward[s][a]
                                + self.gamma
                                    * self.transition[s][a]
                                        .iter()
                                        .zip(v)
                                        .map(|(p, x)| p * x)
                                        .sum::<f64>()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Solves `x = b + γ M x`.
fn solve_fixed_point(m: &DMatrix<f64>, b: &DVector<f64>, gamma: f64) -> DVector<f64> {
    let n = b.len();
    if n <= DIRECT_SOLVE_MAX_STATES {
        let a = DMatrix::identity(n, n) - m * gamma;
        if let Some(x) = a.lu().solve(b) {
            return x;
        }
    }
    let mut x = b.clone();
    loop {
        let next = b + (m * &x) * gamma;
        let res = (&next - &x).amax();
        x = next;
        if res < FIXED_POINT_TOL * (1.0 - gamma) {
            return x;
        }
    }
}

/// Exact `V`, `Q`, `A = Q − V` and `η = Σ μ(s) V(s)` of a tabular policy.
pub fn policy_evaluation(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<PolicyValues> {
    mdp.check_policy(policy)?;
    let (p, r) = mdp.induced_chain(policy);
    let v: Vec<f64> = solve_fixed_point(&p, &r, mdp.gamma).iter().copied().collect();
    let q = mdp.q_from_v(&v);
    let advantage = q
        .iter()
        .zip(&v)
        .enumerate()
        .map(|(s, (row, vs))| {
            row.iter()
                .map(|qa| if mdp.terminal[s] { 0.0 } else { qa - vs })
                .collect()
        })
        .collect();
    let eta = mdp.initial.iter().zip(&v).map(|(m, x)| m * x).sum();
    Ok(PolicyValues {
        v,
        q,
        advantage,
        eta,
    })
}

/// Discounted visitation `g(s) = Σ_t γ^t P(s_t = s)`, i.e. the solution of
/// `g = μ + γ P_πᵀ g`.
pub fn discounted_visitation(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let (p, _) = mdp.induced_chain(policy);
    let mu = DVector::from_column_slice(&mdp.initial);
    Ok(solve_fixed_point(&p.transpose(), &mu, mdp.gamma)
        .iter()
        .copied()
        .collect())
}

/// Optimal values and a deterministic greedy policy (ties go to the lowest
/// action index). Runs policy iteration, so `V*` is exact up to the linear
/// solve.
pub fn value_iteration(mdp: &TabularMDP) -> Result<(Vec<f64>, Vec<usize>)> {
    mdp.validate()?;
    let mut greedy = vec![0usize; mdp.n_states];
    loop {
        let pol = deterministic_policy(&greedy, mdp.n_actions);
        let vals = policy_evaluation(mdp, &pol)?;
        let mut changed = false;
        for s in 0..mdp.n_states {
            let row = &vals.q[s];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if row[greedy[s]] < best - 1e-12 {
                greedy[s] = row.iter().position(|&x| x >= best - 1e-12).unwrap_or(0);
                changed = true;
            }
        }
        if !changed {
            return Ok((vals.v, greedy));
        }
    }
}

pub fn deterministic_policy(actions: &[usize], n_actions: usize) -> TabularPolicy {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; n_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

pub fn uniform_policy(n_states: usize, n_actions: usize) -> TabularPolicy {
    vec![vec![1.0 / n_actions as f64; n_actions]; n_states]
}

/// Random MDP without terminal states: dense random transitions and rewards
/// uniform in `[-1, 1]`.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut crate::numcore::Rng) -> TabularMDP {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.simplex(n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    TabularMDP {
        n_states,
        n_actions,
        transition,
        reward,
        gamma,
        initial: rng.simplex(n_states),
        terminal: vec![false; n_states],
        horizon: 100,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn absorbing(r: f64, gamma: f64) -> TabularMDP {
        TabularMDP {
            n_states: 1,
            n_actions: 1,
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![r]],
            gamma,
            initial: vec![1.0],
            terminal: vec![false],
            horizon: 10,
        }
    }

    #[test]
    fn geometric_series_value() {
        let m = absorbing(1.0, 0.5);
        let vals = policy_evaluation(&m, &vec![vec![1.0]]).unwrap();
        assert!((vals.v[0] - 2.0).abs() < 1e-12);
        assert!((vals.eta - 2.0).abs() < 1e-12);
        assert!(vals.advantage[0][0].abs() < 1e-12);
        let g = discounted_visitation(&m, &vec![vec![1.0]]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_everything() {
        let mut rng = Rng::new(3);
        let mut m = random_mdp(5, 3, 0.9, &mut rng);
        for row in &mut m.reward {
            row.iter_mut().for_each(|r| *r = 0.0);
        }
        let vals = policy_evaluation(&m, &uniform_policy(5, 3)).unwrap();
        assert!(vals.v.iter().all(|x| x.abs() < 1e-15));
        assert!(vals.advantage.iter().flatten().all(|x| x.abs() < 1e-15));
        assert_eq!(vals.eta, 0.0);
    }

    #[test]
    fn alternating_chain_visitation() {
        let m = TabularMDP {
            n_states: 2,
            n_actions: 1,
            transition: vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            reward: vec![vec![0.0], vec![0.0]],
            gamma: 0.5,
            initial: vec![1.0, 0.0],
            terminal: vec![false, false],
            horizon: 10,
        };
        let g = discounted_visitation(&m, &uniform_policy(2, 1)).unwrap();
        assert!((g[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((g[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn visitation_sums_to_effective_horizon() {
        let mut rng = Rng::new(17);
        for _ in 0..10 {
            let m = random_mdp(6, 3, 0.9, &mut rng);
            let pol: TabularPolicy = (0..6).map(|_| rng.simplex(3)).collect();
            let g = discounted_visitation(&m, &pol).unwrap();
            assert!((g.iter().sum::<f64>() - 10.0).abs() < 1e-8);
        }
    }

    #[test]
    fn non_simplex_policy_rejected() {
        let m = absorbing(1.0, 0.5);
        assert!(matches!(
            policy_evaluation(&m, &vec![vec![0.7]]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn toml_roundtrip_and_validation() {
        let mut rng = Rng::new(2);
        let m = random_mdp(3, 2, 0.95, &mut rng);
        let text = m.to_toml_string();
        let back = TabularMDP::from_toml_str(&text).unwrap();
        assert_eq!(back, m);
        let bad = text.replace("gamma = 0.95", "gamma = 1.5");
        assert!(TabularMDP::from_toml_str(&bad).is_err());
        let typo = format!("{text}\nextra_key = 1\n");
        assert!(TabularMDP::from_toml_str(&typo).is_err());
    }
}
