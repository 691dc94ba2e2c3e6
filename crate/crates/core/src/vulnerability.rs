//! How much poison one update, or a whole MDP, can absorb before the
//! policy moves by a given amount, plus the matching reward-drop bounds.
//!
//! Radii come from bisection around a heuristic inner attack, so they are
//! reported as brackets: `lo` is the largest power seen to fail, `hi` the
//! smallest seen to succeed.

use serde::{Deserialize, Serialize};

use crate::attack::{
    craft_poison, distribution_distance, policy_discrepancy_max, Aim, Measure, Objective, PgdConfig,
};
use crate::envs::{discounted_visitation, one_hot, policy_evaluation, rollout, Env, Observation, RolloutMode, TabularMDP, TabularPolicy};
use crate::error::{Error, Result};
use crate::learners::{learner_update, Algo, LearnerState};
use crate::numcore::{Head, Linear, PolicyParams, Rng, ValueParams};

/// Upper end of a radius bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Finite(f64),
    /// No power up to the search limit reached the target.
    Unbounded,
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Finite(x) => Some(*x),
            Bound::Unbounded => None,
        }
    }

    fn key(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Finite(x) => write!(f, "{x}"),
            Bound::Unbounded => write!(f, "unbounded"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub lo: f64,
    pub hi: Bound,
    pub delta: f64,
    pub measure: Measure,
    /// `(power, achieved discrepancy)`, sorted by power, made monotone.
    pub trace: Vec<(f64, f64)>,
}

impl RadiusEstimate {
    pub fn value(&self) -> Option<f64> {
        self.hi.value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadiusSearch {
    pub eps_max: f64,
    pub bisection_iters: usize,
    pub measure: Measure,
    pub pgd: PgdConfig,
}

impl Default for RadiusSearch {
    fn default() -> Self {
        RadiusSearch {
            eps_max: 10.0,
            bisection_iters: 20,
            measure: Measure::Tv,
            pgd: PgdConfig {
                max_iters: 40,
                ..PgdConfig::default()
            },
        }
    }
}

/// Bisection for the smallest power at which `probe` reports at least
/// `delta`. `probe` returns the achieved discrepancy.
fn bisect(
    delta: f64,
    search: &RadiusSearch,
    mut probe: impl FnMut(f64) -> Result<f64>,
) -> Result<RadiusEstimate> {
    if !(delta > 0.0) {
        return Err(Error::Domain("discrepancy threshold must be positive".into()));
    }
    let mut trace = Vec::new();
    let top = probe(search.eps_max)?;
    trace.push((search.eps_max, top));
    let (lo, hi) = if top < delta {
        (search.eps_max, Bound::Unbounded)
    } else {
        let (mut lo, mut hi) = (0.0, search.eps_max);
        for _ in 0..search.bisection_iters {
            let mid = 0.5 * (lo + hi);
            let got = probe(mid)?;
            trace.push((mid, got));
            if got >= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, Bound::Finite(hi))
    };
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut run: f64 = 0.0;
    for t in &mut trace {
        run = run.max(t.1);
        t.1 = run;
    }
    Ok(RadiusEstimate {
        lo,
        hi,
        delta,
        measure: search.measure,
        trace,
    })
}

/// Smallest power on `aim` that moves the learner's next policy by at
/// least `delta` at some state of `probe_states` (the batch's states when
/// `None`).
pub fn stability_radius_update(
    learner: &LearnerState,
    obs: &Observation,
    aim: Aim,
    delta: f64,
    probe_states: Option<&[Vec<f64>]>,
    search: &RadiusSearch,
    rng: &mut Rng,
) -> Result<RadiusEstimate> {
    let clean_next = learner_update(learner, obs)?;
    let states: Vec<Vec<f64>> = match probe_states {
        Some(s) => s.to_vec(),
        None => obs.states().cloned().collect(),
    };
    let objective = Objective::worst_discrepancy(clean_next.policy.clone(), states.clone(), search.measure);
    bisect(delta, search, |eps| {
        let c = craft_poison(learner, obs, aim, eps, &objective, &search.pgd, rng)?;
        policy_discrepancy_max(&clean_next.policy, &c.poisoned_next.policy, &states, search.measure)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySampling {
    pub n_policies: usize,
    pub n_obs_per_policy: usize,
    pub episodes_per_obs: usize,
    /// Random logits are drawn from `N(0, logit_scale²)`.
    pub logit_scale: f64,
    pub lr: f64,
}

impl Default for PolicySampling {
    fn default() -> Self {
        PolicySampling {
            n_policies: 8,
            n_obs_per_policy: 2,
            episodes_per_obs: 4,
            logit_scale: 1.0,
            lr: 0.1,
        }
    }
}

/// Minimum update radius over random tabular policies and their own
/// rollouts; an upper bound on the MDP's true minimum. Probe states are the
/// MDP's non-terminal states.
pub fn stability_radius_mdp(
    algo: Algo,
    mdp: &TabularMDP,
    aim: Aim,
    delta: f64,
    sampling: &PolicySampling,
    search: &RadiusSearch,
    rng: &mut Rng,
) -> Result<RadiusEstimate> {
    mdp.validate()?;
    let env = Env::Tabular(mdp.clone());
    let probes: Vec<Vec<f64>> = (0..mdp.n_states)
        .filter(|&s| !mdp.terminal[s])
        .map(|s| one_hot(mdp.n_states, s))
        .collect();
    let mut best: Option<RadiusEstimate> = None;
    for _ in 0..sampling.n_policies {
        let mut prng = rng.split();
        let w: Vec<f64> = (0..mdp.n_states * mdp.n_actions)
            .map(|_| sampling.logit_scale * prng.normal())
            .collect();
        let policy = PolicyParams {
            body: crate::numcore::Body::Linear(Linear {
                input: mdp.n_states,
                output: mdp.n_actions,
                w,
            }),
            head: Head::Softmax { n_actions: mdp.n_actions },
        };
        let learner = match algo {
            Algo::Vpg => LearnerState::vpg(policy.clone(), sampling.lr, mdp.gamma),
            Algo::A2c => LearnerState::a2c(
                policy.clone(),
                ValueParams::zeros(mdp.n_states, 8),
                sampling.lr,
                sampling.lr,
                mdp.gamma,
            ),
        };
        for _ in 0..sampling.n_obs_per_policy {
            let obs = rollout(&policy, &env, RolloutMode::Episodes(sampling.episodes_per_obs), &mut prng)?;
            let est = stability_radius_update(&learner, &obs, aim, delta, Some(&probes), search, &mut prng)?;
            if best.as_ref().is_none_or(|b| est.hi.key() < b.hi.key()) {
                best = Some(est);
            }
        }
    }
    best.ok_or_else(|| Error::Input("no policies sampled".into()))
}

/// Largest expected-return drop when the next policy moves by at most
/// `delta` in worst-state total variation from `policy`:
/// `4δ²γ max|A| / (1−γ)² + 2δ Σ_s g(s) max_a |A(s,a)|`, with `A` and the
/// discounted visitation `g` of `policy`.
pub fn reward_drop_bound(mdp: &TabularMDP, policy: &TabularPolicy, delta: f64) -> Result<f64> {
    let vals = policy_evaluation(mdp, policy)?;
    let g = discounted_visitation(mdp, policy)?;
    let gamma = mdp.gamma;
    let row_max: Vec<f64> = vals
        .advantage
        .iter()
        .map(|r| r.iter().fold(0.0f64, |m, a| m.max(a.abs())))
        .collect();
    let a_max = row_max.iter().cloned().fold(0.0, f64::max);
    let weighted: f64 = g.iter().zip(&row_max).map(|(x, m)| x * m).sum();
    Ok(4.0 * delta * delta * gamma * a_max / ((1.0 - gamma) * (1.0 - gamma)) + 2.0 * delta * weighted)
}

/// Test-time counterpart: `(2δγ/(1−γ)² + 2δ) · max|R|`.
pub fn evasion_reward_drop_bound(mdp: &TabularMDP, delta: f64) -> f64 {
    let gamma = mdp.gamma;
    let r_max = mdp
        .reward
        .iter()
        .flatten()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    (2.0 * delta * gamma / ((1.0 - gamma) * (1.0 - gamma)) + 2.0 * delta) * r_max
}

/// What a state perturbation must achieve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessCriterion {
    /// Change the most likely action.
    Deterministic,
    /// Move the action distribution by at least `delta`.
    Discrepancy { delta: f64 },
}

fn softmax_head(policy: &PolicyParams) -> Option<usize> {
    match policy.head {
        Head::Softmax { n_actions } => Some(n_actions),
        Head::Gaussian { .. } => None,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Margin of the best competing logit over the clean argmax, and its
/// state gradient.
fn margin_and_grad(policy: &PolicyParams, x: &[f64], a_star: usize) -> Result<(f64, Vec<f64>)> {
    let z = policy.outputs(x)?;
    let mut b = usize::MAX;
    for (i, zi) in z.iter().enumerate() {
        if i != a_star && (b == usize::MAX || *zi > z[b]) {
            b = i;
        }
    }
    let mut d = vec![0.0; z.len()];
    d[b] += 1.0;
    d[a_star] -= 1.0;
    let (_, gs) = policy.output_backward(x, &d)?;
    Ok((z[b] - z[a_star], gs))
}

fn state_fd_grad(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], at: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        p[i] = x[i] + h;
        g[i] = (f(&p)? - at) / h;
        p[i] = x[i];
    }
    Ok(g)
}

fn project_ball(center: &[f64], x: &mut [f64], r: f64) {
    let d: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if d > r {
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * r / d;
        }
    }
}

/// Normalized gradient ascent on the ℓ2 ball around `s`.
fn ascend(
    s: &[f64],
    eps: f64,
    start: Vec<f64>,
    iters: usize,
    value_grad: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
) -> Result<(f64, Vec<f64>)> {
    let mut x = start;
    project_ball(s, &mut x, eps);
    let (mut f, mut g) = value_grad(&x)?;
    let mut beta = eps;
    for _ in 0..iters {
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) {
            break;
        }
        let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + beta * gi / n).collect();
        project_ball(s, &mut cand, eps);
        let (fc, gc) = value_grad(&cand)?;
        if fc > f {
            x = cand;
            f = fc;
            g = gc;
        } else {
            beta *= 0.5;
            if beta < 1e-9 * eps {
                break;
            }
        }
    }
    Ok((f, x))
}

/// Smallest ℓ2 state perturbation meeting `criterion` at `s`.
pub fn robustness_radius_state(
    policy: &PolicyParams,
    s: &[f64],
    criterion: RobustnessCriterion,
    search: &RadiusSearch,
    rng: &mut Rng,
) -> Result<RadiusEstimate> {
    let clean = policy.forward(s)?;
    let iters = search.pgd.max_iters;
    match criterion {
        RobustnessCriterion::Deterministic => {
            let n_actions = softmax_head(policy)
                .ok_or_else(|| Error::Unsupported("argmax change needs a discrete-action policy".into()))?;
            let a_star = argmax(clean.probs().expect("softmax head"));
            if n_actions < 2 {
                return bisect(1.0, search, |_| Ok(0.0));
            }
            let vg = |x: &[f64]| margin_and_grad(policy, x, a_star);
            // report 1 once the argmax flips, else 0
            bisect(1.0, search, |eps| {
                let (_, g0) = vg(s)?;
                let n0 = g0.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut starts = vec![s.to_vec()];
                if n0 > 0.0 {
                    starts.push(s.iter().zip(&g0).map(|(a, b)| a + eps * b / n0).collect());
                }
                for _ in 0..search.pgd.restarts {
                    let u = rng.unit_vector(s.len());
                    starts.push(s.iter().zip(&u).map(|(a, b)| a + eps * b).collect());
                }
                for st in starts {
                    let (m, _) = ascend(s, eps, st, iters, &vg)?;
                    if m > 0.0 {
                        return Ok(1.0);
                    }
                }
                Ok(0.0)
            })
            .map(|mut e| {
                e.delta = 0.0;
                e
            })
        }
        RobustnessCriterion::Discrepancy { delta } => {
            let measure = search.measure;
            let dist = |x: &[f64]| -> Result<f64> { distribution_distance(&clean, &policy.forward(x)?, measure) };
            let vg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let f = dist(x)?;
                let g = state_fd_grad(&dist, x, f)?;
                Ok((f, g))
            };
            bisect(delta, search, |eps| {
                let mut starts = Vec::new();
                if let Some(n_actions) = softmax_head(policy) {
                    if n_actions >= 2 {
                        let a_star = argmax(clean.probs().expect("softmax head"));
                        let (_, g0) = margin_and_grad(policy, s, a_star)?;
                        let n0 = g0.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n0 > 0.0 {
                            starts.push(s.iter().zip(&g0).map(|(a, b)| a + eps * b / n0).collect());
                        }
                    }
                }
                for _ in 0..search.pgd.restarts.max(1) {
                    let u = rng.unit_vector(s.len());
                    starts.push(s.iter().zip(&u).map(|(a, b)| a + eps * b).collect::<Vec<f64>>());
                }
                let mut best: f64 = 0.0;
                for st in starts {
                    let (f, _) = ascend(s, eps, st, iters, &vg)?;
                    best = best.max(f);
                }
                Ok(best)
            })
        }
    }
}

/// Minimum of [`robustness_radius_state`] over sampled states.
pub fn robustness_radius_mdp(
    policy: &PolicyParams,
    states: &[Vec<f64>],
    criterion: RobustnessCriterion,
    search: &RadiusSearch,
    rng: &mut Rng,
) -> Result<RadiusEstimate> {
    let mut best: Option<RadiusEstimate> = None;
    for s in states {
        let est = robustness_radius_state(policy, s, criterion, search, rng)?;
        if best.as_ref().is_none_or(|b| est.hi.key() < b.hi.key()) {
            best = Some(est);
        }
    }
    best.ok_or_else(|| Error::Input("no states to probe".into()))
}

/// Two-action linear policy whose logits are `(0, w·s)`: it picks action 1
/// exactly when `w·s > 0`.
pub fn linear_threshold_policy(w: &[f64]) -> PolicyParams {
    let d = w.len();
    let mut weights = vec![0.0; d];
    weights.extend_from_slice(w);
    PolicyParams {
        body: crate::numcore::Body::Linear(Linear {
            input: d,
            output: 2,
            w: weights,
        }),
        head: Head::Softmax { n_actions: 2 },
    }
}
