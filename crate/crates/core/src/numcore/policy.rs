use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpPass};
use super::rng::Rng;
use crate::error::{shape_err, Error, Result};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

/// Bias-free linear map `out = W · x`; on one-hot inputs this is a table of
/// logits, one row of `W`'s transpose per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    /// `output × input`, row-major.
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Body {
    Mlp(Mlp),
    Linear(Linear),
}

#[derive(Clone, Debug)]
pub enum BodyPass {
    Mlp(MlpPass),
    Linear(Vec<f64>),
}

impl BodyPass {
    pub fn out(&self) -> &[f64] {
        match self {
            BodyPass::Mlp(p) => &p.out,
            BodyPass::Linear(o) => o,
        }
    }
}

impl Body {
    pub fn input_dim(&self) -> usize {
        match self {
            Body::Mlp(m) => m.input,
            Body::Linear(l) => l.input,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Body::Mlp(m) => m.output,
            Body::Linear(l) => l.output,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Body::Mlp(m) => m.num_params(),
            Body::Linear(l) => l.w.len(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<BodyPass> {
        match self {
            Body::Mlp(m) => m.forward(x).map(BodyPass::Mlp),
            Body::Linear(l) => {
                if x.len() != l.input {
                    return Err(shape_err(format!(
                        "input has {} entries, policy expects {}",
                        x.len(),
                        l.input
                    )));
                }
                let out = l
                    .w
                    .chunks_exact(l.input)
                    .map(|row| super::mlp::dot(row, x))
                    .collect();
                Ok(BodyPass::Linear(out))
            }
        }
    }

    pub fn backward_into(
        &self,
        x: &[f64],
        pass: &BodyPass,
        d_out: &[f64],
        scale: f64,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        match (self, pass) {
            (Body::Mlp(m), BodyPass::Mlp(p)) => m.backward_into(x, p, d_out, scale, grad, want_input),
            (Body::Linear(l), BodyPass::Linear(_)) => {
                for (o, &g) in d_out.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let row = &mut grad[o * l.input..(o + 1) * l.input];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += scale * g * xi;
                    }
                }
                if !want_input {
                    return None;
                }
                let mut d_x = vec![0.0; l.input];
                for (o, &g) in d_out.iter().enumerate() {
                    for (dx, w) in d_x.iter_mut().zip(&l.w[o * l.input..(o + 1) * l.input]) {
                        *dx += g * w;
                    }
                }
                Some(d_x)
            }
            _ => unreachable!("forward pass produced by a different body"),
        }
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        match self {
            Body::Mlp(m) => m.write_flat(out),
            Body::Linear(l) => out.extend_from_slice(&l.w),
        }
    }

    fn read_flat<'a>(&mut self, flat: &'a [f64]) -> Result<&'a [f64]> {
        match self {
            Body::Mlp(m) => m.read_flat(flat),
            Body::Linear(l) => {
                if flat.len() < l.w.len() {
                    return Err(shape_err("flat parameter vector too short"));
                }
                let (head, tail) = flat.split_at(l.w.len());
                l.w.copy_from_slice(head);
                Ok(tail)
            }
        }
    }

    fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        match self {
            Body::Mlp(m) => m.add_scaled(delta, scale),
            Body::Linear(l) => {
                for (w, d) in l.w.iter_mut().zip(delta) {
                    *w += scale * d;
                }
            }
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            Body::Mlp(m) => m.all_finite(),
            Body::Linear(l) => l.w.iter().all(|w| w.is_finite()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Softmax { n_actions: usize },
    /// State-independent log standard deviations, one per action dimension.
    Gaussian { log_std: Vec<f64> },
}

/// Policy parameters: a body producing logits (discrete) or means
/// (continuous), and a probability head.
///
/// Flat order: body parameters, then `log_std` for Gaussian heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub body: Body,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionDistribution {
    Discrete { probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl ActionDistribution {
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDistribution::Discrete { probs }, Action::Discrete(a)) => probs
                .get(*a)
                .map(|p| p.ln())
                .ok_or_else(|| Error::Domain(format!("action {a} out of range"))),
            (ActionDistribution::Gaussian { mean, std }, Action::Continuous(a)) => {
                if a.len() != mean.len() {
                    return Err(shape_err("continuous action dimension mismatch"));
                }
                Ok(mean
                    .iter()
                    .zip(std)
                    .zip(a)
                    .map(|((m, s), x)| {
                        let z = (x - m) / s;
                        -0.5 * z * z - s.ln() - HALF_LN_2PI
                    })
                    .sum())
            }
            _ => Err(Error::Domain("action kind does not match policy head".into())),
        }
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match self {
            ActionDistribution::Discrete { probs } => Some(probs),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogProbGrads {
    pub logp: f64,
    pub grad_params: Vec<f64>,
    pub grad_state: Vec<f64>,
}

impl PolicyParams {
    /// Two-layer tanh policy with uniform fan-in initialization.
    pub fn mlp(state_dim: usize, hidden: usize, space: ActionSpace, rng: &mut Rng) -> Self {
        match space {
            ActionSpace::Discrete(n) => PolicyParams {
                body: Body::Mlp(Mlp::random(state_dim, hidden, n, rng)),
                head: Head::Softmax { n_actions: n },
            },
            ActionSpace::Continuous(d) => PolicyParams {
                body: Body::Mlp(Mlp::random(state_dim, hidden, d, rng)),
                head: Head::Gaussian {
                    log_std: vec![0.0; d],
                },
            },
        }
    }

    pub fn zeros_mlp(state_dim: usize, hidden: usize, space: ActionSpace) -> Self {
        let out = match space {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        };
        let head = match space {
            ActionSpace::Discrete(n) => Head::Softmax { n_actions: n },
            ActionSpace::Continuous(d) => Head::Gaussian {
                log_std: vec![0.0; d],
            },
        };
        PolicyParams {
            body: Body::Mlp(Mlp::zeros(state_dim, hidden, out)),
            head,
        }
    }

    /// Tabular softmax policy over one-hot states, all logits zero.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        PolicyParams {
            body: Body::Linear(Linear {
                input: n_states,
                output: n_actions,
                w: vec![0.0; n_states * n_actions],
            }),
            head: Head::Softmax { n_actions },
        }
    }

    /// Same architecture, freshly initialized; log-stds reset to zero.
    pub fn fresh_like(&self, rng: &mut Rng) -> Self {
        let body = match &self.body {
            Body::Mlp(m) => Body::Mlp(Mlp::random(m.input, m.hidden, m.output, rng)),
            Body::Linear(l) => {
                let a = 1.0 / (l.input.max(1) as f64).sqrt();
                Body::Linear(Linear {
                    input: l.input,
                    output: l.output,
                    w: (0..l.w.len()).map(|_| rng.uniform(-a, a)).collect(),
                })
            }
        };
        let head = match &self.head {
            Head::Softmax { n_actions } => Head::Softmax { n_actions: *n_actions },
            Head::Gaussian { log_std } => Head::Gaussian {
                log_std: vec![0.0; log_std.len()],
            },
        };
        PolicyParams { body, head }
    }

    pub fn state_dim(&self) -> usize {
        self.body.input_dim()
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.head {
            Head::Softmax { n_actions } => ActionSpace::Discrete(*n_actions),
            Head::Gaussian { log_std } => ActionSpace::Continuous(log_std.len()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.body.num_params()
            + match &self.head {
                Head::Softmax { .. } => 0,
                Head::Gaussian { log_std } => log_std.len(),
            }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.body.write_flat(&mut v);
        if let Head::Gaussian { log_std } = &self.head {
            v.extend_from_slice(log_std);
        }
        v
    }

    /// Same architecture with parameters taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(shape_err(format!(
                "flat vector has {} entries, policy has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut p = self.clone();
        let rest = p.body.read_flat(flat)?;
        if let Head::Gaussian { log_std } = &mut p.head {
            log_std.copy_from_slice(rest);
        }
        Ok(p)
    }

    /// In-place `θ += scale · delta`, followed by the log-std clamp.
    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        let nb = self.body.num_params();
        self.body.add_scaled(&delta[..nb], scale);
        if let Head::Gaussian { log_std } = &mut self.head {
            for (l, d) in log_std.iter_mut().zip(&delta[nb..]) {
                *l = (*l + scale * d).clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.body.all_finite()
            && match &self.head {
                Head::Softmax { .. } => true,
                Head::Gaussian { log_std } => log_std.iter().all(|l| l.is_finite()),
            }
    }

    pub fn check_action(&self, action: &Action) -> Result<()> {
        match (&self.head, action) {
            (Head::Softmax { n_actions }, Action::Discrete(a)) if a < n_actions => Ok(()),
            (Head::Gaussian { log_std }, Action::Continuous(a)) if a.len() == log_std.len() => {
                Ok(())
            }
            _ => Err(Error::Domain(format!("invalid action {action:?} for policy head"))),
        }
    }

    fn distribution_from(&self, out: &[f64]) -> ActionDistribution {
        match &self.head {
            Head::Softmax { .. } => ActionDistribution::Discrete {
                probs: softmax(out),
            },
            Head::Gaussian { log_std } => ActionDistribution::Gaussian {
                mean: out.to_vec(),
                std: log_std.iter().map(|l| l.exp()).collect(),
            },
        }
    }

    pub fn forward(&self, state: &[f64]) -> Result<ActionDistribution> {
        let pass = self.body.forward(state)?;
        Ok(self.distribution_from(pass.out()))
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64> {
        self.forward(state)?.log_prob(action)
    }

    /// Adds `scale · ∇_θ log π(a|s)` into `grad` and returns `log π(a|s)`.
    pub fn accumulate_log_prob_grad(
        &self,
        state: &[f64],
        action: &Action,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (logp, _) = self.log_prob_grad_impl(state, action, scale, grad, false)?;
        Ok(logp)
    }

    fn log_prob_grad_impl(
        &self,
        state: &[f64],
        action: &Action,
        scale: f64,
        grad: &mut [f64],
        want_state: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        self.check_action(action)?;
        let pass = self.body.forward(state)?;
        let out = pass.out();
        let nb = self.body.num_params();
        match (&self.head, action) {
            (Head::Softmax { .. }, Action::Discrete(a)) => {
                let probs = softmax(out);
                let logp = log_softmax_at(out, *a);
                let mut d_out: Vec<f64> = probs.iter().map(|p| -p).collect();
                d_out[*a] += 1.0;
                let gs = self
                    .body
                    .backward_into(state, &pass, &d_out, scale, &mut grad[..nb], want_state);
                Ok((logp, gs))
            }
            (Head::Gaussian { log_std }, Action::Continuous(a)) => {
                let mut logp = 0.0;
                let mut d_out = vec![0.0; a.len()];
                for i in 0..a.len() {
                    let s = log_std[i].exp();
                    let z = (a[i] - out[i]) / s;
                    logp += -0.5 * z * z - log_std[i] - HALF_LN_2PI;
                    d_out[i] = z / s;
                    grad[nb + i] += scale * (z * z - 1.0);
                }
                let gs = self
                    .body
                    .backward_into(state, &pass, &d_out, scale, &mut grad[..nb], want_state);
                Ok((logp, gs))
            }
            _ => unreachable!("checked above"),
        }
    }

    /// Backpropagates a gradient on the body outputs (logits or means).
    /// Returns `(∂/∂θ, ∂/∂state)`; log-std entries of `∂/∂θ` are zero.
    pub fn output_backward(&self, state: &[f64], d_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let pass = self.body.forward(state)?;
        let mut grad = vec![0.0; self.num_params()];
        let nb = self.body.num_params();
        let gs = self
            .body
            .backward_into(state, &pass, d_out, 1.0, &mut grad[..nb], true)
            .expect("input gradient requested");
        Ok((grad, gs))
    }

    /// Raw body outputs (logits or means).
    pub fn outputs(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.body.forward(state)?.out().to_vec())
    }
}

/// Action distribution of the policy at `state`.
pub fn policy_forward(params: &PolicyParams, state: &[f64]) -> Result<ActionDistribution> {
    params.forward(state)
}

/// `log π(a|s)` with exact gradients w.r.t. the flat parameters and the state.
pub fn log_prob_and_grads(params: &PolicyParams, state: &[f64], action: &Action) -> Result<LogProbGrads> {
    let mut grad = vec![0.0; params.num_params()];
    let (logp, gs) = params.log_prob_grad_impl(state, action, 1.0, &mut grad, true)?;
    Ok(LogProbGrads {
        logp,
        grad_params: grad,
        grad_state: gs.expect("state gradient requested"),
    })
}

/// Discrete: inverse CDF over `probs`. Continuous: `mean + std ⊙ N(0, I)`.
pub fn sample_action(dist: &ActionDistribution, rng: &mut Rng) -> Action {
    match dist {
        ActionDistribution::Discrete { probs } => {
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
                    return Action::Discrete(i);
                }
            }
            // u landed in the rounding gap at the top of the CDF
            Action::Discrete(last)
        }
        ActionDistribution::Gaussian { mean, std } => Action::Continuous(
            mean.iter()
                .zip(std)
                .map(|(m, s)| m + s * rng.normal())
                .collect(),
        ),
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax_at(z: &[f64], a: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z[a] - lse
}
