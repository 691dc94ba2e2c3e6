use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::rng::Rng;
use crate::error::Result;

/// Scalar state-value network with the same two-layer tanh shape as the
/// policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub net: Mlp,
}

impl ValueParams {
    pub fn new(state_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        ValueParams {
            net: Mlp::random(state_dim, hidden, 1, rng),
        }
    }

    pub fn zeros(state_dim: usize, hidden: usize) -> Self {
        ValueParams {
            net: Mlp::zeros(state_dim, hidden, 1),
        }
    }

    pub fn fresh_like(&self, rng: &mut Rng) -> Self {
        ValueParams {
            net: Mlp::random(self.net.input, self.net.hidden, 1, rng),
        }
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.net.forward(state)?.out[0])
    }

    /// Adds `scale · ∇_ω V(s)` into `grad` and returns `V(s)`.
    pub fn accumulate_grad(&self, state: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let pass = self.net.forward(state)?;
        self.net.backward_into(state, &pass, &[1.0], scale, grad, false);
        Ok(pass.out[0])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.net.write_flat(&mut v);
        v
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.net.read_flat(flat)?;
        Ok(p)
    }

    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) {
        self.net.add_scaled(delta, scale);
    }
}

/// `V(s)` and its exact gradient w.r.t. the flat parameters.
pub fn value_forward_and_grad(params: &ValueParams, state: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.num_params()];
    let v = params.accumulate_grad(state, 1.0, &mut grad)?;
    Ok((v, grad))
}
