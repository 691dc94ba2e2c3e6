use serde::{Deserialize, Serialize};

use crate::numcore::Rng;

/// Classic cart-pole balancing task with Euler integration.
///
/// State is `[x, x_dot, theta, theta_dot]`; action 1 pushes right, action 0
/// pushes left. Reward is 1 per step including the terminating one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPole {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
    pub horizon: usize,
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            horizon: 200,
        }
    }
}

impl CartPole {
    pub fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        (0..4).map(|_| rng.uniform(-0.05, 0.05)).collect()
    }

    /// Next state and whether the pole fell or the cart left the track.
    pub fn dynamics(&self, s: &[f64], push_right: bool) -> (Vec<f64>, bool) {
        let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
        let force = if push_right { self.force } else { -self.force };
        let total_mass = self.cart_mass + self.pole_mass;
        let pole_mass_length = self.pole_mass * self.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_mass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        let next = vec![
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ];
        let failed = next[0].abs() > self.x_threshold || next[2].abs() > self.theta_threshold;
        (next, failed)
    }
}
