use serde::{Deserialize, Serialize};

use crate::numcore::Rng;

/// Point mass steered by bounded accelerations toward the origin.
///
/// State is `[position (dim), velocity (dim)]`. Reward is `-|position|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMass {
    pub dim: usize,
    pub dt: f64,
    pub max_accel: f64,
    pub horizon: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass {
            dim: 2,
            dt: 0.1,
            max_accel: 1.0,
            horizon: 50,
        }
    }
}

impl PointMass {
    pub fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        let mut s = vec![0.0; 2 * self.dim];
        for x in &mut s[..self.dim] {
            *x = rng.uniform(-1.0, 1.0);
        }
        s
    }

    pub fn dynamics(&self, s: &[f64], accel: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim;
        let mut next = s.to_vec();
        for i in 0..d {
            next[i] = s[i] + s[d + i] * self.dt;
            next[d + i] = s[d + i] + accel[i].clamp(-self.max_accel, self.max_accel) * self.dt;
        }
        let reward = -s[..d].iter().map(|x| x * x).sum::<f64>();
        (next, reward)
    }
}
