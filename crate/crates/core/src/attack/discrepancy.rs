use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ActionDistribution, PolicyParams};

/// Distance between two action distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Total variation; Gaussians use the Pinsker surrogate `√(KL/2)`
    /// with the smaller of the two KL directions, capped at 1.
    #[default]
    Tv,
    Hellinger,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::Tv => write!(f, "tv"),
            Measure::Hellinger => write!(f, "hellinger"),
        }
    }
}

fn gaussian_kl(m1: &[f64], s1: &[f64], m2: &[f64], s2: &[f64]) -> f64 {
    m1.iter()
        .zip(s1)
        .zip(m2.iter().zip(s2))
        .map(|((a, sa), (b, sb))| {
            let r = sa / sb;
            let d = (a - b) / sb;
            0.5 * (r * r + d * d - 1.0) - r.ln()
        })
        .sum()
}

pub fn distribution_distance(p: &ActionDistribution, q: &ActionDistribution, measure: Measure) -> Result<f64> {
    use ActionDistribution::*;
    match (p, q, measure) {
        (Discrete { probs: a }, Discrete { probs: b }, Measure::Tv) if a.len() == b.len() => {
            Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        }
        (Discrete { probs: a }, Discrete { probs: b }, Measure::Hellinger) if a.len() == b.len() => {
            let h2: f64 = a.iter().zip(b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
            Ok((0.5 * h2).min(1.0).sqrt())
        }
        (Gaussian { mean: m1, std: s1 }, Gaussian { mean: m2, std: s2 }, Measure::Tv) if m1.len() == m2.len() => {
            let kl = gaussian_kl(m1, s1, m2, s2).min(gaussian_kl(m2, s2, m1, s1)).max(0.0);
            Ok((kl / 2.0).sqrt().min(1.0))
        }
        (Gaussian { mean: m1, std: s1 }, Gaussian { mean: m2, std: s2 }, Measure::Hellinger)
            if m1.len() == m2.len() =>
        {
            let mut bc = 1.0;
            for i in 0..m1.len() {
                let v = s1[i] * s1[i] + s2[i] * s2[i];
                let d = m1[i] - m2[i];
                bc *= (2.0 * s1[i] * s2[i] / v).sqrt() * (-d * d / (4.0 * v)).exp();
            }
            Ok((1.0 - bc).max(0.0).sqrt())
        }
        _ => Err(Error::Shape("action distributions are not comparable".into())),
    }
}

/// Mean distance between the two policies' action distributions over
/// `states`; zero for an empty state list.
pub fn policy_discrepancy(a: &PolicyParams, b: &PolicyParams, states: &[Vec<f64>], measure: Measure) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for x in states {
        s += distribution_distance(&a.forward(x)?, &b.forward(x)?, measure)?;
    }
    Ok(s / states.len() as f64)
}

/// Largest distance over `states`.
pub fn policy_discrepancy_max(a: &PolicyParams, b: &PolicyParams, states: &[Vec<f64>], measure: Measure) -> Result<f64> {
    let mut m: f64 = 0.0;
    for x in states {
        m = m.max(distribution_distance(&a.forward(x)?, &b.forward(x)?, measure)?);
    }
    Ok(m)
}

/// Subgradient of the mean softmax TV w.r.t. `b`'s parameters, with
/// `sign(0) = 0`. `None` for heads or measures without one.
pub(crate) fn tv_grad_wrt_second(
    a: &PolicyParams,
    b: &PolicyParams,
    states: &[Vec<f64>],
    measure: Measure,
) -> Result<Option<Vec<f64>>> {
    if measure != Measure::Tv || !matches!(b.head, crate::numcore::Head::Softmax { .. }) {
        return Ok(None);
    }
    let mut grad = vec![0.0; b.num_params()];
    let n = states.len().max(1) as f64;
    for x in states {
        let p = a.forward(x)?;
        let q = b.forward(x)?;
        let (p, q) = (p.probs().unwrap_or(&[]), q.probs().unwrap_or(&[]));
        let sg: Vec<f64> = q.iter().zip(p).map(|(qi, pi)| 0.5 * sign(qi - pi)).collect();
        let avg: f64 = sg.iter().zip(q).map(|(s, qi)| s * qi).sum();
        let d_out: Vec<f64> = q.iter().zip(&sg).map(|(qi, s)| qi * (s - avg) / n).collect();
        if d_out.iter().all(|d| *d == 0.0) {
            continue;
        }
        let (g, _) = b.output_backward(x, &d_out)?;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok(Some(grad))
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
