use super::Aim;
use crate::envs::Observation;
use crate::error::{shape_err, Error, Result};
use crate::numcore::Action;

/// Relative slack allowed on the power constraint.
pub const POWER_SLACK: f64 = 1e-9;

/// How a single-aim perturbation vector is measured.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layout {
    /// `‖d‖₂ / √N`.
    Flat { n_steps: usize },
    /// `Σ_t ‖d_t‖₂ / √N` over consecutive groups of `width` entries.
    Grouped { n_steps: usize, width: usize },
}

impl Layout {
    pub(crate) fn for_aim(aim: Aim, obs: &Observation) -> Result<Layout> {
        let n_steps = obs.num_steps();
        match aim {
            Aim::Rewards => Ok(Layout::Flat { n_steps }),
            Aim::States => {
                let width = obs.states().next().map_or(0, Vec::len);
                Ok(Layout::Grouped { n_steps, width })
            }
            Aim::Actions => match obs.trajectories.first().and_then(|t| t.actions.first()) {
                Some(Action::Continuous(a)) => Ok(Layout::Grouped { n_steps, width: a.len() }),
                _ => Err(Error::Unsupported(
                    "discrete actions have no continuous perturbation layout".into(),
                )),
            },
            Aim::Hybrid => Err(Error::Input("hybrid is not a single poison aim".into())),
        }
    }

    pub(crate) fn effort(&self, d: &[f64]) -> f64 {
        match *self {
            Layout::Flat { n_steps } => norm(d) / (n_steps.max(1) as f64).sqrt(),
            Layout::Grouped { n_steps, width } => {
                let s: f64 = d.chunks(width.max(1)).map(norm).sum();
                s / (n_steps.max(1) as f64).sqrt()
            }
        }
    }

    /// Euclidean projection for `Flat`; group-norm projection onto the
    /// ℓ1 ball for `Grouped`. Feasible inputs come back untouched.
    pub(crate) fn project(&self, d: &mut [f64], eps: f64) {
        if self.effort(d) <= eps {
            return;
        }
        match *self {
            Layout::Flat { n_steps } => {
                let r = eps * (n_steps.max(1) as f64).sqrt();
                let n = norm(d);
                let c = r / n;
                d.iter_mut().for_each(|x| *x *= c);
            }
            Layout::Grouped { n_steps, width } => {
                let r = eps * (n_steps.max(1) as f64).sqrt();
                let w = width.max(1);
                let norms: Vec<f64> = d.chunks(w).map(norm).collect();
                let target = project_l1_nonneg(&norms, r);
                for ((chunk, n), t) in d.chunks_mut(w).zip(&norms).zip(&target) {
                    let c = if *n > 0.0 { t / n } else { 0.0 };
                    chunk.iter_mut().for_each(|x| *x *= c);
                }
            }
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projection of a non-negative vector onto `{x ≥ 0, Σx ≤ r}` by the
/// sort-and-threshold rule.
pub(crate) fn project_l1_nonneg(v: &[f64], r: f64) -> Vec<f64> {
    if v.iter().sum::<f64>() <= r {
        return v.to_vec();
    }
    if r <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - r) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Aim-specific view of an observation as a flat vector.
pub(crate) fn extract(aim: Aim, obs: &Observation) -> Vec<f64> {
    match aim {
        Aim::Rewards => obs.rewards(),
        Aim::States => obs.states_flat(),
        _ => obs
            .actions()
            .iter()
            .flat_map(|a| match a {
                Action::Continuous(v) => v.clone(),
                Action::Discrete(i) => vec![*i as f64],
            })
            .collect(),
    }
}

pub(crate) fn inject(aim: Aim, obs: &Observation, x: &[f64]) -> Result<Observation> {
    match aim {
        Aim::Rewards => obs.with_rewards(x),
        Aim::States => obs.with_states_flat(x),
        _ => {
            let width = match obs.trajectories.first().and_then(|t| t.actions.first()) {
                Some(Action::Continuous(a)) => a.len(),
                _ => return Err(Error::Unsupported("discrete actions are not injected from floats".into())),
            };
            if x.len() != width * obs.num_steps() {
                return Err(shape_err("action vector length does not match observation"));
            }
            let acts: Vec<Action> = x.chunks(width.max(1)).map(|c| Action::Continuous(c.to_vec())).collect();
            obs.with_actions(&acts)
        }
    }
}

fn check_same_shape(clean: &Observation, other: &Observation) -> Result<()> {
    let same = clean.trajectories.len() == other.trajectories.len()
        && clean
            .trajectories
            .iter()
            .zip(&other.trajectories)
            .all(|(a, b)| {
                a.len() == b.len()
                    && a.states.len() == b.states.len()
                    && a.states.iter().zip(&b.states).all(|(x, y)| x.len() == y.len())
                    && a.actions.iter().zip(&b.actions).all(|(x, y)| match (x, y) {
                        (Action::Discrete(_), Action::Discrete(_)) => true,
                        (Action::Continuous(u), Action::Continuous(v)) => u.len() == v.len(),
                        _ => false,
                    })
            });
    if same {
        Ok(())
    } else {
        Err(Error::Input("clean and poisoned observations differ in shape".into()))
    }
}

fn is_discrete(obs: &Observation) -> bool {
    matches!(
        obs.trajectories.first().and_then(|t| t.actions.first()),
        Some(Action::Discrete(_))
    )
}

/// Effort `U` spent turning `clean` into `poisoned` on one aim. Discrete
/// actions count the fraction of flipped steps.
pub fn total_effort(aim: Aim, clean: &Observation, poisoned: &Observation) -> Result<f64> {
    check_same_shape(clean, poisoned)?;
    if aim == Aim::Actions && is_discrete(clean) {
        let n = clean.num_steps();
        if n == 0 {
            return Ok(0.0);
        }
        let flips = clean
            .actions()
            .iter()
            .zip(poisoned.actions())
            .filter(|(a, b)| **a != *b)
            .count();
        return Ok(flips as f64 / n as f64);
    }
    let layout = Layout::for_aim(aim, clean)?;
    let d: Vec<f64> = extract(aim, poisoned)
        .iter()
        .zip(extract(aim, clean))
        .map(|(p, c)| p - c)
        .collect();
    Ok(layout.effort(&d))
}

/// Largest number of discrete-action flips allowed at power `eps`.
pub fn flip_cap(eps: f64, n_steps: usize) -> usize {
    ((eps * n_steps as f64) + 1e-9).floor().max(0.0) as usize
}

/// Pulls `candidate` back into the power ball around `clean`. For discrete
/// actions, `gains` ranks the flips (largest kept); without it earlier
/// steps win.
pub fn project_onto_power(
    aim: Aim,
    clean: &Observation,
    candidate: &Observation,
    eps: f64,
    gains: Option<&[f64]>,
) -> Result<Observation> {
    check_same_shape(clean, candidate)?;
    if aim == Aim::Actions && is_discrete(clean) {
        let n = clean.num_steps();
        let ca = clean.actions();
        let mut pa = candidate.actions();
        let mut flips: Vec<usize> = (0..n).filter(|&t| ca[t] != pa[t]).collect();
        let cap = flip_cap(eps, n);
        if flips.len() <= cap {
            return Ok(candidate.clone());
        }
        if let Some(g) = gains {
            if g.len() != n {
                return Err(shape_err("gain vector length does not match observation"));
            }
            flips.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
        }
        for &t in &flips[cap..] {
            pa[t] = ca[t].clone();
        }
        return candidate.with_actions(&pa);
    }
    let layout = Layout::for_aim(aim, clean)?;
    let c = extract(aim, clean);
    let mut d: Vec<f64> = extract(aim, candidate).iter().zip(&c).map(|(p, q)| p - q).collect();
    if layout.effort(&d) <= eps {
        return Ok(candidate.clone());
    }
    layout.project(&mut d, eps);
    let x: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
    inject(aim, clean, &x)
}
