use super::{RadiusRow, RunConfig};
use crate::envs::{rollout, Env, RolloutMode};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::vulnerability::{
    robustness_radius_mdp, stability_radius_mdp, stability_radius_update, RadiusEstimate, RobustnessCriterion,
};

fn row(kind: &str, est: &RadiusEstimate) -> RadiusRow {
    RadiusRow {
        kind: kind.to_string(),
        delta: est.delta,
        lo: est.lo,
        hi: est.hi,
        trace_len: est.trace.len(),
    }
}

/// Stability radius of the learner's update (and, when asked, robustness
/// radius of its initial policy) at every `δ` of the `[radius]` section.
///
/// Tabular environments sample random tabular policies; others sample fresh
/// initializations of the configured learner.
pub fn run_radius(cfg: &RunConfig) -> Result<Vec<RadiusRow>> {
    cfg.validate()?;
    let rc = cfg
        .radius
        .as_ref()
        .ok_or_else(|| Error::Config("missing [radius] section".into()))?;
    if rc.deltas.is_empty() {
        return Err(Error::Config("radius.deltas is empty".into()));
    }
    let env = cfg.env.build()?;
    let mut root = Rng::new(cfg.run.seed);
    let mut rows = Vec::new();
    for &delta in &rc.deltas {
        let mut rng = root.split();
        let est = match &env {
            Env::Tabular(mdp) => {
                stability_radius_mdp(cfg.learner.algo, mdp, rc.aim, delta, &rc.sampling, &rc.search, &mut rng)?
            }
            _ => {
                let mut best: Option<RadiusEstimate> = None;
                for _ in 0..rc.sampling.n_policies.max(1) {
                    let mut prng = rng.split();
                    let learner = cfg.learner.build(&env, &mut prng)?;
                    for _ in 0..rc.sampling.n_obs_per_policy.max(1) {
                        let obs = rollout(
                            &learner.policy,
                            &env,
                            RolloutMode::Episodes(rc.sampling.episodes_per_obs.max(1)),
                            &mut prng,
                        )?;
                        let est = stability_radius_update(&learner, &obs, rc.aim, delta, None, &rc.search, &mut prng)?;
                        let better = match &best {
                            None => true,
                            Some(b) => est.hi.value().unwrap_or(f64::INFINITY) < b.hi.value().unwrap_or(f64::INFINITY),
                        };
                        if better {
                            best = Some(est);
                        }
                    }
                }
                best.expect("at least one sample")
            }
        };
        rows.push(row("stability", &est));

        if rc.robustness_states > 0 {
            let learner = cfg.learner.build(&env, &mut rng)?;
            let obs = rollout(&learner.policy, &env, RolloutMode::Steps(rc.robustness_states), &mut rng)?;
            let states: Vec<Vec<f64>> = obs.states().cloned().collect();
            let est = robustness_radius_mdp(
                &learner.policy,
                &states,
                RobustnessCriterion::Discrepancy { delta },
                &rc.search,
                &mut rng,
            )?;
            rows.push(row("robustness", &est));
        }
    }
    Ok(rows)
}
