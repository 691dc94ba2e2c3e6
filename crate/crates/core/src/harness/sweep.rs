use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_game, run_key, AttackerKind, RunConfig, RunLog, Summary};
use crate::attack::{Access, Aim};
use crate::error::{Error, Result};
use crate::learners::Algo;

/// Values to sweep; omitted axes keep the base config's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aims: Option<Vec<Aim>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attackers: Option<Vec<AttackerKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<Vec<Access>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algos: Option<Vec<Algo>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: SweepAxes,
}

fn axis<T: Clone>(name: &str, values: &Option<Vec<T>>, base: T) -> Result<Vec<T>> {
    match values {
        Some(v) if v.is_empty() => Err(Error::Config(format!("sweep axis `{name}` is empty"))),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![base]),
    }
}

impl SweepSpec {
    /// The Cartesian product of the axes, with duplicate `(key, seed)`
    /// pairs dropped (axes that do not apply to a run collapse).
    pub fn expand(&self) -> Result<Vec<RunConfig>> {
        let a = &self.axes;
        if a.seeds.is_empty() {
            return Err(Error::Config("sweep axis `seeds` is empty".into()));
        }
        let b = &self.base;
        let ratios: Vec<Option<f64>> = match &a.budget_ratios {
            Some(v) if v.is_empty() => return Err(Error::Config("sweep axis `budget_ratios` is empty".into())),
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let eps = axis("eps", &a.eps, b.attacker.eps)?;
        let aims = axis("aims", &a.aims, b.attacker.aim)?;
        let kinds = axis("attackers", &a.attackers, b.attacker.kind)?;
        let access = axis("access", &a.access, b.attacker.access)?;
        let algos = axis("algos", &a.algos, b.learner.algo)?;

        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &algo in &algos {
            for &kind in &kinds {
                for &aim in &aims {
                    for &e in &eps {
                        for &r in &ratios {
                            for &acc in &access {
                                for &seed in &a.seeds {
                                    let mut c = b.clone();
                                    c.learner.algo = algo;
                                    c.attacker.kind = kind;
                                    c.attacker.aim = aim;
                                    c.attacker.eps = e;
                                    c.attacker.access = acc;
                                    if let Some(r) = r {
                                        c.attacker.budget = None;
                                        c.attacker.budget_ratio = Some(r);
                                    }
                                    c.run.seed = seed;
                                    if seen.insert((run_key(&c), seed)) {
                                        out.push(c);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let text = std::fs::read_to_string(path)?;
    let mut spec: SweepSpec =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let super::EnvConfig::Tabular { path: p } = &mut spec.base.env {
        if p.is_relative() {
            *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
        }
    }
    Ok(spec)
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub key: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Failed runs keep their error message.
    pub outcome: std::result::Result<RunLog, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_final_reward: f64,
    /// Sample standard deviation across seeds; 0 for a single run.
    pub std_final_reward: f64,
    pub mean_eval_return: f64,
    pub mean_attacks: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Sorted by `(key, seed)`.
    pub runs: Vec<SweepRun>,
    pub aggregate: Vec<AggregateRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}

/// Groups summaries by key, sorted by key. `failed` lists the keys of runs
/// that produced no summary.
pub fn aggregate(summaries: &[Summary], failed: &[String]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<&str, (Vec<&Summary>, usize)> = BTreeMap::new();
    for s in summaries {
        groups.entry(&s.key).or_default().0.push(s);
    }
    for k in failed {
        groups.entry(k).or_default().1 += 1;
    }
    groups
        .into_iter()
        .map(|(key, (ss, nf))| {
            let finals: Vec<f64> = ss.iter().map(|s| s.final_reward).collect();
            let evals: Vec<f64> = ss.iter().map(|s| s.eval_return).collect();
            let attacks: Vec<f64> = ss.iter().map(|s| s.total_attacks as f64).collect();
            let (mean_final_reward, std_final_reward) = mean_std(&finals);
            AggregateRow {
                key: key.to_string(),
                runs: ss.len(),
                failed: nf,
                mean_final_reward,
                std_final_reward,
                mean_eval_return: mean_std(&evals).0,
                mean_attacks: mean_std(&attacks).0,
            }
        })
        .collect()
}

/// Runs every config of the sweep on up to `parallelism` threads. Failed
/// runs are recorded and do not stop the others.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<SweepResult> {
    let configs = spec.expand()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut runs: Vec<SweepRun> = pool.install(|| {
        configs
            .into_par_iter()
            .map(|config| SweepRun {
                key: run_key(&config),
                seed: config.run.seed,
                outcome: run_game(&config).map_err(|e| e.to_string()),
                config,
            })
            .collect()
    });
    runs.sort_by(|a, b| (&a.key, a.seed).cmp(&(&b.key, b.seed)));
    let summaries: Vec<Summary> = runs
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|l| l.summary.clone()))
        .collect();
    let failed: Vec<String> = runs.iter().filter(|r| r.outcome.is_err()).map(|r| r.key.clone()).collect();
    let aggregate = aggregate(&summaries, &failed);
    Ok(SweepResult { runs, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(axes: &str) -> SweepSpec {
        let text = format!(
            r#"
[base.env]
name = "bandit"
arms = [1.0, 0.0]

[base.learner]
algo = "vpg"
policy = "tabular"
episodes = 2

[base.attacker]
kind = "random"
eps = 0.2
budget_ratio = 0.5

[base.run]
iterations = 4

[axes]
{axes}
"#
        );
        toml::from_str(&text).unwrap()
    }

    #[test]
    fn single_value_axes_give_one_run() {
        let r = run_sweep(&spec("seeds = [5]"), 1).unwrap();
        assert_eq!(r.runs.len(), 1);
        let s = &r.runs[0].outcome.as_ref().unwrap().summary;
        assert_eq!(r.aggregate.len(), 1);
        assert_eq!(r.aggregate[0].mean_final_reward, s.final_reward);
        assert_eq!(r.aggregate[0].std_final_reward, 0.0);
    }

    #[test]
    fn aggregate_is_the_hand_average_and_order_is_stable() {
        let sp = spec("seeds = [1, 2, 3]\nattackers = [\"none\", \"random\"]\neps = [0.1, 0.2]");
        // "none" collapses over eps
        assert_eq!(sp.expand().unwrap().len(), 3 + 6);
        let a = run_sweep(&sp, 2).unwrap();
        let b = run_sweep(&sp, 1).unwrap();
        let keys_a: Vec<_> = a.runs.iter().map(|r| (r.key.clone(), r.seed)).collect();
        let keys_b: Vec<_> = b.runs.iter().map(|r| (r.key.clone(), r.seed)).collect();
        assert_eq!(keys_a, keys_b);
        assert_eq!(a.aggregate, b.aggregate);
        for row in &a.aggregate {
            let finals: Vec<f64> = a
                .runs
                .iter()
                .filter(|r| r.key == row.key)
                .map(|r| r.outcome.as_ref().unwrap().summary.final_reward)
                .collect();
            let m = finals.iter().sum::<f64>() / finals.len() as f64;
            assert!((row.mean_final_reward - m).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_axis_is_rejected_and_failures_are_recorded() {
        assert!(spec("seeds = []").expand().is_err());
        assert!(spec("seeds = [1]\neps = []").expand().is_err());
        let mut sp = spec("seeds = [1, 2]");
        sp.base.attacker.kind = AttackerKind::Va2cp;
        sp.base.attacker.aim = Aim::Hybrid;
        sp.base.attacker.pgd.max_iters = 0;
        let r = run_sweep(&sp, 1).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.runs.iter().all(|r| r.outcome.is_err()));
        assert_eq!(r.aggregate[0].failed, 2);
    }
}
