//! Acceptance suite: every criterion runs in order and prints one
//! `PASS`/`FAIL` line to stderr (visible without `--nocapture`). The test
//! fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use poisonlab::attack::{craft_poison, decide_attack, total_effort, Aim, Objective, PgdConfig, TargetPolicy};
use poisonlab::envs::{
    bandit_mdp, policy_evaluation, random_mdp, rollout, Env, Observation, RolloutMode, TabularMDP,
    TabularPolicy, Trajectory,
};
use poisonlab::harness::{
    run_sweep, write_csv, AttackerKind, RunConfig, RunLog, SweepAxes, SweepResult, SweepSpec,
};
use poisonlab::learners::{vpg_gradient, vpg_surrogate, vpg_update, LearnerState};
use poisonlab::numcore::{
    log_prob_and_grads, softmax, value_forward_and_grad, Action, ActionSpace, Head, PolicyParams, Rng, ValueParams,
    LOG_STD_MAX, LOG_STD_MIN,
};
use poisonlab::vulnerability::{
    linear_threshold_policy, reward_drop_bound, robustness_radius_state, RadiusSearch, RobustnessCriterion,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report_line(id: usize, name: &str, limit: Option<Duration>, elapsed: Duration, o: &Outcome) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let limit_note = match limit {
        Some(l) if !in_time => format!(" over the {:.0} s limit", l.as_secs_f64()),
        _ => String::new(),
    };
    let line = format!(
        "criterion {id:>2} {} {name}: {} ({:.1} s{limit_note})\n",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of a difference of two independent means.
fn pooled_se(a: &[f64], b: &[f64]) -> f64 {
    (sample_var(a) / a.len() as f64 + sample_var(b) / b.len() as f64).sqrt()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + h;
            let up = f(&x);
            x[i] = x0 - h;
            let down = f(&x);
            x[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_policy(rng: &mut Rng, state_dim: usize, continuous: bool) -> PolicyParams {
    if continuous {
        let mut p = PolicyParams::mlp(state_dim, 5, ActionSpace::Continuous(2), rng);
        p.head = Head::Gaussian {
            log_std: vec![rng.uniform(-1.0, 0.5), rng.uniform(-1.0, 0.5)],
        };
        p
    } else {
        PolicyParams::mlp(state_dim, 5, ActionSpace::Discrete(3), rng)
    }
}

fn random_action(rng: &mut Rng, continuous: bool) -> Action {
    if continuous {
        Action::Continuous(vec![rng.normal(), rng.normal()])
    } else {
        Action::Discrete(rng.index(3))
    }
}

fn random_batch(rng: &mut Rng, state_dim: usize, continuous: bool) -> Observation {
    let trs = (0..1 + rng.index(3))
        .map(|_| {
            let len = 1 + rng.index(5);
            Trajectory {
                states: (0..len).map(|_| (0..state_dim).map(|_| rng.normal()).collect()).collect(),
                actions: (0..len).map(|_| random_action(rng, continuous)).collect(),
                rewards: (0..len).map(|_| rng.normal()).collect(),
                dones: (0..len).map(|t| t + 1 == len).collect(),
                bootstrap_state: None,
            }
        })
        .collect();
    Observation::new(trs, 0)
}

fn gradient_fidelity() -> Outcome {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    const N: usize = 20;
    let mut rng = Rng::new(101);
    let mut worst = [0.0f64; 4];
    for i in 0..2 * N {
        let continuous = i % 2 == 1;
        let pol = random_policy(&mut rng, 4, continuous);
        let flat = pol.to_flat();
        let s: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let a = random_action(&mut rng, continuous);

        let g = log_prob_and_grads(&pol, &s, &a).unwrap();
        let fd = central_diff(&flat, H, |w| pol.with_flat(w).unwrap().log_prob(&s, &a).unwrap());
        let fd_s = central_diff(&s, H, |x| pol.log_prob(x, &a).unwrap());
        worst[0] = worst[0].max(rel_err(&g.grad_params, &fd)).max(rel_err(&g.grad_state, &fd_s));

        let v = ValueParams::new(4, 6, &mut rng);
        let (_, gv) = value_forward_and_grad(&v, &s).unwrap();
        let fdv = central_diff(&v.to_flat(), H, |w| v.with_flat(w).unwrap().value(&s).unwrap());
        worst[1] = worst[1].max(rel_err(&gv, &fdv));

        let obs = random_batch(&mut rng, 4, continuous);
        let gamma = rng.uniform(0.5, 0.99);
        let gp = vpg_gradient(&pol, &obs, gamma).unwrap();
        let fdp = central_diff(&flat, H, |w| vpg_surrogate(&pol.with_flat(w).unwrap(), &obs, gamma).unwrap());
        worst[2] = worst[2].max(rel_err(&gp, &fdp));

        let next = random_policy(&mut rng, 4, continuous);
        let critic = ValueParams::new(4, 6, &mut rng);
        let objectives = if continuous {
            vec![Objective::attacker_value(&pol, &obs, &critic, gamma).unwrap()]
        } else {
            vec![
                Objective::attacker_value(&pol, &obs, &critic, gamma).unwrap(),
                Objective::targeted(TargetPolicy::Action(rng.index(3)), &obs),
            ]
        };
        for obj in objectives {
            let ga = obj.grad(&next).unwrap().expect("closed-form gradient");
            let fda = central_diff(&next.to_flat(), H, |w| obj.value(&next.with_flat(w).unwrap()).unwrap());
            worst[3] = worst[3].max(rel_err(&ga, &fda));
        }
    }
    outcome(
        worst.iter().all(|w| *w < TOL),
        format!(
            "{} instances each; worst relative error log-prob {:.1e}, value {:.1e}, VPG {:.1e}, attacker {:.1e}",
            2 * N,
            worst[0],
            worst[1],
            worst[2],
            worst[3]
        ),
    )
}

fn clamped(policy: &PolicyParams) -> bool {
    matches!(&policy.head, Head::Gaussian { log_std } if log_std.iter().any(|x| *x <= LOG_STD_MIN || *x >= LOG_STD_MAX))
}

fn jacobian_exactness() -> Outcome {
    let mut rng = Rng::new(202);
    let mut worst = 0.0f64;
    let mut redrawn = 0;
    let mut done = 0;
    while done < 50 {
        let continuous = done % 3 == 2;
        let pol = random_policy(&mut rng, 3, continuous);
        let obs = random_batch(&mut rng, 3, continuous);
        let lr = if continuous { rng.uniform(0.005, 0.05) } else { rng.uniform(0.01, 0.5) };
        let l = LearnerState::vpg(pol, lr, rng.uniform(0.5, 0.99));
        let j = poisonlab::attack::vpg_reward_jacobian(&l, &obs).unwrap();
        let dr: Vec<f64> = (0..obs.num_steps()).map(|_| rng.normal()).collect();
        let r2: Vec<f64> = obs.rewards().iter().zip(&dr).map(|(a, b)| a + b).collect();
        let base = vpg_update(&l, &obs).unwrap().policy;
        let moved = vpg_update(&l, &obs.with_rewards(&r2).unwrap()).unwrap().policy;
        // the log_std clamp makes the step piecewise linear; the map only
        // describes the unclamped piece
        if clamped(&base) || clamped(&moved) {
            redrawn += 1;
            continue;
        }
        done += 1;
        for ((x, y), d) in base.to_flat().iter().zip(&moved.to_flat()).zip(j.apply(&dr)) {
            worst = worst.max((y - x - d).abs());
        }
    }
    outcome(
        worst < 1e-9,
        format!("50 batches ({redrawn} redrawn for hitting the log_std clamp); max abs error {worst:.1e}"),
    )
}

fn random_tabular_policy(rng: &mut Rng, n_states: usize, n_actions: usize) -> TabularPolicy {
    (0..n_states)
        .map(|_| softmax(&(0..n_actions).map(|_| 1.5 * rng.normal()).collect::<Vec<_>>()))
        .collect()
}

fn max_tv(p: &TabularPolicy, q: &TabularPolicy) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Mixes each row toward a random distribution so its TV distance from
/// the original row is at most `delta`; most draws sit near `delta`.
fn perturb_within(rng: &mut Rng, p: &TabularPolicy, delta: f64) -> TabularPolicy {
    p.iter()
        .map(|row| {
            let u = rng.simplex(row.len());
            let tv = 0.5 * row.iter().zip(&u).map(|(x, y)| (x - y).abs()).sum::<f64>();
            let reach = if rng.uniform01() < 0.7 { 1.0 } else { rng.uniform01() };
            let t = if tv > 0.0 { (reach * delta / tv).min(1.0) } else { 0.0 };
            row.iter().zip(&u).map(|(x, y)| (1.0 - t) * x + t * y).collect()
        })
        .collect()
}

fn drop_bound_dominates() -> Outcome {
    let mut rng = Rng::new(303);
    let mut checks = 0usize;
    let mut violations = 0usize;
    let mut tightest = f64::INFINITY;
    for _ in 0..100 {
        let ns = 2 + rng.index(7);
        let na = 2 + rng.index(3);
        let gamma = rng.uniform(0.5, 0.95);
        let mdp: TabularMDP = random_mdp(ns, na, gamma, &mut rng);
        let pi = random_tabular_policy(&mut rng, ns, na);
        let eta = policy_evaluation(&mdp, &pi).unwrap().eta;
        for delta in [0.01, 0.05, 0.1] {
            let bound = reward_drop_bound(&mdp, &pi, delta).unwrap();
            for _ in 0..200 {
                let q = perturb_within(&mut rng, &pi, delta);
                assert!(max_tv(&pi, &q) <= delta + 1e-12);
                let drop = eta - policy_evaluation(&mdp, &q).unwrap().eta;
                checks += 1;
                if drop > bound {
                    violations += 1;
                }
                if bound > 0.0 {
                    tightest = tightest.min((bound - drop) / bound);
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checks} perturbations; smallest relative slack {tightest:.3}"),
    )
}

fn sweep(base: &str, axes: SweepAxes) -> SweepResult {
    let spec = SweepSpec {
        base: RunConfig::from_toml_str(base).unwrap(),
        axes,
    };
    run_sweep(&spec, 1).unwrap()
}

fn axes(attackers: &[AttackerKind]) -> SweepAxes {
    SweepAxes {
        seeds: (0..10).collect(),
        budget_ratios: None,
        eps: None,
        aims: None,
        attackers: Some(attackers.to_vec()),
        access: None,
        algos: None,
    }
}

/// Every finished run of the acceptance sweep, kept for the feasibility
/// and determinism checks.
#[derive(Default)]
struct Ledger {
    runs: Vec<(RunConfig, Result<RunLog, String>)>,
}

impl Ledger {
    fn absorb(&mut self, r: &SweepResult) {
        for run in &r.runs {
            self.runs.push((run.config.clone(), run.outcome.clone()));
        }
    }
}

/// Per-seed values of `metric` for the runs of `kind`, in seed order.
fn per_seed(r: &SweepResult, pick: impl Fn(&RunConfig) -> bool, metric: impl Fn(&RunLog) -> f64) -> Vec<f64> {
    r.runs
        .iter()
        .filter(|run| pick(&run.config))
        .map(|run| match &run.outcome {
            Ok(log) => metric(log),
            Err(_) => f64::NAN,
        })
        .collect()
}

fn final_reward(log: &RunLog) -> f64 {
    log.summary.final_reward
}

fn kind_is(kind: AttackerKind) -> impl Fn(&RunConfig) -> bool {
    move |c: &RunConfig| c.attacker.kind == kind
}

const RIVER_VPG: &str = r#"
[env]
name = "river"
[learner]
algo = "vpg"
policy = "tabular"
lr_policy = 0.5
episodes = 10
[attacker]
kind = "none"
aim = "rewards"
eps = 0.5
budget_ratio = 0.3
pgd = { max_iters = 10, step_frac = 0.2 }
[run]
iterations = 300
"#;

const RIVER_A2C: &str = r#"
[env]
name = "river"
[learner]
algo = "a2c"
policy = "tabular"
lr_policy = 0.5
lr_critic = 0.05
critic_hidden = 16
n_envs = 8
n_steps = 5
[attacker]
kind = "none"
aim = "rewards"
eps = 0.5
budget_ratio = 0.3
pgd = { max_iters = 10, step_frac = 0.2, fd_coords = 16 }
[run]
iterations = 300
"#;

const CARTPOLE_VPG: &str = r#"
[env]
name = "cartpole"
[learner]
algo = "vpg"
hidden = 16
lr_policy = 0.001
episodes = 10
[attacker]
kind = "none"
aim = "rewards"
eps = 0.5
budget_ratio = 0.3
pgd = { max_iters = 10, step_frac = 0.2, fd_coords = 16 }
[run]
iterations = 500
"#;

const CARTPOLE_A2C: &str = r#"
[env]
name = "cartpole"
[learner]
algo = "a2c"
hidden = 16
critic_hidden = 16
lr_policy = 0.02
lr_critic = 0.05
n_envs = 16
n_steps = 5
[attacker]
kind = "none"
aim = "rewards"
eps = 0.5
budget_ratio = 0.3
pgd = { max_iters = 10, step_frac = 0.2, fd_coords = 16 }
[run]
iterations = 500
"#;

fn attack_ordering(ledger: &mut Ledger) -> Outcome {
    use AttackerKind::*;
    let mut all = true;
    let mut notes = Vec::new();
    for (name, base) in [
        ("river/vpg", RIVER_VPG),
        ("river/a2c", RIVER_A2C),
        ("cartpole/vpg", CARTPOLE_VPG),
        ("cartpole/a2c", CARTPOLE_A2C),
    ] {
        let r = sweep(base, axes(&[None, Random, Acp, Va2cp]));
        ledger.absorb(&r);
        let none = per_seed(&r, kind_is(None), final_reward);
        let random = per_seed(&r, kind_is(Random), final_reward);
        let acp = per_seed(&r, kind_is(Acp), final_reward);
        let va2cp = per_seed(&r, kind_is(Va2cp), final_reward);
        let (mn, mr, ma, mv) = (mean(&none), mean(&random), mean(&acp), mean(&va2cp));
        let paired = va2cp.iter().zip(&acp).filter(|(v, a)| v <= a).count();
        let gap = mn - mv;
        let se = pooled_se(&none, &va2cp);
        let ok = mn > mr && mr > ma && ma >= mv && gap > 2.0 * se && paired >= 7;
        all &= ok;
        notes.push(format!(
            "{name} {}: none {mn:.3}, random {mr:.3}, acp {ma:.3}, va2cp {mv:.3}, gap {gap:.3} vs 2se {:.3}, va2cp <= acp in {paired}/10",
            if ok { "ok" } else { "FAIL" },
            2.0 * se
        ));
    }
    outcome(all, notes.join("; "))
}

const CARTPOLE_TARGETED: &str = r#"
[env]
name = "cartpole"
[learner]
algo = "a2c"
hidden = 16
critic_hidden = 16
lr_policy = 0.02
lr_critic = 0.05
n_envs = 16
n_steps = 5
[attacker]
kind = "none"
aim = "states"
eps = 0.5
budget_ratio = 0.5
goal = { targeted = { action = 1 } }
pgd = { max_iters = 10, step_frac = 0.2, fd_coords = 16 }
[run]
iterations = 500
"#;

fn target_fraction(log: &RunLog) -> f64 {
    log.summary.target_fraction.unwrap_or(f64::NAN)
}

fn targeted_reproduction(ledger: &mut Ledger) -> Outcome {
    use AttackerKind::*;
    let r = sweep(CARTPOLE_TARGETED, axes(&[None, Va2cp]));
    ledger.absorb(&r);
    let fgsm_base = CARTPOLE_TARGETED.replace("eps = 0.5", "eps = 0.1");
    let f = sweep(&fgsm_base, axes(&[Fgsm]));
    ledger.absorb(&f);
    let none = mean(&per_seed(&r, kind_is(None), target_fraction));
    let va2cp = mean(&per_seed(&r, kind_is(Va2cp), target_fraction));
    let fgsm = mean(&per_seed(&f, kind_is(Fgsm), target_fraction));
    outcome(
        va2cp >= 0.8 && va2cp - fgsm >= 0.15 && va2cp - none >= 0.15,
        format!("target-action fraction va2cp {va2cp:.3} (need >= 0.8), fgsm {fgsm:.3}, none {none:.3}"),
    )
}

fn hybrid_non_inferiority(ledger: &mut Ledger) -> Outcome {
    let base = RIVER_VPG.replace(
        "pgd = {",
        "hybrid_eps = { rewards = 0.5, actions = 0.1, states = 0.5 }\npgd = { fd_coords = 16, ",
    );
    let mut singles = Vec::new();
    for (aim, eps) in [("rewards", 0.5), ("actions", 0.1), ("states", 0.5)] {
        let cfg = base
            .replace("aim = \"rewards\"", &format!("aim = \"{aim}\""))
            .replace("eps = 0.5\n", &format!("eps = {eps}\n"));
        let r = sweep(&cfg, axes(&[AttackerKind::Va2cp]));
        ledger.absorb(&r);
        singles.push((aim, per_seed(&r, |_| true, final_reward)));
    }
    let r = sweep(&base.replace("aim = \"rewards\"", "aim = \"hybrid\""), axes(&[AttackerKind::Va2cp]));
    ledger.absorb(&r);
    let hybrid = per_seed(&r, |_| true, final_reward);
    let (best_aim, best) = singles
        .iter()
        .min_by(|a, b| mean(&a.1).total_cmp(&mean(&b.1)))
        .unwrap();
    let limit = mean(best) + pooled_se(&hybrid, best);
    let singles_note: Vec<String> = singles.iter().map(|(a, v)| format!("{a} {:.3}", mean(v))).collect();
    outcome(
        mean(&hybrid) <= limit,
        format!(
            "hybrid {:.3} vs best single ({best_aim}) + se = {limit:.3}; singles {}",
            mean(&hybrid),
            singles_note.join(", ")
        ),
    )
}

fn black_box_degradation(ledger: &mut Ledger) -> Outcome {
    let mut ax = axes(&[AttackerKind::None, AttackerKind::Va2cp]);
    ax.access = Some(vec![poisonlab::attack::Access::White, poisonlab::attack::Access::Black]);
    let r = sweep(RIVER_VPG, ax);
    ledger.absorb(&r);
    let none = per_seed(&r, kind_is(AttackerKind::None), final_reward);
    let white = per_seed(
        &r,
        |c| c.attacker.kind == AttackerKind::Va2cp && c.attacker.access == poisonlab::attack::Access::White,
        final_reward,
    );
    let black = per_seed(
        &r,
        |c| c.attacker.kind == AttackerKind::Va2cp && c.attacker.access == poisonlab::attack::Access::Black,
        final_reward,
    );
    let (mw, mb, mn) = (mean(&white), mean(&black), mean(&none));
    let (se_wb, se_bn) = (pooled_se(&white, &black), pooled_se(&black, &none));
    outcome(
        mb - mw > se_wb && mn - mb > se_bn,
        format!(
            "white {mw:.3}, black {mb:.3}, none {mn:.3}; black-white {:.3} vs se {se_wb:.3}, none-black {:.3} vs se {se_bn:.3}",
            mb - mw,
            mn - mb
        ),
    )
}

fn feasibility(ledger: &Ledger) -> Outcome {
    let mut rows = 0usize;
    let mut violations = Vec::new();
    for (cfg, outcome) in &ledger.runs {
        let key = poisonlab::harness::run_key(cfg);
        let log = match outcome {
            Ok(l) => l,
            Err(e) => {
                violations.push(format!("{key} seed {}: {e}", cfg.run.seed));
                continue;
            }
        };
        let cap = match &cfg.attacker.hybrid_eps {
            Some(h) => h.rewards.max(h.actions).max(h.states),
            None => cfg.attacker.eps,
        };
        let budget = cfg.attacker.budget_for(cfg.run.iterations).unwrap();
        let mut attacks = 0;
        for r in &log.rows {
            rows += 1;
            if r.attacked {
                attacks += 1;
            }
            let over_power = r.power > cap * (1.0 + 1e-12) || r.effort > r.power * (1.0 + 1e-9);
            if over_power || (!r.attacked && r.effort != 0.0) {
                violations.push(format!("{key} seed {} k {}: effort {} power {}", cfg.run.seed, r.k, r.effort, r.power));
            }
        }
        if attacks > budget || log.summary.total_attacks != attacks {
            violations.push(format!("{key} seed {}: {attacks} attacks, budget {budget}", cfg.run.seed));
        }
    }
    let first = violations.first().cloned().unwrap_or_default();
    outcome(
        violations.is_empty() && !ledger.runs.is_empty(),
        format!("{} runs, {rows} iterations, {} violations {first}", ledger.runs.len(), violations.len()),
    )
}

fn bandit_optimality() -> Outcome {
    let mut rng = Rng::new(909);
    let pgd = PgdConfig {
        max_iters: 200,
        step_frac: 0.05,
        tol: 0.0,
        ..PgdConfig::default()
    };
    let mut worst = f64::NEG_INFINITY;
    let mut fails = 0;
    for _ in 0..20 {
        let arms = [rng.uniform(0.0, 1.0), rng.uniform(-1.0, 0.0)];
        let mdp = bandit_mdp(&arms, 0.99);
        let env = Env::Tabular(mdp.clone());
        let mut policy = PolicyParams::tabular(mdp.n_states, 2);
        let w: Vec<f64> = policy.to_flat().iter().map(|_| 0.5 * rng.normal()).collect();
        policy = policy.with_flat(&w).unwrap();
        let learner = LearnerState::vpg(policy.clone(), rng.uniform(0.1, 1.0), mdp.gamma);
        let obs = rollout(&policy, &env, RolloutMode::Episodes(2), &mut rng).unwrap();
        let critic = ValueParams::new(mdp.n_states, 4, &mut rng);
        let objective = Objective::attacker_value(&policy, &obs, &critic, mdp.gamma).unwrap();
        let eps = rng.uniform(0.5, 1.5);

        let crafted = craft_poison(&learner, &obs, Aim::Rewards, eps, &objective, &pgd, &mut rng).unwrap();

        let clean = obs.rewards();
        // reward effort is the ℓ2 norm over √N, so the ball has radius ε√N
        let steps = (eps * (clean.len() as f64).sqrt() / 0.01).floor() as i64;
        let mut best = f64::INFINITY;
        for i in -steps..=steps {
            for j in -steps..=steps {
                let d = [i as f64 * 0.01, j as f64 * 0.01];
                let r: Vec<f64> = clean.iter().zip(d).map(|(a, b)| a + b).collect();
                let poisoned = obs.with_rewards(&r).unwrap();
                if total_effort(Aim::Rewards, &obs, &poisoned).unwrap() > eps {
                    continue;
                }
                let next = vpg_update(&learner, &poisoned).unwrap();
                best = best.min(objective.value(&next.policy).unwrap());
            }
        }
        let excess = (crafted.value - best) / best.abs().max(1e-12);
        worst = worst.max(excess);
        if crafted.value > best + 0.05 * best.abs() {
            fails += 1;
        }
    }
    outcome(
        fails == 0,
        format!("20 instances, {fails} outside 5%; worst excess over the grid optimum {:.2}%", 100.0 * worst),
    )
}

fn robustness_oracle() -> Outcome {
    let mut rng = Rng::new(1010);
    let search = RadiusSearch {
        eps_max: 10.0,
        bisection_iters: 30,
        ..RadiusSearch::default()
    };
    let mut worst_hi = f64::NEG_INFINITY;
    let mut lo_ok = true;
    for _ in 0..50 {
        let w: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let s: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let analytic = w.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>().abs() / norm;
        let policy = linear_threshold_policy(&w);
        let est = robustness_radius_state(&policy, &s, RobustnessCriterion::Deterministic, &search, &mut rng).unwrap();
        let hi = est.hi.value().unwrap_or(f64::INFINITY);
        worst_hi = worst_hi.max(hi - analytic);
        lo_ok &= est.lo <= analytic;
    }
    outcome(
        worst_hi <= 1e-3 && lo_ok,
        format!("50 states; max hi - analytic {worst_hi:.1e}, lo below analytic everywhere: {lo_ok}"),
    )
}

fn csv_without_wall_ms(log: &RunLog) -> String {
    let mut buf = Vec::new();
    write_csv(&log.rows, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(ledger: &Ledger) -> Outcome {
    let mut seen = std::collections::BTreeSet::new();
    let mut repeated = 0;
    let mut diffs = Vec::new();
    for (cfg, outcome) in &ledger.runs {
        let key = poisonlab::harness::run_key(cfg);
        let Ok(log) = outcome else { continue };
        if cfg.run.seed != 0 || !seen.insert(key.clone()) {
            continue;
        }
        repeated += 1;
        let again = poisonlab::harness::run_game(cfg).unwrap();
        if csv_without_wall_ms(log) != csv_without_wall_ms(&again) {
            diffs.push(key);
        }
    }
    outcome(
        diffs.is_empty() && repeated > 0,
        format!("{repeated} runs repeated, {} diffs {}", diffs.len(), diffs.join(" ")),
    )
}

fn scheduler_law() -> Outcome {
    let mut rng = Rng::new(1212);
    let mut bad = 0usize;
    for case in 0..10_000 {
        let horizon = 1 + rng.index(60);
        let budget = match case % 3 {
            0 => horizon,
            1 => 0,
            _ => rng.index(horizon + 1),
        };
        let mut psi = Vec::with_capacity(horizon);
        let mut spent = 0;
        for k in 1..=horizon {
            psi.push(if rng.uniform01() < 0.2 { 0.5 } else { rng.uniform01() });
            if decide_attack(&psi, budget, spent, horizon, k) {
                spent += 1;
            }
        }
        let ok = match case % 3 {
            0 => spent == horizon,
            1 => spent == 0,
            _ => spent <= budget,
        };
        if !ok {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("10000 fuzz cases, {bad} violations"))
}

#[test]
fn acceptance_criteria() {
    let mut ledger = Ledger::default();
    let mut failed = Vec::new();
    let mut run = |id: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        if !report_line(id, name, limit, t.elapsed(), &o) {
            failed.push(id);
        }
    };
    let secs = Duration::from_secs;

    run(1, "gradient fidelity", Some(secs(30)), &mut gradient_fidelity);
    run(2, "reward-Jacobian exactness", Some(secs(10)), &mut jacobian_exactness);
    run(3, "reward-drop bound", Some(secs(120)), &mut drop_bound_dominates);
    run(5, "attack ordering", Some(secs(20 * 60)), &mut || attack_ordering(&mut ledger));
    run(6, "targeted attack", Some(secs(15 * 60)), &mut || targeted_reproduction(&mut ledger));
    run(7, "hybrid aim non-inferiority", Some(secs(10 * 60)), &mut || hybrid_non_inferiority(&mut ledger));
    run(8, "black-box degradation", Some(secs(10 * 60)), &mut || black_box_degradation(&mut ledger));
    run(4, "feasibility invariants", None, &mut || feasibility(&ledger));
    run(9, "bandit attack optimality", Some(secs(120)), &mut bandit_optimality);
    run(10, "robustness radius oracle", Some(secs(60)), &mut robustness_oracle);
    run(11, "determinism", None, &mut || determinism(&ledger));
    run(12, "scheduler law", Some(secs(5)), &mut scheduler_law);

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
