use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use poisonlab::harness::{
    load_config, load_sweep, report, run_game, run_key, run_radius, run_sweep, write_radius_csv, write_run,
    AttackerKind, RunConfig,
};
use poisonlab::Error;

/// Output root for every command that writes files.
const OUT_ENV: &str = "POISONLAB_OUT";
/// Exit status for invariant violations; other failures exit with 1.
const INVARIANT_EXIT: u8 = 3;

#[derive(Parser)]
#[command(name = "poisonlab", version, about = "Online poisoning of policy-gradient learners")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the learner with no attacker, whatever the config's [attacker] says.
    Train { config: PathBuf },
    /// Train the learner against the configured attacker.
    Attack { config: PathBuf },
    /// Stability (and optionally robustness) radius per δ of the [radius] section.
    Radius { config: PathBuf },
    /// Run every config of a sweep spec.
    Sweep {
        spec: PathBuf,
        /// Worker threads.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Aggregate every summary.json below a directory into aggregate.csv.
    Report { dir: PathBuf },
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("poisonlab-out"))
}

fn key_dir(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn run_dir(cfg: &RunConfig) -> PathBuf {
    let base = cfg.run.out_dir.clone().unwrap_or_else(|| key_dir(&run_key(cfg)));
    out_root().join(base).join(format!("seed_{}", cfg.run.seed))
}

fn play(cfg: &RunConfig) -> anyhow::Result<()> {
    let log = run_game(cfg)?;
    let dir = run_dir(cfg);
    write_run(&dir, cfg, &log)?;
    let s = &log.summary;
    println!(
        "{}: final_reward={} eval_return={} attacks={}/{} -> {}",
        s.key,
        s.final_reward,
        s.eval_return,
        s.total_attacks,
        s.budget,
        dir.display()
    );
    Ok(())
}

fn radius(path: &Path) -> anyhow::Result<()> {
    let cfg = load_config(path)?;
    let rows = run_radius(&cfg)?;
    let dir = out_root().join(cfg.run.out_dir.clone().unwrap_or_else(|| "radius".into()));
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("radius.csv");
    write_radius_csv(&rows, std::fs::File::create(&file)?)?;
    write_radius_csv(&rows, std::io::stdout())?;
    eprintln!("wrote {}", file.display());
    Ok(())
}

fn sweep(path: &Path, jobs: usize) -> anyhow::Result<()> {
    let spec = load_sweep(path)?;
    let result = run_sweep(&spec, jobs)?;
    let root = out_root();
    let mut violations = Vec::new();
    for r in &result.runs {
        match &r.outcome {
            Ok(log) => {
                let dir = root.join(key_dir(&r.key)).join(format!("seed_{}", r.seed));
                write_run(&dir, &r.config, log)?;
            }
            Err(e) => {
                eprintln!("{} seed {}: {e}", r.key, r.seed);
                if e.starts_with("invariant violated") {
                    violations.push(e.clone());
                }
            }
        }
    }
    let rows = report(&root, std::fs::File::create(root.join("aggregate.csv"))?)?;
    for a in &rows {
        println!(
            "{}: runs={} failed={} final_reward={} ± {} attacks={}",
            a.key, a.runs, a.failed, a.mean_final_reward, a.std_final_reward, a.mean_attacks
        );
    }
    if !violations.is_empty() {
        return Err(Error::Invariant(format!("{} runs violated invariants", violations.len())).into());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Train { config } => {
            let mut cfg = load_config(&config)?;
            cfg.attacker.kind = AttackerKind::None;
            play(&cfg)
        }
        Cmd::Attack { config } => {
            let cfg = load_config(&config)?;
            if cfg.attacker.kind == AttackerKind::None {
                bail!("{}: [attacker] kind is none; use `train`", config.display());
            }
            play(&cfg)
        }
        Cmd::Radius { config } => radius(&config),
        Cmd::Sweep { spec, jobs } => sweep(&spec, jobs),
        Cmd::Report { dir } => {
            let out = dir.join("aggregate.csv");
            report(&dir, std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?)?;
            report(&dir, std::io::stdout())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Invariant(_)) => ExitCode::from(INVARIANT_EXIT),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
