use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::{aggregate, AggregateRow};
use super::{Row, RunConfig, RunLog, Summary};
use crate::error::{Error, Result};
use crate::numcore::{write_checkpoint, Checkpoint};
use crate::vulnerability::Bound;

pub const CSV_HEADER: [&str; 7] = ["k", "reward", "attacked", "psi_hat", "effort", "budget", "wall_ms"];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes the per-iteration rows. Floats use shortest round-trip
/// formatting, so equal runs give equal bytes outside `wall_ms`.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.reward.to_string(),
            r.attacked.to_string(),
            r.psi_hat.to_string(),
            r.effort.to_string(),
            r.budget.to_string(),
            format!("{:.3}", r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(summary: &Summary, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes `run.csv`, `summary.json`, `config.toml`, the final policy (and
/// critic) checkpoints and any periodic checkpoints into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, log: &RunLog) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&log.rows, std::fs::File::create(dir.join("run.csv"))?)?;
    write_summary_json(&log.summary, std::fs::File::create(dir.join("summary.json"))?)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    std::fs::write(dir.join("policy.ckpt"), write_checkpoint(&Checkpoint::Policy(log.learner.policy.clone())))?;
    if let Some(c) = &log.learner.critic {
        std::fs::write(dir.join("critic.ckpt"), write_checkpoint(&Checkpoint::Value(c.clone())))?;
    }
    for (k, p) in &log.checkpoints {
        std::fs::write(dir.join(format!("policy_{k:06}.ckpt")), write_checkpoint(&Checkpoint::Policy(p.clone())))?;
    }
    Ok(())
}

/// One probe of the `radius` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub kind: String,
    pub delta: f64,
    pub lo: f64,
    pub hi: Bound,
    pub trace_len: usize,
}

pub fn write_radius_csv<W: Write>(rows: &[RadiusRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "delta", "lo", "hi", "trace_len"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.kind.clone(),
            r.delta.to_string(),
            r.lo.to_string(),
            r.hi.to_string(),
            r.trace_len.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn collect_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every `summary.json` below `dir`, in path order.
pub fn read_summaries(dir: &Path) -> Result<Vec<Summary>> {
    let mut paths = Vec::new();
    collect_summaries(dir, &mut paths)?;
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Aggregates the summaries under `dir` by config key and writes the table
/// as CSV.
pub fn report<W: Write>(dir: &Path, out: W) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(&read_summaries(dir)?, &[]);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "runs", "failed", "mean_final_reward", "std_final_reward", "mean_eval_return", "mean_attacks"])
        .map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.key.clone(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.mean_final_reward.to_string(),
            r.std_final_reward.to_string(),
            r.mean_eval_return.to_string(),
            r.mean_attacks.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(rows)
}
