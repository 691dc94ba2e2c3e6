//! Text checkpoints: a version line, a shape line, then one float per line.
//!
//! ```text
//! poisonlab-ckpt v1
//! policy mlp 4 64 2 softmax
//! 0.0123
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! reload is bit-exact.

use std::fmt::Write as _;

use super::mlp::Mlp;
use super::policy::{Body, Head, Linear, PolicyParams};
use super::value::ValueParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "poisonlab-ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Policy(PolicyParams),
    Value(ValueParams),
}

fn shape_line(ckpt: &Checkpoint) -> String {
    match ckpt {
        Checkpoint::Policy(p) => {
            let head = match &p.head {
                Head::Softmax { .. } => "softmax",
                Head::Gaussian { .. } => "gaussian",
            };
            match &p.body {
                Body::Mlp(m) => format!("policy mlp {} {} {} {}", m.input, m.hidden, m.output, head),
                Body::Linear(l) => format!("policy linear {} {} {}", l.input, l.output, head),
            }
        }
        Checkpoint::Value(v) => format!("value mlp {} {}", v.net.input, v.net.hidden),
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> String {
    let flat = match ckpt {
        Checkpoint::Policy(p) => p.to_flat(),
        Checkpoint::Value(v) => v.to_flat(),
    };
    let mut s = String::with_capacity(32 + flat.len() * 22);
    s.push_str(CHECKPOINT_MAGIC);
    s.push('\n');
    s.push_str(&shape_line(ckpt));
    s.push('\n');
    for x in flat {
        let _ = writeln!(s, "{x:?}");
    }
    s
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default();
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::Parse(format!("line 1: expected `{CHECKPOINT_MAGIC}`, found `{magic}`")));
    }
    let shape = lines
        .next()
        .ok_or_else(|| Error::Parse("line 2: missing shape line".into()))?;
    let tok: Vec<&str> = shape.split_whitespace().collect();
    let num = |i: usize| -> Result<usize> {
        tok.get(i)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("line 2: bad dimension at field {}", i + 1)))
    };
    let template = match tok.as_slice() {
        ["policy", "mlp", _, _, _, head] => {
            let (i, h, o) = (num(2)?, num(3)?, num(4)?);
            let head = parse_head(head, o)?;
            Checkpoint::Policy(PolicyParams {
                body: Body::Mlp(Mlp::zeros(i, h, o)),
                head,
            })
        }
        ["policy", "linear", _, _, head] => {
            let (i, o) = (num(2)?, num(3)?);
            let head = parse_head(head, o)?;
            Checkpoint::Policy(PolicyParams {
                body: Body::Linear(Linear {
                    input: i,
                    output: o,
                    w: vec![0.0; i * o],
                }),
                head,
            })
        }
        ["value", "mlp", _, _] => Checkpoint::Value(ValueParams::zeros(num(2)?, num(3)?)),
        _ => return Err(Error::Parse(format!("line 2: unrecognized shape `{shape}`"))),
    };
    let mut flat = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: not a float: `{line}`", i + 3)))?;
        flat.push(x);
    }
    match template {
        Checkpoint::Policy(p) => {
            if flat.len() != p.num_params() {
                return Err(Error::Parse(format!(
                    "expected {} parameters, found {}",
                    p.num_params(),
                    flat.len()
                )));
            }
            Ok(Checkpoint::Policy(p.with_flat(&flat)?))
        }
        Checkpoint::Value(v) => {
            if flat.len() != v.num_params() {
                return Err(Error::Parse(format!(
                    "expected {} parameters, found {}",
                    v.num_params(),
                    flat.len()
                )));
            }
            Ok(Checkpoint::Value(v.with_flat(&flat)?))
        }
    }
}

fn parse_head(name: &str, out: usize) -> Result<Head> {
    match name {
        "softmax" => Ok(Head::Softmax { n_actions: out }),
        "gaussian" => Ok(Head::Gaussian {
            log_std: vec![0.0; out],
        }),
        other => Err(Error::Parse(format!("line 2: unknown head `{other}`"))),
    }
}
