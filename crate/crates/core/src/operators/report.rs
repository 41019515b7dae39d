//! Uniform CSV blocks and JSON summaries for the estimators.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// JSON summary of one estimate: `{op, params, value, stderr, tail_bound, seed, replicas}`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub op: String,
    pub params: Value,
    pub value: f64,
    pub stderr: f64,
    pub tail_bound: f64,
    pub seed: u64,
    pub replicas: usize,
}

impl Summary {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Writes summaries as one CSV block with the params flattened to JSON text.
pub fn write_csv_block<W: Write>(summaries: &[Summary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["op", "params", "value", "stderr", "tail_bound", "seed", "replicas"])?;
    for s in summaries {
        w.write_record(&[
            s.op.clone(),
            s.params.to_string(),
            s.value.to_string(),
            s.stderr.to_string(),
            s.tail_bound.to_string(),
            s.seed.to_string(),
            s.replicas.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
