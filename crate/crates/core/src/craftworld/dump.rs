//! Line-delimited trajectory dumps: one JSON object per step with fields
//! `t`, `state_hash`, `action`, `reward`, `continue_flag` in that order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub state_hash: String,
    pub action: String,
    pub reward: f64,
    pub continue_flag: u8,
}

pub fn write_records<W: Write>(mut out: W, records: &[TrajectoryRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<TrajectoryRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|line| {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| Error::Validation(format!("bad record: {e}")))
        })
        .collect()
}
