use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EnvState, Phase, PlanarAction};
use crate::error::Result;

/// One environment step, as written to a trajectory trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub state: EnvState,
    pub action: PlanarAction,
    pub phase: Phase,
    pub done: bool,
    pub success: bool,
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(out: &mut W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
