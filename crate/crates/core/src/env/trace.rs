use std::io::Write;
use std::path::Path;

use crate::error::Result;

fn write_rows(path: &Path, prefix: &str, rows: &[Vec<f64>]) -> Result<()> {
    let dims = rows.first().map_or(0, Vec::len);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..dims).map(|d| format!("{prefix}{d}")).collect();
    writeln!(out, "step,{}", header.join(","))?;
    for (t, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{t},{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// CSV with header `step,dim0,dim1,...`, one row per step.
pub fn write_action_trace(path: &Path, actions: &[Vec<f64>]) -> Result<()> {
    write_rows(path, "dim", actions)
}

/// CSV with header `step,obs0,obs1,...`, one row per step.
pub fn write_observation_trace(path: &Path, observations: &[Vec<f64>]) -> Result<()> {
    write_rows(path, "obs", observations)
}
