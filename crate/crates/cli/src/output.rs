//! Snapshot CSV and step log formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use vme_core::{Snapshot, StepRecord};

use crate::error::CliError;

pub const SNAPSHOT_HEADER: [&str; 6] = ["time", "X", "u_total", "u_coarse", "u_fine", "F_avg"];

/// 17 significant digits, enough to reproduce every `f64`.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per node and snapshot. The element-averaged stretch sits on the
/// row of each element's middle node and is blank elsewhere.
pub fn write_snapshots(path: &Path, snapshots: &[Snapshot]) -> Result<(), CliError> {
    let to_io = |e: csv::Error| CliError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(SNAPSHOT_HEADER).map_err(to_io)?;
    for s in snapshots {
        let time = full_precision(s.time);
        for i in 0..s.nodes.len() {
            let f = if i % 2 == 1 {
                full_precision(s.f_avg[i / 2])
            } else {
                String::new()
            };
            w.write_record([
                time.as_str(),
                &full_precision(s.nodes[i]),
                &full_precision(s.u_total[i]),
                &full_precision(s.u_coarse[i]),
                &full_precision(s.u_fine[i]),
                &f,
            ])
            .map_err(to_io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Inverse of [`write_snapshots`]. Step indices are not stored and read back
/// as zero.
pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, CliError> {
    let bad = |msg: String| CliError::Parse {
        line: None,
        message: format!("{}: {msg}", path.display()),
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let mut out: Vec<Snapshot> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| bad(format!("row {}: column {i}: {e}", row + 2)))
        };
        let time = num(0)?;
        if out.last().is_none_or(|s| s.time != time) {
            out.push(Snapshot {
                time,
                step: 0,
                nodes: Vec::new(),
                u_total: Vec::new(),
                u_coarse: Vec::new(),
                u_fine: Vec::new(),
                f_avg: Vec::new(),
            });
        }
        let s = out.last_mut().expect("snapshot pushed above");
        s.nodes.push(num(1)?);
        s.u_total.push(num(2)?);
        s.u_coarse.push(num(3)?);
        s.u_fine.push(num(4)?);
        if s.nodes.len() % 2 == 0 {
            s.f_avg.push(num(5)?);
        }
    }
    Ok(out)
}

pub fn write_step_log(path: &Path, runs: &[(&str, &[StepRecord])]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (solver, steps) in runs {
        for s in *steps {
            writeln!(w, "solver={solver} {}", s.log_line()).map_err(|e| CliError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        let v = 0.1 + 0.2;
        let s = full_precision(v);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), v);
    }
}
