//! Deterministic output files of a run: snapshot CSVs, the shock track,
//! solver reports as JSON lines and a summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dg::DgDiscretization;
use crate::error::Result;
use crate::time_loop::{Snapshot, TrajectoryRecord};

/// Floats with 17 significant digits, enough to round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Rows `(element, node, x, U...)` with the physical state at every
/// solution node.
pub fn snapshot_csv(disc: &DgDiscretization, snap: &Snapshot) -> String {
    let m = disc.ncomp();
    let mut out = String::from("element,node,x");
    for c in 0..m {
        let _ = write!(out, ",u{c}");
    }
    out.push('\n');
    for e in 0..disc.n_elements() {
        for (a, &xi) in disc.trial().nodes.iter().enumerate() {
            let (x, s) = disc.physical_state(&snap.u, &snap.x, e, xi);
            let _ = write!(out, "{e},{a},{}", fmt_f64(x));
            for v in s {
                let _ = write!(out, ",{}", fmt_f64(v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn shock_track_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("t,shock_position\n");
    for s in &record.snapshots {
        for x in &s.shock_positions {
            let _ = writeln!(out, "{},{}", fmt_f64(s.t), fmt_f64(*x));
        }
    }
    out
}

pub fn sqp_json_lines(record: &TrajectoryRecord) -> String {
    let mut out = String::new();
    for (step, stage, report) in record.stage_reports() {
        out.push_str(&report.to_json_line(step, stage));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub problem: String,
    pub scheme: String,
    pub completed_steps: usize,
    pub requested_steps: usize,
    pub final_time: f64,
    pub all_stages_converged: bool,
    pub total_sqp_iterations: usize,
    pub max_stage_iterations: usize,
    pub final_shock_positions: Vec<f64>,
    pub l1_solution_error: Option<f64>,
    pub shock_location_error: Option<f64>,
    pub wall_time_seconds: f64,
    pub error: Option<String>,
}

/// Writes every file of a run into `dir`. Snapshot files are numbered by
/// step.
pub fn write_run(
    dir: &Path,
    disc: &DgDiscretization,
    record: &TrajectoryRecord,
    summary: &Summary,
    config_text: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for snap in &record.snapshots {
        fs::write(
            dir.join(format!("snapshot_{:05}.csv", snap.step)),
            snapshot_csv(disc, snap),
        )?;
    }
    fs::write(dir.join("shock_track.csv"), shock_track_csv(record))?;
    fs::write(dir.join("sqp.jsonl"), sqp_json_lines(record))?;
    fs::write(dir.join("config.cfg"), config_text)?;
    let json =
        serde_json::to_string_pretty(summary).map_err(|e| std::io::Error::other(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}
