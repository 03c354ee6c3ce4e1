//! CSV and JSON writers with deterministic number formatting.

use std::fs;
use std::path::Path;

use capstokes::evolution::Trajectory;
use serde::Serialize;

use crate::CliError;

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Header `t, ξ_0, …, ξ_{N-1}`, then one row per output time.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let grid = traj.last.f.grid();
    let mut out = String::from("t");
    for x in grid.nodes() {
        out.push(',');
        out.push_str(&fmt_f64(x));
    }
    out.push('\n');
    for (t, f) in traj.times.iter().zip(&traj.profiles) {
        out.push_str(&fmt_f64(*t));
        for v in f.values() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, &text)
}
