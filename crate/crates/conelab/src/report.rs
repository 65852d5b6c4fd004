//! Deterministic text artifacts: summary records and detail tables.
//!
//! Summaries are TOML so they stay machine-readable; tables are
//! tab-separated with a header row so they load straight into any plotting
//! tool. Floats are printed in Rust's shortest round-trip form, which makes
//! identical runs produce byte-identical files; nothing here writes
//! timestamps, hostnames, or absolute paths.
//!
//! Summary schema: a top-level `command` and `status` key (`pass`,
//! `check-failed`, or `infeasible`), then one table per pipeline stage with
//! that stage's scalar results. Table schemas are given by their header rows
//! and documented on the functions that emit them.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::DMatrix;

use crate::cocycle::TrajectoryGrid;

/// Shortest round-trip decimal form, with TOML spellings for the non-finite
/// values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:?}")
    }
}

/// Ordered key-value record, rendered as TOML once the final status is
/// known.
#[derive(Debug, Default)]
pub struct Summary {
    command: String,
    body: String,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            body: String::new(),
        }
    }

    pub fn section(&mut self, name: &str) {
        let _ = writeln!(self.body, "\n[{name}]");
    }

    pub fn kv_str(&mut self, key: &str, value: &str) {
        let escaped = value.replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(self.body, "{key} = \"{escaped}\"");
    }

    pub fn kv_f64(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.body, "{key} = {}", fmt_f64(value));
    }

    pub fn kv_int(&mut self, key: &str, value: i64) {
        let _ = writeln!(self.body, "{key} = {value}");
    }

    pub fn kv_usize(&mut self, key: &str, value: usize) {
        let _ = writeln!(self.body, "{key} = {value}");
    }

    pub fn kv_bool(&mut self, key: &str, value: bool) {
        let _ = writeln!(self.body, "{key} = {value}");
    }

    pub fn kv_int_list(&mut self, key: &str, values: &[usize]) {
        let items: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(self.body, "{key} = [{}]", items.join(", "));
    }

    pub fn finish(self, status: &str) -> String {
        format!(
            "command = \"{}\"\nstatus = \"{}\"\n{}",
            self.command, status, self.body
        )
    }
}

/// Tab-separated table with a fixed header.
#[derive(Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(
            cells.len(),
            self.header.len(),
            "table row width must match the header"
        );
        self.rows.push(cells);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Dense row-major matrix dump, one TSV line per row.
pub fn matrix_tsv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

/// Trajectory export: comment lines record the model, then one line per
/// step with columns `t`, `observed`, and the state coordinates.
pub fn trajectory_tsv(grid: &TrajectoryGrid, note: &str) -> String {
    let dim = grid.states.first().map_or(0, |s| s.len());
    let mut out = format!("# {note}\n");
    let mut header = vec!["t".to_string(), "observed".to_string()];
    header.extend((0..dim).map(|i| format!("u{i}")));
    out.push_str(&header.join("\t"));
    out.push('\n');
    for (k, state) in grid.states.iter().enumerate() {
        let mut cells = vec![fmt_f64(grid.time(k)), fmt_f64(grid.observed[k])];
        cells.extend(state.iter().map(|x| fmt_f64(*x)));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}
