//! Minimal CSV writing with round-trip exact numeric cells.

use std::path::Path;

use signest_core::crlb::GapBounds;
use signest_core::{CrlbScanRow, MseCurvePoint, ProbabilityRow};

use crate::error::CliError;

/// 17 significant digits, enough to recover any binary64 value exactly.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render()).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
    }
}

pub fn mse_table(points: &[MseCurvePoint]) -> Table {
    let mut t = Table::new(&["N", "mse_ml", "mse_ignored", "mse_known", "crlb_trace", "separated_fraction", "trials"]);
    for p in points {
        t.push(vec![
            p.n.to_string(),
            real(p.mse_ml),
            real(p.mse_ignored),
            p.mse_known_matrix.map(real).unwrap_or_default(),
            real(p.crlb_trace),
            real(p.separated_fraction),
            p.trials_used.to_string(),
        ]);
    }
    t
}

pub fn median_table(points: &[MseCurvePoint]) -> Table {
    let mut t = Table::new(&["N", "median_sq_err_ml", "median_sq_err_ignored"]);
    for p in points {
        t.push(vec![p.n.to_string(), real(p.median_sq_err_ml), real(p.median_sq_err_ignored)]);
    }
    t
}

pub fn crlb_scan_table(rows: &[CrlbScanRow]) -> Table {
    let mut t = Table::new(&["axis", "crlb", "chernoff"]);
    for r in rows {
        t.push(vec![real(r.axis), real(r.crlb), real(r.chernoff)]);
    }
    t
}

pub fn gap_table(rows: &[GapBounds]) -> Table {
    let mut t = Table::new(&["gamma", "lower", "gap", "upper"]);
    for r in rows {
        t.push(vec![real(r.gamma), real(r.lower), real(r.gap), real(r.upper)]);
    }
    t
}

pub fn probability_table(rows: &[ProbabilityRow]) -> Table {
    let mut t = Table::new(&["N", "sigma_e2", "p_exact", "p_approx", "p_mc", "p_mc_stderr"]);
    for r in rows {
        t.push(vec![
            r.n.to_string(),
            real(r.sigma_e2),
            real(r.p_exact),
            real(r.p_approx),
            real(r.p_mc),
            real(r.p_mc_stderr),
        ]);
    }
    t
}
