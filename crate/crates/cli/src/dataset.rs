//! Datasets on disk: one row per measurement with columns `h1..hp,y`.

use std::path::Path;

use signest_core::{DenseMatrix, SignVector};

use crate::csv::{real, Table};
use crate::error::CliError;

pub fn dataset_table(h: &DenseMatrix, y: &SignVector) -> Table {
    let mut header: Vec<String> = (1..=h.rows()).map(|i| format!("h{i}")).collect();
    header.push("y".into());
    let mut t = Table { header, rows: Vec::with_capacity(h.cols()) };
    for (j, &s) in y.as_slice().iter().enumerate() {
        let mut row: Vec<String> = (0..h.rows()).map(|i| real(h[(i, j)])).collect();
        row.push(s.to_string());
        t.rows.push(row);
    }
    t
}

pub fn parse_dataset(text: &str) -> Result<(DenseMatrix, SignVector), CliError> {
    let bad = |msg: String| CliError::Config(msg);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad("dataset is empty".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let p = cols.len().saturating_sub(1);
    let expected: Vec<String> = (1..=p).map(|i| format!("h{i}")).chain(["y".to_string()]).collect();
    if p == 0 || cols != expected {
        return Err(bad(format!("dataset header must be `h1,...,hp,y`, got `{header}`")));
    }
    let mut columns = Vec::new();
    let mut signs = Vec::new();
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != p + 1 {
            return Err(bad(format!("dataset line {}: expected {} cells", idx + 1, p + 1)));
        }
        for cell in &cells[..p] {
            columns.push(cell.parse::<f64>().map_err(|_| bad(format!("dataset line {}: bad number `{cell}`", idx + 1)))?);
        }
        signs.push(match cells[p] {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(bad(format!("dataset line {}: sign must be 1 or -1, got `{other}`", idx + 1))),
        });
    }
    let n = signs.len();
    if n == 0 {
        return Err(bad("dataset has no measurements".into()));
    }
    // rows on disk are measurements; the sensing matrix is p x N
    let h = DenseMatrix::from_fn(p, n, |i, j| columns[j * p + i]);
    Ok((h, SignVector::new(signs)?))
}

pub fn read_dataset(path: &Path) -> Result<(DenseMatrix, SignVector), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text)
}
