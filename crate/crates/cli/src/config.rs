//! Experiment configuration files: `[section]` headers followed by
//! `key = value` lines. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use signest_core::estimator::SolverOptions;
use signest_core::{ExperimentConfig, ExperimentKind, TrueParameter};

use crate::error::CliError;

/// A validated configuration plus the output settings that live beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub warnings: Vec<String>,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "experiment",
        &[
            "kind",
            "trials",
            "master_seed",
            "n_list",
            "h_redraw",
            "scan_min",
            "scan_max",
            "scan_points",
            "sigma_e2_list",
        ],
    ),
    ("model", &["p", "w0", "sigma_e2", "sigma_n2", "sigma_z2", "r_w_factor"]),
    ("solver", &["grad_tol", "max_iters", "divergence_norm_factor", "armijo_c", "backtrack_ratio"]),
    ("output", &["dir", "workers"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn require(&self, key: &str) -> Result<&Entry, CliError> {
        self.raw(key).ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|e| {
                e.value.parse::<T>().map_err(|_| {
                    CliError::Config(format!("line {}: `{key}` must be {what}, got `{}`", e.line, e.value))
                })
            })
            .transpose()
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>, CliError> {
        self.raw(key)
            .map(|e| {
                e.value
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<T>().map_err(|_| {
                            CliError::Config(format!(
                                "line {}: `{key}` must be a comma-separated list of {what}, got `{}`",
                                e.line, e.value
                            ))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

fn tokenize(text: &str, warnings: &mut Vec<String>) -> Result<Table, CliError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                warnings.push(format!("line {line_no}: unknown section [{name}]"));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {line_no}: expected `key = value`, got `{line}`")));
        };
        let Some(sec) = &section else {
            return Err(CliError::Config(format!("line {line_no}: key outside of any [section]")));
        };
        let key = key.trim();
        let known = KNOWN_KEYS.iter().any(|(s, keys)| s == sec && keys.contains(&key));
        if !known {
            warnings.push(format!("line {line_no}: unknown key `{sec}.{key}` ignored"));
            continue;
        }
        let full = format!("{sec}.{key}");
        if entries.contains_key(&full) {
            return Err(CliError::Config(format!("line {line_no}: duplicate key `{full}`")));
        }
        entries.insert(full, Entry { value: value.trim().to_string(), line: line_no });
    }
    Ok(Table { entries })
}

fn required_keys(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::MseVsN | ExperimentKind::EstimatorComparison => &[
            "experiment.master_seed",
            "experiment.n_list",
            "model.p",
            "model.w0",
            "model.sigma_e2",
            "model.sigma_n2",
        ],
        ExperimentKind::CrlbScanSigmaN => &["model.w0", "model.sigma_e2"],
        ExperimentKind::CrlbScanSigmaE => &["model.w0", "model.sigma_n2"],
        ExperimentKind::GapBoundsSweep => &["experiment.master_seed", "experiment.n_list", "model.p", "model.w0"],
        ExperimentKind::ProbabilityVsN => &[
            "experiment.master_seed",
            "experiment.n_list",
            "experiment.sigma_e2_list",
            "model.w0",
        ],
    }
}

/// Parses configuration text; unknown keys become warnings.
pub fn parse_config_str(text: &str) -> Result<ParsedConfig, CliError> {
    let mut warnings = Vec::new();
    let table = tokenize(text, &mut warnings)?;

    let kind_entry = table.require("experiment.kind")?;
    let kind = ExperimentKind::from_name(&kind_entry.value).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Config(format!(
            "line {}: unknown experiment kind `{}` (expected one of {})",
            kind_entry.line,
            kind_entry.value,
            names.join(", ")
        ))
    })?;
    for key in required_keys(kind) {
        table.require(key)?;
    }
    if kind == ExperimentKind::ProbabilityVsN
        && table.raw("model.sigma_n2").is_none()
        && table.raw("model.sigma_z2").is_none()
    {
        return Err(CliError::Config("missing required key `model.sigma_n2` (or `model.sigma_z2`)".into()));
    }

    let mut cfg = ExperimentConfig::new(kind);
    if let Some(v) = table.parse("experiment.trials", "a nonnegative integer")? {
        cfg.trials = v;
    }
    if let Some(v) = table.parse("experiment.master_seed", "a 64-bit unsigned integer")? {
        cfg.master_seed = v;
    }
    if let Some(v) = table.parse_list("experiment.n_list", "positive integers")? {
        cfg.n_list = v;
    }
    if let Some(v) = table.parse("experiment.h_redraw", "true or false")? {
        cfg.h_redraw = v;
    }
    if let Some(v) = table.parse("experiment.scan_min", "a number")? {
        cfg.scan_min = v;
    }
    if let Some(v) = table.parse("experiment.scan_max", "a number")? {
        cfg.scan_max = v;
    }
    if let Some(v) = table.parse("experiment.scan_points", "an integer")? {
        cfg.scan_points = v;
    }
    if let Some(v) = table.parse_list("experiment.sigma_e2_list", "numbers")? {
        cfg.sigma_e2_list = v;
    }
    if let Some(v) = table.parse("model.p", "a positive integer")? {
        cfg.p = v;
    }
    if let Some(e) = table.raw("model.w0") {
        cfg.w0 = if e.value == "random-normal" {
            TrueParameter::RandomNormal
        } else {
            TrueParameter::Fixed(table.parse_list("model.w0", "numbers or `random-normal`")?.unwrap_or_default())
        };
    }
    if let Some(v) = table.parse("model.sigma_e2", "a number")? {
        cfg.sigma_e2 = v;
    }
    if let Some(v) = table.parse("model.sigma_n2", "a number")? {
        cfg.sigma_n2 = v;
    }
    cfg.sigma_z2 = table.parse("model.sigma_z2", "a number")?;
    if let Some(v) = table.parse("model.r_w_factor", "a number")? {
        cfg.r_w_factor = v;
    }
    let s = &mut cfg.solver;
    if let Some(v) = table.parse("solver.grad_tol", "a number")? {
        s.grad_tol = v;
    }
    if let Some(v) = table.parse("solver.max_iters", "an integer")? {
        s.max_iters = v;
    }
    if let Some(v) = table.parse("solver.divergence_norm_factor", "a number")? {
        s.divergence_norm_factor = v;
    }
    if let Some(v) = table.parse("solver.armijo_c", "a number")? {
        s.armijo_c = v;
    }
    if let Some(v) = table.parse("solver.backtrack_ratio", "a number")? {
        s.backtrack_ratio = v;
    }
    let output_dir = table.raw("output.dir").map(|e| PathBuf::from(&e.value));
    let workers: Option<usize> = table.parse("output.workers", "a positive integer")?;
    if workers == Some(0) {
        return Err(CliError::Config("`output.workers` must be at least 1".into()));
    }

    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(ParsedConfig { experiment: cfg, output_dir, workers, warnings })
}

pub fn parse_config(path: &Path) -> Result<ParsedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

fn join<T: std::fmt::Debug>(values: &[T]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

/// Writes every setting explicitly, so parsing the result reproduces
/// `parsed` exactly (warnings aside).
pub fn serialize_config(parsed: &ParsedConfig) -> String {
    let c = &parsed.experiment;
    let mut out = String::new();
    let _ = writeln!(out, "[experiment]");
    let _ = writeln!(out, "kind = {}", c.kind.name());
    let _ = writeln!(out, "trials = {}", c.trials);
    let _ = writeln!(out, "master_seed = {}", c.master_seed);
    if !c.n_list.is_empty() {
        let _ = writeln!(out, "n_list = {}", join(&c.n_list));
    }
    let _ = writeln!(out, "h_redraw = {}", c.h_redraw);
    let _ = writeln!(out, "scan_min = {:?}", c.scan_min);
    let _ = writeln!(out, "scan_max = {:?}", c.scan_max);
    let _ = writeln!(out, "scan_points = {}", c.scan_points);
    if !c.sigma_e2_list.is_empty() {
        let _ = writeln!(out, "sigma_e2_list = {}", join(&c.sigma_e2_list));
    }
    let _ = writeln!(out, "\n[model]");
    let _ = writeln!(out, "p = {}", c.p);
    match &c.w0 {
        TrueParameter::Fixed(w) => {
            let _ = writeln!(out, "w0 = {}", join(w));
        }
        TrueParameter::RandomNormal => {
            let _ = writeln!(out, "w0 = random-normal");
        }
    }
    let _ = writeln!(out, "sigma_e2 = {:?}", c.sigma_e2);
    let _ = writeln!(out, "sigma_n2 = {:?}", c.sigma_n2);
    if let Some(sz) = c.sigma_z2 {
        let _ = writeln!(out, "sigma_z2 = {sz:?}");
    }
    let _ = writeln!(out, "r_w_factor = {:?}", c.r_w_factor);
    let SolverOptions { grad_tol, max_iters, divergence_norm_factor, armijo_c, backtrack_ratio } = c.solver;
    let _ = writeln!(out, "\n[solver]");
    let _ = writeln!(out, "grad_tol = {grad_tol:?}");
    let _ = writeln!(out, "max_iters = {max_iters}");
    let _ = writeln!(out, "divergence_norm_factor = {divergence_norm_factor:?}");
    let _ = writeln!(out, "armijo_c = {armijo_c:?}");
    let _ = writeln!(out, "backtrack_ratio = {backtrack_ratio:?}");
    if parsed.output_dir.is_some() || parsed.workers.is_some() {
        let _ = writeln!(out, "\n[output]");
        if let Some(dir) = &parsed.output_dir {
            let _ = writeln!(out, "dir = {}", dir.display());
        }
        if let Some(w) = parsed.workers {
            let _ = writeln!(out, "workers = {w}");
        }
    }
    out
}
