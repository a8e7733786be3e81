//! Subcommand dispatch, output files and the run manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use signest_core::crlb::{fim_and_crlb, scalar_crlb, scalar_crlb_chernoff};
use signest_core::estimator::{mismodel_limit_mse, ml_estimate};
use signest_core::model::{make_gaussian_matrix, make_ones_row, simulate_measurements_with};
use signest_core::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, PerturbedSignModel, RngSeed,
    SimulationMode, SolverOptions, TrueParameter,
};

use crate::config::{parse_config, serialize_config, ParsedConfig};
use crate::csv::{self, real, Table};
use crate::dataset::{dataset_table, read_dataset};
use crate::error::CliError;

const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "signest", version, about = "Estimation from sign measurements with a perturbed sensing matrix")]
struct Cli {
    /// Directory for CSV tables and manifest.json
    #[arg(long, global = true, env = "SIGNEST_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Size of the worker pool used for Monte Carlo trials
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print headline values to standard output
    #[arg(long, global = true)]
    summary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset
    Simulate(SimulateArgs),
    /// ML estimate from a dataset
    Estimate(EstimateArgs),
    /// Cramér-Rao bounds: a point, a scan along one noise axis, or a dataset's matrix
    Crlb(CrlbArgs),
    /// Probability that the likelihood has an interior optimum
    Probability(ProbabilityArgs),
    /// Run an experiment described by a configuration file
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Reduced,
    Materialized,
    Noiseless,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    w0: Vec<f64>,
    #[arg(long)]
    sigma_e2: f64,
    #[arg(long)]
    sigma_n2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the 1 x N all-ones sensing row (requires p = 1)
    #[arg(long)]
    ones: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Reduced)]
    mode: ModeArg,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sigma_e2: f64,
    #[arg(long)]
    sigma_n2: f64,
    /// Norm limit on the estimate
    #[arg(long)]
    r_w: f64,
    /// Fit the probit model that ignores the perturbation
    #[arg(long)]
    ignore_perturbation: bool,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanAxis {
    #[value(name = "sigma_n")]
    SigmaN,
    #[value(name = "sigma_e")]
    SigmaE,
}

#[derive(Debug, Args)]
struct CrlbArgs {
    #[arg(long, value_enum)]
    scan: Option<ScanAxis>,
    /// True parameter; a list when used with --data
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1")]
    w0: Vec<f64>,
    #[arg(long)]
    sigma_e2: Option<f64>,
    #[arg(long)]
    sigma_n2: Option<f64>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    min: Option<f64>,
    #[arg(long)]
    max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Dataset whose sensing matrix defines the Fisher information
    #[arg(long, conflicts_with = "scan")]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbabilityArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    sigma_e2_list: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    w0: f64,
    #[arg(long, conflicts_with = "sigma_z2")]
    sigma_n2: Option<f64>,
    /// Hold the equivalent noise variance fixed instead of sigma_n2
    #[arg(long)]
    sigma_z2: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config_echo: String,
    master_seed: u64,
    artifact_version: String,
    wall_time_seconds: f64,
    status: String,
    outputs: Vec<String>,
    summary: Vec<String>,
    warnings: Vec<String>,
}

struct Session {
    out_dir: Option<PathBuf>,
    print_summary: bool,
    manifest: RunManifest,
}

impl Session {
    fn dir(&self) -> Result<&Path, CliError> {
        let dir = self.out_dir.as_deref().expect("output directory resolved before writing");
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(dir)
    }

    fn write(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let path = self.dir()?.join(name);
        table.write(&path)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, line: String) {
        if self.print_summary {
            println!("{line}");
        }
        self.manifest.summary.push(line);
    }

    fn warn(&mut self, line: String) {
        eprintln!("warning: {line}");
        self.manifest.warnings.push(line);
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let path = self.dir()?.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| CliError::Io { path, source })
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let start = Instant::now();
    let mut session = Session {
        out_dir: cli.out_dir.clone(),
        print_summary: cli.summary,
        manifest: RunManifest {
            command: command_name(&cli.command).into(),
            config_echo: String::new(),
            master_seed: 0,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: 0.0,
            status: "ok".into(),
            outputs: Vec::new(),
            summary: Vec::new(),
            warnings: Vec::new(),
        },
    };
    let result = dispatch(&cli, &mut session);
    session.manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(()) => match session.write_manifest() {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Numerical(_)) && session.out_dir.is_some() {
                session.manifest.status = "numerical_failure".into();
                session.manifest.warnings.push(e.to_string());
                if let Err(io) = session.write_manifest() {
                    eprintln!("error: {io}");
                }
            }
            e.exit_code()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Crlb(_) => "crlb",
        Command::Probability(_) => "probability",
        Command::Experiment(_) => "experiment",
    }
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn dispatch(cli: &Cli, s: &mut Session) -> Result<(), CliError> {
    if let Command::Experiment(args) = &cli.command {
        return experiment(args, cli.workers, s);
    }
    if s.out_dir.is_none() {
        s.out_dir = Some(PathBuf::from(DEFAULT_OUT_DIR));
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a, s),
        Command::Estimate(a) => estimate(a, s),
        Command::Crlb(a) => with_workers(cli.workers, || crlb(a, s))?,
        Command::Probability(a) => with_workers(cli.workers, || probability(a, s))?,
        Command::Experiment(_) => unreachable!(),
    }
}

fn echo(section: &str, pairs: &[(&str, String)]) -> String {
    let mut out = format!("[{section}]\n");
    for (k, v) in pairs {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

fn list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn simulate(a: &SimulateArgs, s: &mut Session) -> Result<(), CliError> {
    s.manifest.master_seed = a.seed;
    s.manifest.config_echo = echo(
        "simulate",
        &[
            ("p", a.p.to_string()),
            ("n", a.n.to_string()),
            ("w0", list(&a.w0)),
            ("sigma_e2", format!("{:?}", a.sigma_e2)),
            ("sigma_n2", format!("{:?}", a.sigma_n2)),
            ("seed", a.seed.to_string()),
            ("ones", a.ones.to_string()),
            ("mode", format!("{:?}", a.mode).to_lowercase()),
        ],
    );
    if a.w0.len() != a.p {
        return Err(CliError::Config(format!("--w0 has {} entries but --p is {}", a.w0.len(), a.p)));
    }
    if a.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let h = if a.ones {
        if a.p != 1 {
            return Err(CliError::Config("--ones needs --p 1".into()));
        }
        make_ones_row(a.n)
    } else {
        make_gaussian_matrix(a.p, a.n, RngSeed::derived(a.seed, 1, 0))
    };
    let model = PerturbedSignModel::new(h, a.sigma_e2, a.sigma_n2)?;
    let mode = match a.mode {
        ModeArg::Reduced => SimulationMode::Reduced,
        ModeArg::Materialized => SimulationMode::MaterializedPerturbation,
        ModeArg::Noiseless => SimulationMode::Noiseless,
    };
    let y = simulate_measurements_with(&model, &a.w0, RngSeed::derived(a.seed, 3, 0), mode)?;
    s.write("dataset.csv", &dataset_table(model.h(), &y))?;
    s.note(format!("measurements={} positive_fraction={}", y.len(), y.count_positive() as f64 / y.len() as f64));
    Ok(())
}

fn estimate(a: &EstimateArgs, s: &mut Session) -> Result<(), CliError> {
    s.manifest.config_echo = echo(
        "estimate",
        &[
            ("data", a.data.display().to_string()),
            ("sigma_e2", format!("{:?}", a.sigma_e2)),
            ("sigma_n2", format!("{:?}", a.sigma_n2)),
            ("r_w", format!("{:?}", a.r_w)),
            ("ignore_perturbation", a.ignore_perturbation.to_string()),
        ],
    );
    let (h, y) = read_dataset(&a.data)?;
    let sigma_e2 = if a.ignore_perturbation { 0.0 } else { a.sigma_e2 };
    let model = PerturbedSignModel::new(h, sigma_e2, a.sigma_n2)?;
    let mut opts = SolverOptions::default();
    if let Some(m) = a.max_iters {
        opts.max_iters = m;
    }
    let report = ml_estimate(&model, &y, a.r_w, &opts)?;
    let mut header: Vec<String> = (1..=report.w_hat.len()).map(|i| format!("w{i}")).collect();
    header.extend(["status", "iterations", "final_grad_norm", "neg_log_likelihood"].map(String::from));
    let mut row: Vec<String> = report.w_hat.iter().map(|&w| real(w)).collect();
    row.extend([
        report.status.as_str().to_string(),
        report.iterations.to_string(),
        real(report.final_grad_norm),
        real(report.neg_log_likelihood),
    ]);
    s.write("estimate.csv", &Table { header, rows: vec![row] })?;
    s.note(format!("w_hat=[{}] status={}", list(&report.w_hat), report.status.as_str()));
    Ok(())
}

fn need(value: Option<f64>, flag: &str) -> Result<f64, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing required flag {flag}")))
}

fn crlb(a: &CrlbArgs, s: &mut Session) -> Result<(), CliError> {
    if let Some(path) = &a.data {
        return crlb_matrix(a, path, s);
    }
    let w = a.w0[0];
    if a.w0.len() != 1 {
        return Err(CliError::Config("--w0 must be a single value without --data".into()));
    }
    let Some(axis) = a.scan else {
        let (se, sn) = (need(a.sigma_e2, "--sigma-e2")?, need(a.sigma_n2, "--sigma-n2")?);
        s.manifest.config_echo = echo(
            "crlb",
            &[("w0", format!("{w:?}")), ("sigma_e2", format!("{se:?}")), ("sigma_n2", format!("{sn:?}")), ("n", a.n.to_string())],
        );
        let (c, ch) = (scalar_crlb(w, se, sn, a.n)?, scalar_crlb_chernoff(w, se, sn, a.n)?);
        let mut t = Table::new(&["w", "sigma_e2", "sigma_n2", "N", "crlb", "chernoff"]);
        t.push(vec![real(w), real(se), real(sn), a.n.to_string(), real(c), real(ch)]);
        s.write("crlb_point.csv", &t)?;
        s.note(format!("crlb={c} chernoff={ch}"));
        return Ok(());
    };
    let mut cfg = match axis {
        ScanAxis::SigmaN => {
            let mut c = ExperimentConfig::new(ExperimentKind::CrlbScanSigmaN);
            c.sigma_e2 = need(a.sigma_e2, "--sigma-e2")?;
            c
        }
        ScanAxis::SigmaE => {
            let mut c = ExperimentConfig::new(ExperimentKind::CrlbScanSigmaE);
            c.sigma_n2 = need(a.sigma_n2, "--sigma-n2")?;
            c
        }
    };
    cfg.w0 = TrueParameter::Fixed(vec![w]);
    cfg.n_list = vec![a.n];
    cfg.scan_min = a.min.unwrap_or(cfg.scan_min);
    cfg.scan_max = a.max.unwrap_or(cfg.scan_max);
    cfg.scan_points = a.points.unwrap_or(cfg.scan_points);
    cfg.validate()?;
    run_configured(&ParsedConfig { experiment: cfg, output_dir: None, workers: None, warnings: Vec::new() }, s)
}

fn crlb_matrix(a: &CrlbArgs, path: &Path, s: &mut Session) -> Result<(), CliError> {
    let (se, sn) = (need(a.sigma_e2, "--sigma-e2")?, need(a.sigma_n2, "--sigma-n2")?);
    s.manifest.config_echo = echo(
        "crlb",
        &[
            ("data", path.display().to_string()),
            ("w0", list(&a.w0)),
            ("sigma_e2", format!("{se:?}")),
            ("sigma_n2", format!("{sn:?}")),
        ],
    );
    let (h, _) = read_dataset(path)?;
    let model = PerturbedSignModel::new(h, se, sn)?;
    let report = fim_and_crlb(&model, &a.w0)?;
    let p = model.dim();
    let mut t = Table::new(&["row", "col", "fim", "crlb_matrix"]);
    for i in 0..p {
        for j in 0..p {
            t.push(vec![i.to_string(), j.to_string(), real(report.fim[(i, j)]), real(report.crlb_matrix[(i, j)])]);
        }
    }
    s.write("crlb_matrix.csv", &t)?;
    s.note(format!("crlb_trace={}", report.crlb_trace));
    Ok(())
}

fn probability(a: &ProbabilityArgs, s: &mut Session) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::ProbabilityVsN);
    cfg.n_list = a.n_list.clone();
    cfg.sigma_e2_list = a.sigma_e2_list.clone();
    cfg.w0 = TrueParameter::Fixed(vec![a.w0]);
    cfg.trials = a.trials;
    cfg.master_seed = a.seed;
    cfg.sigma_z2 = a.sigma_z2;
    if a.sigma_z2.is_none() {
        cfg.sigma_n2 = need(a.sigma_n2, "--sigma-n2 (or --sigma-z2)")?;
    }
    cfg.validate()?;
    run_configured(&ParsedConfig { experiment: cfg, output_dir: None, workers: None, warnings: Vec::new() }, s)
}

fn experiment(a: &ExperimentArgs, workers: Option<usize>, s: &mut Session) -> Result<(), CliError> {
    let parsed = parse_config(&a.config)?;
    if s.out_dir.is_none() {
        s.out_dir = Some(parsed.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)));
    }
    for w in &parsed.warnings {
        s.warn(w.clone());
    }
    with_workers(workers.or(parsed.workers), || run_configured(&parsed, s))?
}

fn run_configured(parsed: &ParsedConfig, s: &mut Session) -> Result<(), CliError> {
    let cfg = &parsed.experiment;
    s.manifest.config_echo = serialize_config(parsed);
    s.manifest.master_seed = cfg.master_seed;
    match run_experiment(cfg)? {
        ExperimentOutput::MseCurve(points) => {
            s.write("mse_vs_n.csv", &csv::mse_table(&points))?;
            s.write("mse_medians.csv", &csv::median_table(&points))?;
            for p in &points {
                s.note(format!("N={} mse_ml/crlb={} separated_fraction={}", p.n, p.mse_ml / p.crlb_trace, p.separated_fraction));
            }
            let w0 = cfg.resolve_w0();
            s.note(format!("mismodel_limit_mse={}", mismodel_limit_mse(&w0, cfg.sigma_e2, cfg.sigma_n2)));
        }
        ExperimentOutput::CrlbScan(scan) => {
            s.write("crlb_scan.csv", &csv::crlb_scan_table(&scan.rows))?;
            s.note(format!(
                "argmin_crlb={} argmin_chernoff={} approx_opt={}",
                scan.argmin_crlb, scan.argmin_chernoff, scan.approx_opt
            ));
        }
        ExperimentOutput::GapBounds(rows) => {
            s.write("gap_bounds.csv", &csv::gap_table(&rows))?;
            let held = rows.iter().all(|g| g.lower <= g.gap && g.gap <= g.upper);
            s.note(format!("points={} sandwich_holds={held}", rows.len()));
        }
        ExperimentOutput::Probability(rows) => {
            s.write("probability.csv", &csv::probability_table(&rows))?;
            let worst = rows.iter().map(|r| (r.p_exact - r.p_approx).abs()).fold(0.0, f64::max);
            s.note(format!("rows={} max_abs_exact_minus_approx={worst}", rows.len()));
        }
    }
    Ok(())
}
