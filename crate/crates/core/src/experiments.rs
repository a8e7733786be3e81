//! Monte Carlo studies: MSE against N with the CRLB, estimator comparison,
//! CRLB scans over the noise variances, trace-gap sweeps and unimodality
//! probability tables.
//!
//! Trials run on the current rayon pool. Every trial draws from its own
//! seed stream and results are folded in trial order, so output does not
//! depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::{
    approx_opt_sigma_e2, approx_opt_sigma_n2, crlb_gap_bounds, fim_and_crlb, minimize_on_log_grid,
    scalar_crlb, scalar_crlb_chernoff, GapBounds,
};
use crate::error::{Error, Result};
use crate::estimator::{ml_estimate, perturbation_ignored_estimate, EstimateStatus, SolverOptions};
use crate::model::{
    make_gaussian_matrix, simulate_measurements, simulate_with_realized_matrix, PerturbedSignModel,
    RngSeed,
};
use crate::numerics::{dot, norm2};
use crate::probability::{p_unimodal_exact, p_unimodal_mc, p_unimodal_normal_approx, UnimodalityQuery};

const DOMAIN_H: u16 = 1;
const DOMAIN_W0: u16 = 2;
const DOMAIN_TRIAL: u16 = 3;
const DOMAIN_TRIAL_H: u16 = 4;
const DOMAIN_PV: u16 = 5;
/// Trials per grid point are addressed by the low 24 bits of a stream index.
const TRIAL_BITS: u32 = 24;
/// Points used to locate scan optima before golden-section refinement.
const ARGMIN_GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    MseVsN,
    EstimatorComparison,
    CrlbScanSigmaN,
    CrlbScanSigmaE,
    GapBoundsSweep,
    ProbabilityVsN,
}

impl ExperimentKind {
    pub const ALL: [Self; 6] = [
        Self::MseVsN,
        Self::EstimatorComparison,
        Self::CrlbScanSigmaN,
        Self::CrlbScanSigmaE,
        Self::GapBoundsSweep,
        Self::ProbabilityVsN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MseVsN => "mse_vs_n",
            Self::EstimatorComparison => "estimator_comparison",
            Self::CrlbScanSigmaN => "crlb_scan_sigma_n",
            Self::CrlbScanSigmaE => "crlb_scan_sigma_e",
            Self::GapBoundsSweep => "gap_bounds",
            Self::ProbabilityVsN => "probability",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// True parameter of the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrueParameter {
    Fixed(Vec<f64>),
    /// Standard normal entries drawn once from the master seed.
    RandomNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub p: usize,
    pub n_list: Vec<usize>,
    pub sigma_e2: f64,
    pub sigma_n2: f64,
    /// Fixed equivalent noise variance for gap sweeps and probability
    /// tables; `None` keeps `sigma_n2` fixed instead.
    pub sigma_z2: Option<f64>,
    pub w0: TrueParameter,
    pub r_w_factor: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Draw a fresh sensing matrix for every trial instead of once per N.
    pub h_redraw: bool,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_points: usize,
    pub sigma_e2_list: Vec<f64>,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    /// Defaults for `kind`; model parameters still need to be filled in.
    pub fn new(kind: ExperimentKind) -> Self {
        let (scan_min, scan_max, scan_points) = match kind {
            ExperimentKind::CrlbScanSigmaN => (1e-2, 10.0, 200),
            ExperimentKind::CrlbScanSigmaE => (1e-4, 1.0, 200),
            _ => (1e-2, 1e2, 30),
        };
        Self {
            kind,
            p: 1,
            n_list: Vec::new(),
            sigma_e2: 0.0,
            sigma_n2: 1.0,
            sigma_z2: None,
            w0: TrueParameter::Fixed(vec![1.0]),
            r_w_factor: 4.0,
            trials: 500,
            master_seed: 0,
            h_redraw: false,
            scan_min,
            scan_max,
            scan_points,
            sigma_e2_list: Vec::new(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.trials >= 1 << TRIAL_BITS {
            return fail(format!("trials must be below {}", 1u64 << TRIAL_BITS));
        }
        if self.p == 0 {
            return fail("p must be at least 1".into());
        }
        if let TrueParameter::Fixed(w) = &self.w0 {
            if w.len() != self.p {
                return fail(format!("w0 has {} entries but p = {}", w.len(), self.p));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return fail("w0 must be finite".into());
            }
        }
        if !(self.r_w_factor > 0.0) {
            return fail("r_w_factor must be positive".into());
        }
        if !(self.sigma_n2 > 0.0) || !(self.sigma_e2 >= 0.0) {
            return fail("need sigma_n2 > 0 and sigma_e2 >= 0".into());
        }
        if let Some(sz) = self.sigma_z2 {
            if !(sz > 0.0) {
                return fail("sigma_z2 must be positive".into());
            }
        }
        self.solver.validate()?;
        let scalar = || {
            if self.p != 1 {
                return fail(format!("{} needs a scalar parameter (p = 1)", self.kind.name()));
            }
            Ok(())
        };
        let scan = || {
            if !(self.scan_min > 0.0 && self.scan_max > self.scan_min) || self.scan_points < 2 {
                return fail("scan grid needs 0 < scan_min < scan_max and scan_points >= 2".into());
            }
            Ok(())
        };
        let n_list = || {
            if self.n_list.is_empty() {
                return fail("n_list must not be empty".into());
            }
            if let Some(&n) = self.n_list.iter().find(|&&n| n < self.p) {
                return fail(format!("N = {n} is smaller than p = {}", self.p));
            }
            Ok(())
        };
        match self.kind {
            ExperimentKind::MseVsN | ExperimentKind::EstimatorComparison => n_list(),
            ExperimentKind::CrlbScanSigmaN | ExperimentKind::CrlbScanSigmaE => {
                scalar()?;
                scan()
            }
            ExperimentKind::GapBoundsSweep => {
                n_list()?;
                scan()
            }
            ExperimentKind::ProbabilityVsN => {
                scalar()?;
                n_list()?;
                if self.sigma_e2_list.is_empty() || self.sigma_e2_list.iter().any(|&s| !(s > 0.0)) {
                    return fail("sigma_e2_list must hold positive values".into());
                }
                if self.trials < 100 {
                    return fail("trials must be at least 100 for probability tables".into());
                }
                Ok(())
            }
        }
    }

    /// The true parameter, drawing it when configured as random.
    pub fn resolve_w0(&self) -> Vec<f64> {
        match &self.w0 {
            TrueParameter::Fixed(w) => w.clone(),
            TrueParameter::RandomNormal => {
                let mut rng = RngSeed::derived(self.master_seed, DOMAIN_W0, 0).gaussian_stream();
                (0..self.p).map(|_| rng.next_standard()).collect()
            }
        }
    }

    fn expect_kind(&self, allowed: &[ExperimentKind]) -> Result<()> {
        if !allowed.contains(&self.kind) {
            return Err(Error::Config(format!("experiment kind {} not valid here", self.kind.name())));
        }
        self.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurvePoint {
    pub n: usize,
    pub mse_ml: f64,
    pub mse_ignored: f64,
    pub mse_known_matrix: Option<f64>,
    pub crlb_trace: f64,
    pub trials_used: usize,
    /// Fraction of ML estimates that ended on the norm limit.
    pub separated_fraction: f64,
    pub median_sq_err_ml: f64,
    pub median_sq_err_ignored: f64,
}

struct TrialOutcome {
    err_ml: f64,
    err_ignored: f64,
    err_known: Option<f64>,
    on_limit: bool,
    crlb_trace: Option<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn trial_seed(master: u64, domain: u16, n_index: usize, trial: usize) -> RngSeed {
    RngSeed::derived(master, domain, ((n_index as u64) << TRIAL_BITS) | trial as u64)
}

fn run_curve(cfg: &ExperimentConfig, with_known: bool) -> Result<Vec<MseCurvePoint>> {
    let w0 = cfg.resolve_w0();
    let r_w = cfg.r_w_factor * norm2(&w0);
    if !(r_w > 0.0) {
        return Err(Error::Config("w0 must be nonzero for a norm limit".into()));
    }
    cfg.n_list
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let shared = PerturbedSignModel::new(
                make_gaussian_matrix(cfg.p, n, RngSeed::derived(cfg.master_seed, DOMAIN_H, ni as u64)),
                cfg.sigma_e2,
                cfg.sigma_n2,
            )?;
            let shared_crlb = if cfg.h_redraw { None } else { Some(fim_and_crlb(&shared, &w0)?.crlb_trace) };
            let outcomes = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let model = if cfg.h_redraw {
                        let seed = trial_seed(cfg.master_seed, DOMAIN_TRIAL_H, ni, t);
                        PerturbedSignModel::new(make_gaussian_matrix(cfg.p, n, seed), cfg.sigma_e2, cfg.sigma_n2)?
                    } else {
                        shared.clone()
                    };
                    let seed = trial_seed(cfg.master_seed, DOMAIN_TRIAL, ni, t);
                    let (y, realized) = if with_known {
                        let (y, m) = simulate_with_realized_matrix(&model, &w0, seed)?;
                        (y, Some(m))
                    } else {
                        (simulate_measurements(&model, &w0, seed)?, None)
                    };
                    let ml = ml_estimate(&model, &y, r_w, &cfg.solver)?;
                    let ignored = perturbation_ignored_estimate(model.h(), &y, cfg.sigma_n2, r_w, &cfg.solver)?;
                    let err_known = match realized {
                        Some(m) => {
                            let est = perturbation_ignored_estimate(&m, &y, cfg.sigma_n2, r_w, &cfg.solver)?;
                            Some(sq_dist(&est.w_hat, &w0))
                        }
                        None => None,
                    };
                    let crlb_trace = if cfg.h_redraw { Some(fim_and_crlb(&model, &w0)?.crlb_trace) } else { None };
                    Ok(TrialOutcome {
                        err_ml: sq_dist(&ml.w_hat, &w0),
                        err_ignored: sq_dist(&ignored.w_hat, &w0),
                        err_known,
                        on_limit: ml.status != EstimateStatus::Interior,
                        crlb_trace,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let ml: Vec<f64> = outcomes.iter().map(|o| o.err_ml).collect();
            let ignored: Vec<f64> = outcomes.iter().map(|o| o.err_ignored).collect();
            let known: Option<Vec<f64>> = outcomes.iter().map(|o| o.err_known).collect();
            let crlb_trace = match shared_crlb {
                Some(c) => c,
                None => mean(&outcomes.iter().filter_map(|o| o.crlb_trace).collect::<Vec<_>>()),
            };
            Ok(MseCurvePoint {
                n,
                mse_ml: mean(&ml),
                mse_ignored: mean(&ignored),
                mse_known_matrix: known.map(|k| mean(&k)),
                crlb_trace,
                trials_used: outcomes.len(),
                separated_fraction: outcomes.iter().filter(|o| o.on_limit).count() as f64 / outcomes.len() as f64,
                median_sq_err_ml: median(&ml),
                median_sq_err_ignored: median(&ignored),
            })
        })
        .collect()
}

/// MSE of the ML and perturbation-ignored estimators for each N, with the
/// CRLB trace at the true parameter.
pub fn run_mse_vs_n(cfg: &ExperimentConfig) -> Result<Vec<MseCurvePoint>> {
    cfg.expect_kind(&[ExperimentKind::MseVsN])?;
    run_curve(cfg, false)
}

/// As [`run_mse_vs_n`], adding a probit solve on the realized `H + E`.
pub fn run_estimator_comparison(cfg: &ExperimentConfig) -> Result<Vec<MseCurvePoint>> {
    cfg.expect_kind(&[ExperimentKind::EstimatorComparison])?;
    run_curve(cfg, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbScanRow {
    pub axis: f64,
    pub crlb: f64,
    pub chernoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbScan {
    pub rows: Vec<CrlbScanRow>,
    pub argmin_crlb: f64,
    pub argmin_chernoff: f64,
    /// Closed-form approximation of the optimum along the scanned axis.
    pub approx_opt: f64,
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Scalar CRLB and its Chernoff approximation along one noise axis.
pub fn run_crlb_scan(cfg: &ExperimentConfig) -> Result<CrlbScan> {
    cfg.expect_kind(&[ExperimentKind::CrlbScanSigmaN, ExperimentKind::CrlbScanSigmaE])?;
    let w = cfg.resolve_w0()[0];
    let n = cfg.n_list.first().copied().unwrap_or(1);
    let along_n = cfg.kind == ExperimentKind::CrlbScanSigmaN;
    let eval = |x: f64, f: fn(f64, f64, f64, usize) -> Result<f64>| {
        if along_n {
            f(w, cfg.sigma_e2, x, n)
        } else {
            f(w, x, cfg.sigma_n2, n)
        }
    };
    let rows = log_grid(cfg.scan_min, cfg.scan_max, cfg.scan_points)
        .into_par_iter()
        .map(|x| Ok(CrlbScanRow { axis: x, crlb: eval(x, scalar_crlb)?, chernoff: eval(x, scalar_crlb_chernoff)? }))
        .collect::<Result<Vec<_>>>()?;
    let argmin = |f: fn(f64, f64, f64, usize) -> Result<f64>| {
        minimize_on_log_grid(|x| eval(x, f).unwrap_or(f64::NAN), cfg.scan_min, cfg.scan_max, ARGMIN_GRID_POINTS)
            .map(|(x, _)| x)
    };
    let approx_opt = if along_n { approx_opt_sigma_n2(w, cfg.sigma_e2)? } else { approx_opt_sigma_e2(w, cfg.sigma_n2)? };
    Ok(CrlbScan { rows, argmin_crlb: argmin(scalar_crlb)?, argmin_chernoff: argmin(scalar_crlb_chernoff)?, approx_opt })
}

/// Trace gap and its bounds over a log grid of `gamma`, holding the
/// equivalent noise variance fixed.
pub fn run_gap_bounds_sweep(cfg: &ExperimentConfig) -> Result<Vec<GapBounds>> {
    cfg.expect_kind(&[ExperimentKind::GapBoundsSweep])?;
    let w0 = cfg.resolve_w0();
    let w2 = dot(&w0, &w0);
    if w2 == 0.0 {
        return Err(Error::Config("w0 must be nonzero for a gap sweep".into()));
    }
    let sz2 = cfg.sigma_z2.unwrap_or(4.0 * w2);
    let n = cfg.n_list[0];
    let h = make_gaussian_matrix(cfg.p, n, RngSeed::derived(cfg.master_seed, DOMAIN_H, 0));
    log_grid(cfg.scan_min, cfg.scan_max, cfg.scan_points)
        .into_par_iter()
        .map(|gamma| {
            let sigma_n2 = sz2 / (1.0 + gamma);
            let sigma_e2 = gamma * sigma_n2 / w2;
            crlb_gap_bounds(&PerturbedSignModel::new(h.clone(), sigma_e2, sigma_n2)?, &w0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub n: usize,
    pub sigma_e2: f64,
    pub p_exact: f64,
    pub p_approx: f64,
    pub p_mc: f64,
    pub p_mc_stderr: f64,
}

/// Exact, approximate and simulated unimodality probability over the
/// `(N, sigma_e2)` grid.
pub fn run_probability_vs_n(cfg: &ExperimentConfig) -> Result<Vec<ProbabilityRow>> {
    cfg.expect_kind(&[ExperimentKind::ProbabilityVsN])?;
    let w0 = cfg.resolve_w0()[0];
    let mut rows = Vec::with_capacity(cfg.n_list.len() * cfg.sigma_e2_list.len());
    for (ni, &n) in cfg.n_list.iter().enumerate() {
        for (si, &se) in cfg.sigma_e2_list.iter().enumerate() {
            let sn = match cfg.sigma_z2 {
                Some(sz) => sz - se * w0 * w0,
                None => cfg.sigma_n2,
            };
            if !(sn > 0.0) {
                return Err(Error::Config(format!("sigma_e2 = {se} leaves no room for additive noise")));
            }
            let q = UnimodalityQuery::new(n, w0, se, sn)?;
            let cell = (ni * cfg.sigma_e2_list.len() + si) as u64;
            let seed = RngSeed::derived(cfg.master_seed, DOMAIN_PV, cell << TRIAL_BITS);
            let (p_mc, p_mc_stderr) = p_unimodal_mc(&q, cfg.trials, seed)?;
            rows.push(ProbabilityRow {
                n,
                sigma_e2: se,
                p_exact: p_unimodal_exact(&q)?,
                p_approx: p_unimodal_normal_approx(&q),
                p_mc,
                p_mc_stderr,
            });
        }
    }
    Ok(rows)
}

/// Output of [`run_experiment`], one variant per table shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExperimentOutput {
    MseCurve(Vec<MseCurvePoint>),
    CrlbScan(CrlbScan),
    GapBounds(Vec<GapBounds>),
    Probability(Vec<ProbabilityRow>),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    Ok(match cfg.kind {
        ExperimentKind::MseVsN => ExperimentOutput::MseCurve(run_mse_vs_n(cfg)?),
        ExperimentKind::EstimatorComparison => ExperimentOutput::MseCurve(run_estimator_comparison(cfg)?),
        ExperimentKind::CrlbScanSigmaN | ExperimentKind::CrlbScanSigmaE => {
            ExperimentOutput::CrlbScan(run_crlb_scan(cfg)?)
        }
        ExperimentKind::GapBoundsSweep => ExperimentOutput::GapBounds(run_gap_bounds_sweep(cfg)?),
        ExperimentKind::ProbabilityVsN => ExperimentOutput::Probability(run_probability_vs_n(cfg)?),
    })
}
