//! Maximum likelihood estimation through the convex `v` reformulation,
//! with the norm-limit projection and the perturbation-ignored estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{neg_log_likelihood_v, neg_log_likelihood_v_value, v_to_w};
use crate::model::{check_identifiability, PerturbedSignModel, SignVector};
use crate::numerics::{dot, norm2, scale, solve_spd, DenseMatrix};

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub divergence_norm_factor: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iters: 100,
            divergence_norm_factor: 1e3,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.divergence_norm_factor > 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack_ratio > 0.0
            && self.backtrack_ratio < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("solver options out of range: {self:?}")))
        }
    }
}

/// Where the reported estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimateStatus {
    /// The unconstrained optimum exists and lies inside the norm limit.
    Interior,
    /// The optimum exists but was projected onto the norm-limit sphere.
    Projected,
    /// No finite optimum (separable data); the last iterate's direction
    /// was projected onto the norm-limit sphere.
    Separated,
}

impl EstimateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Interior => "interior",
            Self::Projected => "projected",
            Self::Separated => "separated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub w_hat: Vec<f64>,
    /// The `v` actually back-transformed (after projection, if any).
    pub v_solution: Vec<f64>,
    /// Last iterate of the unconstrained solve.
    pub v_unconstrained: Vec<f64>,
    pub status: EstimateStatus,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub neg_log_likelihood: f64,
}

/// Result of the unconstrained Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedSolution {
    pub v: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value at the start and after every accepted step.
    pub objective_history: Vec<f64>,
}

const MAX_BACKTRACKS: usize = 60;
/// Relative length below which a Newton step counts as settled.
const STEP_TOL: f64 = 1e-5;

/// Rounding level of an objective value summed over `n` terms.
pub fn objective_rounding_level(value: f64, n: usize) -> f64 {
    (n as f64 + 8.0) * f64::EPSILON * value.abs()
}

/// Minimizes `-sum log Phi(y_i h_i^T v)` over all of `R^p` starting at 0.
pub fn solve_unconstrained_v(
    h: &DenseMatrix,
    y: &SignVector,
    opts: &SolverOptions,
) -> Result<UnconstrainedSolution> {
    solve_unconstrained_v_from(h, y, &vec![0.0; h.rows()], opts, 1.0)
}

/// Damped Newton with Armijo backtracking from `start`.
///
/// Converged means the gradient norm is at most `grad_tol` (or cannot be
/// reduced further by a full Newton step) and the step has settled. Steps
/// whose predicted decrease is below the rounding level of the objective
/// are judged by the gradient norm instead of the sufficient-decrease test,
/// so the objective is non-increasing up to rounding. Otherwise the solve reports non-convergence, which
/// happens when the iterate leaves the ball of radius
/// `divergence_norm_factor * max(radius, 1)`, the iteration cap is reached,
/// the line search stalls, or the Hessian degenerates after leaving the
/// origin. All of these are how separable data shows up.
pub fn solve_unconstrained_v_from(
    h: &DenseMatrix,
    y: &SignVector,
    start: &[f64],
    opts: &SolverOptions,
    radius: f64,
) -> Result<UnconstrainedSolution> {
    opts.validate()?;
    if !check_identifiability(h) {
        return Err(Error::RankDeficient);
    }
    if start.len() != h.rows() || y.len() != h.cols() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, y has {} entries, start has {}",
            h.rows(),
            h.cols(),
            y.len(),
            start.len()
        )));
    }
    let divergence_radius = opts.divergence_norm_factor * radius.max(1.0);

    let mut v = start.to_vec();
    let mut eval = neg_log_likelihood_v(h, y, &v)?;
    let mut history = vec![eval.value];
    let mut grad_norm = norm2(&eval.gradient);
    let mut iterations = 0;

    let finish = |v: Vec<f64>, converged, iterations, grad_norm, history| {
        Ok(UnconstrainedSolution { v, converged, iterations, grad_norm, objective_history: history })
    };

    loop {
        let neg_grad = scale(&eval.gradient, -1.0);
        let step = match solve_spd(&eval.hessian, &neg_grad) {
            Ok(d) => d,
            Err(Error::NotPositiveDefinite { .. }) if iterations > 0 => {
                return finish(v, false, iterations, grad_norm, history);
            }
            Err(e) => return Err(e),
        };
        let step_norm = norm2(&step);
        let slope = dot(&eval.gradient, &step);
        // A predicted decrease below the rounding level of the objective
        // cannot be checked by the sufficient-decrease test.
        let unverifiable = -slope <= objective_rounding_level(eval.value, h.cols());
        let settled = step_norm <= STEP_TOL * (1.0 + norm2(&v));
        if settled && grad_norm <= opts.grad_tol {
            return finish(v, true, iterations, grad_norm, history);
        }
        if iterations >= opts.max_iters || norm2(&v) > divergence_radius {
            return finish(v, false, iterations, grad_norm, history);
        }

        let mut accepted = None;
        if unverifiable {
            // Switch the merit function to the gradient norm; when even that
            // cannot improve, the gradient has hit its evaluation floor.
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a + d).collect();
            let next = neg_log_likelihood_v(h, y, &trial)?;
            if norm2(&next.gradient) < grad_norm {
                accepted = Some(trial);
            } else {
                return finish(v, settled, iterations, grad_norm, history);
            }
        } else {
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                let value = neg_log_likelihood_v_value(h, y, &trial)?;
                if value <= eval.value + opts.armijo_c * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
                alpha *= opts.backtrack_ratio;
            }
        }
        let Some(next) = accepted else {
            return finish(v, false, iterations, grad_norm, history);
        };
        v = next;
        iterations += 1;
        eval = neg_log_likelihood_v(h, y, &v)?;
        grad_norm = norm2(&eval.gradient);
        history.push(eval.value);
    }
}

/// Radius of the `v` ball that corresponds to `|w| <= r_w`.
pub fn v_radius(r_w: f64, sigma_e2: f64, sigma_n2: f64) -> f64 {
    r_w / (r_w * r_w * sigma_e2 + sigma_n2).sqrt()
}

/// ML estimate of `w` with the norm limit `|w| <= r_w`.
pub fn ml_estimate(
    model: &PerturbedSignModel,
    y: &SignVector,
    r_w: f64,
    opts: &SolverOptions,
) -> Result<EstimateReport> {
    if !(r_w > 0.0) || !r_w.is_finite() {
        return Err(Error::InvalidRadius(r_w));
    }
    let (se, sn) = (model.sigma_e2(), model.sigma_n2());
    let r_v = v_radius(r_w, se, sn);
    let h = model.h();
    let solution = solve_unconstrained_v_from(h, y, &vec![0.0; h.rows()], opts, r_v)?;
    let v_norm = norm2(&solution.v);

    let (status, v_solution) = if solution.converged && v_norm <= r_v {
        (EstimateStatus::Interior, solution.v.clone())
    } else {
        let status = if solution.converged {
            EstimateStatus::Projected
        } else {
            EstimateStatus::Separated
        };
        let direction = if v_norm > 0.0 {
            solution.v.clone()
        } else {
            // No movement at all: fall back to the steepest descent direction.
            scale(&neg_log_likelihood_v(h, y, &solution.v)?.gradient, -1.0)
        };
        let dn = norm2(&direction);
        (status, scale(&direction, r_v / dn))
    };

    let w_hat = if status == EstimateStatus::Interior {
        v_to_w(&v_solution, se, sn)?
    } else {
        // exact norm r_w; the back-transform loses it to rounding near 1/sigma_e
        scale(&v_solution, r_w / norm2(&v_solution))
    };
    let neg_log_likelihood = neg_log_likelihood_v_value(h, y, &v_solution)?;
    Ok(EstimateReport {
        w_hat,
        v_solution,
        v_unconstrained: solution.v,
        status,
        iterations: solution.iterations,
        final_grad_norm: solution.grad_norm,
        neg_log_likelihood,
    })
}

/// Probit ML estimate that ignores the perturbation (`sigma_e^2 = 0`).
pub fn perturbation_ignored_estimate(
    h: &DenseMatrix,
    y: &SignVector,
    sigma_n2: f64,
    r_w: f64,
    opts: &SolverOptions,
) -> Result<EstimateReport> {
    let model = PerturbedSignModel::new(h.clone(), 0.0, sigma_n2)?;
    ml_estimate(&model, y, r_w, opts)
}

/// Maps the ML estimate to the perturbation-ignored one:
/// `w_t / sqrt(1 + (sigma_e^2 / sigma_n^2) |w_t|^2)`.
pub fn relate_ignored_to_ml(w_t: &[f64], sigma_e2: f64, sigma_n2: f64) -> Vec<f64> {
    let n = norm2(w_t);
    scale(w_t, 1.0 / (1.0 + sigma_e2 / sigma_n2 * n * n).sqrt())
}

/// Limiting squared error of the perturbation-ignored estimator as N grows.
pub fn mismodel_limit_mse(w0: &[f64], sigma_e2: f64, sigma_n2: f64) -> f64 {
    let n2 = dot(w0, w0);
    let shrink = 1.0 - (1.0 + sigma_e2 / sigma_n2 * n2).powf(-0.5);
    n2 * shrink * shrink
}
