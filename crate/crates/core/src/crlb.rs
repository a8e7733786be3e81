//! Fisher information and Cramér-Rao bounds for the perturbed sign model,
//! the scalar bound with its Chernoff approximation, and the trace-gap
//! bounds against the unperturbed model with the same equivalent noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{noise_variance, PerturbedSignModel};
use crate::numerics::{dot, log_inverse_mills, spd_inverse, sym_eigenvalues, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub lambda_diag: Vec<f64>,
    pub shrink_m: DenseMatrix,
    pub fim: DenseMatrix,
    pub crlb_matrix: DenseMatrix,
    pub crlb_trace: f64,
}

/// Diagonal weights `phi(t)^2 / (sigma_z^2 Phi(t) Phi(-t))` with
/// `t_i = h_i^T w / sigma_z`, evaluated as a product of inverse Mills ratios.
pub fn lambda_diag(model: &PerturbedSignModel, w: &[f64]) -> Result<Vec<f64>> {
    model.check_parameter(w)?;
    let sz2 = noise_variance(w, model.sigma_e2(), model.sigma_n2());
    let sz = sz2.sqrt();
    let h = model.h();
    Ok((0..h.cols())
        .map(|i| {
            let t = h.column_dot(i, w) / sz;
            (log_inverse_mills(t) + log_inverse_mills(-t)).exp() / sz2
        })
        .collect())
}

/// `M = (I - (sigma_e^2 / sigma_z^2) w w^T) H`.
pub fn shrink_matrix(model: &PerturbedSignModel, w: &[f64]) -> Result<DenseMatrix> {
    model.check_parameter(w)?;
    let c = model.sigma_e2() / noise_variance(w, model.sigma_e2(), model.sigma_n2());
    let h = model.h();
    let wh: Vec<f64> = (0..h.cols()).map(|j| h.column_dot(j, w)).collect();
    Ok(DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| h[(i, j)] - c * w[i] * wh[j]))
}

fn check_nonsingular(fim: &DenseMatrix) -> Result<()> {
    let p = fim.rows();
    let eig = sym_eigenvalues(fim)?;
    let min = eig.last().copied().unwrap_or(0.0);
    if min <= 1e-12 * fim.trace() / p as f64 {
        return Err(Error::SingularFim { min_eigenvalue: min });
    }
    Ok(())
}

fn inverse_with_trace(fim: DenseMatrix) -> Result<(DenseMatrix, f64)> {
    check_nonsingular(&fim)?;
    let inv = spd_inverse(&fim)?;
    let trace = inv.trace();
    Ok((inv, trace))
}

/// Fisher information `M diag(lambda) M^T` and its inverse at `w`.
pub fn fim_and_crlb(model: &PerturbedSignModel, w: &[f64]) -> Result<FisherReport> {
    if model.dim() > model.num_measurements() {
        return Err(Error::DimensionMismatch(format!(
            "p = {} exceeds N = {}",
            model.dim(),
            model.num_measurements()
        )));
    }
    let lambda = lambda_diag(model, w)?;
    let m = shrink_matrix(model, w)?;
    let fim = m.weighted_gram(&lambda);
    let (crlb_matrix, crlb_trace) = inverse_with_trace(fim.clone())?;
    Ok(FisherReport { lambda_diag: lambda, shrink_m: m, fim, crlb_matrix, crlb_trace })
}

fn check_scalar_inputs(sigma_e2: f64, sigma_n2: f64, n: usize) -> Result<()> {
    if !(sigma_n2 > 0.0) || !(sigma_e2 >= 0.0) || n == 0 {
        return Err(Error::Domain(format!(
            "need sigma_n2 > 0, sigma_e2 >= 0, N >= 1; got {sigma_n2}, {sigma_e2}, {n}"
        )));
    }
    Ok(())
}

/// CRLB for a scalar parameter observed through an all-ones sensing row.
pub fn scalar_crlb(w: f64, sigma_e2: f64, sigma_n2: f64, n: usize) -> Result<f64> {
    check_scalar_inputs(sigma_e2, sigma_n2, n)?;
    let sz2 = w * w * sigma_e2 + sigma_n2;
    let t = w / sz2.sqrt();
    let inflation = 1.0 + sigma_e2 * w * w / sigma_n2;
    // 2 pi Phi(t) Phi(-t) e^{t^2} = 1 / (k(t) k(-t))
    let log_info = log_inverse_mills(t) + log_inverse_mills(-t);
    Ok(sz2 * inflation * inflation / n as f64 * (-log_info).exp())
}

/// Upper approximation of [`scalar_crlb`] from the Chernoff bound on the
/// normal tail.
pub fn scalar_crlb_chernoff(w: f64, sigma_e2: f64, sigma_n2: f64, n: usize) -> Result<f64> {
    check_scalar_inputs(sigma_e2, sigma_n2, n)?;
    let sz2 = w * w * sigma_e2 + sigma_n2;
    let inflation = 1.0 + sigma_e2 * w * w / sigma_n2;
    Ok(std::f64::consts::PI * sz2 / (2.0 * n as f64)
        * inflation
        * inflation
        * (w * w / (2.0 * sz2)).exp())
}

/// Logarithm of the Chernoff approximation up to terms that do not depend
/// on `sigma_n2`.
pub fn chernoff_log_objective(sigma_n2: f64, sigma_e2: f64, w: f64) -> f64 {
    let sz2 = sigma_n2 + sigma_e2 * w * w;
    3.0 * sz2.ln() + w * w / (2.0 * sz2) - 2.0 * sigma_n2.ln()
}

/// Additive-noise variance minimizing the Chernoff approximation for fixed
/// `sigma_e2`.
pub fn approx_opt_sigma_n2(w: f64, sigma_e2: f64) -> Result<f64> {
    if w == 0.0 || !(sigma_e2 >= 0.0) {
        return Err(Error::Domain(format!("need w != 0 and sigma_e2 >= 0, got {w}, {sigma_e2}")));
    }
    let s = sigma_e2;
    Ok(w * w / 2.0 * ((9.0 * s * s + s + 0.25).sqrt() + 0.5 + s))
}

/// Perturbation variance minimizing the Chernoff approximation for fixed
/// `sigma_n2`; zero when no perturbation helps.
pub fn approx_opt_sigma_e2(w: f64, sigma_n2: f64) -> Result<f64> {
    if w == 0.0 || !(sigma_n2 > 0.0) {
        return Err(Error::Domain(format!("need w != 0 and sigma_n2 > 0, got {w}, {sigma_n2}")));
    }
    let r = sigma_n2 / (w * w);
    Ok(if r <= 1.0 / 6.0 { 1.0 / 6.0 - r } else { 0.0 })
}

/// Trace gap between the perturbed model and an unperturbed model with the
/// same equivalent noise variance, with its eigenvalue bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    pub gamma: f64,
    pub lower: f64,
    pub gap: f64,
    pub upper: f64,
}

/// Compares `tr(J^-1)` with `tr(J~^-1)`, where `J~ = H Lambda H^T` belongs
/// to the model with `sigma_e2 = 0` and `sigma_n2 = sigma_z^2`.
pub fn crlb_gap_bounds(model: &PerturbedSignModel, w: &[f64]) -> Result<GapBounds> {
    let lambda = lambda_diag(model, w)?;
    let reduced = model.h().weighted_gram(&lambda);
    let (_, reduced_trace) = inverse_with_trace(reduced.clone())?;
    let full = fim_and_crlb(model, w)?;
    let eig = sym_eigenvalues(&reduced)?;
    let gamma = model.sigma_e2() * dot(w, w) / model.sigma_n2();
    let factor = gamma * gamma + 2.0 * gamma;
    Ok(GapBounds {
        gamma,
        lower: factor / eig[0],
        gap: full.crlb_trace - reduced_trace,
        upper: factor / eig[eig.len() - 1],
    })
}

/// Minimizes `f` over `[lo, hi]` on a log-spaced grid, then refines the best
/// bracket by golden-section search in `log x`. Returns `(x, f(x))`.
pub fn minimize_on_log_grid(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(f64, f64)> {
    if !(lo > 0.0 && hi > lo) || points < 3 {
        return Err(Error::Domain(format!("bad grid [{lo}, {hi}] with {points} points")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let at = |i: usize| a + (b - a) * i as f64 / (points - 1) as f64;
    let best = (0..points)
        .map(|i| (i, f(at(i).exp())))
        .filter(|(_, v)| v.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| Error::Domain("objective is not finite on the grid".into()))?
        .0;
    let (mut l, mut r) = (at(best.saturating_sub(1)), at((best + 1).min(points - 1)));
    let g = |u: f64| f(u.exp());
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = r - ratio * (r - l);
    let mut x2 = l + ratio * (r - l);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while r - l > 1e-12 {
        if f1 <= f2 {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - ratio * (r - l);
            f1 = g(x1);
        } else {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + ratio * (r - l);
            f2 = g(x2);
        }
    }
    let grid_x = at(best);
    let (x, fx) = (0.5 * (l + r), g(0.5 * (l + r)));
    // Refinement never loses to the grid point itself.
    Ok(if fx <= g(grid_x) { (x.exp(), fx) } else { (grid_x.exp(), g(grid_x)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gaussian_matrix, make_ones_row, RngSeed};
    use crate::numerics::{std_normal_cdf, std_normal_pdf};
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn lambda_at_zero_projection() {
        let m = PerturbedSignModel::new(make_ones_row(3), 0.5, 2.0).unwrap();
        let lam = lambda_diag(&m, &[0.0]).unwrap();
        for l in lam {
            assert!(rel(l, 2.0 / (PI * 2.0)) < 1e-14);
        }
    }

    #[test]
    fn lambda_matches_literal_and_algebraic_forms() {
        let h = make_gaussian_matrix(2, 50, RngSeed::new(5, 0));
        let m = PerturbedSignModel::new(h.clone(), 0.3, 0.7).unwrap();
        let w = [0.9, -1.4];
        let sz2 = noise_variance(&w, 0.3, 0.7);
        let lam = lambda_diag(&m, &w).unwrap();
        for (i, l) in lam.iter().enumerate() {
            let t = h.column_dot(i, &w) / sz2.sqrt();
            let (c, cm) = (std_normal_cdf(t), std_normal_cdf(-t));
            let literal = (1.0 / c + 1.0 / cm) * (-t * t).exp() / (2.0 * PI * sz2);
            let algebraic = std_normal_pdf(t).powi(2) / (sz2 * c * cm);
            assert!(rel(*l, literal) < 1e-10 && rel(*l, algebraic) < 1e-10);
        }
    }

    #[test]
    fn lambda_survives_far_tails() {
        let m = PerturbedSignModel::new(make_ones_row(1), 0.0, 1.0).unwrap();
        for t in [20.0, 35.0, -35.0, 37.5] {
            let l = lambda_diag(&m, &[t]).unwrap()[0];
            assert!(l > 0.0 && l.is_finite(), "{t}: {l}");
        }
        // k(35) k(-35) with k(-35) ~ 35 + 1/35 and k(35) = phi(35)/Phi(35)
        let l = lambda_diag(&m, &[35.0]).unwrap()[0];
        let approx = std_normal_pdf(35.0) * (35.0 + 1.0 / 35.0 - 2.0 / 35f64.powi(3));
        assert!(rel(l, approx) < 1e-6);
    }

    #[test]
    fn lambda_decreases_with_additive_noise() {
        let h = make_gaussian_matrix(2, 10, RngSeed::new(9, 0));
        let w = [1.0, 0.5];
        // once every |t_i| < 1 the weights fall monotonically
        let mut prev = vec![f64::INFINITY; 10];
        for k in 0..30 {
            let sn = 10.0 * 1.5f64.powi(k);
            let lam = lambda_diag(&PerturbedSignModel::new(h.clone(), 0.2, sn).unwrap(), &w).unwrap();
            assert!(lam.iter().zip(&prev).all(|(a, b)| a < b));
            prev = lam;
        }
        assert!(prev.iter().all(|&l| l < 1e-3));
    }

    #[test]
    fn shrink_matrix_reductions() {
        let h = make_gaussian_matrix(3, 8, RngSeed::new(1, 0));
        let w = [0.3, -0.2, 0.9];
        let m0 = shrink_matrix(&PerturbedSignModel::new(h.clone(), 0.0, 1.0).unwrap(), &w).unwrap();
        assert_eq!(m0, h);

        let m = shrink_matrix(&PerturbedSignModel::new(h.clone(), 0.5, 1e-12).unwrap(), &w).unwrap();
        for j in 0..8 {
            assert!(m.column_dot(j, &w).abs() < 1e-10);
        }
        let eig = sym_eigenvalues(&m.weighted_gram(&[1.0; 8])).unwrap();
        assert!(eig[2] < 1e-10 * eig[0]);
    }

    #[test]
    fn sherman_morrison_identity() {
        let mut s = RngSeed::new(77, 0).gaussian_stream();
        for _ in 0..100 {
            let w: Vec<f64> = (0..4).map(|_| s.next_standard()).collect();
            let se = s.next_uniform() * 2.0;
            let sn = s.next_uniform() * 2.0 + 1e-3;
            let sz2 = noise_variance(&w, se, sn);
            let a = DenseMatrix::from_fn(4, 4, |i, j| (i == j) as u8 as f64 - se / sz2 * w[i] * w[j]);
            let b = DenseMatrix::from_fn(4, 4, |i, j| (i == j) as u8 as f64 + se / sn * w[i] * w[j]);
            let prod = a.matmul(&b).unwrap();
            let err = prod.sub(&DenseMatrix::identity(4)).frobenius_norm();
            let scale = 1.0 + b.frobenius_norm();
            assert!(err <= 1e-12 * scale, "{err}");
        }
    }

    #[test]
    fn fim_properties() {
        let h = make_gaussian_matrix(3, 60, RngSeed::new(4, 0));
        let m = PerturbedSignModel::new(h.clone(), 0.25, 0.8).unwrap();
        let w = [0.5, -0.7, 0.2];
        let r = fim_and_crlb(&m, &w).unwrap();
        assert!(r.lambda_diag.iter().all(|&l| l > 0.0));
        assert!(r.fim.is_symmetric(1e-10));
        let id = r.crlb_matrix.matmul(&r.fim).unwrap().sub(&DenseMatrix::identity(3));
        assert!(id.frobenius_norm() < 1e-6);
        assert!(sym_eigenvalues(&r.crlb_matrix).unwrap().iter().all(|&e| e > 0.0));
        assert!((r.crlb_trace - r.crlb_matrix.trace()).abs() < 1e-15);

        // without perturbation the FIM is the probit one
        let m0 = PerturbedSignModel::new(h.clone(), 0.0, 0.8).unwrap();
        let r0 = fim_and_crlb(&m0, &w).unwrap();
        let probit = h.weighted_gram(&lambda_diag(&m0, &w).unwrap());
        assert!(r0.fim.sub(&probit).frobenius_norm() < 1e-12 * probit.frobenius_norm());
    }

    #[test]
    fn fim_singular_without_additive_noise() {
        let h = make_gaussian_matrix(3, 60, RngSeed::new(4, 0));
        let m = PerturbedSignModel::new(h, 0.25, 1e-12).unwrap();
        assert!(matches!(fim_and_crlb(&m, &[0.5, -0.7, 0.2]), Err(Error::SingularFim { .. })));
    }

    #[test]
    fn fim_needs_enough_measurements() {
        let h = make_gaussian_matrix(3, 2, RngSeed::new(4, 0));
        let m = PerturbedSignModel::new(h, 0.25, 1.0).unwrap();
        assert!(matches!(fim_and_crlb(&m, &[0.5, -0.7, 0.2]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scalar_crlb_values() {
        assert!(rel(scalar_crlb(0.0, 0.0, 1.0, 1).unwrap(), PI / 2.0) < 1e-14);
        // high-precision reference values
        let cases = [
            (1.0, 0.3, 1.0, 1, 4.5890103521889006),
            (2.0, 0.1, 0.5, 10, 2.6836027791520992),
            (-0.5, 1.0, 0.2, 7, 0.62737062422107471),
        ];
        for (w, se, sn, n, want) in cases {
            assert!(rel(scalar_crlb(w, se, sn, n).unwrap(), want) < 1e-12, "{w} {se} {sn}");
        }
        // survives arguments where the literal product underflows
        let far = scalar_crlb(30.0, 0.0, 1.0, 1).unwrap();
        assert!(rel(far, 2.2594582433618897e194) < 1e-10);
        assert!(scalar_crlb(1.0, 0.1, 0.0, 1).is_err());
        assert!(scalar_crlb(1.0, 0.1, 1.0, 0).is_err());
    }

    #[test]
    fn chernoff_values_and_dominance() {
        for (se, sn, n) in [(0.0, 1.0, 1), (0.3, 2.0, 5)] {
            let c = scalar_crlb_chernoff(0.0, se, sn, n).unwrap();
            assert!(rel(c, PI * sn / (2.0 * n as f64)) < 1e-14);
            assert!(rel(c, scalar_crlb(0.0, se, sn, n).unwrap()) < 1e-14);
        }
        let direct = PI * 1.3 / 2.0 * 1.3f64.powi(2) * (1.0 / 2.6f64).exp();
        assert!(rel(scalar_crlb_chernoff(1.0, 0.3, 1.0, 1).unwrap(), direct) < 1e-14);

        let mut s = RngSeed::new(3, 3).gaussian_stream();
        for _ in 0..200 {
            let w = 3.0 * s.next_standard();
            let se = 2.0 * s.next_uniform();
            let sn = 2.0 * s.next_uniform() + 1e-3;
            let n = 1 + (s.next_uniform() * 1000.0) as usize;
            let (a, b) = (scalar_crlb(w, se, sn, n).unwrap(), scalar_crlb_chernoff(w, se, sn, n).unwrap());
            assert!(b >= a * (1.0 - 1e-14), "{w} {se} {sn}");
        }
    }

    #[test]
    fn log_objective_tracks_chernoff() {
        assert!((chernoff_log_objective(1.0, 0.0, 1.0) - 0.5).abs() < 1e-15);
        let (se, w, n) = (0.3, 1.2, 17);
        let offsets: Vec<f64> = (1..40)
            .map(|i| {
                let sn = 0.05 * i as f64;
                scalar_crlb_chernoff(w, se, sn, n).unwrap().ln() - chernoff_log_objective(sn, se, w)
            })
            .collect();
        assert!(offsets.iter().all(|o| (o - offsets[0]).abs() < 1e-12));
    }

    #[test]
    fn approx_optima() {
        assert!((approx_opt_sigma_n2(1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((approx_opt_sigma_n2(1.0, 0.3).unwrap() - 0.983095).abs() < 1e-6);
        let (a, b) = (approx_opt_sigma_n2(1.3, 0.2).unwrap(), approx_opt_sigma_n2(2.6, 0.2).unwrap());
        assert!(rel(b, 4.0 * a) < 1e-14);
        assert!(approx_opt_sigma_n2(0.0, 0.3).is_err());

        assert!((approx_opt_sigma_e2(1.0, 0.1).unwrap() - (1.0 / 6.0 - 0.1)).abs() < 1e-15);
        assert_eq!(approx_opt_sigma_e2(1.0, 1.0 / 6.0).unwrap(), 0.0);
        assert_eq!(approx_opt_sigma_e2(1.0, 1.0).unwrap(), 0.0);
        assert!(approx_opt_sigma_e2(0.0, 0.1).is_err());

        // the formula is the stationary point of the log objective
        let (x, _) = minimize_on_log_grid(|s| chernoff_log_objective(s, 0.3, 1.0), 1e-2, 1e1, 2000).unwrap();
        assert!((x - approx_opt_sigma_n2(1.0, 0.3).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn grid_minimizer_finds_known_minimum() {
        let (x, fx) = minimize_on_log_grid(|x| (x.ln() - 0.3).powi(2) + 1.0, 1e-3, 1e3, 50).unwrap();
        assert!((x - 0.3f64.exp()).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
        assert!(minimize_on_log_grid(|x| x, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn scalar_crlb_grows_with_strong_perturbation() {
        let mut prev = 0.0;
        for k in 0..40 {
            let se = 0.2 * 1.3f64.powi(k);
            let c = scalar_crlb(1.0, se, 0.1, 1).unwrap();
            assert!(c > prev);
            prev = c;
        }
        assert!(prev > 1e4);
    }

    #[test]
    fn gap_bounds_scalar_and_trivial() {
        let m = PerturbedSignModel::new(make_ones_row(40), 0.0, 1.5).unwrap();
        let g = crlb_gap_bounds(&m, &[0.8]).unwrap();
        assert_eq!((g.gamma, g.lower, g.upper), (0.0, 0.0, 0.0));
        assert!(g.gap.abs() < 1e-15);

        let m = PerturbedSignModel::new(make_ones_row(40), 0.4, 0.6).unwrap();
        let g = crlb_gap_bounds(&m, &[0.8]).unwrap();
        assert_eq!(g.lower, g.upper);
        assert!(rel(g.gap, g.lower) < 1e-10);
    }

    #[test]
    fn gap_matches_quadratic_form() {
        let h = make_gaussian_matrix(4, 300, RngSeed::new(12, 0));
        let w = [0.4, -0.3, 0.8, 0.1];
        let m = PerturbedSignModel::new(h.clone(), 0.5, 0.9).unwrap();
        let g = crlb_gap_bounds(&m, &w).unwrap();
        let reduced = h.weighted_gram(&lambda_diag(&m, &w).unwrap());
        let jw = crate::numerics::solve_spd(&reduced, &w).unwrap();
        let expected = (g.gamma * g.gamma + 2.0 * g.gamma) * dot(&w, &jw) / dot(&w, &w);
        assert!(rel(g.gap, expected) < 1e-8);
        assert!(g.lower <= g.gap && g.gap <= g.upper);
    }
}
