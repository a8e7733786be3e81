//! Negative log-likelihood of the sign model, in the native parameter `w`
//! and in the convexifying variable `v = w / sigma_z(w)`.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::model::{noise_variance, PerturbedSignModel, SignVector};
use crate::numerics::{inverse_mills, mills_excess, norm2, std_normal_log_cdf, DenseMatrix};

/// A point in the transformed parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct VParameter(Vec<f64>);

impl VParameter {
    pub fn new(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for VParameter {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Objective value with its gradient and Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DenseMatrix,
}

/// `v = w / sqrt(|w|^2 sigma_e^2 + sigma_n^2)`.
pub fn w_to_v(w: &[f64], sigma_e2: f64, sigma_n2: f64) -> VParameter {
    let sigma_z = noise_variance(w, sigma_e2, sigma_n2).sqrt();
    VParameter(w.iter().map(|x| x / sigma_z).collect())
}

/// Inverse of [`w_to_v`]: `w = sigma_n v / sqrt(1 - sigma_e^2 |v|^2)`.
pub fn v_to_w(v: &[f64], sigma_e2: f64, sigma_n2: f64) -> Result<Vec<f64>> {
    let nv = norm2(v);
    let load = sigma_e2 * nv * nv;
    if load >= 1.0 {
        return Err(Error::InfeasibleV(load));
    }
    let scale = sigma_n2.sqrt() / (1.0 - load).sqrt();
    Ok(v.iter().map(|x| x * scale).collect())
}

fn check_dims(h: &DenseMatrix, y: &SignVector, x: &[f64]) -> Result<()> {
    if h.cols() != y.len() || h.rows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, y has {} entries, parameter has {}",
            h.rows(),
            h.cols(),
            y.len(),
            x.len()
        )));
    }
    Ok(())
}

/// `-sum_i log Phi(y_i h_i^T w / sigma_z(w))`.
pub fn neg_log_likelihood_w(model: &PerturbedSignModel, y: &SignVector, w: &[f64]) -> Result<f64> {
    let h = model.h();
    check_dims(h, y, w)?;
    let sigma_z = noise_variance(w, model.sigma_e2(), model.sigma_n2()).sqrt();
    Ok(y
        .iter()
        .enumerate()
        .map(|(i, s)| -std_normal_log_cdf(s * h.column_dot(i, w) / sigma_z))
        .sum())
}

/// `-sum_i log Phi(y_i h_i^T v)` only, for line searches.
pub fn neg_log_likelihood_v_value(h: &DenseMatrix, y: &SignVector, v: &[f64]) -> Result<f64> {
    check_dims(h, y, v)?;
    Ok(y
        .iter()
        .enumerate()
        .map(|(i, s)| -std_normal_log_cdf(s * h.column_dot(i, v)))
        .sum())
}

/// Curvature weight of one measurement, `k(t) (k(t) + t)` with
/// `t = y_i h_i^T v`. Strictly positive for every finite t.
pub fn curvature_weight(t: f64) -> f64 {
    inverse_mills(t) * mills_excess(t)
}

/// Value, gradient and Hessian of the convex objective in `v`.
///
/// The Hessian is `sum_i beta_i h_i h_i^T` with `beta_i` from
/// [`curvature_weight`].
pub fn neg_log_likelihood_v(
    h: &DenseMatrix,
    y: &SignVector,
    v: &[f64],
) -> Result<ObjectiveEvaluation> {
    check_dims(h, y, v)?;
    let p = h.rows();
    let mut value = 0.0;
    let mut gradient = vec![0.0; p];
    let mut beta = Vec::with_capacity(h.cols());
    for (i, s) in y.iter().enumerate() {
        let t = s * h.column_dot(i, v);
        value -= std_normal_log_cdf(t);
        let k = inverse_mills(t);
        for (j, g) in gradient.iter_mut().enumerate() {
            *g -= s * k * h[(j, i)];
        }
        beta.push(k * mills_excess(t));
    }
    let hessian = h.weighted_gram(&beta);
    Ok(ObjectiveEvaluation { value, gradient, hessian })
}
