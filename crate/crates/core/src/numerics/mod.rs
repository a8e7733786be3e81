//! Standard-normal special functions and the small dense linear algebra
//! kernel shared by the rest of the crate.

mod linalg;
mod normal;

pub use linalg::{solve_spd, spd_inverse, sym_eigenvalues, DenseMatrix};
pub use normal::{
    erfcx, inverse_mills, log_binomial, log_inverse_mills, mills_excess, std_normal_cdf,
    std_normal_log_cdf, std_normal_log_pdf, std_normal_pdf, std_normal_quantile,
};

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn scale(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}
