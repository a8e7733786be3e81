//! Probability that the unconstrained `v` optimum of the scalar all-ones
//! problem lies strictly inside the feasible ball, i.e. that the `w`-space
//! likelihood has an interior maximum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RngSeed;
use crate::numerics::{log_binomial, std_normal_cdf, std_normal_log_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnimodalityQuery {
    pub n: usize,
    pub w0: f64,
    pub sigma_e2: f64,
    pub sigma_n2: f64,
}

impl UnimodalityQuery {
    pub fn new(n: usize, w0: f64, sigma_e2: f64, sigma_n2: f64) -> Result<Self> {
        if n == 0 || !(sigma_e2 > 0.0) || !(sigma_n2 > 0.0) || !w0.is_finite() {
            return Err(Error::Domain(format!(
                "need N >= 1, sigma_e2 > 0, sigma_n2 > 0, finite w0; got {n}, {sigma_e2}, {sigma_n2}, {w0}"
            )));
        }
        Ok(Self { n, w0, sigma_e2, sigma_n2 })
    }

    fn sigma_z(&self) -> f64 {
        (self.w0 * self.w0 * self.sigma_e2 + self.sigma_n2).sqrt()
    }

    /// Probability that a single measurement is +1.
    pub fn q_star(&self) -> f64 {
        std_normal_cdf(self.w0 / self.sigma_z())
    }

    /// Range `[k_minus, k_plus]` of positive-sign counts whose probit
    /// solution satisfies `|v| < 1 / sigma_e`. Empty when `k_minus > k_plus`.
    pub fn k_window(&self) -> (u64, u64) {
        let n = self.n as f64;
        let bound = 1.0 / self.sigma_e2.sqrt();
        let k_minus = (n * std_normal_cdf(-bound)).floor() as u64 + 1;
        let k_plus = ((n * std_normal_cdf(bound)).ceil() as u64).saturating_sub(1);
        (k_minus, k_plus)
    }
}

/// `log sum_{k=lo}^{hi} C(n,k) q^k (1-q)^(n-k)` by streaming log-sum-exp.
fn log_binomial_mass(n: u64, log_q: f64, log_1mq: f64, lo: u64, hi: u64) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for k in lo..=hi.min(n) {
        let term = log_binomial(n, k)? + k as f64 * log_q + (n - k) as f64 * log_1mq;
        if term > max {
            sum = sum * (max - term).exp() + 1.0;
            max = term;
        } else {
            sum += (term - max).exp();
        }
    }
    Ok(if sum == 0.0 { f64::NEG_INFINITY } else { max + sum.ln() })
}

/// Exact probability from the binomial law of the positive-sign count.
pub fn p_unimodal_exact(q: &UnimodalityQuery) -> Result<f64> {
    let (lo, hi) = q.k_window();
    if lo > hi {
        return Ok(0.0);
    }
    let t = q.w0 / q.sigma_z();
    let log_mass = log_binomial_mass(
        q.n as u64,
        std_normal_log_cdf(t),
        std_normal_log_cdf(-t),
        lo,
        hi,
    )?;
    Ok(log_mass.exp().clamp(0.0, 1.0))
}

/// Normal approximation of the binomial count, clamped to `[0, 1]`.
pub fn p_unimodal_normal_approx(q: &UnimodalityQuery) -> f64 {
    let qs = q.q_star();
    let spread = (qs * (1.0 - qs)).sqrt();
    if spread == 0.0 {
        return 0.0;
    }
    let bound = 1.0 / q.sigma_e2.sqrt();
    let root_n = (q.n as f64).sqrt();
    let eta_plus = root_n * (std_normal_cdf(bound) - qs) / spread;
    let eta_minus = root_n * (std_normal_cdf(-bound) - qs) / spread;
    (std_normal_cdf(eta_plus) - std_normal_cdf(eta_minus)).clamp(0.0, 1.0)
}

/// Monte Carlo estimate and its plug-in standard error.
///
/// Trial `t` draws from stream `seed.stream_index + t`, so callers should
/// reserve that many consecutive streams. Each measurement is +1 when a
/// uniform draw exceeds `Phi(-w0 / sigma_z)`, the inverse-CDF image of the
/// model's sign event.
pub fn p_unimodal_mc(q: &UnimodalityQuery, trials: usize, seed: RngSeed) -> Result<(f64, f64)> {
    if trials < 100 {
        return Err(Error::Config(format!("trials must be at least 100, got {trials}")));
    }
    let threshold = std_normal_cdf(-q.w0 / q.sigma_z());
    let (lo, hi) = q.k_window();
    let hits: usize = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngSeed::new(seed.master_seed, seed.stream_index.wrapping_add(t)).gaussian_stream();
            let k = (0..q.n).filter(|_| rng.next_uniform() > threshold).count() as u64;
            usize::from(lo <= k && k <= hi)
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}
