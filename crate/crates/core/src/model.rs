//! The perturbed sign-measurement model `y = sign((H + E)^T w + n)` and
//! synthetic data generation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm2, std_normal_quantile, sym_eigenvalues, DenseMatrix};

/// Mean sensing matrix `H` (p x N) together with the perturbation and
/// additive-noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSignModel {
    h: DenseMatrix,
    sigma_e2: f64,
    sigma_n2: f64,
}

impl PerturbedSignModel {
    pub fn new(h: DenseMatrix, sigma_e2: f64, sigma_n2: f64) -> Result<Self> {
        if !(sigma_n2 > 0.0) || !sigma_n2.is_finite() {
            return Err(Error::Domain(format!("sigma_n2 must be positive, got {sigma_n2}")));
        }
        if !(sigma_e2 >= 0.0) || !sigma_e2.is_finite() {
            return Err(Error::Domain(format!("sigma_e2 must be nonnegative, got {sigma_e2}")));
        }
        if h.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sensing matrix has non-finite entries".into()));
        }
        Ok(Self { h, sigma_e2, sigma_n2 })
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn sigma_e2(&self) -> f64 {
        self.sigma_e2
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    /// Parameter dimension p.
    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    /// Number of measurements N.
    pub fn num_measurements(&self) -> usize {
        self.h.cols()
    }

    pub(crate) fn check_parameter(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter of length {} for a model with p = {}",
                w.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Observed signs, each exactly +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Domain(format!("sign entries must be +1 or -1, got {bad}")));
        }
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&s| f64::from(s))
    }

    /// Number of `+1` entries.
    pub fn count_positive(&self) -> usize {
        self.0.iter().filter(|&&s| s == 1).count()
    }

    /// Sign flip of every entry.
    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

/// `sign(x)` with the nonpositive-to-minus-one convention.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Identifies one independent random stream: the master seed picks the
/// generator key and `stream_index` the ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngSeed {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    /// Stream in a tagged sub-range: the top 16 bits of the stream index
    /// carry `domain`, the low 48 bits `index`.
    pub fn derived(master_seed: u64, domain: u16, index: u64) -> Self {
        debug_assert!(index < 1 << 48);
        Self::new(master_seed, (u64::from(domain) << 48) | (index & ((1 << 48) - 1)))
    }

    pub fn gaussian_stream(self) -> GaussianStream {
        GaussianStream::new(self)
    }
}

/// Standard normal draws by inverse CDF on open-interval 53-bit uniforms.
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: RngSeed) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
        rng.set_stream(seed.stream_index);
        Self { rng }
    }

    /// Uniform on (0, 1), never hitting either endpoint.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_standard(&mut self) -> f64 {
        std_normal_quantile(self.next_uniform()).expect("uniform lies in (0, 1)")
    }
}

/// `sigma_z^2 = |w|^2 sigma_e^2 + sigma_n^2`, the variance of the equivalent
/// noise `E^T w + n`.
pub fn equivalent_noise_variance(model: &PerturbedSignModel, w: &[f64]) -> f64 {
    noise_variance(w, model.sigma_e2, model.sigma_n2)
}

pub(crate) fn noise_variance(w: &[f64], sigma_e2: f64, sigma_n2: f64) -> f64 {
    let n2 = norm2(w);
    n2 * n2 * sigma_e2 + sigma_n2
}

/// How the random part of each measurement is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimulationMode {
    /// `e_i^T w0` drawn directly as `N(0, sigma_e^2 |w0|^2)`.
    #[default]
    Reduced,
    /// Every entry of `E` drawn explicitly.
    MaterializedPerturbation,
    /// All noise forced to zero: `y_i = sign(h_i^T w0)`.
    Noiseless,
}

/// Simulates `y = sign((H + E)^T w0 + n)`.
pub fn simulate_measurements(
    model: &PerturbedSignModel,
    w0: &[f64],
    seed: RngSeed,
) -> Result<SignVector> {
    simulate_measurements_with(model, w0, seed, SimulationMode::Reduced)
}

pub fn simulate_measurements_with(
    model: &PerturbedSignModel,
    w0: &[f64],
    seed: RngSeed,
    mode: SimulationMode,
) -> Result<SignVector> {
    model.check_parameter(w0)?;
    let h = model.h();
    let sigma_n = model.sigma_n2.sqrt();
    let mut rng = seed.gaussian_stream();
    let signs = match mode {
        SimulationMode::Reduced => {
            let sigma_ew = model.sigma_e2.sqrt() * norm2(w0);
            (0..h.cols())
                .map(|i| {
                    let ew = sigma_ew * rng.next_standard();
                    let n = sigma_n * rng.next_standard();
                    sign(h.column_dot(i, w0) + ew + n)
                })
                .collect()
        }
        SimulationMode::MaterializedPerturbation => {
            return simulate_with_realized_matrix(model, w0, seed).map(|(y, _)| y);
        }
        SimulationMode::Noiseless => (0..h.cols()).map(|i| sign(h.column_dot(i, w0))).collect(),
    };
    Ok(SignVector(signs))
}

/// Simulates with an explicit perturbation draw and returns the signs
/// together with the realized sensing matrix `H + E`.
pub fn simulate_with_realized_matrix(
    model: &PerturbedSignModel,
    w0: &[f64],
    seed: RngSeed,
) -> Result<(SignVector, DenseMatrix)> {
    model.check_parameter(w0)?;
    let h = model.h();
    let (p, n) = (h.rows(), h.cols());
    let sigma_e = model.sigma_e2.sqrt();
    let sigma_n = model.sigma_n2.sqrt();
    let mut rng = seed.gaussian_stream();
    let mut realized = h.clone();
    let mut signs = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..p {
            realized[(j, i)] += sigma_e * rng.next_standard();
        }
        let noise = sigma_n * rng.next_standard();
        signs.push(sign(realized.column_dot(i, w0) + noise));
    }
    Ok((SignVector(signs), realized))
}

/// The 1 x N all-ones mean sensing matrix of the scalar problem.
pub fn make_ones_row(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(1, n, |_, _| 1.0)
}

/// p x N matrix with i.i.d. standard normal entries.
pub fn make_gaussian_matrix(p: usize, n: usize, seed: RngSeed) -> DenseMatrix {
    let mut rng = seed.gaussian_stream();
    DenseMatrix::from_fn(p, n, |_, _| rng.next_standard())
}

/// Full row rank test through the spectrum of `H H^T`.
pub fn check_identifiability(h: &DenseMatrix) -> bool {
    let p = h.rows();
    if p == 0 || h.cols() < p {
        return false;
    }
    let gram = h.weighted_gram(&vec![1.0; h.cols()]);
    match sym_eigenvalues(&gram) {
        Ok(eig) => {
            let min = eig[p - 1];
            min > 1e-10 * gram.trace() / p as f64
        }
        Err(_) => false,
    }
}
