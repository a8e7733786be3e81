use std::f64::consts::{FRAC_1_SQRT_2, LN_2, SQRT_2};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// sqrt(2 / pi) = k(0)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// 1 / sqrt(pi)
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Above this argument `k(x) + x` is taken from the Laplace continued
/// fraction instead of the direct difference.
const MILLS_CF_CUTOFF: f64 = 4.0;

// Rational Chebyshev approximations for erf/erfc (W. J. Cody, 1969).
const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_5e3,
    1.857_777_061_846_031_5e-1,
];
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_1e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_170_6e3,
];
const ERFC_C: [f64; 9] = [
    5.641_884_969_886_700_9e-1,
    8.883_149_794_388_376,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001_3e2,
    8.819_522_212_417_691e2,
    1.712_047_612_634_070_6e3,
    2.051_078_377_826_071_5e3,
    1.230_339_354_797_997_2e3,
    2.153_115_354_744_038_5e-8,
];
const ERFC_D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_098_6e2,
    1.621_389_574_566_690_2e3,
    3.290_799_235_733_459_6e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_4e3,
];
const ERFC_P: [f64; 6] = [
    3.053_266_349_612_323_4e-1,
    3.603_448_999_498_044_4e-1,
    1.257_817_261_112_292_5e-1,
    1.608_378_514_874_227_7e-2,
    6.587_491_615_298_378e-4,
    1.631_538_713_730_209_8e-2,
];
const ERFC_Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_467_3,
    5.279_051_029_514_284e-1,
    6.051_834_131_244_132e-2,
    2.335_204_976_268_691_8e-3,
];

/// erf(x) for |x| <= 0.5.
fn erf_small(x: f64) -> f64 {
    let ysq = x * x;
    let mut num = ERF_A[4] * ysq;
    let mut den = ysq;
    for i in 0..3 {
        num = (num + ERF_A[i]) * ysq;
        den = (den + ERF_B[i]) * ysq;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// erfcx(y) for y > 0.5.
fn erfcx_large(y: f64) -> f64 {
    if y <= 4.0 {
        let mut num = ERFC_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * y;
            den = (den + ERFC_D[i]) * y;
        }
        (num + ERFC_C[7]) / (den + ERFC_D[7])
    } else {
        let ysq = 1.0 / (y * y);
        let mut num = ERFC_P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * ysq;
            den = (den + ERFC_Q[i]) * ysq;
        }
        let r = ysq * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        (FRAC_1_SQRT_PI - r) / y
    }
}

/// exp(-y^2) with the square split to limit rounding in the exponent.
fn exp_neg_sq(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let lo = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-lo).exp()
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.5 {
        return 1.0 - erf_small(x);
    }
    let upper = if y < 27.3 {
        exp_neg_sq(y) * erfcx_large(y)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - upper
    } else {
        upper
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF, Phi(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Tail of the Laplace continued fraction for erfc,
///
/// `T(u) = (1/2) / (u + 1 / (u + (3/2) / (u + 2 / (u + ...))))`,
///
/// so that `erfcx(u) = 1 / (sqrt(pi) (u + T(u)))`. Evaluated with the
/// modified Lentz algorithm; only used for `u >= MILLS_CF_CUTOFF`.
fn laplace_tail(u: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const MAX_TERMS: usize = 500;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..=MAX_TERMS {
        let a = n as f64 * 0.5;
        d = u + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = u + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Scaled complementary error function, `erfcx(u) = exp(u^2) erfc(u)`,
/// for `u >= 0`.
pub fn erfcx(u: f64) -> f64 {
    debug_assert!(u >= 0.0);
    if u <= 0.5 {
        (1.0 - erf_small(u)) * (u * u).exp()
    } else {
        erfcx_large(u)
    }
}

/// log Phi(x), accurate over the whole range used by the likelihood.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        (-std_normal_cdf(-x)).ln_1p()
    } else if x >= -1.0 {
        std_normal_cdf(x).ln()
    } else {
        let u = -x * FRAC_1_SQRT_2;
        -LN_2 + erfcx(u).ln() - 0.5 * x * x
    }
}

/// Inverse Mills ratio `k(x) = phi(x) / Phi(x)`, the derivative of log Phi.
pub fn inverse_mills(x: f64) -> f64 {
    if x < 0.0 {
        SQRT_2_OVER_PI / erfcx(-x * FRAC_1_SQRT_2)
    } else {
        std_normal_pdf(x) / std_normal_cdf(x)
    }
}

/// `ln k(x)`; finite even where `k(x)` itself underflows.
pub fn log_inverse_mills(x: f64) -> f64 {
    if x < 0.0 {
        SQRT_2_OVER_PI.ln() - erfcx(-x * FRAC_1_SQRT_2).ln()
    } else {
        std_normal_log_pdf(x) - std_normal_log_cdf(x)
    }
}

/// `k(x) + x`, which is positive for every x. For very negative x both terms
/// are large and nearly cancel, so the continued-fraction tail is used there.
pub fn mills_excess(x: f64) -> f64 {
    let u = -x * FRAC_1_SQRT_2;
    if u >= MILLS_CF_CUTOFF {
        SQRT_2 * laplace_tail(u)
    } else {
        inverse_mills(x) + x
    }
}

// Rational approximation coefficients for the normal quantile (P. J. Acklam).
const QA: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const QB: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const QC: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const QD: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const Q_LOW: f64 = 0.02425;

fn quantile_initial(p: f64) -> f64 {
    if p < Q_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    }
}

/// Inverse of the standard normal CDF.
///
/// Rational initial guess refined with two Newton steps. The steps act on
/// `log Phi`, which keeps them well defined deep in the lower tail; upper
/// tail probabilities are reflected (`1 - p` is exact for `p >= 1/2`).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let log_p = p.ln();
    let mut x = quantile_initial(p);
    for _ in 0..2 {
        x -= (std_normal_log_cdf(x) - log_p) / inverse_mills(x);
    }
    x
}

/// `ln C(n, k)`.
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("binomial needs k <= n, got n={n}, k={k}")));
    }
    let m = k.min(n - k);
    if m < 30 {
        // Exact product of ratios; avoids cancellation between large
        // log-gamma values when one side of the coefficient is small.
        let base = (n - m) as f64;
        return Ok((1..=m).map(|i| ((base + i as f64) / i as f64).ln()).sum());
    }
    Ok(ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 50-digit arithmetic.
    const LOG_CDF_TABLE: [(f64, f64); 29] = [
        (-40.0, -804.6084420137538),
        (-35.0, -616.9751012619225),
        (-30.0, -454.3212439563432),
        (-25.0, -316.63940800802027),
        (-20.0, -203.91715537109727),
        (-15.0, -116.1313848457117),
        (-10.0, -53.23128515051247),
        (-8.0, -35.01343715991455),
        (-6.0, -20.736768949974707),
        (-5.0, -15.064998393988725),
        (-4.0, -10.360101486527292),
        (-3.0, -6.607726221510349),
        (-2.0, -3.783184333682032),
        (-1.5, -2.7059444008238898),
        (-1.0, -1.8410216450092636),
        (-0.5, -1.1759117615936185),
        (-0.1, -0.7761545927302733),
        (0.0, -std::f64::consts::LN_2),
        (0.1, -0.6165050101150263),
        (0.5, -0.3689464152886564),
        (1.0, -0.17275377902344988),
        (1.5, -0.06914345561223398),
        (2.0, -0.02301290932896349),
        (3.0, -0.0013508099647481938),
        (4.0, -3.167174337748927e-05),
        (5.0, -2.866516129637636e-07),
        (6.0, -9.865876455243758e-10),
        (8.0, -6.220960574271786e-16),
        (10.0, -7.619853024160525e-24),
    ];
    const CDF_TABLE: [(f64, f64); 13] = [
        (-8.0, 6.220960574271784e-16),
        (-6.0, 9.86587645037698e-10),
        (-4.0, 3.1671241833119924e-05),
        (-2.0, 0.02275013194817921),
        (-1.0, 0.15865525393145705),
        (-0.3, 0.3820885778110474),
        (0.0, 0.5),
        (0.3, 0.6179114221889527),
        (1.0, 0.8413447460685429),
        (2.0, 0.9772498680518208),
        (4.0, 0.9999683287581669),
        (6.0, 0.9999999990134123),
        (8.0, 0.9999999999999993),
    ];
    const MILLS_TABLE: [(f64, f64); 14] = [
        (-40.0, 40.02496884720726),
        (-30.0, 30.033259667433676),
        (-20.0, 20.04975306852785),
        (-10.0, 10.098093233962512),
        (-6.0, 6.158482604544599),
        (-5.0, 5.186503967125842),
        (-3.0, 3.2830986549304364),
        (-1.0, 1.525135276160981),
        (0.0, 0.7978845608028654),
        (1.0, 0.2875999709391784),
        (3.0, 0.004437839042125664),
        (5.0, 1.4867199409049056e-06),
        (10.0, 7.694598626706419e-23),
        (20.0, 5.520948362159764e-88),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    /// Composite Simpson rule on the Gaussian density over [lo, x].
    fn simpson_cdf(x: f64) -> f64 {
        let lo = -14.0;
        let n = 40_000;
        let h = (x - lo) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(lo) + f(x);
        for i in 1..n {
            let t = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        let q = simpson_cdf(-1.0);
        assert!(rel(std_normal_cdf(-1.0), q) < 1e-12, "{q}");
        assert!(rel(std_normal_cdf(-1.0), 0.158655) < 1e-5);
        for (x, want) in CDF_TABLE {
            assert!(rel(std_normal_cdf(x), want) <= 1e-12, "Phi({x})");
        }
        // asymptotic tail: Phi(-8) ~ phi(8)/8 (1 - 1/64 + 3/8^4 - 15/8^6 + 105/8^8)
        let tail = std_normal_pdf(8.0) / 8.0
            * (1.0 - 1.0 / 64.0 + 3.0 / 4096.0 - 15.0 / 262_144.0 + 105.0 / 16_777_216.0);
        assert!(rel(std_normal_cdf(8.0), 1.0 - 6.220_960_574_271_784e-16) <= 1e-12);
        assert!(rel(std_normal_cdf(-8.0), tail) < 1e-6);
    }

    #[test]
    fn log_cdf_reference_values() {
        for (x, want) in LOG_CDF_TABLE {
            assert!(rel(std_normal_log_cdf(x), want) <= 1e-10, "log Phi({x})");
        }
        assert_eq!(std_normal_log_cdf(0.0), -LN_2);
        // asymptotic series at -10
        let x: f64 = -10.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..=6 {
            term *= -((2 * n - 1) as f64) / (x * x);
            sum += term;
        }
        let series = -0.5 * x * x - (-x * (2.0 * std::f64::consts::PI).sqrt()).ln() + sum.ln();
        assert!(rel(std_normal_log_cdf(x), series) < 1e-9);
        // log(1 - Phi(-5)) via the upper tail
        let tail = std_normal_cdf(-5.0);
        assert!(rel(std_normal_log_cdf(5.0), (-tail).ln_1p()) < 1e-12);
    }

    #[test]
    fn inverse_mills_reference_values() {
        assert!(rel(inverse_mills(0.0), (2.0 / std::f64::consts::PI).sqrt()) < 1e-15);
        for (x, want) in MILLS_TABLE {
            assert!(rel(inverse_mills(x), want) <= 1e-11, "k({x})");
            assert!((log_inverse_mills(x) - want.ln()).abs() <= 1e-11 * want.ln().abs().max(1.0));
        }
        let x = -30.0;
        assert!((inverse_mills(x) - (-x + 1.0 / -x)).abs() < 1e-3);
    }

    #[test]
    fn mills_excess_matches_difference() {
        for x in grid(-30.0, 5.0, 351) {
            let direct = inverse_mills(x) + x;
            let e = mills_excess(x);
            assert!(e > 0.0);
            if x > -8.0 {
                assert!(rel(e, direct) < 1e-9, "x={x}: {e} vs {direct}");
            } else {
                assert!(rel(e, direct) < 1e-6, "x={x}: {e} vs {direct}");
            }
        }
        // k(x) + x ~ 1/|x| (1 - 2/x^2 + 10/x^4) for very negative x
        let x: f64 = -1.0e4;
        let asym = (1.0 - 2.0 / (x * x)) / -x;
        assert!(rel(mills_excess(x), asym) < 1e-12);
    }

    #[test]
    fn erfcx_agrees_with_continued_fraction() {
        for u in [4.0, 5.0, 8.0, 20.0, 100.0] {
            let cf = FRAC_1_SQRT_PI / (u + laplace_tail(u));
            assert!(rel(erfcx(u), cf) < 1e-14, "{u}");
        }
        for u in [0.0, 0.3, 0.5, 0.50001, 1.0, 3.0] {
            assert!(rel(erfcx(u), erfc(u) * (u * u).exp()) < 1e-14, "{u}");
        }
    }

    #[test]
    fn quantile_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let x = std_normal_quantile(std_normal_cdf(1.5)).unwrap();
        assert!((x - 1.5).abs() < 1e-10);
        // bisection oracle for p = 0.975
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = std_normal_quantile(0.975).unwrap();
        assert!((q - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((q - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn quantile_domain_errors() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_residual_and_monotonicity() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() <= 1e-12);
            assert!(x > prev);
            prev = x;
        }
        for p in [1e-300, 1e-100, 1e-20, 1e-10, 1e-5, 1.0 - 1e-10, 1.0 - 1e-15] {
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() <= 1e-12 * p.clamp(1e-300, 1.0) + 1e-300);
        }
    }

    #[test]
    fn log_binomial_values() {
        assert_eq!(log_binomial(17, 0).unwrap(), 0.0);
        assert_eq!(log_binomial(17, 17).unwrap(), 0.0);
        assert!(rel(log_binomial(5, 2).unwrap(), 10f64.ln()) < 1e-14);
        // sum of log ratios as oracle
        let oracle: f64 = (1..=500).map(|i| ((500 + i) as f64 / i as f64).ln()).sum();
        assert!(rel(log_binomial(1000, 500).unwrap(), oracle) < 1e-10);
        assert!(rel(oracle, 689.467_261_567_851_2) < 1e-12);
        assert!(rel(log_binomial(1_000_000, 1).unwrap(), 1e6f64.ln()) < 1e-12);
        let big: f64 = (1..=40).map(|i| ((1_000_000 - 40 + i) as f64 / i as f64).ln()).sum();
        assert!(rel(log_binomial(1_000_000, 40).unwrap(), big) < 1e-10);
        assert!(matches!(log_binomial(3, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn symmetry_identity() {
        for x in grid(-8.0, 8.0, 1601) {
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn exp_log_cdf_matches_cdf() {
        for x in grid(-8.0, 8.0, 1601) {
            assert!(rel(std_normal_log_cdf(x).exp(), std_normal_cdf(x)) <= 1e-10, "{x}");
        }
    }

    #[test]
    fn inverse_mills_decreasing_and_bounded() {
        let mut prev = f64::INFINITY;
        for x in grid(-40.0, 30.0, 7001) {
            let k = inverse_mills(x);
            assert!(k < prev, "not decreasing at {x}");
            assert!(k > 0.0 && k <= 1.0 + x.abs() + 1.0);
            prev = k;
        }
    }

    #[test]
    fn gaussian_tail_inequality() {
        for x in grid(-10.0, 10.0, 2001) {
            assert!(x * std_normal_cdf(-x) < std_normal_pdf(x), "{x}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for x in grid(-6.0, 6.0, 1201) {
            let p = std_normal_cdf(x);
            let back = std_normal_quantile(p).unwrap();
            // Above ~5.6 a double near 1 cannot pin x to 1e-9; allow the
            // conditioning of the inverse at one ulp of p.
            let tol = 1e-9_f64.max(f64::EPSILON * p / std_normal_pdf(x));
            assert!((back - x).abs() <= tol, "{x} -> {back}");
        }
    }
}
