//! Real and complex log-gamma, digamma and trigamma.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// zeta(k) - 1 for k = 2, 3, ..., 40.
const ZETA_MINUS_ONE: [f64; 39] = [
    0.644_934_066_848_226_4,
    0.202_056_903_159_594_3,
    0.082_323_233_711_138_19,
    0.036_927_755_143_369_93,
    0.017_343_061_984_449_14,
    0.008_349_277_381_922_827,
    0.004_077_356_197_944_339,
    0.002_008_392_826_082_214,
    0.000_994_575_127_818_085_3,
    0.000_494_188_604_119_464_6,
    0.000_246_086_553_308_048_3,
    0.000_122_713_347_578_489_1,
    6.124_813_505_870_483e-5,
    3.058_823_630_702_049e-5,
    1.528_225_940_865_187e-5,
    7.637_197_637_899_762e-6,
    3.817_293_264_999_84e-6,
    1.908_212_716_553_939e-6,
    9.539_620_338_727_961e-7,
    4.769_329_867_878_065e-7,
    2.384_505_027_277_33e-7,
    1.192_199_259_653_111e-7,
    5.960_818_905_125_948e-8,
    2.980_350_351_465_228e-8,
    1.490_155_482_836_504e-8,
    7.450_711_789_835_429e-9,
    3.725_334_024_788_457e-9,
    1.862_659_723_513_049e-9,
    9.313_274_324_196_682e-10,
    4.656_629_065_033_784e-10,
    2.328_311_833_676_505e-10,
    1.164_155_017_270_052e-10,
    5.820_772_087_902_701e-11,
    2.910_385_044_497_1e-11,
    1.455_192_189_104_198e-11,
    7.275_959_835_057_481e-12,
    3.637_979_547_378_651e-12,
    1.818_989_650_307_066e-12,
    9.094_947_840_263_889e-13,
];

/// B_{2k} / (2k (2k - 1)) for k = 1..=8.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_{2k} for k = 1..=8.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// `sum_{k>=2} (-1)^k (zeta(k) - 1) eps^k / k`, valid for |eps| <= 1/2.
fn zeta_tail_series(eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = eps;
    for (i, &z) in ZETA_MINUS_ONE.iter().enumerate() {
        let k = (i + 2) as f64;
        power *= -eps;
        let term = z * power / k;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    // power carries (-1)^(k-1) eps^k, so flip the sign once
    -sum
}

/// ln Γ(x) for x > 0 without argument checks. Hot path for the evaluators.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return ln_gamma(x + 1.0) - x.ln();
    }
    if x < 1.5 {
        let eps = x - 1.0;
        return -EULER_GAMMA * eps + (eps - eps.ln_1p()) + zeta_tail_series(eps);
    }
    if x < 2.5 {
        let eps = x - 2.0;
        return (1.0 - EULER_GAMMA) * eps + zeta_tail_series(eps);
    }
    if x < 12.0 {
        let mut y = x;
        let mut prod = 1.0;
        while y >= 2.5 {
            y -= 1.0;
            prod *= y;
        }
        return ln_gamma(y) + prod.ln();
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut p = inv;
    for c in STIRLING {
        series += c * p;
        p *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

/// ln Γ(x) for real x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// Digamma ψ(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut y = x;
    while y < 10.0 {
        acc -= 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    let mut p = inv2;
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series += b / (2.0 * (k as f64 + 1.0)) * p;
        p *= inv2;
    }
    acc + y.ln() - 0.5 / y - series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    let mut acc = 0.0;
    let mut y = x;
    while y < 10.0 {
        acc += 1.0 / (y * y);
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let mut p = inv2 * inv;
    let mut series = 0.0;
    for b in BERNOULLI {
        series += b * p;
        p *= inv2;
    }
    acc + inv + 0.5 * inv2 + series
}

fn is_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.floor()
}

/// ln sin(πz), continuous enough for reflection; only exp() of the result matters downstream.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let w = z * PI;
    if w.im.abs() < 5.0 {
        return w.sin().ln();
    }
    let (w, conj) = if w.im > 0.0 { (w, false) } else { (w.conj(), true) };
    let i = Complex64::i();
    // sin w = (i/2) e^{-iw} (1 - e^{2iw}) with |e^{2iw}| < 1 for Im w > 0
    let val = Complex64::new(-std::f64::consts::LN_2, PI / 2.0) - i * w
        + (Complex64::new(1.0, 0.0) - (i * w * 2.0).exp()).ln();
    if conj {
        val.conj()
    } else {
        val
    }
}

/// Complex ln Γ(z) without pole checks. Follows the branch that is continuous
/// along horizontal lines in the right half-plane.
pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        let one = Complex64::new(1.0, 0.0);
        return Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma_complex(one - z);
    }
    if z.im == 0.0 {
        return Complex64::new(ln_gamma(z.re), 0.0);
    }
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.norm_sqr() < 225.0 {
        shift += w.ln();
        w += 1.0;
    }
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut p = inv;
    let mut series = Complex64::new(0.0, 0.0);
    for c in STIRLING {
        series += p * c;
        p *= inv2;
    }
    (w - 0.5) * w.ln() - w + HALF_LN_2PI + series - shift
}

/// Principal-branch complex ln Γ(z) with a pole check.
pub fn log_gamma_complex(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain(format!("non-finite argument {z}")));
    }
    if is_pole(z) {
        return Err(Error::Pole(format!("{z}")));
    }
    Ok(ln_gamma_complex(z))
}

/// Rising factorial a^(b) = Γ(a + b) / Γ(a) in log form.
pub fn ln_rising(a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn log_gamma_reference_points() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-16);
        assert!(rel(log_gamma(0.5).unwrap(), 0.572_364_942_924_700_1) < 1e-14);
        // ln(100!) from exact integer arithmetic
        assert!(rel(log_gamma(101.0).unwrap(), 363.739_375_555_563_49) < 1e-14);
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-1.5), Err(Error::Domain(_))));
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_gamma_matches_factorials() {
        let mut ln_fact = 0.0f64;
        for n in 1..170u32 {
            let x = n as f64;
            let got = ln_gamma(x);
            if ln_fact == 0.0 {
                assert!(got.abs() < 1e-15, "n={n}");
            } else {
                assert!(rel(got, ln_fact) < 1e-14, "n={n} got {got} want {ln_fact}");
            }
            ln_fact += x.ln();
        }
    }

    #[test]
    fn log_gamma_near_its_zeros_keeps_relative_accuracy() {
        // lnΓ(1 + e) ≈ -γ e and lnΓ(2 + e) ≈ (1 - γ) e for tiny e
        for e in [1e-3, 1e-6, 1e-9, -1e-7] {
            assert!(rel(ln_gamma(1.0 + e), -EULER_GAMMA * e) < 2e-3_f64.max(e.abs() * 2.0));
            assert!(rel(ln_gamma(2.0 + e), (1.0 - EULER_GAMMA) * e) < 2e-3_f64.max(e.abs() * 2.0));
        }
    }

    #[test]
    fn duplication_formula() {
        // lnΓ(2x) = (2x - 1) ln 2 + lnΓ(x) + lnΓ(x + 1/2) - ln √π
        for &x in &[0.3, 0.77, 1.4, 3.3, 11.9, 12.1, 57.25, 480.5] {
            let lhs = ln_gamma(2.0 * x);
            let rhs = (2.0 * x - 1.0) * std::f64::consts::LN_2 + ln_gamma(x) + ln_gamma(x + 0.5)
                - 0.5 * PI.ln();
            assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn digamma_and_trigamma_known_values() {
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-14);
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * std::f64::consts::LN_2).abs() < 1e-14);
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-13);
        // finite-difference consistency at an awkward point
        let x = 7.3;
        let h = 1e-5;
        let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
        assert!((fd - digamma(x)).abs() < 1e-8);
    }

    #[test]
    fn complex_log_gamma_reference_points() {
        let one = log_gamma_complex(Complex64::new(1.0, 0.0)).unwrap();
        assert!(one.norm() < 1e-15);
        let half = log_gamma_complex(Complex64::new(0.5, 0.0)).unwrap();
        assert!((half.re - 0.572_364_942_924_700_1).abs() < 1e-14 && half.im.abs() < 1e-15);
        // arbitrary-precision reference for lnΓ(2 + 3i)
        let g = log_gamma_complex(Complex64::new(2.0, 3.0)).unwrap();
        let want = Complex64::new(-2.092_851_753_092_733_3, 2.302_396_543_466_867_6);
        assert!((g - want).norm() < 1e-13);
    }

    #[test]
    fn complex_log_gamma_poles() {
        for re in [0.0, -1.0, -7.0] {
            assert!(matches!(
                log_gamma_complex(Complex64::new(re, 0.0)),
                Err(Error::Pole(_))
            ));
        }
        assert!(log_gamma_complex(Complex64::new(-1.0, 1e-3)).is_ok());
    }

    #[test]
    fn complex_recurrence_and_reflection() {
        // Γ(z + 1) = z Γ(z) checked through exp of differences
        for &(re, im) in &[(0.3, 0.2), (-2.7, 4.0), (3.0, -150.0), (0.5, 199.0), (-0.25, -30.0), (12.0, 60.0)] {
            let z = Complex64::new(re, im);
            let lhs = ln_gamma_complex(z + 1.0);
            let rhs = ln_gamma_complex(z) + z.ln();
            let d = (lhs - rhs).exp() - 1.0;
            assert!(d.norm() < 1e-11, "z={z} diff={d}");
        }
        // Γ(z) Γ(1 - z) = π / sin(πz) away from the real axis
        let z = Complex64::new(0.2, 1.3);
        let lhs = (ln_gamma_complex(z) + ln_gamma_complex(1.0 - z)).exp();
        let rhs = PI / (z * PI).sin();
        assert!(((lhs - rhs) / rhs).norm() < 1e-13);
    }

    #[test]
    fn complex_matches_real_on_axis() {
        for &x in &[0.7, 1.9, 4.2, 33.3] {
            let g = ln_gamma_complex(Complex64::new(x, 1e-300));
            assert!((g.re - ln_gamma(x)).abs() < 1e-13 * ln_gamma(x).abs().max(1.0));
        }
    }
}
