//! Mellin–Barnes evaluation of the two Meijer G families used by the priors:
//!
//! * `G^{q,0}_{0,q}(z | -; b_1..b_q)` (densities), integrand `z^s ∏ Γ(b_j - s)`;
//! * `G^{1,q}_{q,1}(z | a_1..a_q; b)` (characteristic functions), integrand
//!   `z^s Γ(b - s) ∏ Γ(1 - a_k + s)`.
//!
//! Both are integrated along a vertical line `s = c + iy` with the trapezoid
//! rule. The integrand is conjugate-symmetric in `y`, so only `y >= 0` is
//! sampled. All gamma products are accumulated as sums of complex log-gamma and
//! the value at `y = 0` is factored out before exponentiation.
//!
//! The abscissa defaults to the real saddle point of the integrand, clamped to
//! stay at least a quarter unit (or a quarter of the available gap) away from
//! the nearest pole. At the saddle the integrand is non-oscillatory near its
//! peak, which keeps cancellation small in the far tails of the density.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::gamma::{digamma, ln_gamma, ln_gamma_complex, trigamma};
use crate::specfun::quad::CompensatedSum;

/// Shifts of a Meijer G function in one of the two supported families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MellinSpectrum {
    /// `b_j` of the gamma factors `Γ(b_j - s)`.
    pub lower_params: Vec<f64>,
    /// `a_k` of the gamma factors `Γ(1 - a_k + s)`; empty for the density family.
    pub upper_params: Vec<f64>,
}

impl MellinSpectrum {
    pub fn new(lower_params: Vec<f64>, upper_params: Vec<f64>) -> Self {
        Self {
            lower_params,
            upper_params,
        }
    }

    /// Density family of a depth-`d` linear network: `[0, ν_1, …, ν_{d-1}]`
    /// with `ν_ℓ = (n_ℓ - n_d) / 2`.
    pub fn density(hidden_widths: &[usize], out_width: usize) -> Self {
        let mut lower = Vec::with_capacity(hidden_widths.len() + 1);
        lower.push(0.0);
        lower.extend(
            hidden_widths
                .iter()
                .map(|&n| (n as f64 - out_width as f64) / 2.0),
        );
        Self::new(lower, Vec::new())
    }

    /// Characteristic-function family: lower `[0]`, upper `1 - n_ℓ/2`.
    pub fn charfun(hidden_widths: &[usize]) -> Self {
        Self::new(
            vec![0.0],
            hidden_widths.iter().map(|&n| 1.0 - n as f64 / 2.0).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    /// Real part of the vertical contour; `None` places it at the clamped saddle point.
    pub abscissa: Option<f64>,
    /// Initial imaginary-axis cutoff; grown until the tail is negligible.
    pub truncation: Option<f64>,
    /// Initial trapezoid spacing; halved until successive estimates agree.
    pub step: Option<f64>,
    pub target_rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            abscissa: None,
            truncation: None,
            step: None,
            target_rel_tol: 1e-12,
            max_refinements: 14,
        }
    }
}

impl ContourConfig {
    pub fn with_tol(target_rel_tol: f64) -> Self {
        Self {
            target_rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_rel_tol > 0.0 && self.target_rel_tol < 1.0) {
            return Err(Error::config("target_rel_tol must lie in (0, 1)"));
        }
        if let Some(t) = self.truncation {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("truncation must be positive"));
            }
        }
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("step must be positive"));
            }
        }
        Ok(())
    }
}

/// Result of a contour evaluation with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourEstimate {
    pub value: f64,
    /// Natural log of `value`; finite even when `value` under- or overflows.
    pub ln_value: f64,
    /// Self-reported relative error.
    pub rel_error: f64,
    pub abscissa: f64,
    pub truncation: f64,
    pub step: f64,
    pub nodes: usize,
}

const MIN_POLE_GAP: f64 = 0.25;
const MAX_TRUNCATION: f64 = 1e6;

/// Solves `g(u) = 0` for increasing `g` on `(0, ∞)` with `g(0+) = -∞`.
fn increasing_root<G: Fn(f64) -> f64>(g: G) -> f64 {
    let mut hi = 1.0;
    while g(hi) < 0.0 && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while g(lo) > 0.0 && lo > 1e-300 {
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Vertical-line trapezoid integration of `exp(log_integrand(c + iy)) / 2π`.
///
/// `curvature` is the second derivative of the log integrand along the real
/// axis at `c` and `slope` its first derivative; together they fix the
/// initial step.
fn vertical_line_integral<F: Fn(Complex64) -> Complex64>(
    log_integrand: F,
    c: f64,
    slope: f64,
    curvature: f64,
    cfg: &ContourConfig,
    context: &str,
) -> Result<ContourEstimate> {
    let tol = cfg.target_rel_tol;
    let peak = log_integrand(Complex64::new(c, 0.0)).re;
    if !peak.is_finite() {
        return Err(Error::Accuracy {
            context: format!("{context}: non-finite integrand at the abscissa"),
            best: f64::NAN,
            error: f64::INFINITY,
        });
    }
    let f = |y: f64| -> f64 {
        let l = log_integrand(Complex64::new(c, y));
        let m = l.re - peak;
        if m < -745.0 {
            0.0
        } else {
            m.exp() * l.im.cos()
        }
    };
    let log_mag = |y: f64| log_integrand(Complex64::new(c, y)).re - peak;

    let width = 1.0 / curvature.max(1e-300).sqrt();
    let mut truncation = cfg.truncation.unwrap_or(0.0).max(4.0 * width).max(1.0);
    let cutoff = (tol * 1e-3).ln();
    while log_mag(truncation) > cutoff || log_mag(1.5 * truncation) > cutoff {
        truncation *= 1.5;
        if truncation > MAX_TRUNCATION {
            return Err(Error::Accuracy {
                context: format!("{context}: integrand does not decay along the contour"),
                best: f64::NAN,
                error: f64::INFINITY,
            });
        }
    }

    let oscillation = std::f64::consts::PI / (slope.abs() + 1e-300);
    let mut step = cfg
        .step
        .unwrap_or(0.5 * width)
        .min(0.5 * oscillation)
        .min(truncation / 8.0);
    let mut count = (truncation / step).ceil() as usize;
    step = truncation / count as f64;
    let mut sum = 0.5 * f(0.0);
    for k in 1..=count {
        sum += f(k as f64 * step);
    }
    let mut nodes = count + 1;
    let mut estimate = sum * step;
    let mut rel_error = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        let half = 0.5 * step;
        let mut add = 0.0;
        for k in 0..count {
            add += f((2 * k + 1) as f64 * half);
        }
        nodes += count;
        sum += add;
        count *= 2;
        step = half;
        let next = sum * step;
        let diff = (next - estimate).abs();
        estimate = next;
        rel_error = diff / estimate.abs();
        if diff <= tol * estimate.abs() {
            break;
        }
    }
    if !(estimate > 0.0) || rel_error > tol {
        return Err(Error::Accuracy {
            context: context.to_string(),
            best: (peak + estimate.abs().ln() - std::f64::consts::PI.ln()).exp() * estimate.signum(),
            error: rel_error,
        });
    }
    let ln_value = peak + (estimate / std::f64::consts::PI).ln();
    Ok(ContourEstimate {
        value: ln_value.exp(),
        ln_value,
        rel_error,
        abscissa: c,
        truncation,
        step,
        nodes,
    })
}

/// `G^{q,0}_{0,q}(z | -; b_1..b_q)` for z > 0.
pub fn meijer_g_q0(z: f64, spectrum: &MellinSpectrum, cfg: &ContourConfig) -> Result<ContourEstimate> {
    cfg.validate()?;
    if !spectrum.upper_params.is_empty() || spectrum.lower_params.is_empty() {
        return Err(Error::config(
            "density family needs lower parameters and no upper parameters",
        ));
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("meijer_g_q0 requires z > 0, got {z}")));
    }
    let b = &spectrum.lower_params;
    let bmin = b.iter().copied().fold(f64::INFINITY, f64::min);
    let ln_z = z.ln();
    let c = match cfg.abscissa {
        Some(c) => {
            if c >= bmin {
                return Err(Error::config(format!(
                    "abscissa {c} must lie left of every pole (min b = {bmin})"
                )));
            }
            c
        }
        None => {
            let gap = increasing_root(|u| {
                b.iter().map(|&bj| digamma(bj - bmin + u)).sum::<f64>() - ln_z
            });
            bmin - gap.max(MIN_POLE_GAP)
        }
    };
    let slope = ln_z - b.iter().map(|&bj| digamma(bj - c)).sum::<f64>();
    let curvature: f64 = b.iter().map(|&bj| trigamma(bj - c)).sum();
    let log_integrand = |s: Complex64| -> Complex64 {
        let mut acc = s * ln_z;
        for &bj in b {
            acc += ln_gamma_complex(bj - s);
        }
        acc
    };
    vertical_line_integral(log_integrand, c, slope, curvature, cfg, "meijer_g_q0")
}

/// `G^{1,q}_{q,1}(z | a_1..a_q; b)` for z >= 0; at z = 0 returns the limit
/// `∏ Γ(1 - a_k + b)`.
pub fn meijer_g_1q(z: f64, spectrum: &MellinSpectrum, cfg: &ContourConfig) -> Result<ContourEstimate> {
    cfg.validate()?;
    if spectrum.lower_params.len() != 1 || spectrum.upper_params.is_empty() {
        return Err(Error::config(
            "charfun family needs exactly one lower parameter and at least one upper parameter",
        ));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("meijer_g_1q requires z >= 0, got {z}")));
    }
    let b = spectrum.lower_params[0];
    let a = &spectrum.upper_params;
    let left = a.iter().map(|&ak| ak - 1.0).fold(f64::NEG_INFINITY, f64::max);
    if left >= b {
        return Err(Error::config("pole families of the charfun G-function overlap"));
    }
    if z == 0.0 {
        let ln_value: f64 = a.iter().map(|&ak| ln_gamma(1.0 - ak + b)).sum();
        return Ok(ContourEstimate {
            value: ln_value.exp(),
            ln_value,
            rel_error: 0.0,
            abscissa: b,
            truncation: 0.0,
            step: 0.0,
            nodes: 0,
        });
    }
    if cfg.abscissa.is_none() {
        if let Some(est) = small_argument_series(z, a, b, cfg.target_rel_tol) {
            return Ok(est);
        }
    }
    let ln_z = z.ln();
    let gap = (b - left).min(4.0 * MIN_POLE_GAP) / 4.0;
    let c = match cfg.abscissa {
        Some(c) => {
            if !(c > left && c < b) {
                return Err(Error::config(format!(
                    "abscissa {c} must separate the pole families ({left}, {b})"
                )));
            }
            c
        }
        None => {
            // derivative of the log integrand along the real axis, increasing in s
            let width = b - left;
            let u = increasing_root(|u| {
                let s = left + width * u / (1.0 + u);
                -digamma(b - s) + a.iter().map(|&ak| digamma(1.0 - ak + s)).sum::<f64>() + ln_z
            });
            let s = left + width * u / (1.0 + u);
            s.clamp(left + gap, b - gap)
        }
    };
    let slope = -digamma(b - c) + a.iter().map(|&ak| digamma(1.0 - ak + c)).sum::<f64>() + ln_z;
    let curvature = trigamma(b - c) + a.iter().map(|&ak| trigamma(1.0 - ak + c)).sum::<f64>();
    let log_integrand = |s: Complex64| -> Complex64 {
        let mut acc = s * ln_z + ln_gamma_complex(b - s);
        for &ak in a {
            acc += ln_gamma_complex(1.0 - ak + s);
        }
        acc
    };
    vertical_line_integral(log_integrand, c, slope, curvature, cfg, "meijer_g_1q")
}

/// Residue sum over the poles `s = b + k` of `Γ(b - s)`:
/// `z^b ∏Γ(1-a+b) Σ_k ∏(1-a+b)_k (-z)^k / k!`. The series is asymptotic, so it
/// is only used while its terms shrink at least twofold per order.
fn small_argument_series(z: f64, a: &[f64], b: f64, tol: f64) -> Option<ContourEstimate> {
    let ratio0 = z * a.iter().map(|&ak| 1.0 - ak + b).product::<f64>();
    if !(ratio0 <= 0.05) {
        return None;
    }
    let mut term = 1.0;
    let mut sum = CompensatedSum::default();
    sum.add(1.0);
    for k in 0..200usize {
        let kf = k as f64;
        let ratio = -z * a.iter().map(|&ak| 1.0 - ak + b + kf).product::<f64>() / (kf + 1.0);
        if ratio.abs() > 0.5 {
            return None;
        }
        term *= ratio;
        sum.add(term);
        let s = sum.value();
        if term.abs() <= 0.1 * tol * s.abs() {
            let ln_value = b * z.ln() + a.iter().map(|&ak| ln_gamma(1.0 - ak + b)).sum::<f64>() + s.ln();
            return Some(ContourEstimate {
                value: ln_value.exp(),
                ln_value,
                rel_error: (term / s).abs() + f64::EPSILON * (kf + 2.0),
                abscissa: b,
                truncation: 0.0,
                step: 0.0,
                nodes: k + 2,
            });
        }
    }
    None
}
