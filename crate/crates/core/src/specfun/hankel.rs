//! Radial Fourier transforms in `n` dimensions.
//!
//! For a radial function on R^n,
//!
//! `φ(q) = (2π)^{n/2} ∫ r^{n-1} Λ_ν(qr) p(r) dr`,
//! `p(r) = (2π)^{-n/2} ∫ q^{n-1} Λ_ν(qr) φ(q) dq`,
//!
//! with `ν = (n-2)/2` and `Λ_ν(x) = J_ν(x) / x^ν`. The reduced kernel is
//! regular at the origin, so `q = 0` needs no special casing. Oscillatory
//! tails are integrated between approximate kernel zeros and the partial
//! sums are accelerated with the epsilon algorithm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::bessel::bessel_j;
use crate::specfun::gamma::ln_gamma;
use crate::specfun::quad::{integrate_semi_infinite, integrate_with_breaks, wynn_epsilon, CutoffPolicy, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HankelDirection {
    /// Density to characteristic function.
    Forward,
    /// Characteristic function to density.
    Inverse,
}

const MAX_SEGMENTS: usize = 4000;
const WYNN_WINDOW: usize = 40;

/// `J_ν(x) / x^ν` for half-integer `ν ≥ -1/2`.
fn reduced_kernel(nu: f64, x: f64) -> Result<f64> {
    if x < 1e-3 {
        // two-term series; next term is O(x^6)
        let c0 = (-nu * std::f64::consts::LN_2 - ln_gamma(nu + 1.0)).exp();
        let y = 0.25 * x * x;
        return Ok(c0 * (1.0 - y / (nu + 1.0) + y * y / (2.0 * (nu + 1.0) * (nu + 2.0))));
    }
    Ok(bessel_j(nu, x)? / x.powf(nu))
}

fn transform_point<F: Fn(f64) -> f64>(f: &F, n: usize, omega: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let nu = 0.5 * (n as f64 - 2.0);
    let power = (n - 1) as i32;
    let cutoff = match cfg.domain_cutoff_policy {
        CutoffPolicy::FixedRadius(r) => Some(r),
        CutoffPolicy::MomentBound => None,
    };
    let integrand = |t: f64| -> f64 {
        let v = f(t);
        if !v.is_finite() {
            return 0.0;
        }
        let k = reduced_kernel(nu, omega * t).unwrap_or(0.0);
        t.powi(power) * k * v
    };
    if omega == 0.0 {
        let res = match cutoff {
            Some(r) => integrate_with_breaks(integrand, &origin_breaks(r), cfg)?,
            None => integrate_semi_infinite(integrand, 0.0, 1.0, cfg)?,
        };
        if !res.value.is_finite() {
            return Err(Error::Integrability("transform at zero frequency is not finite".into()));
        }
        return Ok(res.value);
    }

    let period = std::f64::consts::PI / omega;
    let first = (nu / 2.0 + 0.75) * period;
    let mut partials: Vec<f64> = Vec::new();
    let mut sum = integrate_with_breaks(integrand, &origin_breaks(first), cfg)?.value;
    partials.push(sum);
    let mut small_run = 0;
    let mut last_estimate = f64::NAN;
    let mut stable_run = 0;
    let mut max_term: f64 = 0.0;
    for k in 0..MAX_SEGMENTS {
        let a = first + k as f64 * period;
        let mut b = a + period;
        let mut done = false;
        if let Some(r) = cutoff {
            if a >= r {
                return Ok(sum);
            }
            if b >= r {
                b = r;
                done = true;
            }
        }
        let term = integrate_with_breaks(integrand, &[a, b], cfg)?.value;
        sum += term;
        if done {
            return Ok(sum);
        }
        partials.push(sum);
        max_term = max_term.max(term.abs());
        let decaying = term.abs() <= 0.5 * max_term;
        if cutoff.is_none() && k >= 200 && !decaying {
            return Err(Error::Integrability(format!(
                "integrand does not decay at frequency {omega}"
            )));
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * sum.abs());
        if term.abs() <= tol && cutoff.is_none() {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
        if cutoff.is_none() && partials.len() >= 8 {
            let window = &partials[partials.len().saturating_sub(WYNN_WINDOW)..];
            let (estimate, err) = wynn_epsilon(window);
            let tol = cfg.abs_tol.max(cfg.rel_tol * estimate.abs());
            if decaying && err <= tol && (estimate - last_estimate).abs() <= tol {
                stable_run += 1;
                if stable_run >= 2 {
                    return Ok(estimate);
                }
            } else {
                stable_run = 0;
            }
            last_estimate = estimate;
        }
    }
    Err(Error::Integrability(format!(
        "oscillatory tail did not converge after {MAX_SEGMENTS} periods at frequency {omega}"
    )))
}

fn origin_breaks(end: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    for e in [1e-8, 1e-6, 1e-4, 1e-2, 0.1] {
        b.push(end * e);
    }
    b.push(end);
    b
}

/// Applies the radial transform in `n` dimensions to `f` on each point of
/// `grid`, returning `(grid point, transformed value)` pairs.
pub fn hankel_radial<F>(
    f: F,
    n: usize,
    direction: HankelDirection,
    grid: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> f64 + Sync,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if let Some(bad) = grid.iter().find(|&&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::domain(format!("grid points must be finite and non-negative, got {bad}")));
    }
    let half_n = 0.5 * n as f64;
    let prefactor = match direction {
        HankelDirection::Forward => (2.0 * std::f64::consts::PI).powf(half_n),
        HankelDirection::Inverse => (2.0 * std::f64::consts::PI).powf(-half_n),
    };
    grid.par_iter()
        .map(|&w| transform_point(&f, n, w, cfg).map(|v| (w, prefactor * v)))
        .collect()
}
