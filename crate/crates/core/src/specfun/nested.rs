//! Nested-integral evaluation of
//!
//! `f_q(z; ν_1..ν_q) = ∫ t^{ν_q - 1} e^{-t} f_{q-1}(z / t; ν_1..ν_{q-1}) dt`, `f_0(z) = e^{-z}`.
//!
//! This is the independent route to the density-family G function. Each
//! inner level is tabulated once as `ln f_j` on a uniform grid in `ln z` and
//! interpolated with four-point Lagrange polynomials, so the cost grows
//! linearly in depth. Integrals are taken in `u = ln t`, where the integrand
//! is a smooth bump.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::specfun::gamma::ln_gamma;
use crate::specfun::quad::{integrate_with_breaks, QuadratureConfig};

/// ln f below which a level is treated as zero.
const LN_NEGLIGIBLE: f64 = -800.0;
/// Dynamic range kept around the integrand peak.
const PEAK_WINDOW: f64 = 60.0;
const SCAN_STEP: f64 = 0.1;
const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone)]
struct LogTable {
    ln_w0: f64,
    step: f64,
    ln_f: Vec<f64>,
}

impl LogTable {
    fn ln_hi(&self) -> f64 {
        self.ln_w0 + self.step * (self.ln_f.len() - 1) as f64
    }

    /// Four-point Lagrange interpolation of ln f at `ln_w`.
    fn eval(&self, ln_w: f64) -> f64 {
        let n = self.ln_f.len();
        let x = (ln_w - self.ln_w0) / self.step;
        if x > (n - 1) as f64 {
            return f64::NEG_INFINITY;
        }
        if x < 0.0 {
            // linear extrapolation in (ln w, ln f)
            let slope = self.ln_f[1] - self.ln_f[0];
            return self.ln_f[0] + slope * x;
        }
        let i = (x.floor() as usize).clamp(1, n - 3);
        let t = x - i as f64;
        let (p0, p1, p2, p3) = (self.ln_f[i - 1], self.ln_f[i], self.ln_f[i + 1], self.ln_f[i + 2]);
        // nodes at -1, 0, 1, 2
        let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
    }
}

enum Inner<'a> {
    Exponential,
    Table(&'a LogTable),
}

impl Inner<'_> {
    fn ln_f(&self, ln_w: f64) -> f64 {
        match self {
            Inner::Exponential => -ln_w.exp(),
            Inner::Table(t) => t.eval(ln_w),
        }
    }

    fn ln_hi(&self) -> f64 {
        match self {
            Inner::Exponential => (-LN_NEGLIGIBLE).ln(),
            Inner::Table(t) => t.ln_hi(),
        }
    }
}

fn u_upper(nu: f64) -> f64 {
    (2.0 * nu.abs() + 150.0).ln()
}

/// ln f_j(w) from ln f_{j-1} by one quadrature in u = ln t.
fn level_ln_value(nu: f64, ln_w: f64, inner: &Inner<'_>, cfg: &QuadratureConfig) -> Result<f64> {
    let log_integrand = |u: f64| nu * u - u.exp() + inner.ln_f(ln_w - u);
    let u_lo = ln_w - inner.ln_hi();
    let u_hi = u_upper(nu);
    if u_lo >= u_hi {
        return Ok(f64::NEG_INFINITY);
    }
    let steps = ((u_hi - u_lo) / SCAN_STEP).ceil().max(2.0) as usize;
    let h = (u_hi - u_lo) / steps as f64;
    let mut peak = f64::NEG_INFINITY;
    let mut values = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let v = log_integrand(u_lo + k as f64 * h);
        peak = peak.max(v);
        values.push(v);
    }
    if peak == f64::NEG_INFINITY || peak < LN_NEGLIGIBLE * 1.5 {
        return Ok(f64::NEG_INFINITY);
    }
    let first = values.iter().position(|&v| v > peak - PEAK_WINDOW).unwrap_or(0);
    let last = values.iter().rposition(|&v| v > peak - PEAK_WINDOW).unwrap_or(steps);
    let a = u_lo + first.saturating_sub(1) as f64 * h;
    let b = u_lo + (last + 1).min(steps) as f64 * h;
    let pieces = ((b - a) / 2.0).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (0..=pieces).map(|k| a + (b - a) * k as f64 / pieces as f64).collect();
    let res = integrate_with_breaks(|u| (log_integrand(u) - peak).exp(), &breaks, cfg)?;
    if !(res.value > 0.0) {
        return Err(Error::Accuracy {
            context: "nested level integral".into(),
            best: res.value,
            error: res.abs_error,
        });
    }
    Ok(peak + res.value.ln())
}

/// Memoized evaluator for `f_q` on a range of arguments.
#[derive(Debug, Clone)]
pub struct NestedOracle {
    nus: Vec<f64>,
    tables: Vec<LogTable>,
    cfg: QuadratureConfig,
}

impl NestedOracle {
    /// Builds inner tables good for arguments in `[z_min, ∞)`.
    pub fn new(nus: &[f64], z_min: f64, cfg: &QuadratureConfig) -> Result<Self> {
        Self::with_grid_step(nus, z_min, DEFAULT_GRID_STEP, cfg)
    }

    pub fn with_grid_step(nus: &[f64], z_min: f64, grid_step: f64, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        if !(z_min > 0.0) {
            return Err(Error::domain("nested oracle tables need z_min > 0"));
        }
        if nus.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("shifts must be finite"));
        }
        let q = nus.len();
        // lower table bounds, outermost level first
        let mut lows = vec![0.0; q];
        if q > 0 {
            lows[q - 1] = z_min.ln();
            for j in (0..q - 1).rev() {
                lows[j] = lows[j + 1] - u_upper(nus[j + 1]) - 1.0;
            }
        }
        let mut tables: Vec<LogTable> = Vec::with_capacity(q.saturating_sub(1));
        for j in 0..q.saturating_sub(1) {
            let nu = nus[j];
            let ln_lo = lows[j] - 2.0 * grid_step;
            let inner = match tables.last() {
                None => Inner::Exponential,
                Some(t) => Inner::Table(t),
            };
            // coarse probe for where this level becomes negligible
            let mut ln_hi = ln_lo.max(0.0) + 1.0;
            while level_ln_value(nu, ln_hi, &inner, cfg)? > LN_NEGLIGIBLE {
                ln_hi += 1.0;
                if ln_hi > 200.0 {
                    return Err(Error::Accuracy {
                        context: "nested table does not decay".into(),
                        best: f64::NAN,
                        error: f64::INFINITY,
                    });
                }
            }
            let n = ((ln_hi - ln_lo) / grid_step).ceil() as usize + 4;
            let ln_f = (0..n)
                .into_par_iter()
                .map(|k| level_ln_value(nu, ln_lo + k as f64 * grid_step, &inner, cfg))
                .collect::<Result<Vec<f64>>>()?;
            // clip the -inf tail so interpolation stays finite
            let ln_f = ln_f
                .into_iter()
                .map(|v| v.max(2.0 * LN_NEGLIGIBLE))
                .collect();
            tables.push(LogTable {
                ln_w0: ln_lo,
                step: grid_step,
                ln_f,
            });
        }
        Ok(Self {
            nus: nus.to_vec(),
            tables,
            cfg: *cfg,
        })
    }

    pub fn shifts(&self) -> &[f64] {
        &self.nus
    }

    /// ln f_q(z).
    pub fn ln_eval(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return zero_value(&self.nus).map(|v| v.ln());
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain(format!("f_q requires z >= 0, got {z}")));
        }
        let q = self.nus.len();
        if q == 0 {
            return Ok(-z);
        }
        let inner = match self.tables.last() {
            None => Inner::Exponential,
            Some(t) => Inner::Table(t),
        };
        level_ln_value(self.nus[q - 1], z.ln(), &inner, &self.cfg)
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        self.ln_eval(z).map(f64::exp)
    }
}

fn zero_value(nus: &[f64]) -> Result<f64> {
    if let Some(bad) = nus.iter().find(|&&v| v <= 0.0) {
        return Err(Error::Divergence(format!(
            "f_q(0) diverges for shift {bad} <= 0"
        )));
    }
    Ok(nus.iter().map(|&v| ln_gamma(v)).sum::<f64>().exp())
}

/// Single-point evaluation of `f_q(z; ν_1..ν_q)`.
pub fn f_q_nested(z: f64, nus: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    if z == 0.0 {
        return zero_value(nus);
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("f_q requires z >= 0, got {z}")));
    }
    NestedOracle::new(nus, z, cfg)?.eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::bessel::ln_bessel_k;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn empty_product_is_exponential() {
        let cfg = QuadratureConfig::default();
        assert!(rel(f_q_nested(1.0, &[], &cfg).unwrap(), (-1.0f64).exp()) < 1e-15);
    }

    #[test]
    fn one_level_is_bessel_k() {
        let cfg = QuadratureConfig::with_rel_tol(1e-12);
        let got = f_q_nested(1.0, &[0.5], &cfg).unwrap();
        assert!(rel(got, 0.239_875_543_936_122_9) < 1e-11);
        for &(nu, z) in &[(0.0, 0.01), (2.5, 3.0), (-0.5, 0.2), (10.0, 40.0)] {
            let want = (2.0f64.ln() + 0.5 * nu * f64::ln(z) + ln_bessel_k(nu, 2.0 * f64::sqrt(z)).unwrap()).exp();
            assert!(rel(f_q_nested(z, &[nu], &cfg).unwrap(), want) < 1e-10, "nu={nu} z={z}");
        }
    }

    #[test]
    fn origin_values() {
        let cfg = QuadratureConfig::default();
        assert!(rel(f_q_nested(0.0, &[1.0, 2.0], &cfg).unwrap(), 1.0) < 1e-15);
        assert!(matches!(
            f_q_nested(0.0, &[1.0, 0.0], &cfg),
            Err(Error::Divergence(_))
        ));
        assert!(f_q_nested(-1.0, &[1.0], &cfg).is_err());
    }

    #[test]
    fn two_levels_against_reference() {
        // G^{3,0}_{0,3}(0.5 | 0, 1.5, 2) from an arbitrary-precision evaluation
        let cfg = QuadratureConfig::with_rel_tol(1e-12);
        let got = f_q_nested(0.5, &[1.5, 2.0], &cfg).unwrap();
        assert!(rel(got, 0.586_197_364_050_238_3) < 1e-9, "{got}");
    }

    #[test]
    fn shift_order_does_not_matter() {
        let cfg = QuadratureConfig::with_rel_tol(1e-12);
        let a = f_q_nested(0.8, &[0.5, 2.0], &cfg).unwrap();
        let b = f_q_nested(0.8, &[2.0, 0.5], &cfg).unwrap();
        assert!(rel(a, b) < 1e-9);
    }
}
