//! Tail heaviness from exact norm moments.
//!
//! A variable is sub-Weibull with parameter θ when its root moments
//! `(E|X|^m)^{1/m}` grow like `m^θ`. The parameter is read off as the
//! log-log slope of the root-moment curve at large orders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_prior::{ln_moment_norm_linear, Activation, NetworkSpec};
use crate::relu_prior::{ln_layer_bracket, ln_moment_norm_relu};
use crate::specfun::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub theta_hat: f64,
    pub fit_range: (usize, usize),
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

fn ln_moment(spec: &NetworkSpec, m: f64) -> Result<f64> {
    match spec.activation {
        Activation::Linear => ln_moment_norm_linear(spec, m),
        Activation::Relu => ln_moment_norm_relu(spec, m),
    }
}

/// `(m, (E‖h_d‖^m)^{1/m})` for each requested order.
pub fn root_moment_curve(spec: &NetworkSpec, orders: &[f64]) -> Result<Vec<(f64, f64)>> {
    orders
        .iter()
        .map(|&m| {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::domain(format!("moment orders must be positive, got {m}")));
            }
            Ok((m, (ln_moment(spec, m)? / m).exp()))
        })
        .collect()
}

/// Least-squares slope of `ln (E‖h‖^m)^{1/m}` against `ln m` over the upper
/// half of the integer orders up to `m_max`.
pub fn estimate_tail_parameter(spec: &NetworkSpec, m_max: usize) -> Result<TailEstimate> {
    if m_max < 50 {
        return Err(Error::config(format!("tail fits need m_max >= 50, got {m_max}")));
    }
    fit_orders(spec, m_max.div_ceil(2), m_max)
}

/// Log-log fit over integer orders `m_lo..=m_hi`.
pub fn fit_orders(spec: &NetworkSpec, m_lo: usize, m_hi: usize) -> Result<TailEstimate> {
    if m_lo == 0 || m_hi < m_lo || m_hi - m_lo + 1 < 5 {
        return Err(Error::config("a tail fit needs at least five positive orders"));
    }
    let pts: Vec<(f64, f64)> = (m_lo..=m_hi)
        .map(|m| {
            let mf = m as f64;
            ln_moment(spec, mf).map(|l| (mf.ln(), l / mf))
        })
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(TailEstimate {
        theta_hat: slope,
        fit_range: (m_lo, m_hi),
        residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub layer: usize,
    pub width: usize,
    pub order: f64,
    pub lower: f64,
    pub bracket: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub entries: Vec<BoundEntry>,
    pub all_pass: bool,
}

/// Checks `(1/2)(Γ((1+m)/2)/Γ(1/2))^{1/m} ≤ B_ℓ(m)^{1/m} ≤ (Γ((n+m)/2)/Γ(n/2))^{1/m}`
/// for the per-layer factor `B_ℓ(m) = 2^{-n}Σ_k C(n,k)(k/2)^{rising m/2}`.
pub fn relu_moment_bounds_check(spec: &NetworkSpec, orders: &[f64]) -> Result<BoundsReport> {
    if spec.activation != Activation::Relu {
        return Err(Error::config("the bracket bounds concern ReLU networks"));
    }
    check_bounds_with(spec, orders, ln_layer_bracket)
}

/// Same check with a caller-supplied `ln B(n, m)`.
pub fn check_bounds_with<F: Fn(usize, f64) -> f64>(spec: &NetworkSpec, orders: &[f64], ln_bracket: F) -> Result<BoundsReport> {
    spec.validate()?;
    let ln_half_gamma = ln_gamma(0.5);
    let mut entries = Vec::new();
    for (l, &n) in spec.hidden_widths().iter().enumerate() {
        for &m in orders {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::domain(format!("moment orders must be positive, got {m}")));
            }
            let lower = 0.5 * ((ln_gamma(0.5 * (1.0 + m)) - ln_half_gamma) / m).exp();
            let nf = n as f64;
            let upper = ((ln_gamma(0.5 * (nf + m)) - ln_gamma(0.5 * nf)) / m).exp();
            let bracket = (ln_bracket(n, m) / m).exp();
            // relative slack for rounding in the 1/m-th roots
            let slack = 1e-12;
            let pass = bracket >= lower * (1.0 - slack) && bracket <= upper * (1.0 + slack);
            entries.push(BoundEntry {
                layer: l + 1,
                width: n,
                order: m,
                lower,
                bracket,
                upper,
                pass,
            });
        }
    }
    let all_pass = entries.iter().all(|e| e.pass);
    Ok(BoundsReport { entries, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(hidden: &[usize], act: Activation) -> NetworkSpec {
        NetworkSpec::with_kappa(hidden, 1, 1.0, act).unwrap()
    }

    #[test]
    fn gaussian_root_moments() {
        let s = spec(&[], Activation::Linear);
        for (m, v) in root_moment_curve(&s, &[1.0, 2.0, 3.0, 10.0]).unwrap() {
            let want = (0.5 * m * std::f64::consts::LN_2 + ln_gamma(0.5 * (1.0 + m)) - ln_gamma(0.5)).exp().powf(1.0 / m);
            assert!(((v - want) / want).abs() < 1e-13);
        }
    }

    #[test]
    fn second_root_moment() {
        let s = spec(&[2, 3], Activation::Linear);
        let (_, v) = root_moment_curve(&s, &[2.0]).unwrap()[0];
        assert!((v - 6f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn slopes() {
        let est = estimate_tail_parameter(&spec(&[], Activation::Linear), 400).unwrap();
        assert!((est.theta_hat - 0.5).abs() < 0.02);
        // least-squares slope of the exact curve from an arbitrary-precision evaluation;
        // the O(ln m / m) pre-asymptotic bias keeps it below 1 at these orders
        let est = fit_orders(&spec(&[2], Activation::Linear), 50, 200).unwrap();
        assert!((est.theta_hat - 0.973_296_897_485_215_3).abs() < 1e-9, "{}", est.theta_hat);
        assert!((est.theta_hat - 1.0).abs() < 0.03);
        for act in [Activation::Linear, Activation::Relu] {
            let est = estimate_tail_parameter(&spec(&[2, 2, 2], act), 400).unwrap();
            assert!((est.theta_hat - 2.0).abs() < 0.05, "{act:?} {}", est.theta_hat);
        }
    }

    #[test]
    fn too_few_orders() {
        assert!(estimate_tail_parameter(&spec(&[2], Activation::Linear), 10).is_err());
        assert!(fit_orders(&spec(&[2], Activation::Linear), 5, 8).is_err());
    }

    #[test]
    fn no_overflow_at_high_order() {
        let s = spec(&[1000, 1000], Activation::Relu);
        let c = root_moment_curve(&s, &[1e4]).unwrap();
        assert!(c[0].1.is_finite() && c[0].1 > 0.0);
    }

    #[test]
    fn bracket_bounds() {
        let s = spec(&[1, 100], Activation::Relu);
        assert!(relu_moment_bounds_check(&s, &[2.0, 10.0, 100.0]).unwrap().all_pass);
        let fake = check_bounds_with(&s, &[2.0, 10.0], |n, m| {
            let nf = n as f64;
            ln_gamma(0.5 * (nf + m)) - ln_gamma(0.5 * nf) + m * 1.01f64.ln()
        })
        .unwrap();
        assert!(!fake.all_pass);
    }
}
