//! Large-width references: the Gaussian limit and the first Edgeworth
//! correction in `1/n`.
//!
//! Widths are scaled so that `κ_d = (n_1⋯n_{d-1})^{-1/2} ϰ_d` with `ϰ_d` held
//! fixed; ReLU networks have the linear variance multiplied by `2^{1-d}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linear_prior::{Activation, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthScaledSpec {
    pub base: NetworkSpec,
    pub varkappa: f64,
}

impl WidthScaledSpec {
    /// Reads `ϰ_d` off an existing spec.
    pub fn from_spec(base: &NetworkSpec) -> Result<Self> {
        base.validate()?;
        let ln_prod: f64 = base.hidden_widths().iter().map(|&n| (n as f64).ln()).sum();
        Ok(Self {
            varkappa: (base.ln_kappa() + 0.5 * ln_prod).exp(),
            base: base.clone(),
        })
    }

    /// Pairs a spec with a stated `ϰ_d`, which must agree with the spec's `κ_d`.
    pub fn new(base: NetworkSpec, varkappa: f64) -> Result<Self> {
        let implied = Self::from_spec(&base)?.varkappa;
        if ((implied - varkappa) / varkappa).abs() > 1e-12 {
            return Err(Error::config(format!(
                "stated width-independent scale {varkappa} does not match the spec ({implied})"
            )));
        }
        Ok(Self { base, varkappa })
    }

    /// Spec with the given widths and `κ_d` derived from `ϰ_d`.
    pub fn with_widths(hidden: &[usize], out_width: usize, varkappa: f64, activation: Activation) -> Result<Self> {
        let ln_prod: f64 = hidden.iter().map(|&n| (n as f64).ln()).sum();
        let kappa = varkappa * (-0.5 * ln_prod).exp();
        let base = NetworkSpec::with_kappa(hidden, out_width, kappa, activation)?;
        Ok(Self { base, varkappa })
    }

    /// Per-coordinate variance of the limiting Gaussian.
    pub fn limit_variance(&self) -> f64 {
        let v = self.varkappa * self.varkappa;
        match self.base.activation {
            Activation::Linear => v,
            Activation::Relu => v * (1.0 - self.base.depth() as f64).exp2(),
        }
    }

    fn inverse_width_sum(&self) -> f64 {
        self.base.hidden_widths().iter().map(|&n| 1.0 / n as f64).sum()
    }
}

/// Density of the infinite-width limit at radius `r`.
pub fn gaussian_limit_density(ws: &WidthScaledSpec, r: f64) -> f64 {
    let v = ws.limit_variance();
    let nd = ws.base.out_width() as f64;
    (-0.5 * nd * (2.0 * PI * v).ln() - 0.5 * r * r / v).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourthCumulant {
    /// `χ_iiii`.
    pub iiii: f64,
    /// `χ_iijj` for `i ≠ j`.
    pub iijj: f64,
}

/// Fourth joint cumulant of the output of a linear network,
/// `χ_iiii = 3ϰ⁴(∏(n_ℓ+2)/n_ℓ - 1)`.
pub fn fourth_cumulant_linear(ws: &WidthScaledSpec) -> Result<FourthCumulant> {
    if ws.base.activation != Activation::Linear {
        return Err(Error::config("the fourth-cumulant formula is for linear networks"));
    }
    let ln_ratio: f64 = ws
        .base
        .hidden_widths()
        .iter()
        .map(|&n| (2.0 / n as f64).ln_1p())
        .sum();
    let k4 = ws.varkappa.powi(4);
    let iiii = 3.0 * k4 * ln_ratio.exp_m1();
    Ok(FourthCumulant { iiii, iijj: iiii / 3.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthValue {
    pub value: f64,
    /// True when the truncated series has gone negative.
    pub negative: bool,
}

/// Coefficient of `Σ 1/n_ℓ` in the correction: 1/4 for linear, 5/4 for ReLU.
pub fn edgeworth_coefficient(activation: Activation) -> f64 {
    match activation {
        Activation::Linear => 0.25,
        Activation::Relu => 1.25,
    }
}

/// The correction polynomial `c Σ(1/n_ℓ)(u² - 2(n_d+2)u + n_d(n_d+2))`.
pub fn edgeworth_correction(ws: &WidthScaledSpec, r: f64) -> f64 {
    let u = r * r / ws.limit_variance();
    let nd = ws.base.out_width() as f64;
    let poly = u * u - 2.0 * (nd + 2.0) * u + nd * (nd + 2.0);
    edgeworth_coefficient(ws.base.activation) * ws.inverse_width_sum() * poly
}

/// First-order Edgeworth approximation to the radial density.
pub fn edgeworth_density(ws: &WidthScaledSpec, r: f64) -> EdgeworthValue {
    let value = gaussian_limit_density(ws, r) * (1.0 + edgeworth_correction(ws, r));
    EdgeworthValue {
        value,
        negative: value < 0.0,
    }
}
