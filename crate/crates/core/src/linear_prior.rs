//! Exact prior of a deep linear network for a single input.
//!
//! `‖h_d‖² / (2^d κ²)` is distributed as a product of independent
//! `Gamma(n_ℓ / 2)` variables, which gives the radial density
//!
//! `p(r) = γ_d (2^d π κ²)^{-n_d/2} G^{d,0}_{0,d}(r² / (2^d κ²) | 0, ν_1..ν_{d-1})`
//!
//! with `ν_ℓ = (n_ℓ - n_d)/2` and `γ_d = ∏_{ℓ<d} 1/Γ(n_ℓ/2)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::specfun::{ln_bessel_k, ln_gamma, meijer_g_1q, meijer_g_q0, ContourConfig, MellinSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

/// Architecture and weight prior of a fully connected network without biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `n_0, …, n_d`.
    pub widths: Vec<usize>,
    /// `σ_1, …, σ_d`.
    pub weight_std: Vec<f64>,
    pub input_norm: f64,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, weight_std: Vec<f64>, input_norm: f64, activation: Activation) -> Result<Self> {
        let spec = Self {
            widths,
            weight_std,
            input_norm,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with the given hidden and output widths whose whole scale sits in
    /// the first layer, so that `κ_d = kappa`. Input width 1, unit input.
    pub fn with_kappa(hidden: &[usize], out_width: usize, kappa: f64, activation: Activation) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(1);
        widths.extend_from_slice(hidden);
        widths.push(out_width);
        let mut weight_std = vec![1.0; hidden.len() + 1];
        weight_std[0] = kappa;
        Self::new(widths, weight_std, 1.0, activation)
    }

    /// Scale chosen so every architecture has the output variance of a
    /// width-independent Gaussian: `κ² = (n_1⋯n_{d-1})^{-1}` for linear and
    /// `2^{d-1}(n_1⋯n_{d-1})^{-1}` for ReLU networks.
    pub fn paper_default(hidden: &[usize], out_width: usize, activation: Activation) -> Result<Self> {
        let kappa = paper_kappa(hidden, activation);
        Self::with_kappa(hidden, out_width, kappa, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config("a network needs at least an input and an output width"));
        }
        if self.weight_std.len() != self.widths.len() - 1 {
            return Err(Error::config(format!(
                "expected {} weight standard deviations, got {}",
                self.widths.len() - 1,
                self.weight_std.len()
            )));
        }
        if self.widths.iter().any(|&n| n == 0) {
            return Err(Error::config("all widths must be at least 1"));
        }
        if self.weight_std.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::config("weight standard deviations must be positive and finite"));
        }
        if !(self.input_norm > 0.0 && self.input_norm.is_finite()) {
            return Err(Error::config("input norm must be positive and finite"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// `n_1, …, n_{d-1}`.
    pub fn hidden_widths(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn kappa(&self) -> f64 {
        self.ln_kappa().exp()
    }

    pub fn ln_kappa(&self) -> f64 {
        self.weight_std.iter().map(|s| s.ln()).sum::<f64>() + self.input_norm.ln()
    }

    /// Same weights and input, different hidden widths. `κ_d` is unchanged.
    pub fn with_hidden_widths(&self, hidden: &[usize]) -> Self {
        assert_eq!(hidden.len(), self.depth() - 1, "hidden width count must match depth");
        let mut widths = self.widths.clone();
        widths[1..self.widths.len() - 1].copy_from_slice(hidden);
        Self { widths, ..self.clone() }
    }

    pub fn with_out_width(&self, out_width: usize) -> Self {
        let mut widths = self.widths.clone();
        *widths.last_mut().expect("validated spec") = out_width;
        Self { widths, ..self.clone() }
    }

    pub fn with_activation(&self, activation: Activation) -> Self {
        Self {
            activation,
            ..self.clone()
        }
    }
}

/// `κ_d` of the variance-matched parameterization.
pub fn paper_kappa(hidden: &[usize], activation: Activation) -> f64 {
    let ln_prod: f64 = hidden.iter().map(|&n| (n as f64).ln()).sum();
    let ln_k2 = match activation {
        Activation::Linear => -ln_prod,
        Activation::Relu => hidden.len() as f64 * LN_2 - ln_prod,
    };
    (0.5 * ln_k2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConstants {
    pub kappa: f64,
    /// `ln γ_d = -Σ_{ℓ<d} ln Γ(n_ℓ/2)`.
    pub log_gamma_norm: f64,
}

pub fn prior_constants(spec: &NetworkSpec) -> PriorConstants {
    PriorConstants {
        kappa: spec.kappa(),
        log_gamma_norm: ln_gamma_norm(spec.hidden_widths()),
    }
}

fn ln_gamma_norm(hidden: &[usize]) -> f64 {
    -hidden.iter().map(|&n| ln_gamma(n as f64 / 2.0)).sum::<f64>()
}

/// A density value, or the statement that it is infinite at this point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DensityValue {
    Finite(f64),
    Divergent,
}

impl DensityValue {
    pub fn value(self) -> Option<f64> {
        match self {
            DensityValue::Finite(v) => Some(v),
            DensityValue::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, DensityValue::Divergent)
    }

    fn from_ln(ln: Option<f64>) -> Self {
        match ln {
            Some(l) => DensityValue::Finite(l.exp()),
            None => DensityValue::Divergent,
        }
    }
}

fn check_linear(spec: &NetworkSpec) -> Result<()> {
    spec.validate()?;
    if spec.activation != Activation::Linear {
        return Err(Error::config("this evaluator needs a linear network"));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("radius must be finite and non-negative, got {r}")));
    }
    Ok(())
}

/// ln of the radial density of a linear network given by its hidden widths,
/// output width and `ln κ`. `None` means divergent. With `force_contour`
/// the two-layer closed form is bypassed.
pub(crate) fn ln_density_parts(
    hidden: &[usize],
    out: usize,
    ln_kappa: f64,
    r: f64,
    cfg: &ContourConfig,
    force_contour: bool,
) -> Result<Option<f64>> {
    check_radius(r)?;
    let d = hidden.len() + 1;
    let nd = out as f64;
    let ln_k2 = 2.0 * ln_kappa;
    if d == 1 {
        return Ok(Some(-0.5 * nd * ((2.0 * PI).ln() + ln_k2) - 0.5 * r * r * (-ln_k2).exp()));
    }
    if d == 2 && !force_contour {
        return Ok(ln_two_layer(hidden[0], out, ln_kappa, r));
    }
    let ln_scale = d as f64 * LN_2 + ln_k2;
    let ln_front = ln_gamma_norm(hidden) - 0.5 * nd * (ln_scale + PI.ln());
    let nus: Vec<f64> = hidden.iter().map(|&n| (n as f64 - nd) / 2.0).collect();
    if r == 0.0 {
        if nus.iter().any(|&v| v <= 0.0) {
            return Ok(None);
        }
        return Ok(Some(ln_front + nus.iter().map(|&v| ln_gamma(v)).sum::<f64>()));
    }
    let ln_z = 2.0 * r.ln() - ln_scale;
    let est = meijer_g_q0(ln_z.exp(), &MellinSpectrum::density(hidden, out), cfg)?;
    Ok(Some(ln_front + est.ln_value))
}

fn ln_two_layer(n1: usize, n2: usize, ln_kappa: f64, r: f64) -> Option<f64> {
    let nu = (n1 as f64 - n2 as f64) / 2.0;
    let ln_front = -0.5 * n2 as f64 * ((4.0 * PI).ln() + 2.0 * ln_kappa) + LN_2 - ln_gamma(n1 as f64 / 2.0);
    if r == 0.0 {
        if nu <= 0.0 {
            return None;
        }
        // (x/2)^ν K_ν(x) → Γ(ν)/2
        return Some(ln_front + ln_gamma(nu) - LN_2);
    }
    let ln_x = r.ln() - ln_kappa;
    let x = ln_x.exp();
    let ln_k = ln_bessel_k(nu.abs(), x).ok()?;
    Some(ln_front + nu * (ln_x - LN_2) + ln_k)
}

/// Radial density `p(‖h_d‖ = r)` of a linear network.
pub fn density_linear(spec: &NetworkSpec, r: f64, cfg: &ContourConfig) -> Result<DensityValue> {
    check_linear(spec)?;
    ln_density_parts(spec.hidden_widths(), spec.out_width(), spec.ln_kappa(), r, cfg, false).map(DensityValue::from_ln)
}

/// Like [`density_linear`] but always through the contour integral.
pub fn density_linear_contour(spec: &NetworkSpec, r: f64, cfg: &ContourConfig) -> Result<DensityValue> {
    check_linear(spec)?;
    ln_density_parts(spec.hidden_widths(), spec.out_width(), spec.ln_kappa(), r, cfg, true).map(DensityValue::from_ln)
}

/// ln of [`density_linear`]; `None` where the density diverges.
pub fn ln_density_linear(spec: &NetworkSpec, r: f64, cfg: &ContourConfig) -> Result<Option<f64>> {
    check_linear(spec)?;
    ln_density_parts(spec.hidden_widths(), spec.out_width(), spec.ln_kappa(), r, cfg, false)
}

/// Closed-form density of a network with one hidden layer.
pub fn density_two_layer(spec: &NetworkSpec, r: f64) -> Result<DensityValue> {
    check_linear(spec)?;
    if spec.depth() != 2 {
        return Err(Error::config("the closed form needs exactly one hidden layer"));
    }
    check_radius(r)?;
    let ln = ln_two_layer(spec.widths[1], spec.out_width(), spec.ln_kappa(), r);
    match ln {
        Some(l) => Ok(DensityValue::Finite(l.exp())),
        None if r == 0.0 => Ok(DensityValue::Divergent),
        None => Err(Error::Accuracy {
            context: "two-layer density".into(),
            best: f64::NAN,
            error: f64::INFINITY,
        }),
    }
}

pub(crate) fn charfun_parts(hidden: &[usize], ln_kappa: f64, q: f64, cfg: &ContourConfig, force_contour: bool) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("frequency radius must be finite and non-negative, got {q}")));
    }
    let d = hidden.len() + 1;
    let ln_kq2 = 2.0 * (ln_kappa + q.ln());
    if q == 0.0 {
        return Ok(1.0);
    }
    if d == 1 {
        return Ok((-0.5 * ln_kq2.exp()).exp());
    }
    if d == 2 && !force_contour {
        return Ok((-0.5 * hidden[0] as f64 * ln_kq2.exp().ln_1p()).exp());
    }
    let ln_z = (d as f64 - 2.0) * LN_2 + ln_kq2;
    let est = meijer_g_1q(ln_z.exp(), &MellinSpectrum::charfun(hidden), cfg)?;
    Ok((ln_gamma_norm(hidden) + est.ln_value).exp())
}

/// Radial characteristic function `E exp(-i q·h_d)` at `‖q‖ = q`.
pub fn charfun_linear(spec: &NetworkSpec, q: f64, cfg: &ContourConfig) -> Result<f64> {
    check_linear(spec)?;
    charfun_parts(spec.hidden_widths(), spec.ln_kappa(), q, cfg, false)
}

/// Like [`charfun_linear`] but always through the contour integral.
pub fn charfun_linear_contour(spec: &NetworkSpec, q: f64, cfg: &ContourConfig) -> Result<f64> {
    check_linear(spec)?;
    charfun_parts(spec.hidden_widths(), spec.ln_kappa(), q, cfg, true)
}

fn check_order(m: f64) -> Result<()> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("moment order must be finite and non-negative, got {m}")));
    }
    Ok(())
}

/// `ln E‖h_d‖^m` of a linear network.
pub fn ln_moment_norm_linear(spec: &NetworkSpec, m: f64) -> Result<f64> {
    check_linear(spec)?;
    check_order(m)?;
    let d = spec.depth() as f64;
    let half = m / 2.0;
    let rising: f64 = spec.widths[1..]
        .iter()
        .map(|&n| {
            let a = n as f64 / 2.0;
            ln_gamma(a + half) - ln_gamma(a)
        })
        .sum();
    Ok(d * half * LN_2 + m * spec.ln_kappa() + rising)
}

/// `E‖h_d‖^m` of a linear network.
pub fn moment_norm_linear(spec: &NetworkSpec, m: f64) -> Result<f64> {
    if m == 2.0 {
        check_linear(spec)?;
        // κ² n_1⋯n_d, formed directly so that variance ratios are exact
        return Ok(second_moment_product(spec));
    }
    ln_moment_norm_linear(spec, m).map(f64::exp)
}

pub(crate) fn second_moment_product(spec: &NetworkSpec) -> f64 {
    let k = spec.kappa();
    spec.widths[1..].iter().fold(k * k, |acc, &n| acc * n as f64)
}

/// Density of one output coordinate at `h`.
pub fn marginal_density_1d(spec: &NetworkSpec, h: f64, cfg: &ContourConfig) -> Result<DensityValue> {
    density_linear(&spec.with_out_width(1), h.abs(), cfg)
}

/// Surface area of the unit sphere in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    (LN_2 + half * PI.ln() - ln_gamma(half)).exp()
}

/// `ln S_{n-1}`.
pub fn ln_unit_sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    LN_2 + half * PI.ln() - ln_gamma(half)
}

/// Geometric grid of `points` radii from `r_min` to `r_max` inclusive.
pub fn geometric_grid(r_min: f64, r_max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::config("grid needs at least one point"));
    }
    if !(r_min > 0.0 && r_max >= r_min && r_max.is_finite()) {
        return Err(Error::config(format!("invalid geometric grid range [{r_min}, {r_max}]")));
    }
    if points == 1 {
        return Ok(vec![r_min]);
    }
    let ratio = (r_max / r_min).ln() / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { r_max } else { r_min * (ratio * i as f64).exp() })
        .collect())
}

/// Upper plotting radius `sqrt(E r² + 10 sd(r²))` from the second and fourth
/// norm moments.
pub fn moment_cutoff_radius(m2: f64, m4: f64) -> f64 {
    let var = (m4 - m2 * m2).max(0.0);
    (m2 + 10.0 * var.sqrt()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn lin(hidden: &[usize], out: usize, kappa: f64) -> NetworkSpec {
        NetworkSpec::with_kappa(hidden, out, kappa, Activation::Linear).unwrap()
    }

    #[test]
    fn constants() {
        let s = NetworkSpec::new(vec![1, 2, 1], vec![1.0, 1.0], 1.0, Activation::Linear).unwrap();
        let c = prior_constants(&s);
        assert_eq!(c.kappa, 1.0);
        assert_eq!(c.log_gamma_norm, 0.0);
        let s = NetworkSpec::new(vec![1, 4, 4, 1], vec![2.0, 0.5, 1.0], 3.0, Activation::Linear).unwrap();
        assert!(rel(prior_constants(&s).kappa, 3.0) < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![1, 0, 1], vec![1.0, 1.0], 1.0, Activation::Linear).is_err());
        assert!(NetworkSpec::new(vec![1, 2, 1], vec![1.0], 1.0, Activation::Linear).is_err());
        assert!(NetworkSpec::new(vec![1, 2, 1], vec![1.0, -1.0], 1.0, Activation::Linear).is_err());
        assert!(NetworkSpec::new(vec![1, 2, 1], vec![1.0, 1.0], 0.0, Activation::Linear).is_err());
    }

    #[test]
    fn laplace_case() {
        let s = lin(&[2], 1, 1.0);
        let v = density_two_layer(&s, 1.0).unwrap().value().unwrap();
        assert!(rel(v, 0.5 * (-1.0f64).exp()) < 1e-14);
        let c = density_linear_contour(&s, 1.0, &ContourConfig::default()).unwrap().value().unwrap();
        assert!(rel(c, v) < 1e-10);
    }

    #[test]
    fn divergence_at_origin() {
        let s = lin(&[1], 1, 1.0);
        assert!(density_two_layer(&s, 0.0).unwrap().is_divergent());
        let s = lin(&[3, 1], 1, 1.0);
        assert!(density_linear(&s, 0.0, &ContourConfig::default()).unwrap().is_divergent());
        let s = lin(&[3, 3], 1, 1.0);
        assert!(!density_linear(&s, 0.0, &ContourConfig::default()).unwrap().is_divergent());
    }

    #[test]
    fn three_layer_reference() {
        let s = lin(&[3, 2], 1, 1.0);
        let v = density_linear(&s, 0.5, &ContourConfig::default()).unwrap().value().unwrap();
        assert!(rel(v, 0.241_360_533_289_882_26) < 1e-9, "{v}");
    }

    #[test]
    fn origin_limit_is_continuous() {
        let s = lin(&[4, 3], 1, 1.0);
        let cfg = ContourConfig::default();
        let at0 = density_linear(&s, 0.0, &cfg).unwrap().value().unwrap();
        let near = density_linear(&s, 1e-4, &cfg).unwrap().value().unwrap();
        assert!(rel(near, at0) < 1e-3);
    }

    #[test]
    fn charfun_closed_forms() {
        let cfg = ContourConfig::default();
        let s = lin(&[2], 1, 1.0);
        assert_eq!(charfun_linear(&s, 0.0, &cfg).unwrap(), 1.0);
        assert!(rel(charfun_linear(&s, 1.0, &cfg).unwrap(), 0.5) < 1e-15);
        assert!(rel(charfun_linear_contour(&s, 1.0, &cfg).unwrap(), 0.5) < 1e-10);
        let s = lin(&[], 1, 2.0);
        assert!(rel(charfun_linear(&s, 0.5, &cfg).unwrap(), (-0.5f64).exp()) < 1e-15);
    }

    #[test]
    fn charfun_decreases() {
        let cfg = ContourConfig::default();
        let s = lin(&[1, 2], 1, 1.0);
        let mut last = 1.0;
        for i in 1..30 {
            let v = charfun_linear(&s, 0.2 * i as f64, &cfg).unwrap();
            assert!(v < last && v > 0.0);
            last = v;
        }
    }

    #[test]
    fn moments() {
        let s = lin(&[2, 3], 1, 1.0);
        assert_eq!(moment_norm_linear(&s, 0.0).unwrap(), 1.0);
        assert_eq!(moment_norm_linear(&s, 2.0).unwrap(), 6.0);
        assert!(rel(ln_moment_norm_linear(&s, 2.0).unwrap().exp(), 6.0) < 1e-14);
        let s = lin(&[2], 1, 1.0);
        assert!(rel(moment_norm_linear(&s, 4.0).unwrap(), 24.0) < 1e-13);
    }

    #[test]
    fn gaussian_depth_one() {
        let s = lin(&[], 1, 1.0);
        let v = density_linear(&s, 0.0, &ContourConfig::default()).unwrap().value().unwrap();
        assert!(rel(v, 1.0 / (2.0 * PI).sqrt()) < 1e-15);
    }

    #[test]
    fn grid_and_spheres() {
        let g = geometric_grid(1e-3, 10.0, 5).unwrap();
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[4], 10.0);
        assert!(rel(g[2], 0.1) < 1e-13);
        assert!(rel(unit_sphere_area(1), 2.0) < 1e-15);
        assert!(rel(unit_sphere_area(2), 2.0 * PI) < 1e-15);
        assert!(rel(unit_sphere_area(3), 4.0 * PI) < 1e-14);
    }

    #[test]
    fn paper_kappa_values() {
        assert!(rel(paper_kappa(&[4, 25], Activation::Linear), 0.1) < 1e-15);
        assert!(rel(paper_kappa(&[4, 25], Activation::Relu), 0.2) < 1e-15);
    }
}
