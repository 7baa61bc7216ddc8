//! Exact prior of a deep ReLU network: an atom at the origin plus a finite
//! mixture of linear-network priors indexed by the number of active units
//! `(k_1, …, k_{d-1})` in each hidden layer, with weights
//! `∏_ℓ 2^{-n_ℓ} C(n_ℓ, k_ℓ)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::linear_prior::{charfun_parts, ln_density_parts, Activation, DensityValue, NetworkSpec};
use crate::specfun::{ln_gamma, CompensatedSum, ContourConfig};

/// Default cutoff on mixture weights: the double-precision unit roundoff.
pub const DEFAULT_THRESHOLD: f64 = f64::EPSILON;

/// Largest number of mixture terms materialized before giving up.
pub const MAX_TERMS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    None,
    /// Drop single-layer coefficients below the threshold before forming tuples.
    PerFactor,
    /// Drop tuples whose total weight is below the threshold.
    Product,
}

impl TruncationMode {
    pub fn name(self) -> &'static str {
        match self {
            TruncationMode::None => "none",
            TruncationMode::PerFactor => "per-factor",
            TruncationMode::Product => "product",
        }
    }
}

impl std::str::FromStr for TruncationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TruncationMode::None),
            "per-factor" => Ok(TruncationMode::PerFactor),
            "product" => Ok(TruncationMode::Product),
            other => Err(Error::config(format!("unknown truncation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub active_counts: Vec<usize>,
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluMixture {
    pub atom_mass: f64,
    /// Sorted by descending weight.
    pub terms: Vec<MixtureTerm>,
    pub truncation_mode: TruncationMode,
    pub truncation_threshold: f64,
    pub discarded_mass: f64,
}

impl ReluMixture {
    /// Total weight of the retained terms.
    pub fn continuous_mass(&self) -> f64 {
        self.terms.iter().map(|t| t.log_weight.exp()).collect::<CompensatedSum>().value()
    }
}

fn check_relu(spec: &NetworkSpec) -> Result<()> {
    spec.validate()?;
    if spec.activation != Activation::Relu {
        return Err(Error::config("this evaluator needs a ReLU network"));
    }
    Ok(())
}

/// Probability that some hidden layer is entirely inactive.
pub fn atom_mass(spec: &NetworkSpec) -> Result<f64> {
    check_relu(spec)?;
    Ok(atom_from_widths(spec.hidden_widths()))
}

fn atom_from_widths(hidden: &[usize]) -> f64 {
    let ln_survive: f64 = hidden.iter().map(|&n| (-(-(n as f64) * LN_2).exp()).ln_1p()).sum();
    -ln_survive.exp_m1()
}

/// `ln(2^{-n} C(n, k))` for `k = 0..=n`.
pub fn layer_log_weights(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let base = -(n as f64) * LN_2;
    let mut ln_c = 0.0;
    out.push(base);
    for k in 1..=n {
        ln_c += ((n - k + 1) as f64 / k as f64).ln();
        out.push(base + ln_c);
    }
    out
}

struct Layer {
    /// (k, ln weight), descending by weight, k >= 1.
    entries: Vec<(usize, f64)>,
    /// suffix_mass[i] = Σ_{j >= i} exp(entries[j].1)
    suffix_mass: Vec<f64>,
    total: f64,
}

impl Layer {
    fn new(entries: Vec<(usize, f64)>) -> Self {
        let mut suffix_mass = vec![0.0; entries.len() + 1];
        for i in (0..entries.len()).rev() {
            suffix_mass[i] = suffix_mass[i + 1] + entries[i].1.exp();
        }
        let total = suffix_mass[0];
        Self {
            entries,
            suffix_mass,
            total,
        }
    }
}

fn sorted_entries(n: usize) -> Vec<(usize, f64)> {
    let w = layer_log_weights(n);
    let mut e: Vec<(usize, f64)> = (1..=n).map(|k| (k, w[k])).collect();
    e.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    e
}

/// Enumerates the mixture terms of a ReLU network under a truncation rule.
pub fn enumerate_terms(spec: &NetworkSpec, mode: TruncationMode, threshold: f64) -> Result<ReluMixture> {
    check_relu(spec)?;
    if !(threshold >= 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("truncation threshold must lie in [0, 1), got {threshold}")));
    }
    let hidden = spec.hidden_widths();
    let atom = atom_from_widths(hidden);
    let ln_thr = if mode == TruncationMode::None || threshold == 0.0 {
        f64::NEG_INFINITY
    } else {
        threshold.ln()
    };
    let mut discarded = CompensatedSum::default();
    let layers: Vec<Layer> = hidden
        .iter()
        .map(|&n| {
            let mut e = sorted_entries(n);
            if mode == TruncationMode::PerFactor {
                let keep = e.iter().take_while(|x| x.1 >= ln_thr).count();
                e.truncate(keep);
            }
            Layer::new(e)
        })
        .collect();
    if mode == TruncationMode::PerFactor {
        // Π T - Π S as a telescoping sum of non-negative pieces
        let totals: Vec<f64> = hidden.iter().map(|&n| -(-(n as f64) * LN_2).exp_m1()).collect();
        for l in 0..layers.len() {
            let dropped: f64 = sorted_entries(hidden[l])[layers[l].entries.len()..]
                .iter()
                .map(|x| x.1.exp())
                .sum();
            let before: f64 = layers[..l].iter().map(|x| x.total).product();
            let after: f64 = totals[l + 1..].iter().product();
            discarded.add(before * dropped * after);
        }
    }
    let estimated: f64 = layers.iter().map(|l| l.entries.len() as f64).product();
    if mode == TruncationMode::None && estimated > MAX_TERMS as f64 {
        return Err(Error::Resource(format!(
            "untruncated mixture has {estimated:.3e} terms; use a truncation mode"
        )));
    }
    // best attainable log weight of the remaining layers
    let mut best_rest = vec![0.0; layers.len() + 1];
    for l in (0..layers.len()).rev() {
        best_rest[l] = best_rest[l + 1] + layers[l].entries.first().map_or(f64::NEG_INFINITY, |e| e.1);
    }
    let mut rest_total = vec![1.0; layers.len() + 1];
    for l in (0..layers.len()).rev() {
        rest_total[l] = rest_total[l + 1] * layers[l].total;
    }
    let mut terms = Vec::new();
    let mut counts = vec![0usize; layers.len()];
    let mut state = Dfs {
        layers: &layers,
        best_rest: &best_rest,
        rest_total: &rest_total,
        ln_thr: if mode == TruncationMode::Product { ln_thr } else { f64::NEG_INFINITY },
        terms: &mut terms,
        discarded: &mut discarded,
    };
    if !layers.is_empty() {
        state.visit(0, 0.0, &mut counts)?;
    }
    terms.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight).then_with(|| a.active_counts.cmp(&b.active_counts)));
    Ok(ReluMixture {
        atom_mass: atom,
        terms,
        truncation_mode: mode,
        truncation_threshold: threshold,
        discarded_mass: discarded.value().max(0.0),
    })
}

struct Dfs<'a> {
    layers: &'a [Layer],
    best_rest: &'a [f64],
    rest_total: &'a [f64],
    ln_thr: f64,
    terms: &'a mut Vec<MixtureTerm>,
    discarded: &'a mut CompensatedSum,
}

impl Dfs<'_> {
    fn visit(&mut self, l: usize, ln_w: f64, counts: &mut Vec<usize>) -> Result<()> {
        let layer = &self.layers[l];
        for (i, &(k, w)) in layer.entries.iter().enumerate() {
            let ln_here = ln_w + w;
            if ln_here + self.best_rest[l + 1] < self.ln_thr {
                // entries are sorted, so nothing further in this layer survives
                self.discarded.add(ln_w.exp() * layer.suffix_mass[i] * self.rest_total[l + 1]);
                break;
            }
            counts[l] = k;
            if l + 1 == self.layers.len() {
                if self.terms.len() >= MAX_TERMS {
                    return Err(Error::Resource(format!(
                        "more than {MAX_TERMS} mixture terms; raise the truncation threshold"
                    )));
                }
                self.terms.push(MixtureTerm {
                    active_counts: counts.clone(),
                    log_weight: ln_here,
                });
            } else {
                self.visit(l + 1, ln_here, counts)?;
            }
        }
        Ok(())
    }
}

/// Terms merged by the multiset of active counts, which is all the linear
/// density depends on. Sorted by descending merged weight.
fn merged_terms(mixture: &ReluMixture) -> Vec<(Vec<usize>, f64)> {
    let mut groups: BTreeMap<Vec<usize>, CompensatedSum> = BTreeMap::new();
    for t in &mixture.terms {
        let mut key = t.active_counts.clone();
        key.sort_unstable();
        groups.entry(key).or_default().add(t.log_weight.exp());
    }
    let mut out: Vec<(Vec<usize>, f64)> = groups.into_iter().map(|(k, s)| (k, s.value())).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn check_mixture(spec: &NetworkSpec, mixture: &ReluMixture) -> Result<()> {
    check_relu(spec)?;
    let d1 = spec.depth() - 1;
    if mixture.terms.iter().any(|t| t.active_counts.len() != d1) {
        return Err(Error::config("mixture does not match the network depth"));
    }
    Ok(())
}

/// A mixture with its terms merged by multiset of active counts, ready for
/// repeated evaluation.
#[derive(Debug, Clone)]
pub struct MixtureEvaluator {
    groups: Vec<(Vec<usize>, f64)>,
    out_width: usize,
    ln_kappa: f64,
    atom_mass: f64,
}

impl MixtureEvaluator {
    pub fn new(spec: &NetworkSpec, mixture: &ReluMixture) -> Result<Self> {
        check_mixture(spec, mixture)?;
        let groups = if spec.depth() == 1 {
            vec![(Vec::new(), 1.0)]
        } else {
            merged_terms(mixture)
        };
        Ok(Self {
            groups,
            out_width: spec.out_width(),
            ln_kappa: spec.ln_kappa(),
            atom_mass: mixture.atom_mass,
        })
    }

    /// Number of distinct linear components.
    pub fn components(&self) -> usize {
        self.groups.len()
    }

    /// Continuous part of the radial density at `r > 0`.
    pub fn density(&self, r: f64, cfg: &ContourConfig) -> Result<f64> {
        Ok(self.density_grid(&[r], cfg)?[0])
    }

    /// Continuous part at `r >= 0`; divergent at the origin when any
    /// component is.
    pub fn density_value(&self, r: f64, cfg: &ContourConfig) -> Result<DensityValue> {
        if r != 0.0 {
            return self.density(r, cfg).map(DensityValue::Finite);
        }
        let mut sum = CompensatedSum::default();
        for (k, w) in &self.groups {
            match ln_density_parts(k, self.out_width, self.ln_kappa, 0.0, cfg, false)? {
                Some(ln) => sum.add(w * ln.exp()),
                None => return Ok(DensityValue::Divergent),
            }
        }
        Ok(DensityValue::Finite(sum.value()))
    }

    pub fn density_grid(&self, radii: &[f64], cfg: &ContourConfig) -> Result<Vec<f64>> {
        if let Some(bad) = radii.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::domain(format!(
                "the continuous ReLU density needs r > 0 (the atom is reported separately), got {bad}"
            )));
        }
        let rows: Vec<Vec<f64>> = self
            .groups
            .par_iter()
            .map(|(k, w)| {
                radii
                    .iter()
                    .map(|&r| {
                        let ln = ln_density_parts(k, self.out_width, self.ln_kappa, r, cfg, false)?
                            .ok_or_else(|| Error::Divergence("mixture component diverges at r > 0".into()))?;
                        Ok(w * ln.exp())
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok((0..radii.len())
            .map(|i| rows.iter().map(|row| row[i]).collect::<CompensatedSum>().value())
            .collect())
    }

    /// Radial characteristic function including the atom.
    pub fn charfun(&self, q: f64, cfg: &ContourConfig) -> Result<f64> {
        let parts: Vec<f64> = self
            .groups
            .par_iter()
            .map(|(k, w)| charfun_parts(k, self.ln_kappa, q, cfg, false).map(|v| w * v))
            .collect::<Result<_>>()?;
        let mut sum: CompensatedSum = parts.into_iter().collect();
        sum.add(self.atom_mass);
        Ok(sum.value())
    }
}

/// Continuous part of the radial density at `r > 0`.
pub fn density_relu(spec: &NetworkSpec, r: f64, mixture: &ReluMixture, cfg: &ContourConfig) -> Result<f64> {
    density_relu_grid(spec, &[r], mixture, cfg).map(|v| v[0])
}

/// Continuous part of the radial density on a grid of radii `r > 0`.
/// Each distinct multiset of active counts is evaluated once per radius.
pub fn density_relu_grid(spec: &NetworkSpec, radii: &[f64], mixture: &ReluMixture, cfg: &ContourConfig) -> Result<Vec<f64>> {
    MixtureEvaluator::new(spec, mixture)?.density_grid(radii, cfg)
}

/// Radial characteristic function of the ReLU prior.
pub fn charfun_relu(spec: &NetworkSpec, q: f64, mixture: &ReluMixture, cfg: &ContourConfig) -> Result<f64> {
    MixtureEvaluator::new(spec, mixture)?.charfun(q, cfg)
}

/// `ln[2^{-n} Σ_k C(n,k) (k/2)^{rising m/2}]`, the per-layer factor of the
/// ReLU norm moments.
pub fn ln_layer_bracket(n: usize, m: f64) -> f64 {
    let w = layer_log_weights(n);
    let half = m / 2.0;
    let terms: Vec<f64> = (1..=n)
        .map(|k| {
            let a = k as f64 / 2.0;
            w[k] + ln_gamma(a + half) - ln_gamma(a)
        })
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

/// `ln E‖h_d‖^m` of a ReLU network (zero for the atom included).
pub fn ln_moment_norm_relu(spec: &NetworkSpec, m: f64) -> Result<f64> {
    check_relu(spec)?;
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("moment order must be finite and non-negative, got {m}")));
    }
    if m == 0.0 {
        return Ok(0.0);
    }
    let d = spec.depth() as f64;
    let half = m / 2.0;
    let nd = spec.out_width() as f64 / 2.0;
    let brackets: f64 = spec.hidden_widths().iter().map(|&n| ln_layer_bracket(n, m)).sum();
    Ok(d * half * LN_2 + m * spec.ln_kappa() + ln_gamma(nd + half) - ln_gamma(nd) + brackets)
}

/// `E‖h_d‖^m` of a ReLU network.
pub fn moment_norm_relu(spec: &NetworkSpec, m: f64) -> Result<f64> {
    if m == 2.0 {
        check_relu(spec)?;
        // each bracket equals n/4 exactly at m = 2
        let linear = crate::linear_prior::second_moment_product(spec);
        return Ok(linear * (1.0 - spec.depth() as f64).exp2());
    }
    ln_moment_norm_relu(spec, m).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu(hidden: &[usize], out: usize, kappa: f64) -> NetworkSpec {
        NetworkSpec::with_kappa(hidden, out, kappa, Activation::Relu).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn atoms() {
        assert_eq!(atom_mass(&relu(&[1], 1, 1.0)).unwrap(), 0.5);
        assert!(rel(atom_mass(&relu(&[1, 1], 1, 1.0)).unwrap(), 0.75) < 1e-15);
        assert!(rel(atom_mass(&relu(&[100], 1, 1.0)).unwrap(), 2f64.powi(-100)) < 1e-13);
    }

    #[test]
    fn small_untruncated_mixture() {
        let m = enumerate_terms(&relu(&[2], 1, 1.0), TruncationMode::None, 0.0).unwrap();
        assert_eq!(m.terms.len(), 2);
        assert_eq!(m.terms[0].active_counts, vec![1]);
        assert!(rel(m.terms[0].log_weight.exp(), 0.5) < 1e-15);
        assert!(rel(m.terms[1].log_weight.exp(), 0.25) < 1e-15);
        assert!(rel(m.atom_mass, 0.25) < 1e-15);
        assert_eq!(m.discarded_mass, 0.0);
    }

    #[test]
    fn mass_is_conserved_under_truncation() {
        let spec = relu(&[30, 20, 10], 1, 1.0);
        for mode in [TruncationMode::None, TruncationMode::PerFactor, TruncationMode::Product] {
            let m = enumerate_terms(&spec, mode, 1e-6).unwrap();
            let total = m.atom_mass + m.continuous_mass() + m.discarded_mass;
            assert!((total - 1.0).abs() < 1e-12, "{mode:?}: {total}");
        }
    }

    #[test]
    fn discarded_mass_shrinks_with_threshold() {
        let spec = relu(&[40, 40], 1, 1.0);
        let mut last = f64::INFINITY;
        for thr in [1e-3, 1e-6, 1e-9, 1e-12] {
            let m = enumerate_terms(&spec, TruncationMode::Product, thr).unwrap();
            assert!(m.discarded_mass < last);
            last = m.discarded_mass;
        }
    }

    #[test]
    fn two_layer_term_count() {
        let m = enumerate_terms(&relu(&[100], 1, 1.0), TruncationMode::Product, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(m.terms.len(), 77);
        let p = enumerate_terms(&relu(&[100], 1, 1.0), TruncationMode::PerFactor, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(p.terms.len(), 77);
    }

    #[test]
    fn charfun_two_layer_binomial() {
        let spec = relu(&[2], 1, 1.0);
        let m = enumerate_terms(&spec, TruncationMode::None, 0.0).unwrap();
        let cfg = ContourConfig::default();
        let want = (0.5 + 0.5 / 2f64.sqrt()).powi(2);
        assert!(rel(charfun_relu(&spec, 1.0, &m, &cfg).unwrap(), want) < 1e-14);
        assert!(rel(charfun_relu(&spec, 0.0, &m, &cfg).unwrap(), 1.0) < 1e-15);
    }

    #[test]
    fn moments_match_mixture() {
        let spec = relu(&[3, 2], 2, 0.7);
        let m = enumerate_terms(&spec, TruncationMode::None, 0.0).unwrap();
        for order in [2.0, 4.0, 6.0] {
            let mix: f64 = m
                .terms
                .iter()
                .map(|t| {
                    let lin = spec.with_hidden_widths(&t.active_counts).with_activation(Activation::Linear);
                    t.log_weight.exp() * crate::linear_prior::moment_norm_linear(&lin, order).unwrap()
                })
                .sum();
            assert!(rel(ln_moment_norm_relu(&spec, order).unwrap().exp(), mix) < 1e-12);
        }
        assert_eq!(moment_norm_relu(&spec, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn variance_ratio_is_exact() {
        let spec = relu(&[3, 5, 7], 2, 0.3);
        let lin = spec.with_activation(Activation::Linear);
        let ratio = moment_norm_relu(&spec, 2.0).unwrap() / crate::linear_prior::moment_norm_linear(&lin, 2.0).unwrap();
        assert_eq!(ratio, 0.125);
        assert!(rel(ln_moment_norm_relu(&spec, 2.0).unwrap().exp(), moment_norm_relu(&spec, 2.0).unwrap()) < 1e-13);
    }

    #[test]
    fn single_term_density() {
        let spec = relu(&[1], 1, 1.0);
        let m = enumerate_terms(&spec, TruncationMode::None, 0.0).unwrap();
        let cfg = ContourConfig::default();
        let lin = spec.with_activation(Activation::Linear);
        let want = 0.5 * crate::linear_prior::density_two_layer(&lin, 1.0).unwrap().value().unwrap();
        assert!(rel(density_relu(&spec, 1.0, &m, &cfg).unwrap(), want) < 1e-14);
        assert!(density_relu(&spec, 0.0, &m, &cfg).is_err());
    }

    #[test]
    fn rejects_linear_spec() {
        let spec = NetworkSpec::with_kappa(&[2], 1, 1.0, Activation::Linear).unwrap();
        assert!(atom_mass(&spec).is_err());
    }
}
