//! Adaptive Gauss–Kronrod and tanh-sinh quadrature.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the integration domain of an improper integral is cut off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CutoffPolicy {
    /// Integrate to infinity, stopping once the tail is below tolerance.
    MomentBound,
    /// Integrate only up to the given radius.
    FixedRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub domain_cutoff_policy: CutoffPolicy,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_subdivisions: 2000,
            domain_cutoff_policy: CutoffPolicy::MomentBound,
        }
    }
}

impl QuadratureConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::config(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::config("abs_tol must be non-negative"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::config("max_subdivisions must be at least 1"));
        }
        if let CutoffPolicy::FixedRadius(r) = self.domain_cutoff_policy {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config("fixed cutoff radius must be positive and finite"));
            }
        }
        Ok(())
    }

    fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_351_996,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

// 10-point Gauss weights for the odd-indexed Kronrod nodes
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut fv = [0.0; 20];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let value = kronrod * half;
    let resasc = asc * half.abs();
    let resabs = abs_sum * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// Globally adaptive 21-point Gauss–Kronrod on a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    integrate_with_breaks(f, &[a, b], cfg)
}

/// Adaptive Gauss–Kronrod over consecutive intervals defined by `breaks`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    cfg.validate()?;
    if breaks.len() < 2 {
        return Err(Error::config("need at least two break points"));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let seg = kronrod21(&f, w[0], w[1]);
        total += seg.value;
        err += seg.error;
        heap.push(seg);
    }
    let mut evaluations = 21 * heap.len();
    let mut splits = 0;
    while err > cfg.tolerance(total) {
        if splits >= cfg.max_subdivisions {
            return Err(Error::Accuracy {
                context: "adaptive Gauss-Kronrod".into(),
                best: total,
                error: err,
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval cannot be split further in floating point
            heap.push(worst);
            return Err(Error::Accuracy {
                context: "adaptive Gauss-Kronrod (interval exhausted)".into(),
                best: total,
                error: err,
            });
        }
        let left = kronrod21(&f, worst.a, mid);
        let right = kronrod21(&f, mid, worst.b);
        evaluations += 42;
        splits += 1;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if splits % 64 == 0 {
            // re-accumulate to shed drift from the running updates
            total = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let abs_error: f64 = heap.iter().map(|s| s.error).sum();
    if !value.is_finite() {
        return Err(Error::Accuracy {
            context: "adaptive Gauss-Kronrod produced a non-finite value".into(),
            best: value,
            error: f64::INFINITY,
        });
    }
    Ok(QuadratureResult {
        value,
        abs_error,
        evaluations,
    })
}

/// Integral over [a, ∞) through the map x = a + scale · t / (1 - t).
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if !(scale > 0.0) {
        return Err(Error::config("scale must be positive"));
    }
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - t;
        let x = a + scale * t / om;
        let v = f(x) * scale / (om * om);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_with_breaks(g, &[0.0, 0.5, 0.75, 0.9, 1.0], cfg)
}

/// Tanh-sinh rule on [a, b]. Robust to integrable endpoint singularities;
/// `f` receives the abscissa together with its distance to the nearer endpoint.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    cfg.validate()?;
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let t_max = 4.0;
    let node = |t: f64| -> f64 {
        let u = pi2 * t.sinh();
        let w = pi2 * t.cosh() / (u.cosh() * u.cosh());
        // distance from the nearer endpoint, computed without cancellation
        let comp = 1.0 / (u.abs().exp() * u.abs().cosh());
        let dist = half.abs() * comp;
        if dist == 0.0 || w == 0.0 {
            return 0.0;
        }
        let x = if u >= 0.0 {
            b - half * comp
        } else {
            a + half * comp
        };
        let v = f(x, dist) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h * half;
    let mut evaluations = 2 * k - 1;
    for _level in 0..10 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            add += node(t) + node(-t);
            evaluations += 2;
            k += 2;
        }
        sum += add;
        let next = sum * h * half;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= cfg.tolerance(estimate) * 0.1 {
            return Ok(QuadratureResult {
                value: estimate,
                abs_error: diff,
                evaluations,
            });
        }
    }
    Err(Error::Accuracy {
        context: "tanh-sinh".into(),
        best: estimate,
        error: f64::NAN,
    })
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Wynn epsilon acceleration of a sequence of partial sums.
/// Returns the latest extrapolated limit and a crude error estimate.
pub(crate) fn wynn_epsilon(partials: &[f64]) -> (f64, f64) {
    let n = partials.len();
    if n < 3 {
        let last = *partials.last().unwrap_or(&0.0);
        return (last, f64::INFINITY);
    }
    // table[k] holds column k of the epsilon table for the current diagonal
    let mut prev2 = vec![0.0; n];
    let mut prev: Vec<f64> = partials.to_vec();
    let mut best = partials[n - 1];
    let mut best_err = (partials[n - 1] - partials[n - 2]).abs();
    let mut col = 1;
    loop {
        let len = prev.len();
        if len < 2 {
            break;
        }
        let mut next = Vec::with_capacity(len - 1);
        for i in 0..len - 1 {
            let d = prev[i + 1] - prev[i];
            let base = if col == 1 { 0.0 } else { prev2[i + 1] };
            if d == 0.0 {
                next.push(f64::INFINITY);
            } else {
                next.push(base + 1.0 / d);
            }
        }
        if col % 2 == 0 {
            // even columns hold the extrapolated values
            let m = next.len();
            if m >= 2 && next[m - 1].is_finite() && next[m - 2].is_finite() {
                let err = (next[m - 1] - next[m - 2]).abs();
                if err < best_err {
                    best_err = err;
                    best = next[m - 1];
                }
            }
        }
        prev2 = prev;
        prev = next;
        col += 1;
    }
    (best, best_err)
}
