//! Monte Carlo ground truth for the exact evaluators.
//!
//! Networks are sampled weight by weight. Work is split into fixed-size
//! chunks; chunk `i` draws from ChaCha8 seeded with the master seed on stream
//! `i`, and chunk results are merged in index order, so every summary is
//! independent of the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_prior::{Activation, NetworkSpec};
use crate::specfun::{integrate_with_breaks, CompensatedSum, QuadratureConfig};

pub const CHUNK_SIZE: u64 = 1 << 16;
/// Largest number of stored output coordinates before falling back to
/// streaming summaries.
pub const MAX_STORED_VALUES: u64 = 60_000_000;
pub const MOMENT_BATCHES: usize = 32;
/// Norm powers kept by the streaming summary.
pub const STREAM_ORDERS: usize = 8;

/// Which scalar a histogram is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// One output coordinate, on a symmetric range.
    Component(usize),
    /// The output norm, on `[0, R]`.
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDensity {
    pub projection: Projection,
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub counts: Vec<u64>,
    /// All samples, including exact zeros and those outside the range.
    pub total: u64,
    /// Exact zeros left out of the continuous histogram.
    pub zeros: u64,
    pub out_of_range: u64,
}

impl HistogramDensity {
    fn from_counts(projection: Projection, bin_edges: Vec<f64>, counts: Vec<u64>, total: u64, zeros: u64, out_of_range: u64) -> Self {
        let densities = counts
            .iter()
            .zip(bin_edges.windows(2))
            .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
            .collect();
        Self {
            projection,
            bin_edges,
            densities,
            counts,
            total,
            zeros,
            out_of_range,
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }
}

/// Moment sums of one sample block, split into batches for batch-means errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    /// `[batch][m]` = Σ ‖h‖^m for m = 0..=STREAM_ORDERS.
    pub norm_power_sums: Vec<Vec<f64>>,
    /// `[batch][m]` = Σ h_0^m for m = 0..=4.
    pub component_power_sums: Vec<Vec<f64>>,
    pub histogram: Option<HistogramDensity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub spec: NetworkSpec,
    pub master_seed: u64,
    pub count: u64,
    pub zero_count: u64,
    /// Flat `count × n_d` outputs; `None` when only summaries were kept.
    pub outputs: Option<Vec<f64>>,
    pub summary: StreamSummary,
}

impl SampleBatch {
    pub fn out_width(&self) -> usize {
        self.spec.out_width()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.zero_count as f64 / self.count as f64
    }

    pub fn norms(&self) -> Option<Vec<f64>> {
        let nd = self.out_width();
        self.outputs
            .as_ref()
            .map(|o| o.chunks(nd).map(|h| h.iter().map(|x| x * x).sum::<f64>().sqrt()).collect())
    }
}

/// Options for [`sample_outputs_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub store_outputs: bool,
    /// Streaming histogram: projection, bin count and range half-width.
    pub histogram: Option<(Projection, usize, f64)>,
}

fn check_sampling_spec(spec: &NetworkSpec) -> Result<()> {
    if spec.widths.len() < 2 || spec.weight_std.len() != spec.widths.len() - 1 {
        return Err(Error::config("malformed network spec"));
    }
    if spec.widths.iter().any(|&n| n == 0) {
        return Err(Error::config("all widths must be at least 1"));
    }
    // zero weight scales are allowed here: they give a degenerate prior
    if spec.weight_std.iter().any(|&s| !(s >= 0.0 && s.is_finite())) || !(spec.input_norm >= 0.0 && spec.input_norm.is_finite()) {
        return Err(Error::config("weight scales and input norm must be finite and non-negative"));
    }
    Ok(())
}

struct Forward<'a> {
    spec: &'a NetworkSpec,
    cur: Vec<f64>,
    next: Vec<f64>,
    active: Vec<usize>,
}

impl<'a> Forward<'a> {
    fn new(spec: &'a NetworkSpec) -> Self {
        let widest = *spec.widths.iter().max().expect("nonempty");
        Self {
            spec,
            cur: Vec::with_capacity(widest),
            next: Vec::with_capacity(widest),
            active: Vec::with_capacity(widest),
        }
    }

    /// One draw of h_d. The input is taken along the first axis, which is
    /// equivalent in law to any input of the same norm.
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> &[f64] {
        let spec = self.spec;
        let d = spec.depth();
        let scale = spec.weight_std[0] * spec.input_norm;
        self.cur.clear();
        for _ in 0..spec.widths[1] {
            let z: f64 = StandardNormal.sample(rng);
            self.cur.push(scale * z);
        }
        for l in 2..=d {
            if spec.activation == Activation::Relu {
                for v in self.cur.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            // weights multiplying exact zeros never influence the output
            self.active.clear();
            self.active.extend((0..self.cur.len()).filter(|&j| self.cur[j] != 0.0));
            let sigma = spec.weight_std[l - 1];
            self.next.clear();
            for _ in 0..spec.widths[l] {
                let mut acc = 0.0;
                for &j in &self.active {
                    let z: f64 = StandardNormal.sample(rng);
                    acc += z * self.cur[j];
                }
                self.next.push(sigma * acc);
            }
            std::mem::swap(&mut self.cur, &mut self.next);
        }
        &self.cur
    }
}

struct ChunkResult {
    outputs: Vec<f64>,
    zeros: u64,
    norm_sums: Vec<Vec<f64>>,
    comp_sums: Vec<Vec<f64>>,
    hist: Vec<u64>,
    hist_zeros: u64,
    hist_out: u64,
}

fn batch_of(index: u64, count: u64) -> usize {
    ((index as u128 * MOMENT_BATCHES as u128) / count as u128) as usize
}

fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(x >= lo && x < hi) {
        return None;
    }
    let i = ((x - lo) / (hi - lo) * bins as f64) as usize;
    Some(i.min(bins - 1))
}

fn project(h: &[f64], p: Projection) -> f64 {
    match p {
        Projection::Component(i) => h[i],
        Projection::Radial => h.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

fn histogram_range(p: Projection, half_range: f64) -> (f64, f64) {
    match p {
        Projection::Component(_) => (-half_range, half_range),
        Projection::Radial => (0.0, half_range),
    }
}

fn run_chunk(spec: &NetworkSpec, seed: u64, chunk: u64, count: u64, opts: &SampleOptions) -> ChunkResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let start = chunk * CHUNK_SIZE;
    let end = (start + CHUNK_SIZE).min(count);
    let nd = spec.out_width();
    let mut fwd = Forward::new(spec);
    let mut res = ChunkResult {
        outputs: if opts.store_outputs {
            Vec::with_capacity((end - start) as usize * nd)
        } else {
            Vec::new()
        },
        zeros: 0,
        norm_sums: Vec::new(),
        comp_sums: Vec::new(),
        hist: vec![0; opts.histogram.map_or(0, |h| h.1)],
        hist_zeros: 0,
        hist_out: 0,
    };
    let first_batch = batch_of(start, count);
    let last_batch = batch_of(end - 1, count);
    res.norm_sums = vec![vec![0.0; STREAM_ORDERS + 1]; last_batch - first_batch + 1];
    res.comp_sums = vec![vec![0.0; 5]; last_batch - first_batch + 1];
    for i in start..end {
        let h = fwd.draw(&mut rng);
        let zero = h.iter().all(|&x| x == 0.0);
        if zero {
            res.zeros += 1;
        }
        if opts.store_outputs {
            res.outputs.extend_from_slice(h);
        }
        let b = batch_of(i, count) - first_batch;
        let r = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut p = 1.0;
        for m in 0..=STREAM_ORDERS {
            res.norm_sums[b][m] += p;
            p *= r;
        }
        let mut p = 1.0;
        for m in 0..5 {
            res.comp_sums[b][m] += p;
            p *= h[0];
        }
        if let Some((proj, bins, half)) = opts.histogram {
            if zero {
                res.hist_zeros += 1;
            } else {
                let (lo, hi) = histogram_range(proj, half);
                match bin_index(project(h, proj), lo, hi, bins) {
                    Some(k) => res.hist[k] += 1,
                    None => res.hist_out += 1,
                }
            }
        }
    }
    res
}

/// Draws `count` outputs, keeping them in memory when they fit.
pub fn sample_outputs(spec: &NetworkSpec, master_seed: u64, count: u64) -> Result<SampleBatch> {
    check_sampling_spec(spec)?;
    let store = count.saturating_mul(spec.out_width() as u64) <= MAX_STORED_VALUES;
    let histogram = if store {
        None
    } else {
        // range from a pilot run on streams disjoint from the main run
        let pilot = sample_outputs_with(spec, master_seed ^ 0x9e37_79b9_7f4a_7c15, 100_000, SampleOptions {
            store_outputs: true,
            histogram: None,
        })?;
        let range = covering_range(&pilot, Projection::Component(0))?;
        Some((Projection::Component(0), 200, range))
    };
    sample_outputs_with(spec, master_seed, count, SampleOptions {
        store_outputs: store,
        histogram,
    })
}

/// Samples and histograms in one pass. Outputs are kept when they fit in
/// memory; otherwise the range comes from a pilot run and the histogram is
/// accumulated while streaming.
pub fn sample_histogram(spec: &NetworkSpec, master_seed: u64, count: u64, p: Projection, bins: usize) -> Result<(SampleBatch, HistogramDensity)> {
    check_sampling_spec(spec)?;
    if count.saturating_mul(spec.out_width() as u64) <= MAX_STORED_VALUES {
        let batch = sample_outputs(spec, master_seed, count)?;
        let hist = empirical_density(&batch, p, bins)?;
        return Ok((batch, hist));
    }
    let pilot = sample_outputs_with(spec, master_seed ^ 0x9e37_79b9_7f4a_7c15, 100_000, SampleOptions {
        store_outputs: true,
        histogram: None,
    })?;
    // headroom for the rarer extremes of the full run
    let range = 1.25 * covering_range(&pilot, p)?;
    let batch = sample_outputs_with(spec, master_seed, count, SampleOptions {
        store_outputs: false,
        histogram: Some((p, bins, range)),
    })?;
    let hist = batch.summary.histogram.clone().expect("histogram requested");
    Ok((batch, hist))
}

pub fn sample_outputs_with(spec: &NetworkSpec, master_seed: u64, count: u64, opts: SampleOptions) -> Result<SampleBatch> {
    check_sampling_spec(spec)?;
    if count == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    if let Some((p, bins, half)) = opts.histogram {
        if bins == 0 || !(half > 0.0 && half.is_finite()) {
            return Err(Error::config("histogram needs at least one bin and a positive range"));
        }
        if let Projection::Component(i) = p {
            if i >= spec.out_width() {
                return Err(Error::config(format!("component {i} is out of range")));
            }
        }
    }
    if opts.store_outputs && count.saturating_mul(spec.out_width() as u64) > MAX_STORED_VALUES {
        return Err(Error::Resource(format!(
            "storing {count} outputs exceeds the in-memory budget; use streaming summaries"
        )));
    }
    let chunks = count.div_ceil(CHUNK_SIZE);
    let results: Vec<ChunkResult> = (0..chunks)
        .into_par_iter()
        .map(|c| run_chunk(spec, master_seed, c, count, &opts))
        .collect();
    let mut norm_sums = vec![vec![CompensatedSum::default(); STREAM_ORDERS + 1]; MOMENT_BATCHES];
    let mut comp_sums = vec![vec![CompensatedSum::default(); 5]; MOMENT_BATCHES];
    let mut outputs = if opts.store_outputs {
        Vec::with_capacity(count as usize * spec.out_width())
    } else {
        Vec::new()
    };
    let mut zero_count = 0;
    let mut hist = vec![0u64; opts.histogram.map_or(0, |h| h.1)];
    let (mut hist_zeros, mut hist_out) = (0, 0);
    for (c, r) in results.into_iter().enumerate() {
        let first = batch_of(c as u64 * CHUNK_SIZE, count);
        for (b, sums) in r.norm_sums.iter().enumerate() {
            for (m, &s) in sums.iter().enumerate() {
                norm_sums[first + b][m].add(s);
            }
        }
        for (b, sums) in r.comp_sums.iter().enumerate() {
            for (m, &s) in sums.iter().enumerate() {
                comp_sums[first + b][m].add(s);
            }
        }
        zero_count += r.zeros;
        outputs.extend(r.outputs);
        for (k, v) in r.hist.iter().enumerate() {
            hist[k] += v;
        }
        hist_zeros += r.hist_zeros;
        hist_out += r.hist_out;
    }
    let histogram = opts.histogram.map(|(p, bins, half)| {
        let (lo, hi) = histogram_range(p, half);
        let edges = uniform_edges(lo, hi, bins);
        HistogramDensity::from_counts(p, edges, hist, count, hist_zeros, hist_out)
    });
    Ok(SampleBatch {
        spec: spec.clone(),
        master_seed,
        count,
        zero_count,
        outputs: if opts.store_outputs { Some(outputs) } else { None },
        summary: StreamSummary {
            norm_power_sums: norm_sums.iter().map(|v| v.iter().map(|s| s.value()).collect()).collect(),
            component_power_sums: comp_sums.iter().map(|v| v.iter().map(|s| s.value()).collect()).collect(),
            histogram,
        },
    })
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 })
        .collect()
}

fn projected_nonzero(batch: &SampleBatch, p: Projection) -> Result<Vec<f64>> {
    let nd = batch.out_width();
    if let Projection::Component(i) = p {
        if i >= nd {
            return Err(Error::config(format!("component {i} is out of range")));
        }
    }
    let outputs = batch
        .outputs
        .as_ref()
        .ok_or_else(|| Error::Resource("outputs were not stored; use the streaming histogram".into()))?;
    Ok(outputs
        .chunks(nd)
        .filter(|h| !h.iter().all(|&x| x == 0.0))
        .map(|h| project(h, p))
        .collect())
}

/// Half-width (or radius) covering at least 99.9% of the continuous mass.
pub fn covering_range(batch: &SampleBatch, p: Projection) -> Result<f64> {
    let mut mags: Vec<f64> = projected_nonzero(batch, p)?.into_iter().map(f64::abs).collect();
    if mags.is_empty() {
        return Err(Error::Degenerate("no non-zero samples to histogram".into()));
    }
    mags.sort_by(f64::total_cmp);
    let idx = ((mags.len() as f64 * 0.9995).ceil() as usize).min(mags.len() - 1);
    let r = mags[idx] * (1.0 + 1e-12);
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::Degenerate("all non-zero samples are at the origin".into()))
    }
}

/// Normalized histogram of the stored outputs. Exact zeros are excluded and
/// counted separately; densities are normalized by the full sample count.
pub fn empirical_density(batch: &SampleBatch, p: Projection, bins: usize) -> Result<HistogramDensity> {
    let range = covering_range(batch, p)?;
    histogram_with_range(batch, p, bins, range)
}

/// Like [`empirical_density`] on a caller-chosen range.
pub fn histogram_with_range(batch: &SampleBatch, p: Projection, bins: usize, half_range: f64) -> Result<HistogramDensity> {
    if bins == 0 || !(half_range > 0.0 && half_range.is_finite()) {
        return Err(Error::config("histogram needs at least one bin and a positive range"));
    }
    let values = projected_nonzero(batch, p)?;
    if values.is_empty() {
        return Err(Error::Degenerate("no non-zero samples to histogram".into()));
    }
    let (lo, hi) = histogram_range(p, half_range);
    let mut counts = vec![0u64; bins];
    let mut out = 0;
    for x in &values {
        match bin_index(*x, lo, hi, bins) {
            Some(k) => counts[k] += 1,
            None => out += 1,
        }
    }
    let zeros = batch.count - values.len() as u64;
    Ok(HistogramDensity::from_counts(p, uniform_edges(lo, hi, bins), counts, batch.count, zeros, out))
}

fn batch_means_error(sums: &[f64], counts: &[f64]) -> (f64, f64) {
    let total: f64 = counts.iter().sum();
    let mean = sums.iter().sum::<f64>() / total;
    let used: Vec<(f64, f64)> = sums.iter().zip(counts).filter(|(_, &c)| c > 0.0).map(|(&s, &c)| (s, c)).collect();
    let k = used.len() as f64;
    if k < 2.0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = used.iter().map(|(s, c)| s / c).collect();
    let avg = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn batch_counts(count: u64) -> Vec<f64> {
    let mut c = vec![0.0; MOMENT_BATCHES];
    for b in 0..MOMENT_BATCHES as u64 {
        // batch b holds indices i with floor(32 i / count) = b
        let lo = (b as u128 * count as u128).div_ceil(MOMENT_BATCHES as u128);
        let hi = ((b + 1) as u128 * count as u128).div_ceil(MOMENT_BATCHES as u128);
        c[b as usize] = (hi - lo) as f64;
    }
    c
}

/// Sample mean of `‖h_d‖^m` with a batch-means standard error.
pub fn empirical_moment(batch: &SampleBatch, m: f64) -> Result<(f64, f64)> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("moment order must be finite and non-negative, got {m}")));
    }
    if m == 0.0 {
        return Ok((1.0, 0.0));
    }
    let counts = batch_counts(batch.count);
    if m.fract() == 0.0 && (m as usize) <= STREAM_ORDERS {
        let sums: Vec<f64> = batch.summary.norm_power_sums.iter().map(|v| v[m as usize]).collect();
        return Ok(batch_means_error(&sums, &counts));
    }
    let norms = batch
        .norms()
        .ok_or_else(|| Error::Resource("outputs were not stored; only integer orders up to 8 are available".into()))?;
    let mut sums = vec![CompensatedSum::default(); MOMENT_BATCHES];
    for (i, r) in norms.iter().enumerate() {
        sums[batch_of(i as u64, batch.count)].add(r.powf(m));
    }
    let sums: Vec<f64> = sums.iter().map(|s| s.value()).collect();
    Ok(batch_means_error(&sums, &counts))
}

/// Raw moment `E h_0^m`, m ≤ 4, of the first output coordinate.
pub fn empirical_component_moment(batch: &SampleBatch, m: usize) -> Result<(f64, f64)> {
    if m > 4 {
        return Err(Error::config("component moments are kept up to order 4"));
    }
    let sums: Vec<f64> = batch.summary.component_power_sums.iter().map(|v| v[m]).collect();
    Ok(batch_means_error(&sums, &batch_counts(batch.count)))
}

/// Average of `f` over each histogram bin, paired with bin centers.
pub fn bin_averaged<F: Fn(f64) -> f64>(f: F, hist: &HistogramDensity, cfg: &QuadratureConfig) -> Result<Vec<(f64, f64)>> {
    hist.bin_edges
        .windows(2)
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            let v = integrate_with_breaks(&f, &[a, 0.5 * (a + b), b], cfg)?.value / (b - a);
            Ok((0.5 * (a + b), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub max_abs_deviation: f64,
    pub max_z: f64,
    pub bins_tested: usize,
    pub min_count: u64,
    pub z_limit: f64,
    pub pass: bool,
}

pub const MIN_BIN_COUNT: u64 = 1000;
pub const Z_LIMIT: f64 = 4.0;

/// Per-bin binomial z-scores of the histogram against bin-averaged exact
/// densities given at the bin centers.
pub fn compare_density(exact: &[(f64, f64)], hist: &HistogramDensity) -> Result<DensityComparison> {
    let centers = hist.centers();
    if exact.len() != centers.len() {
        return Err(Error::config(format!(
            "exact curve has {} points but the histogram has {} bins",
            exact.len(),
            centers.len()
        )));
    }
    let n = hist.total as f64;
    let mut max_dev: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    let mut tested = 0;
    for (i, (&(x, p), c)) in exact.iter().zip(&centers).enumerate() {
        let w = hist.bin_edges[i + 1] - hist.bin_edges[i];
        if (x - c).abs() > 1e-9 * w.max(c.abs()) {
            return Err(Error::config(format!("exact grid point {x} is not the bin center {c}")));
        }
        if hist.counts[i] < MIN_BIN_COUNT {
            continue;
        }
        tested += 1;
        let prob = (p * w).clamp(0.0, 1.0);
        let sd = (n * prob * (1.0 - prob)).sqrt();
        let z = if sd > 0.0 {
            (hist.counts[i] as f64 - n * prob) / sd
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z.abs());
        max_dev = max_dev.max((hist.densities[i] - p).abs());
    }
    Ok(DensityComparison {
        max_abs_deviation: max_dev,
        max_z,
        bins_tested: tested,
        min_count: MIN_BIN_COUNT,
        z_limit: Z_LIMIT,
        pass: tested > 0 && max_z <= Z_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(hidden: &[usize], out: usize) -> NetworkSpec {
        NetworkSpec::with_kappa(hidden, out, 1.0, Activation::Linear).unwrap()
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let spec = lin(&[2, 3], 2);
        let a = sample_outputs(&spec, 7, 150_000).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sample_outputs(&spec, 7, 150_000).unwrap());
        assert_eq!(a, b);
        let c = sample_outputs(&spec, 8, 150_000).unwrap();
        assert_ne!(a.outputs, c.outputs);
    }

    #[test]
    fn zero_scale_gives_zero_outputs() {
        let spec = NetworkSpec {
            widths: vec![1, 3, 1],
            weight_std: vec![1.0, 0.0],
            input_norm: 1.0,
            activation: Activation::Linear,
        };
        let b = sample_outputs(&spec, 1, 1000).unwrap();
        assert_eq!(b.zero_count, 1000);
    }

    #[test]
    fn moment_zero_and_batches() {
        let b = sample_outputs(&lin(&[2], 1), 3, 1000).unwrap();
        assert_eq!(empirical_moment(&b, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(batch_counts(1000).iter().sum::<f64>(), 1000.0);
        let (m, _) = empirical_moment(&b, 2.0).unwrap();
        let direct: f64 = b.norms().unwrap().iter().map(|r| r * r).sum::<f64>() / 1000.0;
        assert!((m - direct).abs() < 1e-12 * direct);
        let (m3, _) = empirical_moment(&b, 2.5).unwrap();
        let direct: f64 = b.norms().unwrap().iter().map(|r| r.powf(2.5)).sum::<f64>() / 1000.0;
        assert!((m3 - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn histogram_mass_accounting() {
        let spec = NetworkSpec::with_kappa(&[1, 1], 1, 1.0, Activation::Relu).unwrap();
        let b = sample_outputs(&spec, 5, 200_000).unwrap();
        let h = empirical_density(&b, Projection::Component(0), 50).unwrap();
        let mass: f64 = h.densities.iter().zip(h.bin_edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        let want = (h.total - h.zeros - h.out_of_range) as f64 / h.total as f64;
        assert!((mass - want).abs() < 1e-12);
        assert_eq!(h.zeros, b.zero_count);
        assert_eq!(h.counts.iter().sum::<u64>() + h.zeros + h.out_of_range, h.total);
    }

    #[test]
    fn streaming_histogram_matches_stored() {
        let spec = lin(&[3], 1);
        let stored = sample_outputs(&spec, 11, 100_000).unwrap();
        let streamed = sample_outputs_with(&spec, 11, 100_000, SampleOptions {
            store_outputs: false,
            histogram: Some((Projection::Component(0), 40, 5.0)),
        })
        .unwrap();
        let direct = histogram_with_range(&stored, Projection::Component(0), 40, 5.0).unwrap();
        assert_eq!(streamed.summary.histogram.as_ref().unwrap().counts, direct.counts);
        assert_eq!(stored.summary, StreamSummary { histogram: None, ..streamed.summary.clone() });
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let b = sample_outputs(&lin(&[2], 1), 3, 10_000).unwrap();
        let h = empirical_density(&b, Projection::Component(0), 10).unwrap();
        let shifted: Vec<(f64, f64)> = h.centers().iter().map(|c| (c + 0.1, 0.1)).collect();
        assert!(compare_density(&shifted, &h).is_err());
        assert!(compare_density(&shifted[1..], &h).is_err());
    }
}
