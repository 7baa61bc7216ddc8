use std::path::{Path, PathBuf};
use std::time::Instant;

use bnnprior::asymptotics::{edgeworth_density, gaussian_limit_density, WidthScaledSpec};
use bnnprior::linear_prior::{
    charfun_linear, density_linear, geometric_grid, ln_moment_norm_linear, paper_kappa, Activation, DensityValue,
    NetworkSpec,
};
use bnnprior::mc_oracle::{
    bin_averaged, compare_density, empirical_component_moment, empirical_moment, sample_histogram, HistogramDensity,
    Projection, SampleBatch,
};
use bnnprior::relu_prior::{
    enumerate_terms, ln_moment_norm_relu, MixtureEvaluator, ReluMixture, TruncationMode, DEFAULT_THRESHOLD,
};
use bnnprior::specfun::{ContourConfig, QuadratureConfig};
use bnnprior::tails::{estimate_tail_parameter, root_moment_curve};
use bnnprior::validation::{run_validation, ValidationConfig};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{is_accuracy, CliError};
use crate::output::{emit, format_list, pretty, Cell, Table, SCHEMA_VERSION};

type CliResult<T> = Result<T, CliError>;

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Density(a) => cmd_density(&a),
        Command::Charfun(a) => cmd_charfun(&a),
        Command::Moments(a) => cmd_moments(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Tail(a) => cmd_tail(&a),
        Command::Figure(a) => cmd_figure(&a),
    }
}

fn activation(a: Option<ActivationArg>) -> Activation {
    match a {
        Some(ActivationArg::Relu) => Activation::Relu,
        _ => Activation::Linear,
    }
}

fn act_name(a: Activation) -> &'static str {
    match a {
        Activation::Linear => "linear",
        Activation::Relu => "relu",
    }
}

pub fn build_spec(a: &SpecArgs) -> CliResult<NetworkSpec> {
    let act = activation(a.activation);
    let hidden: Vec<usize> = a.widths.clone().map(|l| l.0).unwrap_or_default();
    let depth = match a.depth {
        Some(0) => return Err(CliError::config("depth must be at least 1")),
        Some(d) => d,
        None if a.widths.is_some() => hidden.len() + 1,
        None => return Err(CliError::config("give --depth and --widths (hidden widths)")),
    };
    if hidden.len() != depth - 1 {
        return Err(CliError::config(format!(
            "depth {depth} needs {} hidden widths, got {}",
            depth - 1,
            hidden.len()
        )));
    }
    let out = a.out_width.unwrap_or(1);
    let n0 = a.input_width.unwrap_or(1);
    let input_norm = a.input_norm.unwrap_or(1.0);
    let explicit_given = a.sigma.is_some() || a.kappa.is_some();
    let mode = a.kappa_mode.unwrap_or(if explicit_given {
        KappaMode::Explicit
    } else if act == Activation::Relu {
        KappaMode::PaperRelu
    } else {
        KappaMode::PaperLinear
    });
    let mut widths = Vec::with_capacity(depth + 1);
    widths.push(n0);
    widths.extend_from_slice(&hidden);
    widths.push(out);
    let sigma = match mode {
        KappaMode::PaperLinear | KappaMode::PaperRelu => {
            if explicit_given {
                return Err(CliError::config("--sigma and --kappa need --kappa-mode explicit"));
            }
            let basis = if mode == KappaMode::PaperRelu {
                Activation::Relu
            } else {
                Activation::Linear
            };
            let mut s = vec![1.0; depth];
            s[0] = paper_kappa(&hidden, basis) / input_norm;
            s
        }
        KappaMode::Explicit => match (&a.sigma, a.kappa) {
            (Some(_), Some(_)) => return Err(CliError::config("give either --sigma or --kappa, not both")),
            (Some(s), None) => {
                if s.0.len() != depth {
                    return Err(CliError::config(format!("--sigma needs {depth} values, got {}", s.0.len())));
                }
                s.0.clone()
            }
            (None, Some(k)) => {
                let mut s = vec![1.0; depth];
                s[0] = k / input_norm;
                s
            }
            (None, None) => return Err(CliError::config("explicit kappa mode needs --sigma or --kappa")),
        },
    };
    Ok(NetworkSpec::new(widths, sigma, input_norm, act)?)
}

fn contour_cfg(tol: Option<f64>) -> CliResult<ContourConfig> {
    let cfg = ContourConfig::with_tol(tol.unwrap_or(1e-12));
    cfg.validate()?;
    Ok(cfg)
}

fn trunc(mode: Option<TruncArg>, threshold: Option<f64>) -> CliResult<(TruncationMode, f64)> {
    let m = match mode.unwrap_or(TruncArg::Product) {
        TruncArg::None => TruncationMode::None,
        TruncArg::PerFactor => TruncationMode::PerFactor,
        TruncArg::Product => TruncationMode::Product,
    };
    let t = threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(t >= 0.0 && t < 1.0) {
        return Err(CliError::config(format!("trunc-threshold must lie in [0, 1), got {t}")));
    }
    Ok((m, t))
}

fn grid_points(g: &GridArgs, default: GridSpec) -> CliResult<Vec<f64>> {
    let spec = g.grid.unwrap_or(default);
    if spec.points == 0 {
        return Err(CliError::config("grid is empty"));
    }
    if !(spec.min >= 0.0 && spec.max >= spec.min && spec.max.is_finite()) {
        return Err(CliError::config(format!(
            "grid needs 0 <= min <= max, got {}:{}",
            spec.min, spec.max
        )));
    }
    if spec.points == 1 {
        return Ok(vec![spec.min]);
    }
    match g.grid_spacing.unwrap_or(Spacing::Linear) {
        Spacing::Linear => Ok((0..spec.points)
            .map(|i| spec.min + (spec.max - spec.min) * i as f64 / (spec.points - 1) as f64)
            .collect()),
        Spacing::Geometric => {
            if spec.min <= 0.0 {
                return Err(CliError::config("geometric grids need min > 0"));
            }
            Ok(geometric_grid(spec.min, spec.max, spec.points)?)
        }
    }
}

fn spec_metadata(t: &mut Table, spec: &NetworkSpec) {
    t.meta("activation", act_name(spec.activation));
    t.meta("widths", format_list(&spec.widths));
    t.meta("weight_std", format_list(&spec.weight_std));
    t.meta("input_norm", spec.input_norm);
    t.meta("kappa", format!("{:.14e}", spec.kappa()));
}

fn mixture_metadata(t: &mut Table, mix: &ReluMixture, components: usize) {
    t.meta("atom_mass", format!("{:.14e}", mix.atom_mass));
    t.meta("truncation_mode", mix.truncation_mode.name());
    t.meta("truncation_threshold", format!("{:e}", mix.truncation_threshold));
    t.meta("mixture_terms", mix.terms.len());
    t.meta("mixture_components", components);
    t.meta("discarded_mass", format!("{:.14e}", mix.discarded_mass));
}

fn write_table(t: &Table, common: &CommonArgs) -> CliResult<()> {
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => t.to_csv(),
        Format::Json => pretty(&t.to_json()),
    };
    emit(common.out.as_deref(), &text)
}

/// Exact density evaluator for either activation.
pub struct Exact {
    spec: NetworkSpec,
    cfg: ContourConfig,
    mixture: Option<(ReluMixture, MixtureEvaluator)>,
}

impl Exact {
    pub fn new(spec: &NetworkSpec, cfg: ContourConfig, trunc: (TruncationMode, f64)) -> CliResult<Self> {
        let mixture = match spec.activation {
            Activation::Linear => None,
            Activation::Relu => {
                let mix = enumerate_terms(spec, trunc.0, trunc.1)?;
                let ev = MixtureEvaluator::new(spec, &mix)?;
                Some((mix, ev))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            cfg,
            mixture,
        })
    }

    fn density(&self, r: f64) -> bnnprior::Result<DensityValue> {
        match &self.mixture {
            None => density_linear(&self.spec, r, &self.cfg),
            Some((_, ev)) => ev.density_value(r, &self.cfg),
        }
    }

    fn charfun(&self, q: f64) -> bnnprior::Result<f64> {
        match &self.mixture {
            None => charfun_linear(&self.spec, q, &self.cfg),
            Some((_, ev)) => ev.charfun(q, &self.cfg),
        }
    }

    fn annotate(&self, t: &mut Table) {
        spec_metadata(t, &self.spec);
        if let Some((mix, ev)) = &self.mixture {
            mixture_metadata(t, mix, ev.components());
        }
    }
}

/// Row value or error text; tracks whether any error was an accuracy failure.
struct RowErrors {
    accuracy: usize,
    other: usize,
}

impl RowErrors {
    fn new() -> Self {
        Self { accuracy: 0, other: 0 }
    }

    fn cell(&mut self, r: bnnprior::Result<DensityValue>) -> (Cell, Cell) {
        match r {
            Ok(DensityValue::Finite(v)) => (Cell::num(v), Cell::Empty),
            Ok(DensityValue::Divergent) => (Cell::Empty, Cell::Text("divergent".into())),
            Err(e) => {
                if is_accuracy(&e) {
                    self.accuracy += 1;
                } else {
                    self.other += 1;
                }
                (Cell::Empty, Cell::Text(e.to_string()))
            }
        }
    }

    fn finish(&self) -> CliResult<()> {
        if self.accuracy > 0 {
            return Err(CliError::Accuracy(format!("{} grid points missed the accuracy target", self.accuracy)));
        }
        if self.other > 0 {
            return Err(CliError::config(format!("{} grid points could not be evaluated", self.other)));
        }
        Ok(())
    }
}

fn density_table(exact: &Exact, radii: &[f64], with_edgeworth: bool, errors: &mut RowErrors) -> CliResult<Table> {
    let ws = WidthScaledSpec::from_spec(&exact.spec)?;
    let mut cols = vec!["radius", "exact_density", "gaussian_limit"];
    if with_edgeworth {
        cols.push("edgeworth");
    }
    cols.push("error");
    let mut t = Table::new("density", &cols);
    exact.annotate(&mut t);
    t.meta("limit_variance", format!("{:.14e}", ws.limit_variance()));
    for &r in radii {
        let (v, err) = errors.cell(exact.density(r));
        let mut row = vec![Cell::num(r), v, Cell::num(gaussian_limit_density(&ws, r))];
        if with_edgeworth {
            row.push(Cell::num(edgeworth_density(&ws, r).value));
        }
        row.push(err);
        t.rows.push(row);
    }
    Ok(t)
}

fn cmd_density(a: &DensityArgs) -> CliResult<()> {
    let spec = build_spec(&a.spec)?;
    let cfg = contour_cfg(a.spec.tol)?;
    let radii = grid_points(&a.grid, GridSpec { min: 0.0, max: 4.0, points: 81 })?;
    let exact = Exact::new(&spec, cfg, trunc(a.spec.trunc_mode, a.spec.trunc_threshold)?)?;
    let mut errors = RowErrors::new();
    let t = density_table(&exact, &radii, a.edgeworth.unwrap_or(false), &mut errors)?;
    write_table(&t, &a.common)?;
    errors.finish()
}

fn cmd_charfun(a: &CharfunArgs) -> CliResult<()> {
    let spec = build_spec(&a.spec)?;
    let cfg = contour_cfg(a.spec.tol)?;
    let qs = grid_points(&a.grid, GridSpec { min: 0.0, max: 10.0, points: 101 })?;
    let exact = Exact::new(&spec, cfg, trunc(a.spec.trunc_mode, a.spec.trunc_threshold)?)?;
    let mut t = Table::new("charfun", &["frequency", "charfun", "error"]);
    exact.annotate(&mut t);
    let mut errors = RowErrors::new();
    for &q in &qs {
        let (v, err) = errors.cell(exact.charfun(q).map(DensityValue::Finite));
        t.rows.push(vec![Cell::num(q), v, err]);
    }
    write_table(&t, &a.common)?;
    errors.finish()
}

fn ln_moment(spec: &NetworkSpec, m: f64) -> bnnprior::Result<f64> {
    match spec.activation {
        Activation::Linear => ln_moment_norm_linear(spec, m),
        Activation::Relu => ln_moment_norm_relu(spec, m),
    }
}

fn cmd_moments(a: &MomentsArgs) -> CliResult<()> {
    let spec = build_spec(&a.spec)?;
    let orders = a.orders.clone().map(|l| l.0).unwrap_or_else(|| vec![2.0, 4.0, 6.0, 8.0]);
    if let Some(bad) = orders.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(CliError::config(format!("moment orders must be non-negative, got {bad}")));
    }
    let samples = a.samples.unwrap_or(0);
    let batch = if samples > 0 {
        Some(bnnprior::mc_oracle::sample_outputs(&spec, a.seed.unwrap_or(0), samples)?)
    } else {
        None
    };
    let mut cols = vec!["order", "moment", "ln_moment"];
    if batch.is_some() {
        cols.extend(["mc_estimate", "mc_standard_error", "z_score"]);
    }
    let mut t = Table::new("moments", &cols);
    spec_metadata(&mut t, &spec);
    if let Some(b) = &batch {
        t.meta("samples", b.count);
        t.meta("seed", b.master_seed);
    }
    for &m in &orders {
        let ln = ln_moment(&spec, m)?;
        let exact = ln.exp();
        let mut row = vec![Cell::num(m), Cell::num(exact), Cell::num(ln)];
        if let Some(b) = &batch {
            let (est, se) = empirical_moment(b, m)?;
            row.extend([Cell::num(est), Cell::num(se), Cell::num((est - exact) / se)]);
        }
        t.rows.push(row);
    }
    write_table(&t, &a.common)
}

fn parse_projection(p: Option<&str>, out_width: usize) -> CliResult<Projection> {
    match p {
        None => Ok(Projection::Component(0)),
        Some("radial") => Ok(Projection::Radial),
        Some(s) => {
            let i: usize = s
                .parse()
                .map_err(|_| CliError::config(format!("projection must be a component index or 'radial', got '{s}'")))?;
            if i >= out_width {
                return Err(CliError::config(format!("component {i} is out of range for output width {out_width}")));
            }
            Ok(Projection::Component(i))
        }
    }
}

fn summary_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| out.map(|o| o.with_extension("json")))
}

fn histogram_table(command: &str, hist: &HistogramDensity, exact: Option<&[(f64, f64)]>) -> Table {
    let mut cols = vec!["bin_lo", "bin_hi", "center", "density", "count"];
    if exact.is_some() {
        cols.extend(["exact_bin_average", "z_score"]);
    }
    let mut t = Table::new(command, &cols);
    let n = hist.total as f64;
    for i in 0..hist.bin_count() {
        let (lo, hi) = (hist.bin_edges[i], hist.bin_edges[i + 1]);
        let mut row = vec![
            Cell::num(lo),
            Cell::num(hi),
            Cell::num(0.5 * (lo + hi)),
            Cell::num(hist.densities[i]),
            Cell::Int(hist.counts[i]),
        ];
        if let Some(e) = exact {
            let p = (e[i].1 * (hi - lo)).clamp(0.0, 1.0);
            let sd = (n * p * (1.0 - p)).sqrt();
            row.push(Cell::num(e[i].1));
            row.push(Cell::num((hist.counts[i] as f64 - n * p) / sd));
        }
        t.rows.push(row);
    }
    t
}

fn batch_summary(batch: &SampleBatch, hist: &HistogramDensity, atom: Option<f64>) -> CliResult<Value> {
    let mut moments = Vec::new();
    for m in [2.0, 4.0, 6.0, 8.0] {
        let (est, se) = empirical_moment(batch, m)?;
        let exact = ln_moment(&batch.spec, m)?.exp();
        moments.push(json!({ "order": m, "estimate": est, "standard_error": se, "exact": exact }));
    }
    let mut comp = Vec::new();
    for m in 1..=4 {
        let (est, se) = empirical_component_moment(batch, m)?;
        comp.push(json!({ "order": m, "estimate": est, "standard_error": se }));
    }
    let zf = batch.zero_fraction();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "spec": batch.spec,
        "seed": batch.master_seed,
        "count": batch.count,
        "zero_count": batch.zero_count,
        "zero_fraction": zf,
        "zero_fraction_standard_error": (zf * (1.0 - zf) / batch.count as f64).sqrt(),
        "atom_mass": atom,
        "norm_moments": moments,
        "component_moments": comp,
        "histogram": {
            "projection": hist.projection,
            "bins": hist.bin_count(),
            "range": [hist.bin_edges[0], hist.bin_edges[hist.bin_count()]],
            "out_of_range": hist.out_of_range,
            "zeros": hist.zeros,
        },
    }))
}

fn cmd_sample(a: &SampleArgs) -> CliResult<()> {
    let spec = build_spec(&a.spec)?;
    let samples = a.samples.unwrap_or(1_000_000);
    let bins = a.bins.unwrap_or(100);
    if samples == 0 || bins == 0 {
        return Err(CliError::config("samples and bins must be positive"));
    }
    let seed = a.seed.unwrap_or(0);
    let proj = parse_projection(a.projection.as_deref(), spec.out_width())?;
    let atom = match spec.activation {
        Activation::Relu => Some(bnnprior::relu_prior::atom_mass(&spec)?),
        Activation::Linear => None,
    };
    let start = Instant::now();
    let (batch, hist) = sample_histogram(&spec, seed, samples, proj, bins)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut t = histogram_table("sample", &hist, None);
    spec_metadata(&mut t, &spec);
    t.meta("samples", samples);
    t.meta("seed", seed);
    t.meta("zero_count", batch.zero_count);
    t.meta("out_of_range", hist.out_of_range);
    write_table(&t, &a.common)?;
    let mut summary = batch_summary(&batch, &hist, atom)?;
    summary["timing_seconds"] = json!(elapsed);
    let text = pretty(&summary);
    match summary_path(a.summary.as_deref(), a.common.out.as_deref()) {
        Some(p) => emit(Some(&p), &text),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(a: &ValidateArgs) -> CliResult<()> {
    let d = ValidationConfig::default();
    let cfg = ValidationConfig {
        seed: a.seed.unwrap_or(d.seed),
        mc_samples: a.mc_samples.unwrap_or(d.mc_samples),
        figure_samples: a.samples.unwrap_or(d.figure_samples),
        figure_bins: a.bins.unwrap_or(d.figure_bins),
        figure_widths: a.figure_widths.clone().map(|l| l.0).unwrap_or(d.figure_widths),
        tail_m_max: a.m_max.unwrap_or(d.tail_m_max),
        only: a.only.clone().map(|l| l.0).unwrap_or_default(),
        fault: a.fault.as_deref().map(str::parse).transpose()?,
    };
    cfg.validate()?;
    let report = run_validation(&cfg)?;
    for c in &report.checks {
        eprintln!(
            "{:<5} {:<36} {:.3e} ({:?} {:.1e}){}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.measured,
            c.relation,
            c.tolerance,
            c.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
        );
    }
    let mut text = report.to_json();
    text.push('\n');
    emit(a.common.out.as_deref(), &text)?;
    if report.accuracy_failure {
        return Err(CliError::Accuracy(format!("checks errored: {}", report.failed_checks.join(", "))));
    }
    if !report.passed {
        return Err(CliError::Validation(report.failed_checks.join(", ")));
    }
    Ok(())
}

fn cmd_tail(a: &TailArgs) -> CliResult<()> {
    let spec = build_spec(&a.spec)?;
    let m_max = a.m_max.unwrap_or(400);
    let est = estimate_tail_parameter(&spec, m_max)?;
    let orders: Vec<f64> = (1..=m_max).map(|m| m as f64).collect();
    let curve = root_moment_curve(&spec, &orders)?;
    let mut t = Table::new("tail", &["order", "root_moment"]);
    spec_metadata(&mut t, &spec);
    t.meta("theta_hat", format!("{:.14e}", est.theta_hat));
    t.meta("fit_range", format!("{}:{}", est.fit_range.0, est.fit_range.1));
    for (m, v) in curve {
        t.rows.push(vec![Cell::num(m), Cell::num(v)]);
    }
    let estimate = json!({
        "schema_version": SCHEMA_VERSION,
        "depth": spec.depth(),
        "theta_expected": spec.depth() as f64 / 2.0,
        "estimate": est,
    });
    if a.common.format == Some(Format::Json) {
        let mut v = estimate;
        v["curve"] = t.to_json();
        return emit(a.common.out.as_deref(), &pretty(&v));
    }
    write_table(&t, &a.common)?;
    match summary_path(a.summary.as_deref(), a.common.out.as_deref()) {
        Some(p) => emit(Some(&p), &pretty(&estimate)),
        None => {
            eprint!("{}", pretty(&estimate));
            Ok(())
        }
    }
}

fn figure_hist(exact: &Exact, spec: &NetworkSpec, samples: u64, seed: u64, bins: usize) -> CliResult<Table> {
    let (_, hist) = sample_histogram(spec, seed, samples, Projection::Component(0), bins)?;
    let qcfg = QuadratureConfig::with_rel_tol(1e-8);
    let failure = std::cell::RefCell::new(None);
    let curve = bin_averaged(
        |x| match exact.density(x.abs()) {
            Ok(v) => v.value().unwrap_or(0.0),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &hist,
        &qcfg,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    let cmp = compare_density(&curve, &hist)?;
    let mut t = histogram_table("figure", &hist, Some(&curve));
    t.meta("samples", samples);
    t.meta("seed", seed);
    t.meta("bins_tested", cmp.bins_tested);
    t.meta("max_z", format!("{:.6}", cmp.max_z));
    t.meta("pass", cmp.pass);
    Ok(t)
}

fn cmd_figure(a: &FigureArgs) -> CliResult<()> {
    let dir = a
        .out
        .clone()
        .ok_or_else(|| CliError::config("figure needs --out DIRECTORY"))?;
    let widths = a
        .widths
        .clone()
        .map(|l| l.0)
        .ok_or_else(|| CliError::config("figure needs an explicit --widths list"))?;
    if widths.contains(&0) {
        return Err(CliError::config("widths must be positive"));
    }
    let cfg = contour_cfg(a.tol)?;
    let tr = trunc(a.trunc_mode, a.trunc_threshold)?;
    let samples = a.samples.unwrap_or(0);
    let seed = a.seed.unwrap_or(0);
    let bins = a.bins.unwrap_or(100);
    let out_width = a.out_width.unwrap_or(1);
    if out_width == 0 || bins == 0 {
        return Err(CliError::config("out-width and bins must be positive"));
    }
    let tag = match a.kind {
        FigureKind::Fig1 => "fig1",
        FigureKind::Fig2 => "fig2",
        FigureKind::Fig3 => "fig3",
        FigureKind::Fig4 => "fig4",
    };
    let default_depths = match a.kind {
        FigureKind::Fig4 => vec![3, 4],
        FigureKind::Fig2 => vec![4],
        _ => vec![2, 3, 4],
    };
    let depths = a.depths.clone().map(|l| l.0).unwrap_or(default_depths);
    if depths.contains(&0) {
        return Err(CliError::config("depths must be positive"));
    }
    if a.kind == FigureKind::Fig2 && depths != [4] {
        return Err(CliError::config("fig2 is defined for depth 4"));
    }
    let grid_default = match a.kind {
        FigureKind::Fig4 => GridSpec { min: 0.0, max: 8.0, points: 161 },
        _ => GridSpec { min: 0.0, max: 4.0, points: 161 },
    };
    let radii = grid_points(&a.grid, grid_default)?;

    // (file stem, spec)
    let mut panels: Vec<(String, NetworkSpec)> = Vec::new();
    match a.kind {
        FigureKind::Fig1 | FigureKind::Fig3 | FigureKind::Fig4 => {
            let act = if a.kind == FigureKind::Fig3 {
                Activation::Relu
            } else {
                Activation::Linear
            };
            for &d in &depths {
                for &n in &widths {
                    let spec = NetworkSpec::paper_default(&vec![n; d - 1], out_width, act)?;
                    panels.push((format!("{tag}_d{d}_n{n}"), spec));
                    if d == 1 {
                        break;
                    }
                }
            }
        }
        FigureKind::Fig2 => {
            let outer = a.outer.unwrap_or(100);
            for &n2 in &widths {
                let spec = NetworkSpec::paper_default(&[outer, n2, outer], out_width, Activation::Linear)?;
                panels.push((format!("{tag}_n2_{n2}"), spec));
            }
        }
    }

    let mut errors = RowErrors::new();
    let mut written = Vec::new();
    for (stem, spec) in &panels {
        let exact = Exact::new(spec, cfg, tr)?;
        let mut t = density_table(&exact, &radii, a.kind == FigureKind::Fig4, &mut errors)?;
        t.meta("figure", tag);
        if a.kind == FigureKind::Fig4 {
            t.columns.insert(t.columns.len() - 1, "exact_over_edgeworth".into());
            for row in &mut t.rows {
                let ratio = match (&row[1], &row[3]) {
                    (Cell::Num(e), Cell::Num(w)) => Cell::num(e / w),
                    _ => Cell::Empty,
                };
                let at = row.len() - 1;
                row.insert(at, ratio);
            }
        }
        let path = dir.join(format!("{stem}.csv"));
        emit(Some(&path), &t.to_csv())?;
        written.push(path);
        if samples > 0 {
            let mut h = figure_hist(&exact, spec, samples, seed, bins)?;
            spec_metadata(&mut h, spec);
            h.meta("figure", tag);
            let path = dir.join(format!("{stem}_hist.csv"));
            emit(Some(&path), &h.to_csv())?;
            written.push(path);
        }
    }
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    errors.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_args() -> SpecArgs {
        SpecArgs {
            depth: None,
            widths: None,
            out_width: None,
            input_width: None,
            input_norm: None,
            activation: None,
            kappa_mode: None,
            sigma: None,
            kappa: None,
            tol: None,
            trunc_mode: None,
            trunc_threshold: None,
        }
    }

    #[test]
    fn kappa_modes() {
        let mut a = spec_args();
        a.widths = Some(List(vec![4, 25]));
        let s = build_spec(&a).unwrap();
        assert!((s.kappa() - 0.1).abs() < 1e-15);
        a.activation = Some(ActivationArg::Relu);
        let s = build_spec(&a).unwrap();
        assert!((s.kappa() - 0.2).abs() < 1e-15);
        a.kappa = Some(2.0);
        let s = build_spec(&a).unwrap();
        assert_eq!(s.kappa(), 2.0);
        a.kappa_mode = Some(KappaMode::PaperLinear);
        assert!(build_spec(&a).is_err());
        a.kappa_mode = Some(KappaMode::Explicit);
        a.kappa = None;
        a.sigma = Some(List(vec![0.5, 2.0, 3.0]));
        a.input_norm = Some(2.0);
        assert!((build_spec(&a).unwrap().kappa() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn depth_and_widths_must_agree() {
        let mut a = spec_args();
        assert!(build_spec(&a).is_err());
        a.depth = Some(3);
        a.widths = Some(List(vec![2]));
        assert!(build_spec(&a).is_err());
        a.depth = Some(1);
        a.widths = None;
        assert_eq!(build_spec(&a).unwrap().depth(), 1);
    }

    #[test]
    fn grids() {
        let g = GridArgs {
            grid: Some(GridSpec { min: 0.0, max: 1.0, points: 5 }),
            grid_spacing: None,
        };
        assert_eq!(grid_points(&g, g.grid.unwrap()).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let empty = GridArgs {
            grid: Some(GridSpec { min: 0.0, max: 1.0, points: 0 }),
            grid_spacing: None,
        };
        assert!(grid_points(&empty, empty.grid.unwrap()).is_err());
        let geo = GridArgs {
            grid: Some(GridSpec { min: 0.0, max: 1.0, points: 3 }),
            grid_spacing: Some(Spacing::Geometric),
        };
        assert!(grid_points(&geo, geo.grid.unwrap()).is_err());
    }
}
