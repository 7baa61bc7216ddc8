use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bnnprior",
    version,
    about = "Exact output priors of finite deep linear and ReLU networks",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Radial density on a grid of radii
    Density(DensityArgs),
    /// Radial characteristic function on a grid of frequencies
    Charfun(CharfunArgs),
    /// Exact norm moments, optionally with Monte Carlo estimates
    Moments(MomentsArgs),
    /// Monte Carlo histogram and summary statistics
    Sample(SampleArgs),
    /// Run the consistency checks and write a JSON report
    Validate(ValidateArgs),
    /// Root-moment curve and tail parameter fit
    Tail(TailArgs),
    /// Data files for the figure panels
    Figure(FigureArgs),
}

/// A comma-separated list given as a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Err("empty list".into());
        }
        s.split(',')
            .map(|x| x.trim().parse::<T>().map_err(|e| format!("'{}': {e}", x.trim())))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

/// `min:max:points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid must look like min:max:points, got '{s}'"));
        }
        let min: f64 = parts[0].trim().parse().map_err(|e| format!("grid min: {e}"))?;
        let max: f64 = parts[1].trim().parse().map_err(|e| format!("grid max: {e}"))?;
        let points: usize = parts[2].trim().parse().map_err(|e| format!("grid points: {e}"))?;
        Ok(GridSpec { min, max, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KappaMode {
    PaperLinear,
    PaperRelu,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruncArg {
    None,
    PerFactor,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// key=value file; flags given on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Number of weight layers d
    #[arg(long)]
    pub depth: Option<usize>,
    /// Hidden widths n_1,...,n_{d-1}
    #[arg(long)]
    pub widths: Option<List<usize>>,
    /// Output width n_d
    #[arg(long)]
    pub out_width: Option<usize>,
    /// Input width n_0
    #[arg(long)]
    pub input_width: Option<usize>,
    /// Input norm ‖x‖
    #[arg(long)]
    pub input_norm: Option<f64>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long, value_enum)]
    pub kappa_mode: Option<KappaMode>,
    /// Per-layer weight standard deviations σ_1,...,σ_d
    #[arg(long)]
    pub sigma: Option<List<f64>>,
    /// Overall scale κ_d (explicit mode)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Target relative tolerance of the contour integrals
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub trunc_mode: Option<TruncArg>,
    /// Mixture cutoff (default 2^-52)
    #[arg(long)]
    pub trunc_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// min:max:points
    #[arg(long)]
    pub grid: Option<GridSpec>,
    #[arg(long, value_enum)]
    pub grid_spacing: Option<Spacing>,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Add the first-order Edgeworth column
    #[arg(long)]
    pub edgeworth: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct CharfunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Moment orders
    #[arg(long)]
    pub orders: Option<List<f64>>,
    /// Monte Carlo sample count (0 for exact values only)
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output coordinate index, or "radial" for the norm
    #[arg(long)]
    pub projection: Option<String>,
    /// Path of the JSON summary (default: next to --out)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per spec for the zero-fraction and variance checks
    #[arg(long)]
    pub mc_samples: Option<u64>,
    /// Samples per spec for the histogram comparison
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Hidden widths used in the histogram comparison
    #[arg(long)]
    pub figure_widths: Option<List<usize>>,
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Check groups to run
    #[arg(long)]
    pub only: Option<List<String>>,
    /// Inject a known fault (relu-variance-factor)
    #[arg(long)]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Path of the JSON estimate (default: next to --out)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub kind: FigureKind,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Depths d
    #[arg(long)]
    pub depths: Option<List<usize>>,
    /// Hidden widths; the bottleneck widths for fig2
    #[arg(long)]
    pub widths: Option<List<usize>>,
    /// Outer hidden width for fig2
    #[arg(long)]
    pub outer: Option<usize>,
    #[arg(long)]
    pub out_width: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Monte Carlo samples per panel (0 for none)
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub trunc_mode: Option<TruncArg>,
    #[arg(long)]
    pub trunc_threshold: Option<f64>,
}

/// Reads a `key = value` file. Keys may use `-` or `_`.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text).map_err(|m| CliError::config(format!("{}: {m}", path.display())))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(format!("line {}: duplicate key '{key}'", i + 1));
        }
    }
    Ok(map)
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Long option names accepted by a subcommand, excluding `config`.
pub fn known_keys(subcommand: &str) -> Vec<String> {
    Cli::command()
        .find_subcommand(subcommand)
        .map(|c| {
            c.get_arguments()
                .filter_map(|a| a.get_long())
                .filter(|l| *l != "config" && *l != "help")
                .map(String::from)
                .collect()
        })
        .unwrap_or_default()
}

/// Parses the command line after splicing in any config-file values, which
/// command-line flags then override.
pub fn parse(argv: Vec<String>) -> Result<Cli, ParseOutcome> {
    let sub_pos = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1);
    let mut full = argv.clone();
    if let (Some(pos), Some(path)) = (sub_pos, config_path(&argv)) {
        let sub = argv[pos].clone();
        let map = read_config(&path).map_err(ParseOutcome::Error)?;
        let known = known_keys(&sub);
        if let Some(bad) = map.keys().find(|k| !known.contains(k)) {
            return Err(ParseOutcome::Error(CliError::config(format!(
                "unknown key '{bad}' in {} for command '{sub}'",
                path.display()
            ))));
        }
        let spliced: Vec<String> = map.iter().map(|(k, v)| format!("--{k}={v}")).collect();
        full = argv[..=pos].to_vec();
        full.extend(spliced);
        full.extend_from_slice(&argv[pos + 1..]);
    }
    Cli::try_parse_from(full).map_err(ParseOutcome::Clap)
}

#[derive(Debug)]
pub enum ParseOutcome {
    Clap(clap::Error),
    Error(CliError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn lists_and_grids() {
        assert_eq!("1, 2,3".parse::<List<usize>>().unwrap(), List(vec![1, 2, 3]));
        assert!("1,x".parse::<List<usize>>().is_err());
        let g: GridSpec = "0:4:81".parse().unwrap();
        assert_eq!((g.min, g.max, g.points), (0.0, 4.0, 81));
        assert!("0:4".parse::<GridSpec>().is_err());
    }

    #[test]
    fn config_parsing() {
        let m = parse_config("# comment\ndepth = 3\nout_width=2\n\n").unwrap();
        assert_eq!(m["depth"], "3");
        assert_eq!(m["out-width"], "2");
        assert!(parse_config("depth").is_err());
        assert!(parse_config("a=1\na=2").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "depth = 3\nwidths = 2,2\ntol = 1e-10\n").unwrap();
        let cli = parse(argv(&format!("bnnprior density --config {} --depth 2 --widths 5", path.display()))).unwrap();
        let Command::Density(a) = cli.command else { panic!() };
        assert_eq!(a.spec.depth, Some(2));
        assert_eq!(a.spec.widths, Some(List(vec![5])));
        assert_eq!(a.spec.tol, Some(1e-10));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "depht = 3\n").unwrap();
        let err = parse(argv(&format!("bnnprior density --config {}", path.display()))).unwrap_err();
        assert!(matches!(err, ParseOutcome::Error(CliError::Config(_))));
        // a key that exists, but not for this command
        std::fs::write(&path, "m-max = 10\n").unwrap();
        assert!(parse(argv(&format!("bnnprior density --config {}", path.display()))).is_err());
    }
}
