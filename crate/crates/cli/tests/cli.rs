use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bnnprior"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn header(csv: &str) -> Vec<String> {
    csv.lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split(',')
        .map(String::from)
        .collect()
}

fn meta<'a>(csv: &'a str, key: &str) -> Option<&'a str> {
    csv.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

#[test]
fn density_two_layer_values() {
    let o = run(&["density", "--widths", "2", "--kappa", "1", "--grid", "0.5:2:4", "--edgeworth", "true"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(meta(&csv, "schema_version"), Some("1"));
    assert_eq!(header(&csv), ["radius", "exact_density", "gaussian_limit", "edgeworth", "error"]);
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 4);
    // n1 = 2, n2 = 1, κ = 1: p(r) = (4π)^{-1/2} (r/2)^{1/2} K_{1/2}(r) = e^{-r} / 2
    for row in rows {
        let r: f64 = row[0].parse().unwrap();
        let p: f64 = row[1].parse().unwrap();
        assert!((p - 0.5 * (-r).exp()).abs() < 1e-14, "r={r} p={p}");
        // scientific notation with 15 significant digits
        assert!(row[1].contains('e') && row[1].split('e').next().unwrap().len() >= 14);
    }
}

#[test]
fn divergent_origin_is_an_empty_cell() {
    let o = run(&["density", "--widths", "1", "--kappa", "1", "--grid", "0:1:2"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows[0][1], "");
    assert_eq!(rows[0][3], "divergent");
    assert!(!rows[1][1].is_empty());
}

#[test]
fn relu_density_reports_the_atom() {
    let o = run(&["density", "--widths", "1,1", "--activation", "relu", "--grid", "0.5:1:2"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let atom: f64 = meta(&csv, "atom_mass").unwrap().parse().unwrap();
    assert!((atom - 0.75).abs() < 1e-15);
    assert_eq!(meta(&csv, "truncation_mode"), Some("product"));
}

#[test]
fn configuration_errors_exit_with_two() {
    // empty grid
    let o = run(&["density", "--widths", "2", "--grid", "0:1:0"]);
    assert_eq!(code(&o), 2);
    // depth and widths disagree
    assert_eq!(code(&run(&["density", "--depth", "3", "--widths", "2"])), 2);
    // unknown flag
    assert_eq!(code(&run(&["density", "--widths", "2", "--bogus", "1"])), 2);
    // bad enum value
    assert_eq!(code(&run(&["density", "--widths", "2", "--activation", "tanh"])), 2);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("m.csv");
    fs::write(&cfg, "# moments of a small net\ndepth = 3\nwidths = 2,3\nkappa = 1\norders = 2\n").unwrap();
    let o = run(&["moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let m: f64 = data_rows(&csv)[0][1].parse().unwrap();
    assert!((m - 6.0).abs() < 1e-13);
    // flag overrides the file
    let o = run(&["moments", "--config", cfg.to_str().unwrap(), "--activation", "relu", "--kappa", "1"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let m: f64 = data_rows(&csv)[0][1].parse().unwrap();
    assert_eq!(m, 1.5);
    // unknown key in the file
    fs::write(&cfg, "depth = 2\nwidth = 3\n").unwrap();
    let o = run(&["moments", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key 'width'"));
}

#[test]
fn sample_is_reproducible_and_reports_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "sample".to_string(),
            "--widths=1,1".into(),
            "--activation=relu".into(),
            "--samples=200000".into(),
            "--seed=42".into(),
            "--bins=50".into(),
            format!("--out={}", p.display()),
        ]
    };
    assert_eq!(code(&bin().args(args(&a)).output().unwrap()), 0);
    assert_eq!(code(&bin().args(args(&b)).output().unwrap()), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.with_extension("json")).unwrap()).unwrap();
    let zf = summary["zero_fraction"].as_f64().unwrap();
    let se = summary["zero_fraction_standard_error"].as_f64().unwrap();
    assert!((zf - 0.75).abs() < 4.0 * se, "{zf}");
    assert_eq!(summary["atom_mass"].as_f64().unwrap(), 0.75);
}

#[test]
fn tail_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tail.csv");
    let o = run(&["tail", "--depth", "4", "--widths", "2,2,2", "--activation", "relu", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let est: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    let theta = est["estimate"]["theta_hat"].as_f64().unwrap();
    assert!((theta - 2.0).abs() < 0.05, "{theta}");
    assert_eq!(data_rows(&fs::read_to_string(&out).unwrap()).len(), 400);
    let o = run(&["tail", "--depth", "1", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["estimate"]["theta_hat"].as_f64().unwrap() - 0.5).abs() < 0.02);
}

#[test]
fn charfun_closed_form() {
    let o = run(&["charfun", "--widths", "4", "--kappa", "0.5", "--grid", "0:3:4", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for row in v["rows"].as_array().unwrap() {
        let q = row[0].as_f64().unwrap();
        let phi = row[1].as_f64().unwrap();
        assert!((phi - (1.0 + 0.25 * q * q).powi(-2)).abs() < 1e-14);
    }
}

#[test]
fn validate_subset_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let base = ["validate", "--only", "variance-ratio,truncation-counts,tail-exponents", "--mc-samples", "100000"];
    let mut args: Vec<&str> = base.to_vec();
    let pa = a.to_str().unwrap().to_string();
    args.extend(["--out", &pa]);
    assert_eq!(code(&run(&args)), 0);
    let mut args: Vec<&str> = base.to_vec();
    let pb = b.to_str().unwrap().to_string();
    args.extend(["--out", &pb]);
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--fault", "relu-variance-factor"]);
    let o = run(&args);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let failed: Vec<&str> = report["failed_checks"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(failed.contains(&"variance_ratio_exact") && failed.contains(&"variance_ratio_mc"));

    assert_eq!(code(&run(&["validate", "--only", "nothing"])), 2);
}

#[test]
fn figure_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["figure", "fig2", "--widths", "2,100", "--grid", "0.1:2:5", "--out", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for n2 in [2, 100] {
        let csv = fs::read_to_string(dir.path().join(format!("fig2_n2_{n2}.csv"))).unwrap();
        assert_eq!(meta(&csv, "widths"), Some(&*format!("1;100;{n2};100;1")));
        assert_eq!(data_rows(&csv).len(), 5);
    }
    let o = run(&["figure", "fig4", "--depths", "3", "--widths", "10", "--grid", "0:8:5", "--out", d]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("fig4_d3_n10.csv")).unwrap();
    assert!(header(&csv).contains(&"exact_over_edgeworth".to_string()));
    let last = data_rows(&csv).pop().unwrap();
    let ratio: f64 = last[4].parse().unwrap();
    assert!(ratio > 10.0, "{ratio}");
    let o = run(&["figure", "fig3", "--depths", "2", "--widths", "2", "--samples", "200000", "--grid", "0.1:2:3", "--out", d]);
    assert_eq!(code(&o), 0);
    let hist = fs::read_to_string(dir.path().join("fig3_d2_n2_hist.csv")).unwrap();
    assert_eq!(meta(&hist, "pass"), Some("true"));
    // width list is required
    assert_eq!(code(&run(&["figure", "fig1", "--out", d])), 2);
}
