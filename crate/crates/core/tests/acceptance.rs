//! Acceptance suite: one line per criterion with the pinned tolerance,
//! the measured value and the runtime against its budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use bnnprior::validation::{
    check_closed_form, check_edgeworth, check_figure_mc, check_fourier_pair, check_mass_conservation,
    check_normalization_and_moments, check_oracle_agreement, check_tail_exponents, check_truncation_counts,
    check_variance_ratio, run_validation, CheckResult, Fault, FigureMcConfig, ValidationConfig,
};
use bnnprior::Result;

const SEED: u64 = 12345;

struct Outcome {
    pass: bool,
    summary: String,
}

fn summarize(checks: &[CheckResult]) -> Outcome {
    let pass = checks.iter().all(|c| c.passed);
    let summary = checks
        .iter()
        .map(|c| match &c.error {
            Some(e) => format!("{}: error {e}", c.name),
            None => format!("{} = {:.3e} ({:?} {:.1e})", c.name, c.measured, c.relation, c.tolerance),
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, summary }
}

fn from_checks(r: Result<Vec<CheckResult>>) -> Outcome {
    match r {
        Ok(v) => summarize(&v),
        Err(e) => Outcome {
            pass: false,
            summary: format!("error: {e}"),
        },
    }
}

fn c5() -> Outcome {
    let checks = check_truncation_counts();
    let counts = checks
        .as_ref()
        .map(|v| {
            let m = &v[0].metrics;
            format!(
                "product {}/{}/{}",
                m["d2_product"], m["d3_product"], m["d4_product"]
            )
        })
        .unwrap_or_default();
    let out = from_checks(checks);
    Outcome {
        pass: out.pass,
        summary: format!("{}; {counts}", out.summary),
    }
}

fn c7() -> Outcome {
    let honest = check_variance_ratio(1_000_000, SEED, None);
    let faulty = check_variance_ratio(1_000_000, SEED, Some(Fault::ReluVarianceFactor));
    let mut out = from_checks(honest);
    match faulty {
        Ok(v) => {
            let caught = v.iter().all(|c| !c.passed);
            out.pass &= caught;
            out.summary.push_str(&format!("; injected 2^-d factor rejected: {caught}"));
        }
        Err(e) => {
            out.pass = false;
            out.summary.push_str(&format!("; fault run error {e}"));
        }
    }
    out
}

fn c8() -> Outcome {
    from_checks(check_figure_mc(&FigureMcConfig {
        depths: vec![2, 3, 4],
        widths: vec![1, 2, 5],
        samples: 10_000_000,
        bins: 100,
        seed: SEED,
    }))
}

fn c11() -> Outcome {
    let cfg = ValidationConfig {
        mc_samples: 100_000,
        figure_samples: 200_000,
        figure_widths: vec![2],
        only: [
            "closed-form",
            "truncation-counts",
            "mass-conservation",
            "variance-ratio",
            "figure-mc",
            "tail-exponents",
            "moment-bounds",
        ]
        .map(String::from)
        .to_vec(),
        ..ValidationConfig::default()
    };
    match (run_validation(&cfg), run_validation(&cfg)) {
        (Ok(a), Ok(b)) => {
            let (ja, jb) = (a.to_json(), b.to_json());
            Outcome {
                pass: ja == jb,
                summary: format!("{} checks, {} bytes, identical: {}", a.checks.len(), ja.len(), ja == jb),
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome {
            pass: false,
            summary: format!("error: {e}"),
        },
    }
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, u64, Box<dyn Fn() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        (1, "closed-form agreement", 10, Box::new(|| from_checks(check_closed_form(100)))),
        (2, "nested-oracle agreement", 120, Box::new(|| from_checks(check_oracle_agreement(20)))),
        (3, "normalization and moments", 300, Box::new(|| from_checks(check_normalization_and_moments()))),
        (4, "Fourier-pair consistency", 120, Box::new(|| from_checks(check_fourier_pair(8)))),
        (5, "ReLU mixture counts", 60, Box::new(c5)),
        (6, "mass conservation", 300, Box::new(|| from_checks(check_mass_conservation(1_000_000, SEED)))),
        (7, "variance ratio", 300, Box::new(c7)),
        (8, "histogram reproduction", 1200, Box::new(c8)),
        (9, "tail exponents", 10, Box::new(|| from_checks(check_tail_exponents(400, &[1, 2])))),
        (10, "Edgeworth behavior", 300, Box::new(|| from_checks(check_edgeworth()))),
        (11, "determinism", 600, Box::new(c11)),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, budget, run) in &criteria {
        if !only.is_empty() && !only.contains(id) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let elapsed = t.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let pass = out.pass && in_budget;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{:.1} s, budget {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            out.summary,
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
