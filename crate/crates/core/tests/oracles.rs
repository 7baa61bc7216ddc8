//! Frozen reference values from an independent arbitrary-precision
//! evaluation (quadrature over chi-square layer factors, closed-form Bessel
//! mixtures, gamma-ratio moments).

use bnnprior::linear_prior::*;
use bnnprior::mc_oracle::sample_outputs;
use bnnprior::relu_prior::*;
use bnnprior::specfun::ContourConfig;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn lin(hidden: &[usize], out: usize, kappa: f64) -> NetworkSpec {
    NetworkSpec::with_kappa(hidden, out, kappa, Activation::Linear).unwrap()
}

#[test]
fn three_layer_density_against_quadrature() {
    let spec = lin(&[3, 4], 1, 0.8);
    let cfg = ContourConfig::default();
    for (r, want) in [
        (0.05, 0.24797371930686802528),
        (0.5, 0.20748170073653397409),
        (2.0, 0.090803638998720368298),
        (6.0, 0.010939969439644018872),
    ] {
        let got = density_linear(&spec, r, &cfg).unwrap().value().unwrap();
        assert!(rel(got, want) < 1e-11, "r={r}: {got} vs {want}");
    }
}

#[test]
fn three_layer_charfun_against_quadrature() {
    let spec = lin(&[3, 4], 1, 0.8);
    let cfg = ContourConfig::default();
    for (q, want) in [(0.5, 0.53454732141409440769), (2.0, 0.061297417945544637591), (10.0, 0.0010061173992650496439)] {
        let got = charfun_linear(&spec, q, &cfg).unwrap();
        assert!(rel(got, want) < 1e-11, "q={q}: {got} vs {want}");
    }
}

#[test]
fn four_layer_two_output_density() {
    let spec = lin(&[2, 5, 3], 2, 1.0);
    let cfg = ContourConfig::default();
    for (r, want) in [
        (0.3, 0.068884152757181244865),
        (1.5, 0.017250131986568528398),
        (5.0, 0.0024331752528434978203),
    ] {
        let got = density_linear(&spec, r, &cfg).unwrap().value().unwrap();
        assert!(rel(got, want) < 1e-11, "r={r}: {got} vs {want}");
    }
}

#[test]
fn fractional_and_odd_moments() {
    let spec = lin(&[3, 4], 2, 0.9);
    assert!(rel(moment_norm_linear(&spec, 3.5).unwrap(), 538.54728818831573255) < 1e-13);
    assert!(rel(moment_norm_linear(&spec, 1.0).unwrap(), 3.3839481707518506783) < 1e-13);
}

#[test]
fn relu_two_layer_bessel_mixture() {
    // k active units out of 2: k = 1 gives K0(r)/π, k = 2 gives e^{-r}/2
    let spec = NetworkSpec::with_kappa(&[2], 1, 1.0, Activation::Relu).unwrap();
    let mix = enumerate_terms(&spec, TruncationMode::Product, DEFAULT_THRESHOLD).unwrap();
    assert!((mix.atom_mass - 0.25).abs() < 1e-16);
    let cfg = ContourConfig::default();
    for (r, want) in [(0.1, 0.49938470976104631556), (1.0, 0.11299305065492742739), (3.0, 0.011752347389621915001)] {
        let got = density_relu(&spec, r, &mix, &cfg).unwrap();
        assert!(rel(got, want) < 1e-12, "r={r}: {got} vs {want}");
    }
}

#[test]
fn relu_atom_matches_sampling() {
    let spec = NetworkSpec::with_kappa(&[2, 3], 1, 1.0, Activation::Relu).unwrap();
    let atom = atom_mass(&spec).unwrap();
    assert!((atom - (1.0 - 0.75 * 0.875)).abs() < 1e-15);
    let batch = sample_outputs(&spec, 7, 400_000).unwrap();
    let zf = batch.zero_fraction();
    let se = (atom * (1.0 - atom) / 400_000.0).sqrt();
    assert!((zf - atom).abs() < 4.0 * se, "{zf} vs {atom}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_ratio_is_a_power_of_two(hidden in prop::collection::vec(1usize..200, 1..5), out in 1usize..4, kappa in 0.1f64..3.0) {
        let lin_spec = lin(&hidden, out, kappa);
        let relu_spec = lin_spec.with_activation(Activation::Relu);
        let ratio = moment_norm_relu(&relu_spec, 2.0).unwrap() / moment_norm_linear(&lin_spec, 2.0).unwrap();
        prop_assert_eq!(ratio, 2f64.powi(-(hidden.len() as i32)));
    }

    #[test]
    fn relu_moments_never_exceed_linear(hidden in prop::collection::vec(1usize..50, 1..4), m in 0.5f64..12.0) {
        let lin_spec = lin(&hidden, 1, 1.0);
        let relu_spec = lin_spec.with_activation(Activation::Relu);
        prop_assert!(ln_moment_norm_relu(&relu_spec, m).unwrap() <= ln_moment_norm_linear(&lin_spec, m).unwrap() + 1e-12);
    }

    #[test]
    fn mixture_weights_sum_to_one(hidden in prop::collection::vec(1usize..8, 1..4)) {
        let spec = NetworkSpec::with_kappa(&hidden, 1, 1.0, Activation::Relu).unwrap();
        let mix = enumerate_terms(&spec, TruncationMode::Product, DEFAULT_THRESHOLD).unwrap();
        let total = mix.atom_mass + mix.continuous_mass() + mix.discarded_mass;
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
    }

    #[test]
    fn two_layer_closed_form_agrees_with_contour(n in 1usize..40, r in 0.05f64..8.0) {
        let spec = lin(&[n], 1, 1.0);
        let a = density_two_layer(&spec, r).unwrap().value().unwrap();
        let b = density_linear_contour(&spec, r, &ContourConfig::default()).unwrap().value().unwrap();
        prop_assert!(rel(b, a) < 1e-10, "{} {}", a, b);
    }
}
