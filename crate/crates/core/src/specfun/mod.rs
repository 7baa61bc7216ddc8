//! Special-function and integration kernel.
//!
//! Everything here is pure: identical inputs and configuration give
//! bit-identical outputs, and no function keeps global mutable state.

pub mod bessel;
pub mod gamma;
pub mod hankel;
pub mod meijer;
pub mod nested;
pub mod quad;

pub use bessel::{bessel_j, bessel_k, bessel_k_eval, ln_bessel_k, BesselK};
pub use gamma::{digamma, ln_gamma, ln_gamma_complex, log_gamma, log_gamma_complex, trigamma};
pub use hankel::{hankel_radial, HankelDirection};
pub use meijer::{
    meijer_g_1q, meijer_g_q0, ContourConfig, ContourEstimate, MellinSpectrum,
};
pub use nested::{f_q_nested, NestedOracle};
pub use quad::{
    integrate, integrate_semi_infinite, integrate_with_breaks, tanh_sinh, CompensatedSum, CutoffPolicy, QuadratureConfig,
    QuadratureResult,
};
