//! Debiased complex LASSO detection for compressed sensing with
//! row-orthogonal and Gaussian measurement matrices.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] draws measurement matrices, Bernoulli-Gaussian signals and
//!   noisy observations from explicit seeds.
//! * [`lasso`] solves the complex LASSO by accelerated proximal gradient and
//!   certifies the result against the exact optimality conditions.
//! * [`spectral`] evaluates asymptotic eigenvalue laws of `AᴴA` and the
//!   Stieltjes fixed points behind the debiasing coefficient and variance.
//! * [`detect`] builds debiased estimates, variance estimates and
//!   element-wise detectors, including the full CROD pipeline.
//! * [`empirics`] holds the statistics used to validate all of the above.
//! * [`harness`] runs the Monte Carlo experiment suites and writes CSV.

// `!(x > 0.0)` is used throughout to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod empirics;
mod error;
pub mod harness;
pub mod lasso;
pub mod model;
mod quad;
pub mod rng;
pub mod spectral;

pub use detect::{
    coefficient, crod, debias, detect, evaluate, rho_ca_fixed_point, rss, run_detector, sigma_w2_crod,
    sigma_w_camp, sigma_w_sdl_complex, threshold, CrodOutput, DebiasedEstimate, Design, DetectionReport,
    Detector, Variant,
};
pub use error::{Error, Result};
pub use lasso::{
    active_density, complex_soft_threshold, kkt_residual, solve_lasso, LassoOptions,
    LassoSolution, Step,
};
pub use model::{
    draw_signal, make_matrix, observe, snr_to_noise_variance, EnsembleKind, ProblemInstance,
    SensingMatrix,
};
pub use spectral::SpectralDensity;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
