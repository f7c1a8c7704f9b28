//! Fixtures shared by the benchmarks.

use crod_core::model::{EnsembleKind, InstanceParams, ProblemInstance};

/// Partial Fourier instance at the Gaussianity operating point, scaled to `n`.
pub fn fourier_instance(n: usize, seed: u64) -> ProblemInstance {
    let m = (0.75 * n as f64).round() as usize;
    let p = InstanceParams {
        kind: EnsembleKind::PartialFourier,
        m,
        n,
        rho2: 0.1,
        sigma_x2: 1.0,
        sigma2: 0.75 / 10f64.powf(0.5),
    };
    ProblemInstance::generate(&p, seed).expect("valid parameters")
}
