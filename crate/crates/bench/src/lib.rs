//! Shared fixtures for the benchmarks.

use vbgrowth::io::{generate_synthetic, uniform_ages};
use vbgrowth::{GrowthDataset, ModelSpec, ThetaVB};

/// Skew-t parameters of the reference fit.
pub fn reference_theta() -> ThetaVB {
    ThetaVB::new(35.137, 0.083, -3.075, 38.087, -0.705, 0.873).expect("valid parameters")
}

/// `n` skew-t observations at the reference parameters, ages on [3, 61].
pub fn reference_data(n: usize, seed: u64) -> GrowthDataset {
    let spec = ModelSpec::skew_t(51.0).expect("valid spec");
    let ages = uniform_ages(n, 3.0, 61.0, seed);
    generate_synthetic(&reference_theta(), &spec, &ages, seed + 1).expect("valid simulation")
}
