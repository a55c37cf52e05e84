//! Shared fixtures for the benchmarks.

use riemobs_core::{builtin_example1, BoxDomain, Example1, ShootingOptions, TensorGrid};

pub fn example() -> Example1 {
    builtin_example1()
}

/// Square grid on `[-r, r]^2`.
pub fn square_grid(r: f64, per_axis: usize) -> TensorGrid {
    BoxDomain::cube(2, r).tensor_grid(per_axis)
}

/// Single-start shooting, the cheapest configuration that still converges
/// on the example metric.
pub fn single_start() -> ShootingOptions {
    ShootingOptions {
        restarts: 1,
        ..Default::default()
    }
}
