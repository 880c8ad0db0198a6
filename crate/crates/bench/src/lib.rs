//! Benchmark fixtures.

use kperim_core::grid::{rasterize, Grid, GridFunction, GridSet, Shape};
use kperim_core::{Kernel, KernelFamily, Norm, Truncation};

/// Disk of radius 1/4 on the unit-square grid `[−1/2, 1/2]²` with n cells per
/// side.
pub fn disk(n: usize) -> GridSet {
    let g = Grid::centered(2, 1.0 / n as f64, 0.5).expect("grid");
    rasterize(&g, &Shape::ball(vec![0.0, 0.0], 0.25)).expect("disk")
}

/// Fractional kernel with exponent s capped at height `cap`.
pub fn capped_fractional(dim: usize, s: f64, cap: f64) -> Kernel {
    Kernel::fractional(dim, s, 1.0).and_then(|k| k.truncate(Truncation::Cap(cap))).expect("kernel")
}

pub fn gaussian(dim: usize, sigma: f64) -> Kernel {
    Kernel::new(dim, KernelFamily::Gaussian { sigma, amplitude: 1.0 }, Norm::Euclidean).expect("kernel")
}

/// Bump `(1 − |x|²/r²)₊²` on `[−1, 1]^d` with n cells per unit length.
pub fn bump(dim: usize, n: usize, r: f64) -> GridFunction {
    let g = Grid::centered(dim, 1.0 / n as f64, 1.0).expect("grid");
    GridFunction::from_fn(&g, |x| {
        let q: f64 = x.iter().map(|v| v * v).sum::<f64>() / (r * r);
        if q < 1.0 {
            (1.0 - q) * (1.0 - q)
        } else {
            0.0
        }
    })
}
