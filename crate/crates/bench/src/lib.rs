//! Fixtures shared by the benchmarks.

use coarse_forge::flatten::build_schedule;
use coarse_forge::PiecewiseLinearFn;

/// Flattening function of `D(r) = 2r + 1` with `steps` breakpoints past the origin.
pub fn doubling_flattening(steps: usize) -> PiecewiseLinearFn {
    let d = PiecewiseLinearFn::affine(2.0, 1.0).expect("valid affine control");
    build_schedule(&d, steps).expect("schedule builds").c().clone()
}

/// `count` evenly spaced points in `[0, top]`.
pub fn grid(top: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| top * i as f64 / count as f64).collect()
}
