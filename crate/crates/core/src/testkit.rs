//! Shared fixtures for unit tests.

use ndarray::Array2;

use crate::geometry::PolarImage;
use crate::rng::Draw;

/// Smooth band-limited random polar phantom, periodic along the angle axis
/// by construction, values in [0.05, 0.95].
pub(crate) fn smooth_polar_phantom(depth: usize, ascans: usize, seed: u64) -> PolarImage {
    let mut draw = Draw::from_seed(seed);
    let mut terms = Vec::new();
    for i in 0..3usize {
        for j in 0..4usize {
            terms.push((
                i as f64,
                j as f64,
                draw.uniform(0.0, 1.0),
                draw.uniform(0.0, std::f64::consts::TAU),
                draw.uniform(0.0, std::f64::consts::TAU),
            ));
        }
    }
    let mut raw = Array2::zeros((depth, ascans));
    for ((d, k), v) in raw.indexed_iter_mut() {
        let td = d as f64 / (depth - 1) as f64;
        let tk = k as f64 / ascans as f64;
        let mut acc = 0.0;
        for &(i, j, a, phi, psi) in &terms {
            acc += a
                * (std::f64::consts::PI * i * td + psi).cos()
                * (std::f64::consts::TAU * j * tk + phi).cos();
        }
        *v = acc;
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = raw.mapv(|v| (0.05 + 0.9 * (v - min) / (max - min)) as f32);
    PolarImage::new(grid).unwrap()
}
