//! Scan conversion between polar A-scan stacks and cartesian cross-sections,
//! plus the resampling primitives (resize, crop) the rest of the pipeline
//! builds on.
//!
//! Conventions, fixed once and used everywhere:
//!
//! - A polar image is a `(depth, angle)` grid: axis 0 walks down one A-scan,
//!   axis 1 walks the acquisition angles. Column `k` of `K` sits at
//!   `theta_k = 2*pi*k/K`.
//! - In cartesian space, `theta = 0` points along +columns from the center
//!   and increases toward +rows. The catheter (scan center) is at the image
//!   center `m = (side-1)/2`.
//! - Interpolation is bilinear. The angle axis wraps (column `K` blends
//!   `K-1` back into `0`); the depth axis clamps at both ends.
//! - Pixels outside the scanned disk (`rho > m`) take the background fill.

use ndarray::Array2;

use crate::error::{Error, Result};

/// 2-D intensity grid, row-major `(rows, cols)`, values in `[0, 1]`.
pub type Grid = Array2<f32>;

/// Minimum depth samples for a polar image.
pub const MIN_DEPTH: usize = 2;
/// Minimum A-scans per polar image.
pub const MIN_ASCANS: usize = 4;
/// Minimum side length for a cartesian image.
pub const MIN_SIDE: usize = 8;

/// A B-scan in acquisition form: A-scans aligned next to each other in
/// temporal order. Shape `(depth_samples, num_ascans)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    samples: Grid,
}

impl PolarImage {
    /// Wrap a grid, validating shape and value range.
    pub fn new(samples: Grid) -> Result<Self> {
        let (depth, ascans) = samples.dim();
        if depth < MIN_DEPTH || ascans < MIN_ASCANS {
            return Err(Error::InvalidParameter(format!(
                "polar image must be at least {MIN_DEPTH}x{MIN_ASCANS}, got {depth}x{ascans}"
            )));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "polar image contains out-of-range value {v}"
            )));
        }
        Ok(PolarImage { samples })
    }

    pub fn depth_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_ascans(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &Grid {
        &self.samples
    }

    pub fn into_samples(self) -> Grid {
        self.samples
    }
}

/// A scan-converted square cross-sectional view.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianImage {
    pixels: Grid,
    fill: f32,
}

impl CartesianImage {
    /// Wrap a square grid with its background fill value.
    pub fn new(pixels: Grid, fill: f32) -> Result<Self> {
        let (rows, cols) = pixels.dim();
        if rows != cols {
            return Err(Error::InvalidParameter(format!(
                "cartesian image must be square, got {rows}x{cols}"
            )));
        }
        if rows < MIN_SIDE {
            return Err(Error::InvalidParameter(format!(
                "cartesian side must be at least {MIN_SIDE}, got {rows}"
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cartesian image contains out-of-range value {v}"
            )));
        }
        Ok(CartesianImage { pixels, fill })
    }

    pub fn side(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn fill(&self) -> f32 {
        self.fill
    }

    pub fn pixels(&self) -> &Grid {
        &self.pixels
    }

    pub fn into_pixels(self) -> Grid {
        self.pixels
    }
}

/// Bilinear sample at fractional `(row, col)` with both axes clamped to the
/// grid. Callers are expected to pass coordinates at most a rounding error
/// outside the valid range.
pub(crate) fn sample_clamped(grid: &Grid, row: f64, col: f64) -> f32 {
    let (rows, cols) = grid.dim();
    let r = row.clamp(0.0, (rows - 1) as f64);
    let c = col.clamp(0.0, (cols - 1) as f64);
    let r0 = r.floor() as usize;
    let c0 = c.floor() as usize;
    let r1 = (r0 + 1).min(rows - 1);
    let c1 = (c0 + 1).min(cols - 1);
    let fr = (r - r0 as f64) as f32;
    let fc = (c - c0 as f64) as f32;
    let top = grid[(r0, c0)] * (1.0 - fc) + grid[(r0, c1)] * fc;
    let bottom = grid[(r1, c0)] * (1.0 - fc) + grid[(r1, c1)] * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Bilinear sample of a polar grid: depth clamps, angle wraps modulo `K`.
fn sample_polar(samples: &Grid, depth: f64, angle: f64) -> f32 {
    let (d_max, k) = samples.dim();
    let d = depth.clamp(0.0, (d_max - 1) as f64);
    let d0 = d.floor() as usize;
    let d1 = (d0 + 1).min(d_max - 1);
    let fd = (d - d0 as f64) as f32;

    // Angle is periodic with period K; normalize into [0, K).
    let a = angle.rem_euclid(k as f64);
    let a0 = (a.floor() as usize).min(k - 1);
    let a1 = (a0 + 1) % k;
    let fa = (a - a0 as f64) as f32;

    let shallow = samples[(d0, a0)] * (1.0 - fa) + samples[(d0, a1)] * fa;
    let deep = samples[(d1, a0)] * (1.0 - fa) + samples[(d1, a1)] * fa;
    shallow * (1.0 - fd) + deep * fd
}

/// Scan-convert a polar B-scan into a square cartesian cross-section.
///
/// For output pixel `(r, c)` with center `m = (side-1)/2`, the polar grid is
/// sampled at depth `rho * (D-1) / m` and angle `theta * K / (2*pi)`, where
/// `rho = hypot(r-m, c-m)` and `theta = atan2(r-m, c-m)` wrapped to
/// `[0, 2*pi)`. Pixels with `rho > m` take `fill`.
pub fn polar_to_cartesian(p: &PolarImage, side: usize, fill: f32) -> Result<CartesianImage> {
    if side < MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "cartesian side must be at least {MIN_SIDE}, got {side}"
        )));
    }
    let samples = p.samples();
    let depth = p.depth_samples();
    let ascans = p.num_ascans();
    let m = (side as f64 - 1.0) / 2.0;
    let depth_scale = (depth as f64 - 1.0) / m;
    let angle_scale = ascans as f64 / std::f64::consts::TAU;

    let pixels = Array2::from_shape_fn((side, side), |(r, c)| {
        let dy = r as f64 - m;
        let dx = c as f64 - m;
        let rho = dy.hypot(dx);
        if rho > m {
            return fill;
        }
        let mut theta = dy.atan2(dx);
        if theta < 0.0 {
            theta += std::f64::consts::TAU;
        }
        sample_polar(samples, rho * depth_scale, theta * angle_scale)
    });
    CartesianImage::new(pixels, fill)
}

/// Inverse scan conversion: resample a cartesian cross-section back onto a
/// `(depth_samples, num_ascans)` polar grid.
///
/// Sample `(d, k)` reads the cartesian image at radius `d * m / (D-1)` along
/// angle `theta_k = 2*pi*k/K` with bilinear interpolation.
pub fn cartesian_to_polar(
    c: &CartesianImage,
    depth_samples: usize,
    num_ascans: usize,
) -> Result<PolarImage> {
    if depth_samples < MIN_DEPTH || num_ascans < MIN_ASCANS {
        return Err(Error::InvalidParameter(format!(
            "polar grid must be at least {MIN_DEPTH}x{MIN_ASCANS}, got {depth_samples}x{num_ascans}"
        )));
    }
    let pixels = c.pixels();
    let m = (c.side() as f64 - 1.0) / 2.0;
    let rho_per_depth = m / (depth_samples as f64 - 1.0);

    let samples = Array2::from_shape_fn((depth_samples, num_ascans), |(d, k)| {
        let rho = d as f64 * rho_per_depth;
        let theta = std::f64::consts::TAU * k as f64 / num_ascans as f64;
        let row = m + rho * theta.sin();
        let col = m + rho * theta.cos();
        sample_clamped(pixels, row, col).clamp(0.0, 1.0)
    });
    PolarImage::new(samples)
}

/// Bilinear resize to `target = (rows, cols)`.
///
/// Corner-aligned sampling: source coordinate for output index `i` is
/// `i * (S-1) / (T-1)`, so resizing to the same shape is the identity and a
/// linear ramp resamples exactly.
pub fn resize(img: &Grid, target: (usize, usize)) -> Result<Grid> {
    let (rows, cols) = img.dim();
    let (t_rows, t_cols) = target;
    if rows < 2 || cols < 2 || t_rows < 2 || t_cols < 2 {
        return Err(Error::InvalidParameter(format!(
            "resize needs at least 2x2 source and target, got {rows}x{cols} -> {t_rows}x{t_cols}"
        )));
    }
    let row_scale = (rows - 1) as f64 / (t_rows - 1) as f64;
    let col_scale = (cols - 1) as f64 / (t_cols - 1) as f64;
    Ok(Array2::from_shape_fn((t_rows, t_cols), |(r, c)| {
        sample_clamped(img, r as f64 * row_scale, c as f64 * col_scale)
    }))
}

/// Exact centered window copy. Offsets are `floor((dim - size) / 2)`.
pub fn center_crop(img: &Grid, size: (usize, usize)) -> Result<Grid> {
    let (rows, cols) = img.dim();
    let (c_rows, c_cols) = size;
    if c_rows > rows || c_cols > cols || c_rows == 0 || c_cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "crop {c_rows}x{c_cols} does not fit in {rows}x{cols}"
        )));
    }
    let off_r = (rows - c_rows) / 2;
    let off_c = (cols - c_cols) / 2;
    Ok(img
        .slice(ndarray::s![off_r..off_r + c_rows, off_c..off_c + c_cols])
        .to_owned())
}

/// Crop a window at an explicit top-left offset. Exact copy.
pub(crate) fn crop_at(img: &Grid, offset: (usize, usize), size: (usize, usize)) -> Result<Grid> {
    let (rows, cols) = img.dim();
    let (off_r, off_c) = offset;
    let (c_rows, c_cols) = size;
    if off_r + c_rows > rows || off_c + c_cols > cols {
        return Err(Error::InvalidParameter(format!(
            "crop {c_rows}x{c_cols} at ({off_r},{off_c}) does not fit in {rows}x{cols}"
        )));
    }
    Ok(img
        .slice(ndarray::s![off_r..off_r + c_rows, off_c..off_c + c_cols])
        .to_owned())
}
