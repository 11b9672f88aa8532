//! Synthetic IVOCT polar B-scans with controllable plaque signatures and
//! artifacts, for desk-scale verification of the full pipeline.
//!
//! The tissue model is deliberately schematic: a dark lumen bounded by a
//! smooth per-angle wall radius, a bright wall-entry interface, exponential
//! intensity decay with a banded attenuation coefficient, an optional
//! fast-attenuating plaque sector with a diffuse border, an optional
//! guide-wire cap-and-shadow sector, catheter reflection rings, and
//! multiplicative speckle. Attenuation is modeled as
//! `I(x) = peak * exp(-integral of mu)` with
//! `mu(x) = mu_base * (1 + band_contrast * cos(2*pi*(x - r)/period + phase))`,
//! so noise-free A-scans are strictly decreasing beyond the wall peak while
//! still showing layered banding in their local slope.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    save_image, write_manifest, FrameRecord, Label, Manifest, Representation,
};
use crate::error::{Error, Result};
use crate::geometry::{PolarImage, MIN_ASCANS, MIN_DEPTH};
use crate::rng::Draw;

/// Angular half-open interval in degrees, wrapping at 360.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorDeg {
    pub start: f64,
    pub width: f64,
}

impl SectorDeg {
    pub fn contains(&self, theta_deg: f64) -> bool {
        (theta_deg - self.start).rem_euclid(360.0) <= self.width
    }

    /// Degrees from the nearer sector edge, measured inward; negative outside.
    pub fn edge_distance(&self, theta_deg: f64) -> f64 {
        let offset = (theta_deg - self.start).rem_euclid(360.0);
        if offset <= self.width {
            offset.min(self.width - offset)
        } else {
            -(360.0 - offset).min(offset - self.width)
        }
    }
}

fn default_depth() -> usize {
    512
}

fn default_ascans() -> usize {
    360
}

fn default_mu_normal() -> f64 {
    0.8
}

fn default_mu_plaque() -> f64 {
    1.6
}

/// Generation parameters for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub num_patients: usize,
    pub frames_per_patient: usize,
    /// Probability that a frame carries a plaque sector.
    pub plaque_prevalence: f64,
    #[serde(default = "default_depth")]
    pub depth_samples: usize,
    #[serde(default = "default_ascans")]
    pub num_ascans: usize,
    pub guide_wire: bool,
    /// Standard deviation of multiplicative speckle, in [0, 0.5].
    pub noise_level: f64,
    pub seed: u64,
    /// Wall attenuation per unit normalized depth.
    #[serde(default = "default_mu_normal")]
    pub mu_normal: f64,
    /// Plaque-sector attenuation; separability needs mu_plaque >= 2*mu_normal.
    #[serde(default = "default_mu_plaque")]
    pub mu_plaque: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            num_patients: 41,
            frames_per_patient: 70,
            plaque_prevalence: 0.55,
            depth_samples: default_depth(),
            num_ascans: default_ascans(),
            guide_wire: true,
            noise_level: 0.1,
            seed: 7,
            mu_normal: default_mu_normal(),
            mu_plaque: default_mu_plaque(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_patients == 0 || self.frames_per_patient == 0 {
            return Err(Error::InvalidParameter(
                "num_patients and frames_per_patient must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.plaque_prevalence) {
            return Err(Error::InvalidParameter(format!(
                "plaque_prevalence {} outside [0, 1]",
                self.plaque_prevalence
            )));
        }
        if self.depth_samples < MIN_DEPTH || self.num_ascans < MIN_ASCANS {
            return Err(Error::InvalidParameter(format!(
                "phantom dims {}x{} below geometry minimums {MIN_DEPTH}x{MIN_ASCANS}",
                self.depth_samples, self.num_ascans
            )));
        }
        if !(0.0..=0.5).contains(&self.noise_level) {
            return Err(Error::InvalidParameter(format!(
                "noise_level {} outside [0, 0.5]",
                self.noise_level
            )));
        }
        if !(self.mu_normal > 0.0 && self.mu_plaque >= self.mu_normal) {
            return Err(Error::InvalidParameter(format!(
                "attenuation pair ({}, {}) must satisfy 0 < mu_normal <= mu_plaque",
                self.mu_normal, self.mu_plaque
            )));
        }
        Ok(())
    }
}

/// One generated B-scan with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomFrame {
    polar: PolarImage,
    label: Label,
    ground_truth: Option<SectorDeg>,
}

impl PhantomFrame {
    /// The label is derived from the ground truth, so the two can never
    /// disagree.
    fn new(polar: PolarImage, ground_truth: Option<SectorDeg>) -> Self {
        let label = if ground_truth.is_some() { Label::Plaque } else { Label::NoPlaque };
        PhantomFrame { polar, label, ground_truth }
    }

    pub fn polar(&self) -> &PolarImage {
        &self.polar
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn ground_truth(&self) -> Option<SectorDeg> {
        self.ground_truth
    }
}

/// Anatomy parameters held constant across a patient's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientParams {
    /// Lumen wall radius as a fraction of full depth.
    base_radius: f64,
    /// Peak intensity at the wall-entry interface.
    wall_peak: f64,
    /// Attenuation-band period in normalized depth.
    band_period: f64,
    /// Relative amplitude of the attenuation banding, < 1.
    band_contrast: f64,
    band_phase: f64,
}

impl PatientParams {
    /// Draw one patient's anatomy. Draw order is part of the format.
    pub fn draw(draw: &mut Draw) -> Self {
        PatientParams {
            base_radius: draw.uniform(0.12, 0.25),
            wall_peak: draw.uniform(0.85, 0.98),
            band_period: draw.uniform(0.08, 0.15),
            band_contrast: draw.uniform(0.10, 0.20),
            band_phase: draw.uniform(0.0, std::f64::consts::TAU),
        }
    }
}

// Fixed artifact geometry, in units of normalized depth / degrees.
const LUMEN_FLOOR: f64 = 0.02;
const RING_1: (f64, f64, f64) = (0.004, 0.012, 0.35);
const RING_2: (f64, f64, f64) = (0.018, 0.028, 0.22);
const PLAQUE_WIDTH_DEG: (f64, f64) = (40.0, 150.0);
const PLAQUE_FEATHER_DEG: f64 = 8.0;
const PLAQUE_ENTRY_SOFT: f64 = 0.03;
const WIRE_WIDTH_DEG: f64 = 15.0;
const WIRE_CAP_DEPTH: f64 = 0.015;
const WIRE_SHADOW: f64 = 0.01;
/// Harmonic perturbation of the lumen radius: up to 3 harmonics, each with
/// relative amplitude below 0.06, so the radius stays within ~18% of base.
const LUMEN_HARMONICS: usize = 3;
const LUMEN_HARMONIC_AMP: f64 = 0.06;

/// Render one frame. The plaque coin, sector draws, lumen harmonics, and
/// speckle all come from `draw` in a fixed order; anatomy comes from
/// `params`.
pub fn generate_frame(spec: &PhantomSpec, params: &PatientParams, draw: &mut Draw) -> PhantomFrame {
    let depth = spec.depth_samples;
    let ascans = spec.num_ascans;

    let plaque = draw.bernoulli(spec.plaque_prevalence).then(|| {
        let width = draw.uniform(PLAQUE_WIDTH_DEG.0, PLAQUE_WIDTH_DEG.1);
        let start = draw.uniform(0.0, 360.0);
        SectorDeg { start, width }
    });
    let wire = spec.guide_wire.then(|| {
        let start = draw.uniform(0.0, 360.0);
        SectorDeg { start, width: WIRE_WIDTH_DEG }
    });
    let harmonics: Vec<(f64, f64)> = (0..LUMEN_HARMONICS)
        .map(|_| (draw.uniform(0.0, LUMEN_HARMONIC_AMP), draw.uniform(0.0, std::f64::consts::TAU)))
        .collect();

    let mut img = Array2::zeros((depth, ascans));
    for k in 0..ascans {
        let theta = std::f64::consts::TAU * k as f64 / ascans as f64;
        let theta_deg = theta.to_degrees();

        // Per-angle wall radius: harmonic perturbation of the patient base.
        let mut radius = params.base_radius;
        for (h, &(amp, phase)) in harmonics.iter().enumerate() {
            radius *= 1.0 + amp * ((h as f64 + 1.0) * theta + phase).cos();
        }

        // Plaque blend in [0, 1]: 1 in the sector core, raised-cosine
        // feather inside the edges, 0 outside.
        let blend = plaque.map_or(0.0, |sector| {
            let feather = PLAQUE_FEATHER_DEG.min(sector.width / 4.0);
            let e = sector.edge_distance(theta_deg);
            if e < 0.0 {
                0.0
            } else if e >= feather {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * e / feather).cos())
            }
        });
        let mu = spec.mu_normal + (spec.mu_plaque - spec.mu_normal) * blend;
        let in_wire = wire.is_some_and(|s| s.contains(theta_deg));
        let wire_cap_at = 0.35 * radius;

        for d in 0..depth {
            let x = d as f64 / (depth - 1) as f64;
            let mut v = if x < radius {
                // Lumen with catheter reflection rings.
                let mut lumen = LUMEN_FLOOR;
                if x >= RING_1.0 && x < RING_1.1 {
                    lumen = RING_1.2;
                } else if x >= RING_2.0 && x < RING_2.1 {
                    lumen = RING_2.2;
                }
                lumen
            } else {
                // Wall: exponential decay with banded attenuation. The band
                // integral keeps cumulative attenuation increasing, so the
                // noise-free A-scan is monotone past the peak.
                let t = x - radius;
                let band = params.band_contrast * params.band_period
                    / std::f64::consts::TAU
                    * ((std::f64::consts::TAU * t / params.band_period + params.band_phase).sin()
                        - params.band_phase.sin());
                let attenuation = mu * (t + band);
                let mut wall = params.wall_peak * (-attenuation).exp();
                // Diffuse plaque border: soften the entry interface.
                if blend > 0.0 && t < PLAQUE_ENTRY_SOFT {
                    let s = t / PLAQUE_ENTRY_SOFT;
                    let smooth = s * s * (3.0 - 2.0 * s);
                    wall *= 1.0 - 0.45 * blend * (1.0 - smooth);
                }
                wall
            };

            if in_wire && x >= wire_cap_at {
                v = if x < wire_cap_at + WIRE_CAP_DEPTH { 1.0 } else { WIRE_SHADOW };
            }
            img[(d, k)] = v;
        }
    }

    // Multiplicative speckle, row-major draw order.
    if spec.noise_level > 0.0 {
        for v in img.iter_mut() {
            *v *= 1.0 + spec.noise_level * draw.normal();
        }
    }
    let clamped = img.mapv(|v: f64| v.clamp(0.0, 1.0) as f32);
    PhantomFrame::new(PolarImage::new(clamped).expect("phantom dims validated"), plaque)
}

/// Generate a full labeled dataset: PNG frames plus `manifest.csv` under
/// `out_dir`. Deterministic given `spec`; frames render in parallel with
/// per-frame substreams keyed by (patient, frame).
pub fn generate_dataset(spec: &PhantomSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let root = Draw::from_seed(spec.seed);
    let jobs: Vec<(usize, usize, PatientParams, Draw)> = (0..spec.num_patients)
        .flat_map(|p| {
            let mut patient_stream = root.substream(p as u64);
            let params = PatientParams::draw(&mut patient_stream);
            (0..spec.frames_per_patient)
                .map(move |f| (p, f, params.clone(), patient_stream.substream(f as u64)))
        })
        .collect();

    let records: Vec<FrameRecord> = jobs
        .into_par_iter()
        .map(|(p, f, params, mut frame_draw)| {
            let frame = generate_frame(spec, &params, &mut frame_draw);
            let name = format!("p{p:03}_f{f:04}.png");
            save_image(&out_dir.join(&name), frame.polar().samples())?;
            Ok(FrameRecord {
                patient_id: format!("p{p:03}"),
                frame_id: f as u32,
                image_path: name.into(),
                label: frame.label(),
                representation: Representation::Polar,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest::new(records, out_dir)?;
    write_manifest(&manifest, out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
