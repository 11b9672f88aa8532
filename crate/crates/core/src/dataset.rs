//! Labeled-dataset data model: manifest ingest/validation, grayscale PNG
//! I/O, class balance, and patient-level train/test splits.
//!
//! A manifest is a UTF-8 CSV with the exact header
//! `patient_id,frame_id,image_path,label,representation`; image paths are
//! relative to the manifest's directory. Images are single-channel PNG,
//! 8-bit or 16-bit, normalized to `[0, 1]` on load by the type maximum.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::rng::Draw;

/// Expected manifest header, in column order.
pub const MANIFEST_HEADER: [&str; 5] =
    ["patient_id", "frame_id", "image_path", "label", "representation"];

/// Binary frame label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Plaque,
    NoPlaque,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Plaque => "plaque",
            Label::NoPlaque => "no_plaque",
        }
    }

    /// Class index used by the model head: no-plaque = 0, plaque = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::NoPlaque => 0,
            Label::Plaque => 1,
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plaque" => Ok(Label::Plaque),
            "no_plaque" => Ok(Label::NoPlaque),
            other => Err(format!("unknown label {other:?} (expected plaque or no_plaque)")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Image-space representation of a B-scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Polar,
    Cartesian,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Polar => "polar",
            Representation::Cartesian => "cartesian",
        }
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "polar" => Ok(Representation::Polar),
            "cartesian" => Ok(Representation::Cartesian),
            other => {
                Err(format!("unknown representation {other:?} (expected polar or cartesian)"))
            }
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled B-scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub patient_id: String,
    /// Unique within a patient.
    pub frame_id: u32,
    /// Relative to the manifest's directory.
    pub image_path: PathBuf,
    pub label: Label,
    pub representation: Representation,
}

/// A validated, ordered collection of frame records sharing one
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<FrameRecord>,
    source_root: PathBuf,
}

impl Manifest {
    /// Build a manifest, enforcing: non-empty, single representation,
    /// unique `(patient_id, frame_id)`.
    pub fn new(records: Vec<FrameRecord>, source_root: impl Into<PathBuf>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let representation = records[0].representation;
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.representation != representation {
                return Err(Error::RepresentationMismatch {
                    expected: representation.as_str().to_string(),
                    actual: r.representation.as_str().to_string(),
                });
            }
            if !seen.insert((r.patient_id.clone(), r.frame_id)) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate record for patient {:?} frame {}",
                    r.patient_id, r.frame_id
                )));
            }
        }
        Ok(Manifest { records, source_root: source_root.into() })
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source_root(&self) -> &Path {
        &self.source_root
    }

    pub fn representation(&self) -> Representation {
        self.records[0].representation
    }

    /// Sorted unique patient identifiers.
    pub fn patients(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.patient_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Absolute (root-joined) path of a record's image.
    pub fn resolve(&self, record: &FrameRecord) -> PathBuf {
        self.source_root.join(&record.image_path)
    }
}

/// Outcome of a patient-level split.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Manifest,
    pub test: Manifest,
    pub seed: u64,
}

/// One problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIssue {
    pub patient_id: String,
    pub frame_id: u32,
    pub image_path: PathBuf,
    pub message: String,
}

impl fmt::Display for DatasetIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "patient {} frame {} ({}): {}",
            self.patient_id,
            self.frame_id,
            self.image_path.display(),
            self.message
        )
    }
}

/// Parse and validate a manifest CSV. Errors name the offending file line
/// (the header is line 1).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => parse_err(1, e.to_string()),
        })?;

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    let expected: Vec<&str> = MANIFEST_HEADER.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            1,
            format!(
                "header must be exactly {:?}, got {:?}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // data rows start after the header line
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", MANIFEST_HEADER.len(), row.len()),
            ));
        }
        let patient_id = row[0].to_string();
        if patient_id.is_empty() {
            return Err(parse_err(line, "empty patient_id".into()));
        }
        let frame_id: u32 = row[1]
            .parse()
            .map_err(|_| parse_err(line, format!("frame_id {:?} is not a non-negative integer", &row[1])))?;
        let image_path = PathBuf::from(&row[2]);
        if image_path.as_os_str().is_empty() {
            return Err(parse_err(line, "empty image_path".into()));
        }
        let label: Label = row[3].parse().map_err(|e| parse_err(line, e))?;
        let representation: Representation = row[4].parse().map_err(|e| parse_err(line, e))?;
        records.push(FrameRecord { patient_id, frame_id, image_path, label, representation });
    }

    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Manifest::new(records, root)
}

/// Write a manifest CSV next to its images. Inverse of [`load_manifest`]
/// up to the source root, which becomes the target's directory.
pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut writer = csv::Writer::from_path(path).map_err(to_io)?;
    writer.write_record(MANIFEST_HEADER).map_err(to_io)?;
    for r in m.records() {
        writer
            .write_record([
                r.patient_id.as_str(),
                &r.frame_id.to_string(),
                &r.image_path.to_string_lossy(),
                r.label.as_str(),
                r.representation.as_str(),
            ])
            .map_err(to_io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Split a manifest so that exactly `test_patients` patients (all their
/// frames) form the test side. Patients are chosen by seeded shuffle of the
/// sorted patient list, so the outcome is independent of row order.
pub fn patient_split(m: &Manifest, test_patients: usize, seed: u64) -> Result<SplitResult> {
    let patients: Vec<String> = m.patients().into_iter().map(String::from).collect();
    if test_patients == 0 || test_patients >= patients.len() {
        return Err(Error::InvalidParameter(format!(
            "test_patients must be in 1..{} (number of patients), got {test_patients}",
            patients.len()
        )));
    }
    let mut shuffled = patients;
    let mut draw = Draw::from_seed(seed).substream(0x0073_706c_6974); // "split"
    shuffled.shuffle(&mut draw);
    let test_set: BTreeSet<&str> = shuffled[..test_patients].iter().map(String::as_str).collect();

    let (test, train): (Vec<FrameRecord>, Vec<FrameRecord>) = m
        .records()
        .iter()
        .cloned()
        .partition(|r| test_set.contains(r.patient_id.as_str()));
    Ok(SplitResult {
        train: Manifest::new(train, m.source_root())?,
        test: Manifest::new(test, m.source_root())?,
        seed,
    })
}

/// Fraction of records labeled no-plaque.
pub fn class_balance(m: &Manifest) -> f64 {
    let negatives = m.records().iter().filter(|r| r.label == Label::NoPlaque).count();
    negatives as f64 / m.len() as f64
}

/// Check that every record's image opens, decodes to single-channel
/// grayscale, and has a shape consistent with the manifest representation
/// (cartesian frames must be square). Issues are data, not errors.
pub fn validate_dataset(m: &Manifest) -> Vec<DatasetIssue> {
    let mut issues = Vec::new();
    for r in m.records() {
        let path = m.resolve(r);
        let issue = |message: String| DatasetIssue {
            patient_id: r.patient_id.clone(),
            frame_id: r.frame_id,
            image_path: r.image_path.clone(),
            message,
        };
        match load_image(&path) {
            Ok(grid) => {
                let (rows, cols) = grid.dim();
                match r.representation {
                    Representation::Cartesian if rows != cols => {
                        issues.push(issue(format!("cartesian frame is not square: {rows}x{cols}")));
                    }
                    Representation::Polar
                        if rows < crate::geometry::MIN_DEPTH
                            || cols < crate::geometry::MIN_ASCANS =>
                    {
                        issues.push(issue(format!("polar frame too small: {rows}x{cols}")));
                    }
                    _ => {}
                }
            }
            Err(e) => issues.push(issue(e.to_string())),
        }
    }
    issues
}

/// Load a single-channel PNG (8- or 16-bit) as a `[0, 1]` grid.
pub fn load_image(path: &Path) -> Result<Grid> {
    let img = image::open(path).map_err(|e| Error::image(path, e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                buf.get_pixel(c as u32, r as u32)[0] as f32 / u8::MAX as f32
            }))
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                buf.get_pixel(c as u32, r as u32)[0] as f32 / u16::MAX as f32
            }))
        }
        other => Err(Error::image(
            path,
            format!("expected single-channel grayscale, got {:?}", other.color()),
        )),
    }
}

/// Save a `[0, 1]` grid as a 16-bit grayscale PNG.
pub fn save_image(path: &Path, grid: &Grid) -> Result<()> {
    let (rows, cols) = grid.dim();
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(cols as u32, rows as u32);
    for ((r, c), &v) in grid.indexed_iter() {
        let q = (v.clamp(0.0, 1.0) * u16::MAX as f32).round() as u16;
        buf.put_pixel(c as u32, r as u32, image::Luma([q]));
    }
    buf.save(path).map_err(|e| Error::image(path, e.to_string()))
}
