//! Confusion-matrix metrics, per-run report files, and the
//! sensitivity / 1-specificity scatter plot.
//!
//! PLAQUE is the positive class everywhere. Metrics with a zero denominator
//! surface as an explicit `Undefined` marker, never as NaN or a silent 0.

mod plot;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::dataset::{Label, Manifest, Representation};
use crate::error::{Error, Result};

pub use plot::scatter_plot;

/// Prediction counts with PLAQUE as the positive class. The field names
/// carry a `c` suffix because `fn` is reserved; serialized keys are the
/// conventional tp/fp/tn/fn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub tpc: u64,
    #[serde(rename = "fp")]
    pub fpc: u64,
    #[serde(rename = "tn")]
    pub tnc: u64,
    #[serde(rename = "fn")]
    pub fnc: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tpc + self.fpc + self.tnc + self.fnc
    }
}

/// A metric value or an explicit marker that its denominator was zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Undefined,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    fn ratio(numerator: u64, denominator: u64) -> MetricValue {
        if denominator == 0 {
            MetricValue::Undefined
        } else {
            MetricValue::Value(numerator as f64 / denominator as f64)
        }
    }
}

impl fmt::Display for MetricValue {
    /// One decimal place of percent, matching the reporting precision used
    /// throughout.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Value(v) => write!(f, "{:.1}%", v * 100.0),
            MetricValue::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Value(v) => serializer.serialize_f64(*v),
            MetricValue::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(MetricValue::Value(v)),
            Raw::Text(s) if s == "undefined" => Ok(MetricValue::Undefined),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"undefined\", got {s:?}"
            ))),
        }
    }
}

/// Count predictions against ground truth.
pub fn confusion(labels: &[Label], preds: &[Label]) -> Result<ConfusionMatrix> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("confusion of empty input".into()));
    }
    if labels.len() != preds.len() {
        return Err(Error::InvalidParameter(format!(
            "length mismatch: {} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix { tpc: 0, fpc: 0, tnc: 0, fnc: 0 };
    for (&truth, &pred) in labels.iter().zip(preds) {
        match (truth, pred) {
            (Label::Plaque, Label::Plaque) => cm.tpc += 1,
            (Label::Plaque, Label::NoPlaque) => cm.fnc += 1,
            (Label::NoPlaque, Label::Plaque) => cm.fpc += 1,
            (Label::NoPlaque, Label::NoPlaque) => cm.tnc += 1,
        }
    }
    Ok(cm)
}

/// tp / (tp + fn); undefined without positives.
pub fn sensitivity(cm: &ConfusionMatrix) -> MetricValue {
    MetricValue::ratio(cm.tpc, cm.tpc + cm.fnc)
}

/// tn / (tn + fp); undefined without negatives.
pub fn specificity(cm: &ConfusionMatrix) -> MetricValue {
    MetricValue::ratio(cm.tnc, cm.tnc + cm.fpc)
}

/// (tp + tn) / total; undefined on an empty matrix.
pub fn accuracy(cm: &ConfusionMatrix) -> MetricValue {
    MetricValue::ratio(cm.tpc + cm.tnc, cm.total())
}

/// Decision rule: p(PLAQUE) >= 0.5 is PLAQUE. The tie at exactly 0.5 goes
/// to PLAQUE — in a screening setting the costly mistake is the miss.
pub fn decide(p_plaque: f64) -> Label {
    if p_plaque >= 0.5 {
        Label::Plaque
    } else {
        Label::NoPlaque
    }
}

/// One evaluation run: model descriptor, counts, and derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub backbone: String,
    pub representation: Representation,
    pub pretrained: bool,
    #[serde(flatten)]
    pub confusion: ConfusionMatrix,
    pub sensitivity: MetricValue,
    pub specificity: MetricValue,
    pub accuracy: MetricValue,
}

impl MetricsReport {
    /// Assemble a report; metrics are derived from the counts, so they can
    /// never disagree with them.
    pub fn new(
        backbone: impl Into<String>,
        representation: Representation,
        pretrained: bool,
        confusion: ConfusionMatrix,
    ) -> Self {
        MetricsReport {
            backbone: backbone.into(),
            representation,
            pretrained,
            confusion,
            sensitivity: sensitivity(&confusion),
            specificity: specificity(&confusion),
            accuracy: accuracy(&confusion),
        }
    }

    /// Short run descriptor used in the scatter CSV.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}",
            self.backbone,
            self.representation,
            if self.pretrained { "pretrained" } else { "scratch" }
        )
    }

    fn consistent(&self) -> bool {
        let close = |a: MetricValue, b: MetricValue| match (a, b) {
            (MetricValue::Undefined, MetricValue::Undefined) => true,
            (MetricValue::Value(x), MetricValue::Value(y)) => (x - y).abs() < 1e-9,
            _ => false,
        };
        close(self.sensitivity, sensitivity(&self.confusion))
            && close(self.specificity, specificity(&self.confusion))
            && close(self.accuracy, accuracy(&self.confusion))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label())?;
        writeln!(
            f,
            "  tp {}  fp {}  tn {}  fn {}",
            self.confusion.tpc, self.confusion.fpc, self.confusion.tnc, self.confusion.fnc
        )?;
        writeln!(f, "  sensitivity {}", self.sensitivity)?;
        writeln!(f, "  specificity {}", self.specificity)?;
        write!(f, "  accuracy    {}", self.accuracy)
    }
}

/// Write a report as a flat key/value text file.
pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let text = toml::to_string(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a report back, rejecting files whose metrics disagree with their
/// own confusion counts.
pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: MetricsReport = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !report.consistent() {
        return Err(Error::Config(format!(
            "{}: metrics disagree with confusion counts",
            path.display()
        )));
    }
    Ok(report)
}

/// Run a trained model over a labeled test manifest and assemble the
/// metrics report. Frames are classified by [`decide`] on the plaque
/// probability from the deterministic evaluation transform.
pub fn evaluate(
    model: &crate::model::TrainedModel,
    test: &Manifest,
    aug: &AugmentConfig,
) -> Result<MetricsReport> {
    if test.representation() != aug.representation {
        return Err(Error::RepresentationMismatch {
            expected: aug.representation.as_str().to_string(),
            actual: test.representation().as_str().to_string(),
        });
    }
    let images: Vec<_> = test
        .records()
        .iter()
        .map(|r| crate::dataset::load_image(&test.resolve(r)))
        .collect::<Result<_>>()?;
    let probs = crate::model::predict_proba(model, &images, aug)?;
    let preds: Vec<Label> = probs.iter().map(|&p| decide(p)).collect();
    let labels: Vec<Label> = test.records().iter().map(|r| r.label).collect();
    let cm = confusion(&labels, &preds)?;
    Ok(MetricsReport::new(
        model.config().backbone.as_str(),
        test.representation(),
        model.config().pretrained,
        cm,
    ))
}
