//! One TOML file drives a run: which network to build (`[model]`), how to
//! train it (`[train]`), how frames are transformed (`[augment]`), optionally
//! how a synthetic dataset is generated (`[phantom]`), and where artifacts
//! live (`[paths]`). Every omitted key falls back to a stated default, so a
//! minimal config is just a backbone, a transfer flag, and a representation;
//! `default_toml` renders the fully resolved defaults for `--print-config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::dataset::Representation;
use crate::error::{Error, Result};
use crate::model::{
    Backbone, ModelConfig, OptimizerKind, TrainConfig, DEFAULT_LR_PRETRAINED, DEFAULT_LR_SCRATCH,
};
use crate::phantom::PhantomSpec;

/// `[train]` as written on disk: [`TrainConfig`] with the learning rate
/// optional. Omitted, it resolves by transfer mode — 1e-4 on top of
/// pretrained weights, 1e-3 from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_representation")]
    pub representation: Representation,
    #[serde(default)]
    pub freeze_backbone: bool,
}

fn default_epochs() -> usize {
    30
}

fn default_batch_size() -> usize {
    16
}

fn default_seed() -> u64 {
    17
}

fn default_representation() -> Representation {
    Representation::Cartesian
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: None,
            optimizer: OptimizerKind::default(),
            seed: default_seed(),
            representation: default_representation(),
            freeze_backbone: false,
        }
    }
}

impl TrainOptions {
    /// Fix the learning rate by transfer mode and produce the concrete
    /// training configuration.
    pub fn resolve(&self, pretrained: bool) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.unwrap_or(if pretrained {
                DEFAULT_LR_PRETRAINED
            } else {
                DEFAULT_LR_SCRATCH
            }),
            optimizer: self.optimizer,
            seed: self.seed,
            representation: self.representation,
            freeze_backbone: self.freeze_backbone,
        }
    }
}

/// `[paths]` — filesystem knobs, all optional. Command-line flags take
/// precedence over every entry here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Directory manifest-relative image paths resolve against, when it is
    /// not the manifest's own directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    /// Directory for artifacts whose location is otherwise unspecified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Where `train` writes (and `eval` reads) the model when no explicit
    /// path is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Pretrained-weight cache; overrides the IVOCT_WEIGHT_CACHE variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_cache: Option<PathBuf>,
}

/// A full run description. Sections beyond `[model]` and `[train]` are
/// optional; see [`RunConfig::effective_augment`] for the `[augment]`
/// fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
    #[serde(default)]
    pub paths: PathsSection,
}

fn default_model() -> ModelConfig {
    ModelConfig::new(Backbone::Resnet101, true)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: default_model(),
            train: TrainOptions::default(),
            augment: None,
            phantom: None,
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), first_line(&e))))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks the individual sections cannot see: the augment
    /// recipe must share the training representation and crop to exactly
    /// what the network is sized for.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        if let Some(aug) = &self.augment {
            aug.validate()?;
            if aug.representation != self.train.representation {
                return Err(Error::RepresentationMismatch {
                    expected: self.train.representation.as_str().to_string(),
                    actual: aug.representation.as_str().to_string(),
                });
            }
            if aug.crop_to != self.model.input_size {
                return Err(Error::Config(format!(
                    "augment.crop_to {:?} must equal model.input_size {:?}",
                    aug.crop_to, self.model.input_size
                )));
            }
        }
        if let Some(spec) = &self.phantom {
            spec.validate()?;
        }
        Ok(())
    }

    /// The concrete training configuration, learning rate resolved.
    pub fn train_config(&self) -> TrainConfig {
        self.train.resolve(self.model.pretrained)
    }

    /// The augment recipe this run uses. When `[augment]` is omitted the
    /// standard recipe applies, cropping to the model's input size after a
    /// resize with a one-ninth margin — the rule that yields the usual
    /// 300x300 -> 270x270 pair — seeded by the training seed.
    pub fn effective_augment(&self) -> AugmentConfig {
        self.augment.clone().unwrap_or_else(|| {
            let (r, c) = self.model.input_size;
            AugmentConfig {
                resize_to: (margin(r), margin(c)),
                crop_to: (r, c),
                ..AugmentConfig::for_representation(self.train.representation, self.train.seed)
            }
        })
    }

    /// Serialize back to TOML. Infallible for any constructible config.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("a RunConfig always serializes")
    }
}

/// Resize target with a one-ninth margin over the crop: 270 -> 300.
pub(crate) fn margin(size: usize) -> usize {
    (size as f64 * 10.0 / 9.0).round() as usize
}

pub(crate) fn first_line(err: &impl std::fmt::Display) -> String {
    let text = err.to_string();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The default configuration rendered with every choice explicit — the
/// learning rate resolved, the augment recipe spelled out, a phantom spec
/// included — for `--print-config`.
pub fn default_toml() -> String {
    let mut cfg = RunConfig::default();
    cfg.train.learning_rate = Some(cfg.train_config().learning_rate);
    cfg.augment = Some(cfg.effective_augment());
    cfg.phantom = Some(PhantomSpec::default());
    format!(
        "# ivoct run configuration, with all defaults shown explicitly.\n\
         # learning_rate may be omitted: it then resolves to {DEFAULT_LR_PRETRAINED:e} when\n\
         # model.pretrained is true and {DEFAULT_LR_SCRATCH:e} otherwise. The whole [augment]\n\
         # section may be omitted: frames are then resized with a one-ninth\n\
         # margin and cropped to model.input_size, flips and rotations at\n\
         # their standard rates, seeded by train.seed.\n\
         {}",
        cfg.to_toml()
    )
}
