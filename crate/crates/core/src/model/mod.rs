//! Classifier construction, training, inference, and checkpointing over a
//! small backbone registry.
//!
//! Every model is a backbone ending in global average pooling, then
//! dropout (p = 0.5 by default) and a fresh 2-output linear head.
//! Grayscale frames are replicated to 3 channels and normalized — with the
//! pretraining corpus statistics when starting from pretrained weights,
//! with the training set's own mean/std when starting from scratch.
//!
//! Training is single-threaded and bit-deterministic given the seeds in
//! the configs; there is no relaxed mode. Checkpoints are single
//! self-describing files: every parameter and running statistic, plus a
//! JSON metadata block (schema version, configs, normalization, history).

mod inception;
mod inception_resnet;
mod layers;
mod resnet;
mod small;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::{Device, Tensor};
use candle_nn::ops::softmax;
use candle_nn::optim::Optimizer as _;
use candle_nn::{AdamW, ParamsAdamW};

use crate::augment::{eval_transform, train_transform, AugmentConfig};
use crate::dataset::{load_image, Label, Manifest, Representation};
use crate::geometry::Grid;
use crate::rng::Draw;
use crate::{Error, Result};

use layers::{dropout_mask, Linear};
use store::ParamStore;

/// Environment variable naming the pretrained-weight cache directory.
pub const WEIGHT_CACHE_ENV: &str = "IVOCT_WEIGHT_CACHE";

/// Conventional fine-tuning learning rates when none is configured.
pub const DEFAULT_LR_PRETRAINED: f64 = 1e-4;
pub const DEFAULT_LR_SCRATCH: f64 = 1e-3;

const SCHEMA_VERSION: &str = "1";
/// Weight initialization is part of the model definition, not of a
/// particular training run, so it uses a fixed stream.
pub const DEFAULT_INIT_SEED: u64 = 0x0069_766f_6374; // "ivoct"

const TAG_BACKBONE_INIT: u64 = 0x6261_636b; // "back"
const TAG_HEAD_INIT: u64 = 0x6865_6164; // "head"
const TAG_SHUFFLE: u64 = 0x7368_7566; // "shuf"
const TAG_AUGMENT: u64 = 0x6175_676d; // "augm"
const TAG_DROPOUT: u64 = 0x64_726f70; // "drop"

const PREDICT_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Resnet50,
    Resnet101,
    InceptionV3,
    InceptionResnetV2,
    /// Four-block strided CNN (< 10⁶ parameters) for desk-scale tests.
    SmallTest,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Resnet50 => "resnet50",
            Backbone::Resnet101 => "resnet101",
            Backbone::InceptionV3 => "inception_v3",
            Backbone::InceptionResnetV2 => "inception_resnet_v2",
            Backbone::SmallTest => "small_test",
        }
    }

    pub fn all() -> [Backbone; 5] {
        [
            Backbone::Resnet50,
            Backbone::Resnet101,
            Backbone::InceptionV3,
            Backbone::InceptionResnetV2,
            Backbone::SmallTest,
        ]
    }
}

impl FromStr for Backbone {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Backbone::all()
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Backbone::all().iter().map(|b| b.as_str()).collect();
                format!("unknown backbone {s:?} (expected one of {})", names.join(", "))
            })
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub pretrained: bool,
    /// Dropout rate applied to the pooled features, before the head.
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// `(rows, cols)` the network is fed; must equal the crop size.
    #[serde(default = "default_input_size")]
    pub input_size: (usize, usize),
}

fn default_dropout() -> f64 {
    0.5
}

fn default_num_classes() -> usize {
    2
}

fn default_input_size() -> (usize, usize) {
    (270, 270)
}

impl ModelConfig {
    pub fn new(backbone: Backbone, pretrained: bool) -> Self {
        ModelConfig {
            backbone,
            pretrained,
            dropout_p: default_dropout(),
            num_classes: default_num_classes(),
            input_size: default_input_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidParameter(format!(
                "dropout_p must be in [0, 1], got {}",
                self.dropout_p
            )));
        }
        if self.num_classes != 2 {
            return Err(Error::InvalidParameter(format!(
                "this task is binary: num_classes must be 2, got {}",
                self.num_classes
            )));
        }
        if self.backbone == Backbone::SmallTest && self.pretrained {
            return Err(Error::InvalidParameter(
                "small_test has no pretrained weights".to_string(),
            ));
        }
        let (r, c) = self.input_size;
        if r < 32 || c < 32 {
            return Err(Error::InvalidParameter(format!(
                "input_size must be at least 32x32, got {r}x{c}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub representation: Representation,
    /// Update only the head, leaving backbone parameters fixed (their
    /// running statistics still track the new data).
    #[serde(default)]
    pub freeze_backbone: bool,
}

impl TrainConfig {
    /// Conventional settings: ADAM at 1e-4 (pretrained) or 1e-3 (scratch).
    pub fn recommended(representation: Representation, pretrained: bool, seed: u64) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: if pretrained {
                DEFAULT_LR_PRETRAINED
            } else {
                DEFAULT_LR_SCRATCH
            },
            optimizer: OptimizerKind::Adam,
            seed,
            representation,
            freeze_backbone: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-channel statistics the 3-channel input is standardized with.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

/// Channel statistics of the standard large-scale natural-image
/// pretraining corpus, used whenever the backbone starts from its weights.
pub const IMAGENET_NORMALIZATION: Normalization = Normalization {
    mean: [0.485, 0.456, 0.406],
    std: [0.229, 0.224, 0.225],
};

/// Placeholder for scratch models until training measures the dataset.
const UNIT_NORMALIZATION: Normalization = Normalization {
    mean: [0.5, 0.5, 0.5],
    std: [0.25, 0.25, 0.25],
};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches.
    pub loss: f64,
    /// Fraction of training frames whose argmax logit matched the label,
    /// measured on the augmented training batches themselves.
    pub accuracy: f64,
}

// One Net exists per model for the life of the process; boxing the wide
// variants would buy nothing.
#[allow(clippy::large_enum_variant)]
enum Net {
    Small(small::SmallNet),
    Resnet(resnet::ResNet),
    Inception(inception::InceptionV3),
    InceptionResnet(inception_resnet::InceptionResnetV2),
}

impl Net {
    fn build(backbone: Backbone, store: &mut ParamStore, draw: &mut Draw) -> Result<(Self, usize)> {
        Ok(match backbone {
            Backbone::SmallTest => (
                Net::Small(small::SmallNet::new(store, draw)?),
                small::FEATURES,
            ),
            Backbone::Resnet50 => (
                Net::Resnet(resnet::ResNet::new(store, draw, resnet::RESNET50_BLOCKS)?),
                resnet::FEATURES,
            ),
            Backbone::Resnet101 => (
                Net::Resnet(resnet::ResNet::new(store, draw, resnet::RESNET101_BLOCKS)?),
                resnet::FEATURES,
            ),
            Backbone::InceptionV3 => (
                Net::Inception(inception::InceptionV3::new(store, draw)?),
                inception::FEATURES,
            ),
            Backbone::InceptionResnetV2 => (
                Net::InceptionResnet(inception_resnet::InceptionResnetV2::new(store, draw)?),
                inception_resnet::FEATURES,
            ),
        })
    }

    fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Net::Small(n) => n.features(x, train),
            Net::Resnet(n) => n.features(x, train),
            Net::Inception(n) => n.features(x, train),
            Net::InceptionResnet(n) => n.features(x, train),
        }
    }
}

pub struct TrainedModel {
    config: ModelConfig,
    store: ParamStore,
    net: Net,
    head: Linear,
    feature_dim: usize,
    normalization: Normalization,
    history: Vec<EpochStats>,
    train_config: Option<TrainConfig>,
    /// Augmentation the model was last trained with; drives standalone
    /// evaluation of a restored checkpoint.
    augment: Option<AugmentConfig>,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn train_config(&self) -> Option<&TrainConfig> {
        self.train_config.as_ref()
    }

    pub fn train_augment(&self) -> Option<&AugmentConfig> {
        self.augment.as_ref()
    }

    /// Learned-parameter count (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    /// Every named tensor — parameters and running statistics — for
    /// inspection. Entries view live storage; they are not copies.
    pub fn parameters(&self) -> std::collections::BTreeMap<String, Tensor> {
        self.store.tensor_map()
    }

    /// One-line structural summary of the classifier stack, e.g.
    /// `resnet50 -> pool(2048) -> dropout(p=0.5) -> linear(2048 -> 2)`.
    pub fn describe(&self) -> String {
        format!(
            "{} -> pool({}) -> dropout(p={}) -> linear({} -> {})",
            self.config.backbone,
            self.feature_dim,
            self.config.dropout_p,
            self.feature_dim,
            self.config.num_classes
        )
    }

    fn logits(&self, x: &Tensor, train: bool, dropout: Option<&mut Draw>) -> Result<Tensor> {
        let feats = self.net.features(x, train)?;
        let feats = match dropout {
            Some(draw) if train && self.config.dropout_p > 0.0 => {
                let (b, f) = feats.dims2()?;
                let mask = dropout_mask(draw, self.config.dropout_p, (b, f))?;
                (feats * mask)?
            }
            _ => feats,
        };
        self.head.forward(&feats)
    }
}

fn build_skeleton(config: &ModelConfig, init_seed: u64) -> Result<TrainedModel> {
    config.validate()?;
    let mut store = ParamStore::new();
    let root = Draw::from_seed(init_seed);
    let (net, feature_dim) = Net::build(
        config.backbone,
        &mut store,
        &mut root.substream(TAG_BACKBONE_INIT),
    )?;
    let head = Linear::new(
        &mut store,
        &mut root.substream(TAG_HEAD_INIT),
        "head",
        feature_dim,
        config.num_classes,
    )?;
    let normalization = if config.pretrained {
        IMAGENET_NORMALIZATION
    } else {
        UNIT_NORMALIZATION
    };
    Ok(TrainedModel {
        config: config.clone(),
        store,
        net,
        head,
        feature_dim,
        normalization,
        history: Vec::new(),
        train_config: None,
        augment: None,
    })
}

fn backbone_weight_path(dir: &Path, backbone: Backbone) -> PathBuf {
    dir.join(format!("{backbone}.safetensors"))
}

/// Instantiate a model. With `pretrained`, backbone weights are loaded
/// from `<cache>/<backbone>.safetensors` where `<cache>` is `cache_dir` or,
/// when `None`, the directory named by [`WEIGHT_CACHE_ENV`]. The head is
/// freshly initialized either way. `init_seed` drives that fresh
/// initialization; [`build_model`] uses a fixed stream.
pub fn build_model_with(
    config: &ModelConfig,
    init_seed: u64,
    cache_dir: Option<&Path>,
) -> Result<TrainedModel> {
    let mut model = build_skeleton(config, init_seed)?;
    if config.pretrained {
        let dir = match cache_dir {
            Some(d) => d.to_path_buf(),
            None => match std::env::var_os(WEIGHT_CACHE_ENV) {
                Some(d) => PathBuf::from(d),
                None => {
                    return Err(Error::PretrainedWeightsMissing {
                        backbone: config.backbone.to_string(),
                        path: PathBuf::from(format!("${WEIGHT_CACHE_ENV} (unset)")),
                    })
                }
            },
        };
        let path = backbone_weight_path(&dir, config.backbone);
        if !path.is_file() {
            return Err(Error::PretrainedWeightsMissing {
                backbone: config.backbone.to_string(),
                path,
            });
        }
        let tensors = candle_core::safetensors::load(&path, model.store.device())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        model
            .store
            .load_named(&tensors, |name| !name.starts_with("head."))?;
    }
    Ok(model)
}

/// [`build_model_with`] using the fixed initialization stream and the
/// environment-configured weight cache.
pub fn build_model(config: &ModelConfig) -> Result<TrainedModel> {
    build_model_with(config, DEFAULT_INIT_SEED, None)
}

/// Write the model's backbone parameters (head excluded) into `dir` in the
/// pretrained-cache layout. Returns the file path. This is how a cache is
/// seeded from an already-trained model.
pub fn save_backbone_weights(model: &TrainedModel, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = backbone_weight_path(dir, model.config.backbone);
    let tensors: BTreeMap<String, Tensor> = model
        .store
        .tensor_map()
        .into_iter()
        .filter(|(name, _)| !name.starts_with("head."))
        .collect();
    safetensors::serialize_to_file(&tensors, None, &path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Warn-worthy degeneracy: a training set missing one class entirely.
pub fn class_absence_warning(data: &Manifest) -> Option<String> {
    for label in [Label::Plaque, Label::NoPlaque] {
        if !data.records().iter().any(|r| r.label == label) {
            return Some(format!(
                "training set contains no {} frames; the classifier will collapse to one class",
                label.as_str()
            ));
        }
    }
    None
}

/// Global mean/std of a frame collection, replicated across channels.
fn dataset_normalization(images: &[(Grid, u32)]) -> Normalization {
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    for (img, _) in images {
        for &v in img.iter() {
            sum += v as f64;
            sum_sq += (v as f64) * (v as f64);
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    let std = var.sqrt().max(1e-3) as f32;
    let mean = mean as f32;
    Normalization {
        mean: [mean; 3],
        std: [std; 3],
    }
}

/// Stack grids into a normalized `(B, 3, H, W)` tensor, replicating the
/// single gray channel.
fn batch_tensor(images: &[&Grid], norm: &Normalization, device: &Device) -> Result<Tensor> {
    let (h, w) = images[0].dim();
    let mut flat = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.dim() != (h, w) {
            return Err(Error::InvalidParameter(format!(
                "mixed frame shapes in one batch: {:?} vs {:?}",
                img.dim(),
                (h, w)
            )));
        }
        for c in 0..3 {
            let m = norm.mean[c];
            let s = norm.std[c];
            flat.extend(img.iter().map(|&v| (v - m) / s));
        }
    }
    Ok(Tensor::from_vec(flat, (images.len(), 3, h, w), device)?)
}

struct SgdMomentum {
    vars: Vec<candle_core::Var>,
    velocity: Vec<Option<Tensor>>,
    lr: f64,
    momentum: f64,
}

impl SgdMomentum {
    fn new(vars: Vec<candle_core::Var>, lr: f64, momentum: f64) -> Self {
        let velocity = vars.iter().map(|_| None).collect();
        SgdMomentum {
            vars,
            velocity,
            lr,
            momentum,
        }
    }

    fn backward_step(&mut self, loss: &Tensor) -> Result<()> {
        let grads = loss.backward()?;
        for (var, vel) in self.vars.iter().zip(self.velocity.iter_mut()) {
            if let Some(grad) = grads.get(var) {
                // v <- momentum * v + g;  w <- w - lr * v
                let v = match vel.take() {
                    Some(prev) => ((prev * self.momentum)? + grad)?,
                    None => grad.clone(),
                };
                var.set(&(var.as_tensor() - (&v * self.lr)?)?)?;
                *vel = Some(v);
            }
        }
        Ok(())
    }
}

enum Opt {
    Adam(AdamW),
    Sgd(SgdMomentum),
}

impl Opt {
    fn backward_step(&mut self, loss: &Tensor) -> Result<()> {
        match self {
            Opt::Adam(o) => Ok(o.backward_step(loss)?),
            Opt::Sgd(o) => o.backward_step(loss),
        }
    }
}

/// Train `model` on `data` under the given augmentation and schedule.
///
/// The three seeds in play are independent: `aug.seed` drives the
/// per-frame augmentation draws, `tc.seed` drives epoch shuffling and
/// dropout masks, and the model's own initialization happened at build
/// time. Runs are bit-reproducible for equal (model, data, aug, tc).
pub fn train(
    mut model: TrainedModel,
    data: &Manifest,
    aug: &AugmentConfig,
    tc: &TrainConfig,
) -> Result<TrainedModel> {
    tc.validate()?;
    aug.validate()?;
    if data.representation() != tc.representation {
        return Err(Error::RepresentationMismatch {
            expected: tc.representation.as_str().to_string(),
            actual: data.representation().as_str().to_string(),
        });
    }
    if aug.representation != tc.representation {
        return Err(Error::RepresentationMismatch {
            expected: tc.representation.as_str().to_string(),
            actual: aug.representation.as_str().to_string(),
        });
    }
    if aug.crop_to != model.config.input_size {
        return Err(Error::InvalidParameter(format!(
            "augmentation crops to {:?} but the model expects {:?}",
            aug.crop_to, model.config.input_size
        )));
    }
    if let Some(warning) = class_absence_warning(data) {
        eprintln!("warning: {warning}");
    }

    // Load every frame once, pre-resized to the augmentation's working
    // size (the per-epoch transform's own resize is then an identity).
    let base: Vec<(Grid, u32)> = data
        .records()
        .iter()
        .map(|r| {
            let img = load_image(&data.resolve(r))?;
            let img = crate::geometry::resize(&img, aug.resize_to)?;
            Ok((img, r.label.class_index() as u32))
        })
        .collect::<Result<_>>()?;

    if !model.config.pretrained {
        model.normalization = dataset_normalization(&base);
    }
    let device = model.store.device().clone();

    let head_only = |name: &str| name.starts_with("head.");
    let vars = if tc.freeze_backbone {
        model.store.trainable_where(head_only)
    } else {
        model.store.trainable_vars()
    };
    let mut opt = match tc.optimizer {
        OptimizerKind::Adam => Opt::Adam(AdamW::new(
            vars,
            ParamsAdamW {
                lr: tc.learning_rate,
                weight_decay: 0.0,
                ..Default::default()
            },
        )?),
        OptimizerKind::SgdMomentum => Opt::Sgd(SgdMomentum::new(vars, tc.learning_rate, 0.9)),
    };

    let shuffle_root = Draw::from_seed(tc.seed).substream(TAG_SHUFFLE);
    let dropout_root = Draw::from_seed(tc.seed).substream(TAG_DROPOUT);
    let augment_root = Draw::from_seed(aug.seed).substream(TAG_AUGMENT);

    let mut history = Vec::with_capacity(tc.epochs);
    let mut step = 0u64;
    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..base.len()).collect();
        {
            use rand::seq::SliceRandom;
            let mut draw = shuffle_root.substream(epoch as u64);
            order.shuffle(&mut draw);
        }
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let mut frames = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                // One augmentation stream per (epoch, frame): stable no
                // matter how frames land in batches.
                let mut draw = augment_root.substream(((epoch as u64) << 32) | i as u64);
                frames.push(train_transform(&base[i].0, aug, &mut draw)?);
                labels.push(base[i].1);
            }
            let refs: Vec<&Grid> = frames.iter().collect();
            let x = batch_tensor(&refs, &model.normalization, &device)?;
            let y = Tensor::from_vec(labels.clone(), (labels.len(),), &device)?;
            let mut drop_draw = dropout_root.substream(step);
            let logits = model.logits(&x, true, Some(&mut drop_draw))?;
            let loss = candle_nn::loss::cross_entropy(&logits, &y)?;
            let loss_value = loss.to_scalar::<f32>()? as f64;
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step as usize,
                });
            }
            opt.backward_step(&loss)?;
            loss_sum += loss_value * batch.len() as f64;
            let rows = logits.to_vec2::<f32>()?;
            correct += rows
                .iter()
                .zip(&labels)
                .filter(|(row, &lbl)| (row[1] > row[0]) == (lbl == 1))
                .count();
            step += 1;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / base.len() as f64,
            accuracy: correct as f64 / base.len() as f64,
        });
    }
    model.history = history;
    model.train_config = Some(tc.clone());
    model.augment = Some(aug.clone());
    Ok(model)
}

/// Per-frame probability of the plaque class, using the deterministic
/// evaluation transform (resize, center crop) under `aug`.
pub fn predict_proba(
    model: &TrainedModel,
    images: &[Grid],
    aug: &AugmentConfig,
) -> Result<Vec<f64>> {
    aug.validate()?;
    if aug.crop_to != model.config.input_size {
        return Err(Error::InvalidParameter(format!(
            "evaluation crops to {:?} but the model expects {:?}",
            aug.crop_to, model.config.input_size
        )));
    }
    let device = model.store.device().clone();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(PREDICT_BATCH) {
        let frames: Vec<Grid> = chunk
            .iter()
            .map(|img| eval_transform(img, aug))
            .collect::<Result<_>>()?;
        let refs: Vec<&Grid> = frames.iter().collect();
        let x = batch_tensor(&refs, &model.normalization, &device)?;
        let logits = model.logits(&x, false, None)?;
        let probs = softmax(&logits, 1)?.to_vec2::<f32>()?;
        out.extend(probs.iter().map(|row| row[Label::Plaque.class_index()] as f64));
    }
    Ok(out)
}

/// Serialize the model to one self-describing file: all parameters and
/// buffers plus a JSON metadata block.
pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut meta = HashMap::new();
    meta.insert("schema_version".to_string(), SCHEMA_VERSION.to_string());
    meta.insert(
        "model_config".to_string(),
        serde_json::to_string(&model.config).expect("config serializes"),
    );
    meta.insert(
        "normalization".to_string(),
        serde_json::to_string(&model.normalization).expect("normalization serializes"),
    );
    meta.insert(
        "history".to_string(),
        serde_json::to_string(&model.history).expect("history serializes"),
    );
    if let Some(tc) = &model.train_config {
        meta.insert(
            "train_config".to_string(),
            serde_json::to_string(tc).expect("train config serializes"),
        );
    }
    if let Some(aug) = &model.augment {
        meta.insert(
            "augment".to_string(),
            serde_json::to_string(aug).expect("augment config serializes"),
        );
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tensors = model.store.tensor_map();
    safetensors::serialize_to_file(&tensors, Some(meta), path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::CheckpointCorrupt {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn meta_field<T: serde::de::DeserializeOwned>(
    meta: &HashMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<T> {
    let raw = meta
        .get(key)
        .ok_or_else(|| corrupt(path, format!("metadata is missing {key:?}")))?;
    serde_json::from_str(raw).map_err(|e| corrupt(path, format!("bad {key:?} metadata: {e}")))
}

/// Restore a model saved by [`save_checkpoint`]. Pretrained-weight caches
/// are not consulted: every parameter comes from the file.
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)
        .map_err(|e| corrupt(path, format!("unreadable header: {e}")))?;
    let meta = meta
        .metadata()
        .clone()
        .ok_or_else(|| corrupt(path, "file has no metadata block"))?;
    let version = meta
        .get("schema_version")
        .ok_or_else(|| corrupt(path, "metadata is missing schema version"))?;
    if version != SCHEMA_VERSION {
        return Err(Error::CheckpointVersion {
            found: version.clone(),
            expected: SCHEMA_VERSION.to_string(),
        });
    }
    let config: ModelConfig = meta_field(&meta, "model_config", path)?;
    let mut model = build_skeleton(&config, DEFAULT_INIT_SEED)?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, model.store.device())
        .map_err(|e| corrupt(path, format!("unreadable tensors: {e}")))?;
    model
        .store
        .load_named(&tensors, |_| true)
        .map_err(|e| corrupt(path, e.to_string()))?;
    model.normalization = meta_field(&meta, "normalization", path)?;
    model.history = meta_field(&meta, "history", path)?;
    model.train_config = match meta.get("train_config") {
        Some(_) => Some(meta_field(&meta, "train_config", path)?),
        None => None,
    };
    model.augment = match meta.get("augment") {
        Some(_) => Some(meta_field(&meta, "augment", path)?),
        None => None,
    };
    Ok(model)
}
