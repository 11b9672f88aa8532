//! Command-line surface. Each subcommand wraps one library call: it reads
//! only its declared inputs, writes only under its output path, and on
//! failure prints a single diagnostic line to stderr and exits nonzero.
//! Every subcommand is deterministic in its arguments, so rerunning one
//! overwrites its outputs with identical bytes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use crate::augment::AugmentConfig;
use crate::config::{default_toml, first_line, margin, RunConfig};
use crate::dataset::{
    load_image, load_manifest, patient_split, save_image, write_manifest, FrameRecord, Manifest,
    Representation,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, read_report, scatter_plot, write_report};
use crate::geometry::{cartesian_to_polar, polar_to_cartesian, CartesianImage, PolarImage};
use crate::model::{
    build_model_with, load_checkpoint, save_checkpoint, TrainedModel, DEFAULT_INIT_SEED,
};
use crate::phantom::{generate_dataset, PhantomSpec};

#[derive(Parser)]
#[command(
    name = "ivoct",
    version,
    about = "IVOCT plaque classification: synthesis, scan conversion, training, evaluation"
)]
struct Cli {
    /// Print the default run configuration as TOML and exit.
    #[arg(long, exclusive = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset from a phantom spec.
    Synth {
        /// Phantom spec: a TOML file with bare keys or a [phantom] section.
        #[arg(long)]
        spec: PathBuf,
        /// Directory that receives the frames and manifest.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan-convert every frame of a manifest to the other representation.
    Convert {
        #[arg(long)]
        manifest: PathBuf,
        /// Target representation: cartesian or polar.
        #[arg(long, value_parser = parse_representation)]
        to: Representation,
        /// Square side of cartesian output; depth and A-line count of polar.
        #[arg(long)]
        side: usize,
        /// Directory that receives the converted frames and manifest.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a manifest into patient-disjoint train/test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Number of patients reserved for the test side.
        #[arg(long)]
        test_patients: usize,
        #[arg(long)]
        seed: u64,
        /// Directory that receives train.csv and test.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier as described by a run configuration.
    Train {
        /// Run configuration (TOML); see --print-config for the defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train_manifest: PathBuf,
        /// Checkpoint destination; falls back to [paths] in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled test manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        test_manifest: PathBuf,
        /// Metrics report destination (TOML).
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the sensitivity vs 1-specificity scatter of one or more reports.
    Plot {
        /// Report files written by eval; at least one.
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// Output image (PNG).
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_representation(s: &str) -> std::result::Result<Representation, String> {
    s.parse()
}

/// Parse arguments and execute. Returns the process exit code: 0 on
/// success, 1 on a pipeline error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; clap routes them to
            // stdout and reports exit code 0.
            let _ = e.print();
            return e.exit_code();
        }
    };
    if cli.print_config {
        print!("{}", default_toml());
        return 0;
    }
    let Some(command) = cli.command else {
        let mut cmd = Cli::command();
        eprintln!("error: a subcommand (or --print-config) is required\n{}", cmd.render_usage());
        return 2;
    };
    match dispatch(command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Convert { manifest, to, side, out } => convert(&manifest, to, side, &out),
        Command::Split { manifest, test_patients, seed, out } => {
            split(&manifest, test_patients, seed, &out)
        }
        Command::Train { config, train_manifest, out } => train(&config, &train_manifest, out),
        Command::Eval { ckpt, test_manifest, out } => eval(&ckpt, &test_manifest, &out),
        Command::Plot { reports, out } => plot(&reports, &out),
    }
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let spec = read_phantom_spec(spec_path)?;
    let manifest = generate_dataset(&spec, out)?;
    println!(
        "synth: {} frames across {} patients -> {}",
        manifest.records().len(),
        manifest.patients().len(),
        out.join("manifest.csv").display()
    );
    Ok(())
}

/// Accept a phantom spec written either as bare top-level keys or as the
/// [phantom] section of a full run configuration.
fn read_phantom_spec(path: &Path) -> Result<PhantomSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bare_err = match toml::from_str::<PhantomSpec>(&text) {
        Ok(spec) => return Ok(spec),
        Err(e) => e,
    };
    match toml::from_str::<RunConfig>(&text) {
        Ok(cfg) => cfg
            .phantom
            .ok_or_else(|| Error::Config(format!("{}: no [phantom] section", path.display()))),
        // The bare form's diagnostic names the offending key directly.
        Err(_) => Err(Error::Config(format!(
            "{}: {}",
            path.display(),
            first_line(&bare_err)
        ))),
    }
}

fn convert(manifest_path: &Path, to: Representation, side: usize, out: &Path) -> Result<()> {
    let m = load_manifest(manifest_path)?;
    if m.representation() == to {
        return Err(Error::InvalidParameter(format!(
            "manifest is already {}; nothing to convert",
            to.as_str()
        )));
    }
    guard_output_dir(out, m.source_root())?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let records: Vec<FrameRecord> = m
        .records()
        .par_iter()
        .map(|r| -> Result<FrameRecord> {
            let img = load_image(&m.resolve(r))?;
            let converted = match to {
                Representation::Cartesian => {
                    polar_to_cartesian(&PolarImage::new(img)?, side, 0.0)?.into_pixels()
                }
                Representation::Polar => {
                    cartesian_to_polar(&CartesianImage::new(img, 0.0)?, side, side)?.into_samples()
                }
            };
            let dest = out.join(&r.image_path);
            if let Some(parent) = dest.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            save_image(&dest, &converted)?;
            Ok(FrameRecord { representation: to, ..r.clone() })
        })
        .collect::<Result<_>>()?;
    let converted = Manifest::new(records, out)?;
    write_manifest(&converted, out.join("manifest.csv"))?;
    println!(
        "convert: {} frames to {} -> {}",
        converted.records().len(),
        to.as_str(),
        out.join("manifest.csv").display()
    );
    Ok(())
}

fn split(manifest_path: &Path, test_patients: usize, seed: u64, out: &Path) -> Result<()> {
    let m = load_manifest(manifest_path)?;
    let result = patient_split(&m, test_patients, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let train = rebase(&result.train, out)?;
    let test = rebase(&result.test, out)?;
    write_manifest(&train, out.join("train.csv"))?;
    write_manifest(&test, out.join("test.csv"))?;
    println!(
        "split: train {} frames / {} patients, test {} frames / {} patients -> {}",
        train.records().len(),
        train.patients().len(),
        test.records().len(),
        test.patients().len(),
        out.display()
    );
    Ok(())
}

/// Rewrite image paths to stay resolvable from `new_root`: relative when
/// the image lies under it, absolute otherwise. Written manifests work
/// regardless of where they land relative to the images.
fn rebase(m: &Manifest, new_root: &Path) -> Result<Manifest> {
    let root_abs = std::path::absolute(new_root).map_err(|e| Error::io(new_root, e))?;
    let records = m
        .records()
        .iter()
        .map(|r| {
            let resolved = m.resolve(r);
            let abs = std::path::absolute(&resolved).map_err(|e| Error::io(&resolved, e))?;
            let image_path = match abs.strip_prefix(&root_abs) {
                Ok(rel) => rel.to_path_buf(),
                Err(_) => abs,
            };
            Ok(FrameRecord { image_path, ..r.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Manifest::new(records, new_root)
}

fn train(config_path: &Path, manifest_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let out = out
        .or_else(|| cfg.paths.checkpoint.clone())
        .or_else(|| cfg.paths.output_dir.as_ref().map(|d| d.join("model.safetensors")))
        .ok_or_else(|| {
            Error::Config("no checkpoint destination: pass --out or set [paths] checkpoint".into())
        })?;
    let mut data = load_manifest(manifest_path)?;
    if let Some(root) = &cfg.paths.data_root {
        data = Manifest::new(data.records().to_vec(), root)?;
    }
    let tc = cfg.train_config();
    let model = build_model_with(&cfg.model, DEFAULT_INIT_SEED, cfg.paths.weight_cache.as_deref())?;
    let trained = crate::model::train(model, &data, &cfg.effective_augment(), &tc)?;
    save_checkpoint(&trained, &out)?;
    let last = trained.history().last().expect("training ran at least one epoch");
    println!(
        "train: {} epochs over {} frames; final loss {:.4}, accuracy {:.3} -> {}",
        tc.epochs,
        data.records().len(),
        last.loss,
        last.accuracy,
        out.display()
    );
    Ok(())
}

fn eval(ckpt: &Path, manifest_path: &Path, out: &Path) -> Result<()> {
    let model = load_checkpoint(ckpt)?;
    let test = load_manifest(manifest_path)?;
    let aug = match model.train_augment() {
        Some(aug) => aug.clone(),
        None => eval_only_augment(&model, test.representation()),
    };
    let report = evaluate(&model, &test, &aug)?;
    write_report(&report, out)?;
    println!(
        "eval: {} on {} frames; sensitivity {}, specificity {}, accuracy {} -> {}",
        report.label(),
        report.confusion.total(),
        report.sensitivity,
        report.specificity,
        report.accuracy,
        out.display()
    );
    Ok(())
}

/// Checkpoints written by this binary carry their augment recipe; for ones
/// assembled programmatically without it, evaluate with a deterministic
/// recipe at the model's input size.
fn eval_only_augment(model: &TrainedModel, representation: Representation) -> AugmentConfig {
    let (r, c) = model.config().input_size;
    AugmentConfig {
        representation,
        resize_to: (margin(r), margin(c)),
        crop_to: (r, c),
        flip_probability: 0.0,
        rotation_range: (0.0, 0.0),
        seed: 0,
    }
}

fn plot(reports: &[PathBuf], out: &Path) -> Result<()> {
    let loaded = reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    scatter_plot(&loaded, out)?;
    println!("plot: {} reports -> {}", loaded.len(), out.display());
    Ok(())
}

/// Subcommands never write into the directory they read from.
fn guard_output_dir(out: &Path, input_root: &Path) -> Result<()> {
    if let (Ok(a), Ok(b)) = (std::path::absolute(out), std::path::absolute(input_root)) {
        if a == b {
            return Err(Error::InvalidParameter(format!(
                "output directory {} is the input directory; refusing to overwrite inputs",
                out.display()
            )));
        }
    }
    Ok(())
}
