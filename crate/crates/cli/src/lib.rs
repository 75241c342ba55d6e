//! The `lczpipe` command line.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` (config
//! snapshot, input and output hashes, timings) into its `--out` directory.
//! Typical chain:
//!
//! ```text
//! lczpipe synth --seed 7 --out scene
//! lczpipe prepare --raster scene/scene.hdr --samples scene/samples.csv --out data
//! lczpipe train --data data --model cnn --out model
//! lczpipe evaluate --model model/cnn.model --data data --out eval
//! lczpipe predict --model model/cnn.model --raster data/stack.hdr --out pred
//! lczpipe regularize --map pred/map.hdr --out mv
//! lczpipe metrics --map mv/map.hdr --truth scene/truth.hdr --out metrics
//! lczpipe render --map mv/map.hdr --out mv/map.png
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lczpipe::baselines::rows_from_patches;
use lczpipe::metrics::{confusion, MetricsReport};
use lczpipe::model_io::{load_model, save_model, SavedModel};
use lczpipe::nn::train_cnn_with;
use lczpipe::pipeline::{
    classify_map_cnn, classify_map_pixel, evaluate_protocol, regularize, train_baseline, ModelKind, PipelineConfig,
    ProtocolOptions, RunManifest,
};
use lczpipe::raster::{
    load_label_map, load_raster, pure_sample_points_spaced, render_map, save_label_map, save_raster, synth_scene,
    Palette, SynthSceneSpec,
};
use lczpipe::sampling::{
    augment, extract_patch, load_patches, load_samples, load_split_manifest, save_patches, save_samples,
    save_split_manifest, split, PointSample,
};
use lczpipe::spatial::{aggregate_to_lcz, LabelMap};

#[derive(Parser, Debug)]
#[command(
    name = "lczpipe",
    version,
    about = "Spatial-spectral land-cover classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene, its truth map and pure sample points.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        /// `paired` (14 classes, 4 texture-only pairs) or `texture` (2 classes).
        #[arg(long, default_value = "paired")]
        preset: String,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        /// Minimum distance between sample points, in pixels.
        #[arg(long, default_value_t = 6)]
        spacing: usize,
        #[arg(long)]
        noise: Option<f32>,
        #[arg(long)]
        amplitude: Option<f32>,
        #[command(flatten)]
        common: Common,
    },
    /// Normalize a raster, split the samples and extract patches.
    Prepare {
        #[arg(long)]
        raster: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on the output of `prepare`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Test-set metrics of a trained model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Classify every pixel of a raster.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        raster: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Majority-vote regularization of a label map.
    Regularize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        kernel: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Block-majority aggregation of a label map.
    Aggregate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 10)]
        block: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render a label map to PNG.
    Render {
        #[arg(long)]
        map: PathBuf,
        /// CSV of `class_id,R,G,B`; defaults to evenly spaced hues.
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a label map with a truth map or with sample points.
    Metrics {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, conflicts_with = "samples")]
        truth: Option<PathBuf>,
        /// `row,col,class_id` CSV or a split manifest (its test set is used).
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Header and payload of a raster written under `dir`.
fn raster_files(header: &Path) -> [PathBuf; 2] {
    [header.to_path_buf(), header.with_extension("raw")]
}

fn add_raster_input(m: &mut RunManifest, header: &Path) -> Result<()> {
    for p in raster_files(header) {
        m.add_input(&p)?;
    }
    Ok(())
}

fn add_raster_output(m: &mut RunManifest, header: &Path) -> Result<()> {
    for p in raster_files(header) {
        m.add_output(&p)?;
    }
    Ok(())
}

fn write_text(m: &mut RunManifest, path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    m.add_output(path)?;
    Ok(())
}

fn require_model(path: &Path) -> Result<SavedModel> {
    if !path.exists() {
        bail!("no trained model at {}; run `lczpipe train` first", path.display());
    }
    Ok(load_model(path)?)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            width,
            height,
            preset,
            per_class,
            spacing,
            noise,
            amplitude,
            common,
        } => {
            let cfg = load_config(&common)?;
            out_dir(&out)?;
            let mut spec = match preset.as_str() {
                "paired" => SynthSceneSpec::paired_textures(width, height, cfg.seed),
                "texture" => SynthSceneSpec::texture_only(width, height, cfg.seed),
                other => bail!("unknown preset `{other}` (paired or texture)"),
            };
            spec.noise_sigma = noise.unwrap_or(spec.noise_sigma);
            spec.texture_amplitude = amplitude.unwrap_or(spec.texture_amplitude);
            let mut snapshot = cfg.snapshot();
            for (k, v) in [
                ("synth.preset", preset.clone()),
                ("synth.width", width.to_string()),
                ("synth.height", height.to_string()),
                ("synth.per_class", per_class.to_string()),
                ("synth.spacing", spacing.to_string()),
                ("synth.noise", spec.noise_sigma.to_string()),
                ("synth.amplitude", spec.texture_amplitude.to_string()),
            ] {
                snapshot.insert(k.to_string(), v);
            }
            let mut m = RunManifest::new("synth", snapshot, &out);
            let (stack, truth) = m.time("generate", || synth_scene(&spec, cfg.seed))?;
            let samples = m.time("sample", || {
                pure_sample_points_spaced(&truth, per_class, spacing, cfg.seed)
            })?;
            let (scene, truth_hdr, csv) = (out.join("scene.hdr"), out.join("truth.hdr"), out.join("samples.csv"));
            save_raster(&stack, &scene)?;
            save_label_map(&truth, &truth_hdr)?;
            save_samples(&samples, &csv)?;
            add_raster_output(&mut m, &scene)?;
            add_raster_output(&mut m, &truth_hdr)?;
            m.add_output(&csv)?;
            m.write()?;
            println!(
                "synth: {width}x{height} scene, {} samples -> {}",
                samples.len(),
                out.display()
            );
        }

        Command::Prepare {
            raster,
            samples,
            out,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = raster {
                cfg.raster = Some(r);
            }
            if let Some(s) = samples {
                cfg.samples = Some(s);
            }
            let raster = cfg.require_path("raster")?.to_path_buf();
            let samples_path = cfg.require_path("samples")?.to_path_buf();
            out_dir(&out)?;
            let mut m = RunManifest::new("prepare", cfg.snapshot(), &out);
            add_raster_input(&mut m, &raster)?;
            m.add_input(&samples_path)?;
            let stack = m.time("normalize", || load_raster(&raster).and_then(|s| s.normalize()))?;
            let samples = load_samples(&samples_path, stack.width(), stack.height())?;
            let points = split(&samples, cfg.split, cfg.seed)?;
            let patches = m.time("extract", || points.try_map(|s| extract_patch(&stack, s)))?;
            let augmented = m.time("augment", || augment(&patches.train));

            let stack_hdr = out.join("stack.hdr");
            save_raster(&stack, &stack_hdr)?;
            add_raster_output(&mut m, &stack_hdr)?;
            let split_csv = out.join("split.csv");
            save_split_manifest(&points, &split_csv)?;
            m.add_output(&split_csv)?;
            for (name, set) in [
                ("train.patches", &augmented),
                ("train_raw.patches", &patches.train),
                ("val.patches", &patches.val),
                ("test.patches", &patches.test),
            ] {
                let p = out.join(name);
                save_patches(set, &p)?;
                m.add_output(&p)?;
            }
            m.write()?;
            println!(
                "prepare: {} samples -> train {} (augmented {}), val {}, test {}",
                points.len(),
                points.train.len(),
                augmented.len(),
                points.val.len(),
                points.test.len()
            );
        }

        Command::Train {
            data,
            model,
            epochs,
            out,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(kind) = model {
                cfg.model = kind.parse()?;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
                cfg.ann_epochs = e;
                cfg.svm_epochs = e;
            }
            out_dir(&out)?;
            let mut m = RunManifest::new("train", cfg.snapshot(), &out);
            let model_path = out.join(format!("{}.model", cfg.model));
            let saved = match cfg.model {
                ModelKind::Cnn => {
                    let (train_p, val_p) = (data.join("train.patches"), data.join("val.patches"));
                    m.add_input(&train_p)?;
                    m.add_input(&val_p)?;
                    let set = lczpipe::sampling::DatasetSplit {
                        train: load_patches(&train_p)?,
                        val: load_patches(&val_p)?,
                        test: Vec::new(),
                        seed: cfg.seed,
                    };
                    let (model, history) = m.time("train", || {
                        train_cnn_with(&set, &cfg.cnn_train_config(), |r| {
                            println!(
                                "epoch {:>4}  loss {:.5}  val {}",
                                r.epoch,
                                r.train_loss,
                                r.val_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
                            );
                        })
                    })?;
                    write_text(&mut m, &out.join("history.csv"), &history.to_csv())?;
                    SavedModel::Cnn(model)
                }
                kind => {
                    let train_p = data.join("train_raw.patches");
                    m.add_input(&train_p)?;
                    let rows = rows_from_patches(&load_patches(&train_p)?);
                    SavedModel::Pixel(m.time("train", || train_baseline(kind, &rows, &cfg))?)
                }
            };
            save_model(&saved, &model_path)?;
            m.add_output(&model_path)?;
            m.write()?;
            println!("train: {} model -> {}", cfg.model, model_path.display());
        }

        Command::Evaluate {
            model,
            data,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let saved = require_model(&model)?;
            out_dir(&out)?;
            let mut m = RunManifest::new("evaluate", cfg.snapshot(), &out);
            m.add_input(&model)?;
            let (stack_hdr, split_csv) = (data.join("stack.hdr"), data.join("split.csv"));
            add_raster_input(&mut m, &stack_hdr)?;
            m.add_input(&split_csv)?;
            let stack = load_raster(&stack_hdr)?.normalize()?;
            let points = load_split_manifest(&split_csv, cfg.seed)?;
            let opts = ProtocolOptions {
                mv_kernel: cfg.mv_kernel,
                readout: cfg.readout,
            };
            let report = m.time("evaluate", || evaluate_protocol(&saved, &stack, &points.test, &opts))?;
            let named = |r: &MetricsReport| rename(r, &cfg.class_names);
            let metrics = named(&report.metrics);
            write_text(&mut m, &out.join("metrics.json"), &metrics.to_json())?;
            write_text(&mut m, &out.join("metrics.txt"), &metrics.to_text())?;
            if let Some(raw) = &report.raw {
                let raw = named(raw);
                write_text(&mut m, &out.join("metrics_raw.json"), &raw.to_json())?;
                write_text(&mut m, &out.join("metrics_raw.txt"), &raw.to_text())?;
            }
            m.write()?;
            print!("{}", metrics.to_text());
        }

        Command::Predict {
            model,
            raster,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let saved = require_model(&model)?;
            out_dir(&out)?;
            let mut m = RunManifest::new("predict", cfg.snapshot(), &out);
            m.add_input(&model)?;
            add_raster_input(&mut m, &raster)?;
            let stack = load_raster(&raster)?.normalize()?;
            let map = m.time("classify", || match &saved {
                SavedModel::Cnn(c) => classify_map_cnn(c, &stack),
                SavedModel::Pixel(p) => classify_map_pixel(p, &stack),
            })?;
            let hdr = out.join("map.hdr");
            save_label_map(&map, &hdr)?;
            add_raster_output(&mut m, &hdr)?;
            m.write()?;
            println!(
                "predict: {} map {}x{} -> {}",
                saved.kind(),
                map.width(),
                map.height(),
                hdr.display()
            );
        }

        Command::Regularize {
            map,
            kernel,
            out,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(k) = kernel {
                cfg.set("mv_kernel", &k.to_string())?;
                cfg.validate()?;
            }
            transform_map(&map, &out, "regularize", &cfg, |l| Ok(regularize(l, cfg.mv_kernel)?))?;
        }

        Command::Aggregate {
            map,
            block,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            transform_map(&map, &out, "aggregate", &cfg, |l| Ok(aggregate_to_lcz(l, block)?))?;
        }

        Command::Render { map, palette, out } => {
            let labels = load_label_map(&map)?;
            let palette = match palette {
                Some(p) => Palette::from_csv(p)?,
                None => Palette::default_hues(),
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                out_dir(dir)?;
            }
            render_map(&labels, &palette, &out)?;
            println!("render: {}", out.display());
        }

        Command::Metrics {
            map,
            truth,
            samples,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            out_dir(&out)?;
            let mut m = RunManifest::new("metrics", cfg.snapshot(), &out);
            add_raster_input(&mut m, &map)?;
            let pred = load_label_map(&map)?;
            let (predicted, actual) = match (truth, samples) {
                (Some(t), None) => {
                    add_raster_input(&mut m, &t)?;
                    let t = load_label_map(&t)?;
                    if (t.width(), t.height()) != (pred.width(), pred.height()) {
                        bail!(
                            "map is {}x{} but truth is {}x{}",
                            pred.width(),
                            pred.height(),
                            t.width(),
                            t.height()
                        );
                    }
                    (pred.labels().to_vec(), t.labels().to_vec())
                }
                (None, Some(s)) => {
                    m.add_input(&s)?;
                    let points = read_points(&s, &pred, cfg.seed)?;
                    let predicted = points.iter().map(|p| pred.get(p.row, p.col)).collect();
                    (predicted, points.iter().map(|p| p.class_id).collect())
                }
                _ => bail!("give exactly one of --truth or --samples"),
            };
            let report = rename(
                &MetricsReport::from_confusion(&confusion(&predicted, &actual)?)?,
                &cfg.class_names,
            );
            write_text(&mut m, &out.join("metrics.json"), &report.to_json())?;
            write_text(&mut m, &out.join("metrics.txt"), &report.to_text())?;
            m.write()?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

/// Test points from a split manifest (`...,set` column) or a plain sample
/// CSV.
fn read_points(path: &Path, map: &LabelMap, seed: u64) -> Result<Vec<PointSample>> {
    let header = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if header.lines().next().is_some_and(|l| l.trim_end().ends_with(",set")) {
        Ok(load_split_manifest(path, seed)?.test)
    } else {
        Ok(load_samples(path, map.width(), map.height())?)
    }
}

fn rename(report: &MetricsReport, names: &[String]) -> MetricsReport {
    let mut r = report.clone();
    for (c, n) in r.classes.iter_mut().zip(names) {
        c.name = n.clone();
    }
    r
}

fn transform_map(
    input: &Path,
    out: &Path,
    command: &str,
    cfg: &PipelineConfig,
    f: impl FnOnce(&LabelMap) -> Result<LabelMap>,
) -> Result<()> {
    out_dir(out)?;
    let mut m = RunManifest::new(command, cfg.snapshot(), out);
    add_raster_input(&mut m, input)?;
    let map = load_label_map(input)?;
    let result = m.time(command, || f(&map))?;
    let hdr = out.join("map.hdr");
    save_label_map(&result, &hdr)?;
    add_raster_output(&mut m, &hdr)?;
    m.write()?;
    println!(
        "{command}: {}x{} map -> {}",
        result.width(),
        result.height(),
        hdr.display()
    );
    Ok(())
}
