//! Trains the CNN and the three pixel baselines on a synthetic 14-class
//! scene whose class pairs share spectra, and prints test accuracies.
//!
//! ```text
//! cargo run --release --example ordering -- [cnn_epochs] [ann_epochs] [noise] [amplitude] [spacing]
//! ```

use std::time::Instant;

use lczpipe::baselines::{rows_from_patches, train_ann, train_rf, train_svm, AnnConfig, ForestConfig, SvmConfig};
use lczpipe::nn::{train_cnn_with, TrainConfig};
use lczpipe::pipeline::{evaluate_cnn, evaluate_pixel, ProtocolOptions};
use lczpipe::raster::{pure_sample_points_spaced, synth_scene, SynthSceneSpec};
use lczpipe::sampling::{augment, extract_patch, split};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> lczpipe::Result<()> {
    let cnn_epochs: usize = arg(1, 20);
    let ann_epochs: usize = arg(2, 20);
    let mut spec = SynthSceneSpec::paired_textures(512, 512, 1);
    spec.noise_sigma = arg(3, spec.noise_sigma);
    spec.texture_amplitude = arg(4, spec.texture_amplitude);
    let seed = 7;

    let t = Instant::now();
    let (stack, truth) = synth_scene(&spec, seed)?;
    let stack = stack.normalize()?;
    let samples = pure_sample_points_spaced(&truth, 100, arg(5, 6), seed)?;
    let points = split(&samples, (5, 2, 3), seed)?;
    let patches = points.try_map(|s| extract_patch(&stack, s))?;
    let mut train_set = patches.clone();
    train_set.train = augment(&patches.train);
    println!("scene + patches: {:.1?}", t.elapsed());

    let t = Instant::now();
    let cfg = TrainConfig {
        epochs: cnn_epochs,
        seed,
        ..TrainConfig::default()
    };
    let (cnn, _) = train_cnn_with(&train_set, &cfg, |r| {
        println!(
            "  epoch {:>3}  loss {:.4}  val {:.3}",
            r.epoch,
            r.train_loss,
            r.val_accuracy.unwrap_or(f64::NAN)
        );
    })?;
    let cnn_oa = evaluate_cnn(&cnn, &stack, &points.test)?.oa;
    println!("cnn  test OA {cnn_oa:.3}  ({:.1?})", t.elapsed());

    let rows = rows_from_patches(&patches.train);
    let opts = ProtocolOptions::default();
    let t = Instant::now();
    let rf = train_rf(
        &rows,
        &ForestConfig {
            seed,
            ..ForestConfig::default()
        },
    )?;
    let (mv, raw) = evaluate_pixel(&rf, &stack, &points.test, &opts)?;
    println!("rf   raw {:.3}  mv {:.3}  ({:.1?})", raw.oa, mv.oa, t.elapsed());

    let t = Instant::now();
    let svm = train_svm(
        &rows,
        &SvmConfig {
            seed,
            ..SvmConfig::default()
        },
    )?;
    let (mv, raw) = evaluate_pixel(&svm, &stack, &points.test, &opts)?;
    println!("svm  raw {:.3}  mv {:.3}  ({:.1?})", raw.oa, mv.oa, t.elapsed());

    let t = Instant::now();
    let ann = train_ann(
        &rows,
        &AnnConfig {
            epochs: ann_epochs,
            seed,
            ..AnnConfig::default()
        },
    )?;
    let (mv, raw) = evaluate_pixel(&ann, &stack, &points.test, &opts)?;
    println!("ann  raw {:.3}  mv {:.3}  ({:.1?})", raw.oa, mv.oa, t.elapsed());
    Ok(())
}
