//! Statistical checks on synthetic scenes and file round trips.

use lczpipe::raster::{
    load_label_map, load_raster, pure_sample_points, save_label_map, save_raster, synth_scene, RasterStack,
    SynthSceneSpec,
};
use lczpipe::sampling::{
    augment, extract_patch, load_patches, load_samples, load_split_manifest, save_patches, save_samples,
    save_split_manifest, split, PointSample,
};
use lczpipe::spatial::LabelMap;

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Critical value at alpha = 0.001.
fn ks_critical(n: usize, m: usize) -> f64 {
    1.95 * (((n + m) as f64) / (n as f64 * m as f64)).sqrt()
}

/// Interior pixels of each class, at least two pixels from any other class.
fn interior(truth: &LabelMap, class: u8) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 2..truth.height() - 2 {
        for c in 2..truth.width() - 2 {
            let pure = (r - 2..=r + 2).all(|rr| (c - 2..=c + 2).all(|cc| truth.get(rr, cc) == class));
            if pure {
                out.push((r, c));
            }
        }
    }
    out
}

fn band_mean(stack: &RasterStack, r: usize, c: usize) -> f64 {
    (0..stack.bands()).map(|b| stack.get(r, c, b) as f64).sum::<f64>() / stack.bands() as f64
}

#[test]
fn texture_pair_is_spectrally_identical_but_spatially_distinct() {
    let spec = SynthSceneSpec::texture_only(256, 256, 3);
    let (stack, truth) = synth_scene(&spec, 3).unwrap();
    // Thin the pixels so neighbouring samples do not share noise structure.
    let pick = |class| interior(&truth, class).into_iter().step_by(7).collect::<Vec<_>>();
    let (a, b) = (pick(0), pick(1));
    assert!(a.len() > 500 && b.len() > 500, "{} {}", a.len(), b.len());
    let crit = ks_critical(a.len(), b.len());

    let value = |px: &[(usize, usize)]| px.iter().map(|&(r, c)| band_mean(&stack, r, c)).collect::<Vec<_>>();
    let d_value = ks(value(&a), value(&b));
    assert!(
        d_value < crit,
        "per-pixel values differ: D = {d_value:.4}, critical {crit:.4}"
    );

    // Horizontal neighbour difference: a checker always flips sign, speckle
    // flips half the time.
    let diff = |px: &[(usize, usize)]| {
        px.iter()
            .map(|&(r, c)| (band_mean(&stack, r, c) - band_mean(&stack, r, c + 1)).abs())
            .collect::<Vec<_>>()
    };
    let d_local = ks(diff(&a), diff(&b));
    assert!(
        d_local > 4.0 * crit,
        "local structure indistinguishable: D = {d_local:.4}, critical {crit:.4}"
    );
}

#[test]
fn every_class_occupies_a_region() {
    let spec = SynthSceneSpec::paired_textures(512, 512, 9);
    let (stack, truth) = synth_scene(&spec, 9).unwrap();
    assert_eq!((stack.width(), stack.height(), stack.bands()), (512, 512, 10));
    assert_eq!(truth.classes_present(), (0..14).collect::<Vec<u8>>());
    for class in 0..14 {
        assert!(interior(&truth, class).len() >= 100, "class {class}");
    }
}

#[test]
fn pure_samples_sit_in_homogeneous_windows() {
    let spec = SynthSceneSpec::paired_textures(384, 384, 1);
    let (_, truth) = synth_scene(&spec, 1).unwrap();
    let samples = pure_sample_points(&truth, 25, 1).unwrap();
    assert_eq!(samples.len(), 14 * 25);
    for s in &samples {
        assert!(s.row >= 5 && s.col >= 5 && s.row + 5 < 384 && s.col + 5 < 384);
        for r in s.row - 5..=s.row + 5 {
            for c in s.col - 5..=s.col + 5 {
                assert_eq!(truth.get(r, c), s.class_id);
            }
        }
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSceneSpec::paired_textures(200, 180, 4);
    let (stack, truth) = synth_scene(&spec, 4).unwrap();

    save_raster(&stack, dir.path().join("s.hdr")).unwrap();
    let back = load_raster(dir.path().join("s.hdr")).unwrap();
    assert_eq!((back.width(), back.height(), back.bands()), (200, 180, 10));
    assert!(back
        .data()
        .iter()
        .zip(stack.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    save_label_map(&truth, dir.path().join("t.hdr")).unwrap();
    assert_eq!(load_label_map(dir.path().join("t.hdr")).unwrap(), truth);

    let samples = pure_sample_points(&truth, 12, 4).unwrap();
    save_samples(&samples, dir.path().join("p.csv")).unwrap();
    assert_eq!(load_samples(dir.path().join("p.csv"), 200, 180).unwrap(), samples);

    let parts = split(&samples, (5, 2, 3), 4).unwrap();
    save_split_manifest(&parts, dir.path().join("split.csv")).unwrap();
    let reread = load_split_manifest(dir.path().join("split.csv"), 4).unwrap();
    assert_eq!(reread, parts);

    let patches: Vec<_> = samples.iter().map(|s| extract_patch(&stack, s).unwrap()).collect();
    let aug = augment(&patches);
    save_patches(&aug, dir.path().join("x.patches")).unwrap();
    assert_eq!(load_patches(dir.path().join("x.patches")).unwrap(), aug);
}

#[test]
fn patch_matches_raster_window() {
    let spec = SynthSceneSpec::paired_textures(160, 160, 6);
    let (stack, _) = synth_scene(&spec, 6).unwrap();
    let s = PointSample::new(40, 77, 3);
    let patch = extract_patch(&stack, &s).unwrap();
    for i in 0..11 {
        for j in 0..11 {
            for b in 0..10 {
                assert_eq!(patch.get(i, j, b), stack.get(35 + i, 72 + j, b));
            }
        }
    }
    let rotated = augment(std::slice::from_ref(&patch));
    // A quarter turn moves the top-right corner to the top-left.
    assert_eq!(rotated[1].get(0, 0, 0), patch.get(0, 10, 0));
    assert_eq!(rotated[2].get(0, 0, 0), patch.get(10, 10, 0));
}
