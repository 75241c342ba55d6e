//! Synthetic multiband scenes with known ground truth.
//!
//! A scene is a grid of rectangular regions (each at least `min_region`
//! pixels on a side), every region assigned one class. A pixel's value in
//! band `b` is `mean[b] + amplitude * pattern(row, col) + noise`, where the
//! pattern is the class texture:
//!
//! | texture  | pattern                       |
//! |----------|-------------------------------|
//! | flat     | 0                             |
//! | checker  | +1 / -1 by parity of row+col  |
//! | stripes  | +1 / -1 by parity of row      |
//! | speckle  | independent random +1 / -1    |
//!
//! Checker, stripes and speckle share the same per-pixel value distribution,
//! so two classes with equal means and different non-flat textures can only
//! be told apart from spatial context.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::RasterStack;
use crate::error::{Error, Result};
use crate::sampling::PointSample;
use crate::spatial::LabelMap;
use crate::{NUM_BANDS, NUM_CLASSES, PATCH_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Flat,
    Checker,
    Stripes,
    Speckle,
}

impl Texture {
    #[inline]
    fn pattern(self, row: usize, col: usize, coin: bool) -> f32 {
        let positive = match self {
            Texture::Flat => return 0.0,
            Texture::Checker => (row + col) % 2 == 0,
            Texture::Stripes => row % 2 == 0,
            Texture::Speckle => coin,
        };
        if positive {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignature {
    pub mean: [f32; NUM_BANDS],
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSceneSpec {
    pub width: usize,
    pub height: usize,
    /// Class `i` of the scene is `classes[i]`; between 2 and 14 entries.
    pub classes: Vec<ClassSignature>,
    pub texture_amplitude: f32,
    pub noise_sigma: f32,
    pub min_region: usize,
    pub layout_seed: u64,
}

/// Preferred region edge; shrunk toward `min_region` when the scene is too
/// small to hold one region per class.
const TARGET_REGION: usize = 64;

impl SynthSceneSpec {
    /// Fourteen classes where classes (0,1), (2,3), (4,5) and (6,7) share a
    /// spectral mean and differ only in texture; classes 8..14 have their
    /// own means. Means are drawn from `layout_seed` with a minimum
    /// pairwise distance so spectrally distinct classes stay separable.
    pub fn paired_textures(width: usize, height: usize, layout_seed: u64) -> Self {
        const PAIR_TEXTURES: [(Texture, Texture); 4] = [
            (Texture::Checker, Texture::Speckle),
            (Texture::Stripes, Texture::Speckle),
            (Texture::Checker, Texture::Stripes),
            (Texture::Speckle, Texture::Checker),
        ];
        let means = distinct_means(10, 0.45, layout_seed);
        let mut classes = Vec::with_capacity(NUM_CLASSES);
        for (i, &(a, b)) in PAIR_TEXTURES.iter().enumerate() {
            classes.push(ClassSignature {
                mean: means[i],
                texture: a,
            });
            classes.push(ClassSignature {
                mean: means[i],
                texture: b,
            });
        }
        for mean in &means[PAIR_TEXTURES.len()..] {
            classes.push(ClassSignature {
                mean: *mean,
                texture: Texture::Flat,
            });
        }
        SynthSceneSpec {
            width,
            height,
            classes,
            texture_amplitude: 0.08,
            noise_sigma: 0.15,
            min_region: 32,
            layout_seed,
        }
    }

    /// Two classes with identical spectral means, checker versus speckle.
    pub fn texture_only(width: usize, height: usize, layout_seed: u64) -> Self {
        let mean = distinct_means(1, 0.0, layout_seed)[0];
        SynthSceneSpec {
            width,
            height,
            classes: vec![
                ClassSignature {
                    mean,
                    texture: Texture::Checker,
                },
                ClassSignature {
                    mean,
                    texture: Texture::Speckle,
                },
            ],
            texture_amplitude: 0.08,
            noise_sigma: 0.04,
            min_region: 32,
            layout_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=NUM_CLASSES).contains(&self.classes.len()) {
            return Err(Error::invalid(format!(
                "a synthetic scene needs 2..=14 classes, got {}",
                self.classes.len()
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.texture_amplitude.is_finite() {
            return Err(Error::invalid("noise sigma must be >= 0 and amplitude finite"));
        }
        if self.min_region == 0 {
            return Err(Error::invalid("min_region must be positive"));
        }
        for (k, c) in self.classes.iter().enumerate() {
            if c.mean.iter().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(Error::invalid(format!("class {k} has a mean outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `count` mean vectors in [0.25, 0.75]^10 whose pairwise Euclidean distance
/// is at least `min_dist`.
fn distinct_means(count: usize, min_dist: f32, seed: u64) -> Vec<[f32; NUM_BANDS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d65_616e_7300_0000);
    let mut out: Vec<[f32; NUM_BANDS]> = Vec::with_capacity(count);
    while out.len() < count {
        let mut m = [0.0f32; NUM_BANDS];
        for v in &mut m {
            *v = rng.random_range(0.25f32..0.75);
        }
        let far = out
            .iter()
            .all(|o| o.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt() >= min_dist);
        if far {
            out.push(m);
        }
    }
    out
}

/// Splits `len` into `parts` segments of at least `min` pixels with jittered
/// boundaries. Returns the `parts + 1` cut positions.
fn cuts(len: usize, parts: usize, min: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let base = len / parts;
    let jitter = (base.saturating_sub(min) / 2) as i64;
    let mut out = vec![0];
    for i in 1..parts {
        let offset = if jitter > 0 {
            rng.random_range(-jitter..=jitter)
        } else {
            0
        };
        out.push(((i * base) as i64 + offset) as usize);
    }
    out.push(len);
    out
}

fn layout(spec: &SynthSceneSpec) -> Result<LabelMap> {
    let n_classes = spec.classes.len();
    let fits = |size: usize| (spec.width / size) * (spec.height / size) >= n_classes;
    let mut size = TARGET_REGION.max(spec.min_region);
    while size > spec.min_region && !fits(size) {
        size -= 1;
    }
    if !fits(size) {
        return Err(Error::invalid(format!(
            "a {}x{} scene cannot hold {n_classes} regions of at least {}x{} pixels",
            spec.width, spec.height, spec.min_region, spec.min_region
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.layout_seed);
    let (nx, ny) = (spec.width / size, spec.height / size);
    let col_cuts = cuts(spec.width, nx, spec.min_region, &mut rng);
    let row_cuts = cuts(spec.height, ny, spec.min_region, &mut rng);
    let mut assignment: Vec<u8> = (0..nx * ny).map(|i| (i % n_classes) as u8).collect();
    assignment.shuffle(&mut rng);

    let mut labels = vec![0u8; spec.width * spec.height];
    for gy in 0..ny {
        for gx in 0..nx {
            let class = assignment[gy * nx + gx];
            for r in row_cuts[gy]..row_cuts[gy + 1] {
                labels[r * spec.width + col_cuts[gx]..r * spec.width + col_cuts[gx + 1]].fill(class);
            }
        }
    }
    LabelMap::new(spec.width, spec.height, labels)
}

/// Generates a 10-band scene and its exact ground-truth label map.
/// Deterministic for a fixed `(spec, seed)`.
pub fn synth_scene(spec: &SynthSceneSpec, seed: u64) -> Result<(RasterStack, LabelMap)> {
    spec.validate()?;
    let truth = layout(spec)?;
    let (w, h) = (spec.width, spec.height);
    let plane = w * h;
    let mut data = vec![0.0f32; plane * NUM_BANDS];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, spec.noise_sigma).map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))?;

    for r in 0..h {
        for c in 0..w {
            let idx = r * w + c;
            let class = &spec.classes[truth.labels()[idx] as usize];
            let coin: bool = rng.random();
            let texture = spec.texture_amplitude * class.texture.pattern(r, c, coin);
            for b in 0..NUM_BANDS {
                let noise = if spec.noise_sigma > 0.0 {
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                data[b * plane + idx] = class.mean[b] + texture + noise;
            }
        }
    }
    Ok((RasterStack::new(w, h, NUM_BANDS, data)?, truth))
}

/// Draws `per_class` sample points for every class present in `truth`,
/// restricted to pixels whose whole 11x11 window lies inside one region.
pub fn pure_sample_points(truth: &LabelMap, per_class: usize, seed: u64) -> Result<Vec<PointSample>> {
    pure_sample_points_spaced(truth, per_class, 1, seed)
}

/// [`pure_sample_points`] where any two samples, of any classes, are at
/// least `min_spacing` pixels apart in rows or columns. With a spacing of
/// 11 no two sample windows share a pixel, so a model cannot score on a
/// test sample by recalling pixels it was trained on.
///
/// Classes draw in turns from their own shuffled candidate lists, so no
/// class gets first pick of the space.
pub fn pure_sample_points_spaced(
    truth: &LabelMap,
    per_class: usize,
    min_spacing: usize,
    seed: u64,
) -> Result<Vec<PointSample>> {
    let (w, h) = (truth.width(), truth.height());
    let r = PATCH_RADIUS;
    let mut candidates: Vec<Vec<(usize, usize)>> = vec![Vec::new(); NUM_CLASSES];
    if w > 2 * r && h > 2 * r {
        for row in r..h - r {
            for col in r..w - r {
                let class = truth.get(row, col);
                let pure = (row - r..=row + r).all(|rr| truth.row(rr)[col - r..=col + r].iter().all(|&l| l == class));
                if pure {
                    candidates[class as usize].push((row, col));
                }
            }
        }
    }
    let present = truth.classes_present();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &class in &present {
        candidates[class as usize].shuffle(&mut rng);
    }

    let reach = min_spacing.max(1) - 1;
    let mut taken = vec![false; w * h];
    let blocked = |taken: &[bool], row: usize, col: usize| {
        (row.saturating_sub(reach)..=(row + reach).min(h - 1)).any(|rr| {
            taken[rr * w + col.saturating_sub(reach)..=rr * w + (col + reach).min(w - 1)]
                .iter()
                .any(|&t| t)
        })
    };
    let mut cursor = [0usize; NUM_CLASSES];
    let mut chosen: Vec<Vec<(usize, usize)>> = vec![Vec::new(); NUM_CLASSES];
    for _ in 0..per_class {
        for &class in &present {
            let c = class as usize;
            loop {
                let Some(&(row, col)) = candidates[c].get(cursor[c]) else {
                    return Err(Error::TooFewSamples {
                        class,
                        count: chosen[c].len(),
                        min: per_class,
                    });
                };
                cursor[c] += 1;
                if !blocked(&taken, row, col) {
                    taken[row * w + col] = true;
                    chosen[c].push((row, col));
                    break;
                }
            }
        }
    }

    let mut samples = Vec::with_capacity(present.len() * per_class);
    for &class in &present {
        let mut points = std::mem::take(&mut chosen[class as usize]);
        points.sort_unstable();
        samples.extend(points.into_iter().map(|(row, col)| PointSample::new(row, col, class)));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec() -> SynthSceneSpec {
        let mut spec = SynthSceneSpec::paired_textures(160, 128, 3);
        spec.min_region = 16;
        for c in &mut spec.classes {
            c.texture = Texture::Flat;
        }
        spec.noise_sigma = 0.0;
        spec
    }

    #[test]
    fn noiseless_flat_regions_equal_their_means() {
        let spec = flat_spec();
        let (stack, truth) = synth_scene(&spec, 11).unwrap();
        for r in 0..truth.height() {
            for c in 0..truth.width() {
                let mean = spec.classes[truth.get(r, c) as usize].mean;
                assert_eq!(stack.pixel(r, c), mean.to_vec());
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSceneSpec::paired_textures(160, 128, 5);
        let (a, ta) = synth_scene(&spec, 9).unwrap();
        let (b, tb) = synth_scene(&spec, 9).unwrap();
        assert_eq!(ta, tb);
        let bits = |s: &RasterStack| s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let (c, _) = synth_scene(&spec, 10).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn regions_are_large_and_every_class_present() {
        let spec = SynthSceneSpec::paired_textures(512, 512, 1);
        let (_, truth) = synth_scene(&spec, 0).unwrap();
        let mut seen = [false; NUM_CLASSES];
        for &l in truth.labels() {
            seen[l as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        // Horizontal runs are never shorter than the minimum region edge,
        // except where a run continues into a same-class neighbor.
        for r in 0..truth.height() {
            let row = truth.row(r);
            let mut start = 0;
            for c in 1..=row.len() {
                if c == row.len() || row[c] != row[start] {
                    assert!(c - start >= 30, "row {r}: run {start}..{c}");
                    start = c;
                }
            }
        }
    }

    #[test]
    fn infeasible_layout_is_an_error() {
        let spec = SynthSceneSpec::paired_textures(100, 100, 1);
        assert!(synth_scene(&spec, 0).is_err());
    }

    #[test]
    fn pure_samples_have_uniform_windows() {
        let spec = SynthSceneSpec::texture_only(128, 128, 2);
        let (_, truth) = synth_scene(&spec, 0).unwrap();
        let samples = pure_sample_points(&truth, 40, 4).unwrap();
        assert_eq!(samples.len(), 80);
        for s in &samples {
            for r in s.row - 5..=s.row + 5 {
                for c in s.col - 5..=s.col + 5 {
                    assert_eq!(truth.get(r, c), s.class_id);
                }
            }
        }
    }

    #[test]
    fn spaced_samples_keep_their_distance() {
        let spec = SynthSceneSpec::texture_only(256, 256, 5);
        let (_, truth) = synth_scene(&spec, 0).unwrap();
        let samples = pure_sample_points_spaced(&truth, 60, 11, 3).unwrap();
        assert_eq!(samples.len(), 120);
        for (i, a) in samples.iter().enumerate() {
            for b in &samples[i + 1..] {
                assert!(
                    a.row.abs_diff(b.row) >= 11 || a.col.abs_diff(b.col) >= 11,
                    "{a:?} {b:?}"
                );
            }
        }
        assert!(matches!(
            pure_sample_points_spaced(&truth, 5000, 11, 3),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
