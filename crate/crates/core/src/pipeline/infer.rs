use rayon::prelude::*;

use crate::baselines::PixelClassifier;
use crate::error::{Error, Result};
use crate::nn::CnnModel;
use crate::raster::{reflect_index, RasterStack};
use crate::spatial::{majority_vote, LabelMap};
use crate::{NUM_BANDS, PATCH_RADIUS};

/// Environment variable capping the number of inference threads.
pub const THREADS_ENV: &str = "LCZPIPE_THREADS";

/// Output rows per parallel work item of [`classify_map_cnn`].
const STRIPE_ROWS: usize = 16;

/// The thread cap from `LCZPIPE_THREADS`, if set to a positive integer.
pub fn worker_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_bands(stack: &RasterStack) -> Result<()> {
    if stack.bands() != NUM_BANDS {
        return Err(Error::dims(format!(
            "classification needs {NUM_BANDS} bands, raster has {}",
            stack.bands()
        )));
    }
    Ok(())
}

/// Labels every pixel from its 11x11 window, reflect-padding the raster by
/// 5 pixels so the map has the raster's size. Uses at most
/// `LCZPIPE_THREADS` threads when that is set.
pub fn classify_map_cnn(model: &CnnModel<f32>, stack: &RasterStack) -> Result<LabelMap> {
    classify_map_cnn_threads(model, stack, worker_threads())
}

/// [`classify_map_cnn`] with an explicit thread count (`None` uses the
/// global pool). The result does not depend on the thread count.
pub fn classify_map_cnn_threads(
    model: &CnnModel<f32>,
    stack: &RasterStack,
    threads: Option<usize>,
) -> Result<LabelMap> {
    check_bands(stack)?;
    let (w, h) = (stack.width(), stack.height());
    let stripes: Vec<(usize, usize)> = (0..h)
        .step_by(STRIPE_ROWS)
        .map(|r0| (r0, (r0 + STRIPE_ROWS).min(h)))
        .collect();
    let parts: Vec<Vec<u8>> = with_threads(threads, || {
        stripes
            .par_iter()
            .map(|&(r0, r1)| {
                let (rows, cols) = (r1 - r0 + 2 * PATCH_RADIUS, w + 2 * PATCH_RADIUS);
                let image = padded_hwc(stack, r0, rows, cols);
                model.classify_windows(&image, rows, cols)
            })
            .collect()
    })?;
    LabelMap::new(w, h, parts.concat())
}

/// Rows `r0 - 5 .. r0 - 5 + rows` of the reflect-padded raster in HWC
/// order.
fn padded_hwc(stack: &RasterStack, r0: usize, rows: usize, cols: usize) -> Vec<f32> {
    let pad = PATCH_RADIUS as isize;
    let col_src: Vec<usize> = (0..cols)
        .map(|c| reflect_index(c as isize - pad, stack.width()))
        .collect();
    let mut out = Vec::with_capacity(rows * cols * NUM_BANDS);
    let mut cell = [0.0f32; NUM_BANDS];
    for pr in 0..rows {
        let r = reflect_index(r0 as isize + pr as isize - pad, stack.height());
        for &c in &col_src {
            stack.pixel_into(r, c, &mut cell);
            out.extend_from_slice(&cell);
        }
    }
    out
}

/// Labels every pixel from its own 10 band values only.
pub fn classify_map_pixel<M: PixelClassifier + ?Sized>(model: &M, stack: &RasterStack) -> Result<LabelMap> {
    check_bands(stack)?;
    let (w, h) = (stack.width(), stack.height());
    let rows: Vec<Vec<u8>> = (0..h)
        .into_par_iter()
        .map(|r| {
            let mut f = [0.0f32; NUM_BANDS];
            (0..w)
                .map(|c| {
                    stack.pixel_into(r, c, &mut f);
                    model.classify(&f)
                })
                .collect()
        })
        .collect();
    LabelMap::new(w, h, rows.concat())
}

/// Majority-vote regularization with the run's kernel size.
pub fn regularize(map: &LabelMap, mv_kernel: usize) -> Result<LabelMap> {
    majority_vote(map, mv_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{AnnModel, LinearSvmOvr, PixelModel};
    use crate::nn::{build_model, predict_patch};
    use crate::sampling::{extract_patch, PointSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(w: usize, h: usize, seed: u64) -> RasterStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterStack::new(w, h, 10, (0..w * h * 10).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    /// A model with non-trivial decisions: random He weights and biases
    /// tilted so several classes win somewhere.
    fn busy_model(seed: u64) -> CnnModel<f32> {
        let mut m = build_model(3, seed).unwrap();
        for (i, b) in m.dense2.bias.iter_mut().enumerate() {
            *b = 0.02 * (i as f32 * 0.37).sin();
        }
        m
    }

    #[test]
    fn full_map_matches_patchwise_prediction() {
        let stack = random_stack(64, 48, 1);
        let model = busy_model(2);
        let map = classify_map_cnn_threads(&model, &stack, Some(1)).unwrap();
        assert_eq!((map.width(), map.height()), (64, 48));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (r, c) = (rng.random_range(5..43), rng.random_range(5..59));
            let patch = extract_patch(&stack, &PointSample::new(r, c, 0)).unwrap();
            assert_eq!(
                map.get(r, c),
                predict_patch(&model, &patch).unwrap().0,
                "pixel ({r}, {c})"
            );
        }
        assert!(map.classes_present().len() > 1);
    }

    #[test]
    fn thread_count_does_not_change_the_map() {
        let stack = random_stack(40, 37, 4);
        let model = busy_model(5);
        let one = classify_map_cnn_threads(&model, &stack, Some(1)).unwrap();
        let four = classify_map_cnn_threads(&model, &stack, Some(4)).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn constant_raster_gives_constant_map() {
        let stack = RasterStack::new(20, 13, 10, vec![0.4; 20 * 13 * 10]).unwrap();
        let map = classify_map_cnn(&busy_model(6), &stack).unwrap();
        assert_eq!(map.classes_present().len(), 1);
        let mut svm = LinearSvmOvr::zeros();
        svm.bias[9] = 1.0;
        let pix = classify_map_pixel(&PixelModel::Svm(svm), &stack).unwrap();
        assert_eq!(pix.classes_present(), vec![9]);
    }

    #[test]
    fn pixel_map_is_pointwise() {
        let stack = random_stack(30, 20, 7);
        let mut svm = LinearSvmOvr::zeros();
        svm.weights[3][0] = 1.0;
        svm.weights[5][1] = 1.0;
        let model = PixelModel::Svm(svm);
        let map = classify_map_pixel(&model, &stack).unwrap();
        for (r, c) in [(0, 0), (19, 29), (7, 11), (12, 3)] {
            assert_eq!(map.get(r, c), model.predict_pixel(&stack.pixel(r, c)).unwrap());
        }
        assert_eq!(map.classes_present(), vec![3, 5]);
    }

    #[test]
    fn band_mismatch_is_an_error() {
        let stack = RasterStack::zeros(12, 12, 4).unwrap();
        assert!(classify_map_cnn(&busy_model(0), &stack).is_err());
        assert!(classify_map_pixel(&AnnModel::zeros(), &stack).is_err());
    }

    #[test]
    fn tiny_rasters_are_padded() {
        let stack = random_stack(3, 2, 8);
        let map = classify_map_cnn(&busy_model(1), &stack).unwrap();
        assert_eq!((map.width(), map.height()), (3, 2));
    }
}
