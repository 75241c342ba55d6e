//! High-pass-filter injection pansharpening of the 20 m bands.
//!
//! The synthetic pan band is the per-pixel mean of the four 10 m bands. Its
//! high-pass component, `pan - boxblur3x3(pan)`, is added to each 20 m band
//! after bilinear upsampling to the 10 m grid. Negative results clamp to 0.

use super::{reflect_index, RasterStack};
use crate::error::{Error, Result};

pub const FINE_BANDS: usize = 4;
pub const COARSE_BANDS: usize = 6;

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Source row (or column) pair and blend weight for output index `i` of a 2x
/// upsampling with pixel-center alignment: `src = i / 2 - 0.25`.
#[inline]
fn source_taps(i: usize, len: usize) -> (usize, usize, f32) {
    let m = i / 2;
    if i % 2 == 0 {
        let lo = m.saturating_sub(1);
        let t = if m == 0 { 0.0 } else { 0.75 };
        (lo, m.min(len - 1), t)
    } else {
        (m, (m + 1).min(len - 1), 0.25)
    }
}

/// Bilinear 2x upsampling of one `width x height` plane. Edges replicate.
pub fn bilinear_upsample2(plane: &[f32], width: usize, height: usize) -> Vec<f32> {
    assert_eq!(plane.len(), width * height);
    let (ow, oh) = (2 * width, 2 * height);
    let mut out = Vec::with_capacity(ow * oh);
    for r in 0..oh {
        let (r0, r1, ty) = source_taps(r, height);
        for c in 0..ow {
            let (c0, c1, tx) = source_taps(c, width);
            let top = lerp(plane[r0 * width + c0], plane[r0 * width + c1], tx);
            let bottom = lerp(plane[r1 * width + c0], plane[r1 * width + c1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

fn synthetic_pan(fine: &RasterStack) -> Vec<f32> {
    let n = fine.width() * fine.height();
    let mut pan = vec![0.0f32; n];
    for b in 0..FINE_BANDS {
        for (p, v) in pan.iter_mut().zip(fine.band(b)) {
            *p += v;
        }
    }
    for p in &mut pan {
        *p *= 0.25;
    }
    pan
}

/// `pan - boxblur3x3(pan)` written as the mean of center-minus-neighbor
/// differences, which is exactly zero on flat fields.
fn high_pass(pan: &[f32], width: usize, height: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(pan.len());
    for r in 0..height {
        for c in 0..width {
            let center = pan[r * width + c];
            let mut acc = 0.0f32;
            for dr in -1isize..=1 {
                let rr = reflect_index(r as isize + dr, height);
                for dc in -1isize..=1 {
                    let cc = reflect_index(c as isize + dc, width);
                    acc += center - pan[rr * width + cc];
                }
            }
            out.push(acc / 9.0);
        }
    }
    out
}

/// Sharpens the six 20 m bands of `coarse` onto the 10 m grid of `fine`.
///
/// `fine` carries bands 2, 3, 4, 8 and `coarse` bands 5, 6, 7, 8A, 11, 12.
/// Returns a six-band stack with `fine`'s dimensions.
pub fn pansharpen(fine: &RasterStack, coarse: &RasterStack) -> Result<RasterStack> {
    if fine.bands() != FINE_BANDS || coarse.bands() != COARSE_BANDS {
        return Err(Error::dims(format!(
            "pansharpening expects {FINE_BANDS} fine and {COARSE_BANDS} coarse bands, got {} and {}",
            fine.bands(),
            coarse.bands()
        )));
    }
    if fine.width() != 2 * coarse.width() || fine.height() != 2 * coarse.height() {
        return Err(Error::dims(format!(
            "fine grid {}x{} is not exactly twice the coarse grid {}x{}",
            fine.width(),
            fine.height(),
            coarse.width(),
            coarse.height()
        )));
    }

    let (w, h) = (fine.width(), fine.height());
    let detail = high_pass(&synthetic_pan(fine), w, h);
    let mut data = Vec::with_capacity(w * h * COARSE_BANDS);
    for b in 0..COARSE_BANDS {
        let up = bilinear_upsample2(coarse.band(b), coarse.width(), coarse.height());
        data.extend(up.iter().zip(&detail).map(|(u, d)| (u + d).max(0.0)));
    }
    Ok(RasterStack::new(w, h, COARSE_BANDS, data)?.with_resolution(fine.resolution_m()))
}
