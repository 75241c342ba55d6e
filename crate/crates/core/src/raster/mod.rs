//! Multiband rasters: the in-memory container, its on-disk format,
//! normalization, pansharpening, synthetic scenes and rendered maps.

mod io;
mod pansharpen;
mod render;
mod synth;

pub use io::{load_label_map, load_raster, save_label_map, save_raster};
pub use pansharpen::{bilinear_upsample2, pansharpen};
pub use render::{colorize, render_map, Palette};
pub use synth::{pure_sample_points, pure_sample_points_spaced, synth_scene, ClassSignature, SynthSceneSpec, Texture};

use crate::error::{Error, Result};

/// A `width x height x bands` grid of `f32` values stored band-sequentially:
/// all of band 0 in row-major order, then band 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f32>,
    resolution_m: f32,
}

impl RasterStack {
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::dims(format!(
                "raster dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        let expected = width * height * bands;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite raster value at index {i}")));
        }
        Ok(RasterStack {
            width,
            height,
            bands,
            data,
            resolution_m: 10.0,
        })
    }

    pub fn zeros(width: usize, height: usize, bands: usize) -> Result<Self> {
        Self::new(width, height, bands, vec![0.0; width * height * bands])
    }

    pub fn with_resolution(mut self, resolution_m: f32) -> Self {
        self.resolution_m = resolution_m;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Meters per pixel. Informational only.
    pub fn resolution_m(&self) -> f32 {
        self.resolution_m
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && band < self.bands);
        (band * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[self.index(row, col, band)]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[band * n..(band + 1) * n]
    }

    /// Copies the spectral vector at `(row, col)` into `out`.
    pub fn pixel_into(&self, row: usize, col: usize, out: &mut [f32]) {
        let plane = self.width * self.height;
        let base = row * self.width + col;
        for (b, v) in out.iter_mut().enumerate().take(self.bands) {
            *v = self.data[b * plane + base];
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.bands];
        self.pixel_into(row, col, &mut out);
        out
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Divides every value by the global maximum over all bands.
    pub fn normalize(&self) -> Result<RasterStack> {
        let max = self.max_value();
        if max <= 0.0 {
            return Err(Error::invalid("cannot normalize: maximum raster value is not positive"));
        }
        let data = self.data.iter().map(|v| v / max).collect();
        Ok(self.with_data(data))
    }

    /// Per-band variant of [`normalize`](Self::normalize): each band is
    /// divided by its own maximum.
    pub fn normalize_per_band(&self) -> Result<RasterStack> {
        let mut data = Vec::with_capacity(self.data.len());
        for b in 0..self.bands {
            let band = self.band(b);
            let max = band.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            if max <= 0.0 {
                return Err(Error::invalid(format!(
                    "cannot normalize band {b}: maximum is not positive"
                )));
            }
            data.extend(band.iter().map(|v| v / max));
        }
        Ok(self.with_data(data))
    }

    fn with_data(&self, data: Vec<f32>) -> RasterStack {
        debug_assert_eq!(data.len(), self.data.len());
        RasterStack {
            width: self.width,
            height: self.height,
            bands: self.bands,
            data,
            resolution_m: self.resolution_m,
        }
    }
}

/// Maps a possibly out-of-range index onto `0..len` by mirroring at the
/// edges, edge pixel included (`.. b a | a b c | c b ..`). Works for offsets
/// larger than `len`.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(RasterStack::new(2, 2, 0, vec![]).is_err());
        assert!(matches!(
            RasterStack::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::LengthMismatch { expected: 4, actual: 3 })
        ));
        assert!(RasterStack::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn band_sequential_layout() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let s = RasterStack::new(3, 2, 2, data).unwrap();
        assert_eq!(s.get(0, 0, 0), 0.0);
        assert_eq!(s.get(1, 2, 0), 5.0);
        assert_eq!(s.get(0, 0, 1), 6.0);
        assert_eq!(s.pixel(1, 1), vec![4.0, 10.0]);
    }

    #[test]
    fn normalize_maps_max_to_one() {
        let s = RasterStack::new(2, 1, 1, vec![32767.0, 65535.0]).unwrap();
        let n = s.normalize().unwrap();
        assert_eq!(n.get(0, 1, 0), 1.0);
        assert!((n.get(0, 0, 0) - 0.499_992_37).abs() < 1e-6);

        let c = RasterStack::new(3, 3, 2, vec![7.5; 18]).unwrap();
        assert!(c.normalize().unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn normalize_rejects_all_zero() {
        let z = RasterStack::zeros(4, 4, 2).unwrap();
        assert!(z.normalize().is_err());
    }

    #[test]
    fn normalize_is_idempotent_once_max_is_one() {
        let s = RasterStack::new(2, 2, 1, vec![0.1, 3.0, 2.2, 0.7]).unwrap();
        let once = s.normalize().unwrap();
        assert_eq!(once.normalize().unwrap(), once);
    }

    #[test]
    fn per_band_normalization() {
        let s = RasterStack::new(2, 1, 2, vec![1.0, 2.0, 10.0, 5.0]).unwrap();
        let n = s.normalize_per_band().unwrap();
        assert_eq!(n.data(), &[0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn reflect_index_mirrors_with_edge() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-3, 1), 0);
        assert_eq!(reflect_index(12, 2), 0);
    }
}
