//! Post-classification spatial regularization on label maps: the sliding
//! majority vote and block-majority aggregation to the coarse LCZ grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::reflect_index;
use crate::NUM_CLASSES;

/// Grid of class ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dims("label map dimensions must be positive"));
        }
        if labels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidLabel(bad as u32));
        }
        Ok(LabelMap { width, height, labels })
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, labels: Vec<u8>) -> Self {
        LabelMap { width, height, labels }
    }

    pub fn filled(width: usize, height: usize, class_id: u8) -> Result<Self> {
        Self::new(width, height, vec![class_id; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.labels[row * self.width..(row + 1) * self.width]
    }

    /// Sorted distinct classes in the map.
    pub fn classes_present(&self) -> Vec<u8> {
        let mut seen = [false; NUM_CLASSES];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..NUM_CLASSES as u8).filter(|&k| seen[k as usize]).collect()
    }
}

/// Most frequent class in a histogram; ties go to the lowest class id.
#[inline]
pub fn modal_class(counts: &[u32; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    best as u8
}

/// Replaces every pixel by the modal class of its `kernel x kernel`
/// neighborhood in the input map. Borders use reflect padding, so the output
/// has the input's dimensions. Ties go to the lowest class id.
pub fn majority_vote(map: &LabelMap, kernel: usize) -> Result<LabelMap> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::invalid(format!(
            "majority-vote kernel must be odd and positive, got {kernel}"
        )));
    }
    let half = (kernel / 2) as isize;
    let (w, h) = (map.width, map.height);
    let col_of = |c: isize| reflect_index(c, w);

    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, out_row)| {
        let rows: Vec<&[u8]> = (-half..=half)
            .map(|d| map.row(reflect_index(r as isize + d, h)))
            .collect();
        let mut counts = [0u32; NUM_CLASSES];
        for d in -half..=half {
            let c = col_of(d);
            for row in &rows {
                counts[row[c] as usize] += 1;
            }
        }
        out_row[0] = modal_class(&counts);
        for c in 1..w as isize {
            let leaving = col_of(c - 1 - half);
            let entering = col_of(c + half);
            for row in &rows {
                counts[row[leaving] as usize] -= 1;
                counts[row[entering] as usize] += 1;
            }
            out_row[c as usize] = modal_class(&counts);
        }
    });
    Ok(LabelMap::from_raw_unchecked(w, h, out))
}

/// Aggregates `block x block` cells to their modal class. Partial blocks at
/// the right and bottom edges use the pixels available.
pub fn aggregate_to_lcz(map: &LabelMap, block: usize) -> Result<LabelMap> {
    if block == 0 {
        return Err(Error::invalid("block size must be positive"));
    }
    if map.width < block || map.height < block {
        return Err(Error::invalid(format!(
            "a {}x{} map is smaller than the {block}x{block} block",
            map.width, map.height
        )));
    }
    let ow = map.width.div_ceil(block);
    let oh = map.height.div_ceil(block);
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        let rows = by * block..((by + 1) * block).min(map.height);
        for bx in 0..ow {
            let cols = bx * block..((bx + 1) * block).min(map.width);
            let mut counts = [0u32; NUM_CLASSES];
            for r in rows.clone() {
                for &l in &map.row(r)[cols.clone()] {
                    counts[l as usize] += 1;
                }
            }
            out.push(modal_class(&counts));
        }
    }
    Ok(LabelMap::from_raw_unchecked(ow, oh, out))
}
