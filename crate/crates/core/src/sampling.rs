//! Point samples, 11x11x10 patches, the stratified train/val/test split and
//! rotation augmentation.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{csv_error, Error, Result};
use crate::raster::RasterStack;
use crate::{NUM_BANDS, NUM_CLASSES, PATCH_RADIUS, PATCH_SIZE};

/// Values in one patch: `PATCH_SIZE * PATCH_SIZE * NUM_BANDS`.
pub const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE * NUM_BANDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointSample {
    pub row: usize,
    pub col: usize,
    pub class_id: u8,
}

impl PointSample {
    pub fn new(row: usize, col: usize, class_id: u8) -> Self {
        PointSample { row, col, class_id }
    }

    /// Checks the class id and that an 11x11 window centered here fits in a
    /// `width x height` raster.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.class_id as usize >= NUM_CLASSES {
            return Err(Error::InvalidLabel(self.class_id as u32));
        }
        let fits = |v: usize, len: usize| v >= PATCH_RADIUS && v + PATCH_RADIUS < len;
        if !fits(self.row, height) || !fits(self.col, width) {
            return Err(Error::OutOfMargin {
                row: self.row,
                col: self.col,
            });
        }
        Ok(())
    }
}

/// An 11x11x10 window, stored row, column, band (band fastest), labeled with
/// the class of its central sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    values: Vec<f32>,
    pub label: u8,
    pub origin: (usize, usize),
}

impl Patch {
    pub fn new(values: Vec<f32>, label: u8, origin: (usize, usize)) -> Result<Self> {
        if values.len() != PATCH_LEN {
            return Err(Error::LengthMismatch {
                expected: PATCH_LEN,
                actual: values.len(),
            });
        }
        if label as usize >= NUM_CLASSES {
            return Err(Error::InvalidLabel(label as u32));
        }
        Ok(Patch { values, label, origin })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, band: usize) -> f32 {
        self.values[(i * PATCH_SIZE + j) * NUM_BANDS + band]
    }

    /// The 10 band values at spatial cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * PATCH_SIZE + j) * NUM_BANDS;
        &self.values[start..start + NUM_BANDS]
    }

    /// Counter-clockwise quarter turn of the spatial plane, every band alike.
    pub fn rot90(&self) -> Patch {
        let n = PATCH_SIZE;
        let mut values = vec![0.0; PATCH_LEN];
        for i in 0..n {
            for j in 0..n {
                let dst = (i * n + j) * NUM_BANDS;
                values[dst..dst + NUM_BANDS].copy_from_slice(self.cell(j, n - 1 - i));
            }
        }
        Patch {
            values,
            label: self.label,
            origin: self.origin,
        }
    }
}

/// Reads a `row,col,class_id` CSV (one header line) and validates every
/// sample against a `width x height` raster.
pub fn load_samples(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<PointSample>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut samples = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = n + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() < 3 {
            return Err(parse_err(format!("expected row,col,class_id, got {record:?}")));
        }
        let field = |i: usize| {
            record[i]
                .parse::<usize>()
                .map_err(|_| parse_err(format!("bad integer `{}`", &record[i])))
        };
        let (row, col, class) = (field(0)?, field(1)?, field(2)?);
        if class >= NUM_CLASSES {
            return Err(Error::InvalidLabel(class as u32));
        }
        let sample = PointSample::new(row, col, class as u8);
        sample.validate(width, height)?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn save_samples(samples: &[PointSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("row,col,class_id\n");
    for s in samples {
        text.push_str(&format!("{},{},{}\n", s.row, s.col, s.class_id));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Copies the 11x11x10 window centered on `sample`.
pub fn extract_patch(stack: &RasterStack, sample: &PointSample) -> Result<Patch> {
    if stack.bands() != NUM_BANDS {
        return Err(Error::dims(format!(
            "patches need {NUM_BANDS} bands, raster has {}",
            stack.bands()
        )));
    }
    sample.validate(stack.width(), stack.height())?;
    let mut values = Vec::with_capacity(PATCH_LEN);
    let mut cell = [0.0f32; NUM_BANDS];
    for i in 0..PATCH_SIZE {
        for j in 0..PATCH_SIZE {
            stack.pixel_into(sample.row - PATCH_RADIUS + i, sample.col - PATCH_RADIUS + j, &mut cell);
            values.extend_from_slice(&cell);
        }
    }
    Ok(Patch {
        values,
        label: sample.class_id,
        origin: (sample.row, sample.col),
    })
}

/// Anything carrying a class id can be split per class.
pub trait Labeled {
    fn class_id(&self) -> u8;
}

impl Labeled for PointSample {
    fn class_id(&self) -> u8 {
        self.class_id
    }
}

impl Labeled for Patch {
    fn class_id(&self) -> u8 {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T = PointSample> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

impl<T> DatasetSplit<T> {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<DatasetSplit<U>> {
        let mut conv = |v: &[T]| v.iter().map(&mut f).collect::<Result<Vec<U>>>();
        Ok(DatasetSplit {
            train: conv(&self.train)?,
            val: conv(&self.val)?,
            test: conv(&self.test)?,
            seed: self.seed,
        })
    }
}

/// `round(n * num / den)` with halves rounded up, in exact integer arithmetic.
fn round_share(n: usize, num: usize, den: usize) -> usize {
    (2 * n * num + den) / (2 * den)
}

/// Stratified split: within each class the samples are shuffled with `seed`
/// and cut at `round(n * a / s)` and `round(n * (a + b) / s)` for ratios
/// `(a, b, c)` summing to `s`.
pub fn split<T: Labeled + Clone>(items: &[T], ratios: (usize, usize, usize), seed: u64) -> Result<DatasetSplit<T>> {
    let (a, b, c) = ratios;
    let total = a + b + c;
    if total == 0 {
        return Err(Error::invalid("split ratios sum to zero"));
    }
    let min = [a, b, c].iter().filter(|&&r| r > 0).count();

    let mut by_class: Vec<Vec<T>> = vec![Vec::new(); NUM_CLASSES];
    for item in items {
        let k = item.class_id() as usize;
        if k >= NUM_CLASSES {
            return Err(Error::InvalidLabel(k as u32));
        }
        by_class[k].push(item.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (k, mut members) in by_class.into_iter().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n < min {
            return Err(Error::TooFewSamples {
                class: k as u8,
                count: n,
                min,
            });
        }
        members.shuffle(&mut rng);
        let cut1 = round_share(n, a, total);
        let cut2 = round_share(n, a + b, total);
        let mut rest = members.split_off(cut1);
        let test = rest.split_off(cut2 - cut1);
        out.train.extend(members);
        out.val.extend(rest);
        out.test.extend(test);
    }
    Ok(out)
}

/// Each patch followed by its 90, 180 and 270 degree rotations.
pub fn augment(patches: &[Patch]) -> Vec<Patch> {
    let mut out = Vec::with_capacity(patches.len() * 4);
    for p in patches {
        let r90 = p.rot90();
        let r180 = r90.rot90();
        let r270 = r180.rot90();
        out.extend([p.clone(), r90, r180, r270]);
    }
    out
}

/// Writes `row,col,class_id,set` with `set` in {train, val, test}.
pub fn save_split_manifest(split: &DatasetSplit<PointSample>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("row,col,class_id,set\n");
    for (name, set) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        for s in set {
            text.push_str(&format!("{},{},{},{name}\n", s.row, s.col, s.class_id));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_split_manifest(path: impl AsRef<Path>, seed: u64) -> Result<DatasetSplit<PointSample>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            message,
        };
        if record.len() != 4 {
            return Err(parse_err("expected row,col,class_id,set".into()));
        }
        let num = |i: usize| {
            record[i]
                .parse::<usize>()
                .map_err(|_| parse_err(format!("bad integer `{}`", &record[i])))
        };
        let class = num(2)?;
        if class >= NUM_CLASSES {
            return Err(Error::InvalidLabel(class as u32));
        }
        let sample = PointSample::new(num(0)?, num(1)?, class as u8);
        match &record[3] {
            "train" => out.train.push(sample),
            "val" => out.val.push(sample),
            "test" => out.test.push(sample),
            other => return Err(parse_err(format!("unknown set `{other}`"))),
        }
    }
    Ok(out)
}

const PATCH_MAGIC: &[u8; 8] = b"LCZPATCH";
const PATCH_VERSION: u32 = 1;

/// Binary patch set: magic, version, count, patch edge, bands, then per
/// patch the label (u8), origin row and column (u32) and the values (f32),
/// all little-endian.
pub fn save_patches(patches: &[Patch], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(24 + patches.len() * (9 + PATCH_LEN * 4));
    buf.extend_from_slice(PATCH_MAGIC);
    for v in [PATCH_VERSION, patches.len() as u32, PATCH_SIZE as u32, NUM_BANDS as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in patches {
        buf.push(p.label);
        buf.extend_from_slice(&(p.origin.0 as u32).to_le_bytes());
        buf.extend_from_slice(&(p.origin.1 as u32).to_le_bytes());
        for v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_patches(path: impl AsRef<Path>) -> Result<Vec<Patch>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::invalid(format!("{}: {m}", path.display()));
    if bytes.len() < 24 || &bytes[..8] != PATCH_MAGIC {
        return Err(bad("not a patch file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(8) != PATCH_VERSION {
        return Err(bad("unsupported patch file version"));
    }
    let count = word(12) as usize;
    if word(16) as usize != PATCH_SIZE || word(20) as usize != NUM_BANDS {
        return Err(bad("unexpected patch geometry"));
    }
    let record = 9 + PATCH_LEN * 4;
    if bytes.len() != 24 + count * record {
        return Err(Error::LengthMismatch {
            expected: 24 + count * record,
            actual: bytes.len(),
        });
    }
    let mut patches = Vec::with_capacity(count);
    for chunk in bytes[24..].chunks_exact(record) {
        let label = chunk[0];
        let row = u32::from_le_bytes(chunk[1..5].try_into().unwrap()) as usize;
        let col = u32::from_le_bytes(chunk[5..9].try_into().unwrap()) as usize;
        let values = chunk[9..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        patches.push(Patch::new(values, label, (row, col))?);
    }
    Ok(patches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> RasterStack {
        let data = (0..w * h * NUM_BANDS).map(|i| i as f32).collect();
        RasterStack::new(w, h, NUM_BANDS, data).unwrap()
    }

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("samples.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn margin_rule() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "row,col,class_id\n5,5,0\n");
        assert_eq!(load_samples(&ok, 11, 11).unwrap(), vec![PointSample::new(5, 5, 0)]);
        let bad = write(dir.path(), "row,col,class_id\n4,5,0\n");
        assert!(matches!(load_samples(&bad, 11, 11), Err(Error::OutOfMargin { .. })));
        let bad = write(dir.path(), "row,col,class_id\n5,5,14\n");
        assert!(matches!(load_samples(&bad, 11, 11), Err(Error::InvalidLabel(14))));
        let bad = write(dir.path(), "row,col,class_id\n5,x,1\n");
        assert!(matches!(load_samples(&bad, 11, 11), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn full_raster_patch() {
        let stack = ramp(11, 11);
        let p = extract_patch(&stack, &PointSample::new(5, 5, 3)).unwrap();
        assert_eq!(p.values().len(), 11 * 11 * 10);
        assert_eq!(p.label, 3);
        for i in 0..11 {
            for j in 0..11 {
                for b in 0..10 {
                    assert_eq!(p.get(i, j, b), stack.get(i, j, b));
                }
            }
        }
    }

    #[test]
    fn shifted_patches_overlap() {
        let stack = ramp(13, 14);
        let a = extract_patch(&stack, &PointSample::new(5, 5, 0)).unwrap();
        let b = extract_patch(&stack, &PointSample::new(6, 5, 0)).unwrap();
        for i in 0..10 {
            for j in 0..11 {
                assert_eq!(b.cell(i, j), a.cell(i + 1, j));
            }
        }
        assert!(extract_patch(&stack, &PointSample::new(9, 5, 0)).is_err());
    }

    #[test]
    fn extract_needs_ten_bands() {
        let stack = RasterStack::zeros(11, 11, 3).unwrap();
        assert!(extract_patch(&stack, &PointSample::new(5, 5, 0)).is_err());
    }

    #[test]
    fn ten_samples_split_five_two_three() {
        let s: Vec<PointSample> = (0..10).map(|i| PointSample::new(5 + i, 5, 4)).collect();
        let split = split(&s, (5, 2, 3), 1).unwrap();
        assert_eq!((split.train.len(), split.val.len(), split.test.len()), (5, 2, 3));
    }

    #[test]
    fn split_requires_three_per_class() {
        let s = vec![PointSample::new(5, 5, 0), PointSample::new(6, 5, 0)];
        assert!(matches!(
            split(&s, (5, 2, 3), 1),
            Err(Error::TooFewSamples { class: 0, .. })
        ));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let s: Vec<PointSample> = (0..300).map(|i| PointSample::new(i, i % 7, (i % 5) as u8)).collect();
        let a = split(&s, (5, 2, 3), 99).unwrap();
        let b = split(&s, (5, 2, 3), 99).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort();
        let mut orig = s.clone();
        orig.sort();
        assert_eq!(all, orig);
        assert_ne!(a, split(&s, (5, 2, 3), 100).unwrap());
    }

    #[test]
    fn manifest_round_trip() {
        let s: Vec<PointSample> = (0..30).map(|i| PointSample::new(i + 5, 9, (i % 3) as u8)).collect();
        let sp = split(&s, (5, 2, 3), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.csv");
        save_split_manifest(&sp, &p).unwrap();
        assert_eq!(load_split_manifest(&p, 3).unwrap(), sp);
    }

    #[test]
    fn augment_quadruples() {
        let stack = ramp(20, 20);
        let patches: Vec<Patch> = (5..15)
            .map(|r| extract_patch(&stack, &PointSample::new(r, 7, (r % 2) as u8)).unwrap())
            .collect();
        let aug = augment(&patches);
        assert_eq!(aug.len(), 40);
        assert_eq!(aug.iter().filter(|p| p.label == 1).count(), 20);
        assert_eq!(aug[0], patches[0]);
        assert_eq!(aug[1], patches[0].rot90());
    }

    #[test]
    fn rot90_turns_counter_clockwise() {
        let stack = ramp(11, 11);
        let p = extract_patch(&stack, &PointSample::new(5, 5, 0)).unwrap();
        let r = p.rot90();
        // Top-right corner moves to top-left.
        assert_eq!(r.cell(0, 0), p.cell(0, 10));
        assert_eq!(r.cell(10, 0), p.cell(0, 0));
    }

    #[test]
    fn band_constant_patch_is_rotation_invariant() {
        let values = (0..PATCH_LEN).map(|i| (i % NUM_BANDS) as f32).collect();
        let p = Patch::new(values, 2, (5, 5)).unwrap();
        assert_eq!(p.rot90(), p);
    }

    #[test]
    fn patch_file_round_trip() {
        let stack = ramp(16, 16);
        let patches: Vec<Patch> = (5..10)
            .map(|r| extract_patch(&stack, &PointSample::new(r, 8, 1)).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.bin");
        save_patches(&patches, &p).unwrap();
        assert_eq!(load_patches(&p).unwrap(), patches);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rotation_group(values in proptest::collection::vec(-10.0f32..10.0, PATCH_LEN)) {
            let p = Patch::new(values, 0, (5, 5)).unwrap();
            let back = p.rot90().rot90().rot90().rot90();
            prop_assert_eq!(&back, &p);
            let r = p.rot90();
            for b in 0..NUM_BANDS {
                let mut x: Vec<u32> = (0..121).map(|c| p.values()[c * NUM_BANDS + b].to_bits()).collect();
                let mut y: Vec<u32> = (0..121).map(|c| r.values()[c * NUM_BANDS + b].to_bits()).collect();
                x.sort_unstable();
                y.sort_unstable();
                prop_assert_eq!(x, y);
            }
            // The center cell is fixed by rotation.
            prop_assert_eq!(r.cell(5, 5), p.cell(5, 5));
        }
    }
}
