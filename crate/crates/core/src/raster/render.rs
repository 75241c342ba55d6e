use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{csv_error, Error, Result};
use crate::spatial::LabelMap;
use crate::NUM_CLASSES;

/// Class id to 8-bit RGB color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: BTreeMap<u8, [u8; 3]>,
}

impl Palette {
    /// Builds a palette from `(class_id, rgb)` pairs. Ids must be below 14,
    /// unique, and no two ids may share a color.
    pub fn new(entries: impl IntoIterator<Item = (u8, [u8; 3])>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut colors = HashSet::new();
        for (id, rgb) in entries {
            if id as usize >= NUM_CLASSES {
                return Err(Error::InvalidLabel(id as u32));
            }
            if map.insert(id, rgb).is_some() {
                return Err(Error::invalid(format!("duplicate palette entry for class {id}")));
            }
            if !colors.insert(rgb) {
                return Err(Error::invalid(format!(
                    "palette color {rgb:?} used by more than one class"
                )));
            }
        }
        Ok(Palette { entries: map })
    }

    /// Class `k` gets hue `k * 360 / 14` at full saturation and value.
    pub fn default_hues() -> Self {
        let entries = (0..NUM_CLASSES as u8).map(|k| {
            let hue = k as f64 * 360.0 / NUM_CLASSES as f64;
            (k, hsv_to_rgb(hue, 1.0, 1.0))
        });
        Palette::new(entries).expect("hue palette is valid")
    }

    /// Reads `class_id,R,G,B` rows; a non-numeric first line is a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut entries = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            if record.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, got {}", record.len())));
            }
            let fields: std::result::Result<Vec<u32>, _> = record.iter().map(|f| f.parse::<u32>()).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if n == 0 => continue,
                Err(_) => return Err(parse_err(format!("non-numeric row {record:?}"))),
            };
            if fields[0] as usize >= NUM_CLASSES {
                return Err(Error::InvalidLabel(fields[0]));
            }
            if fields[1..].iter().any(|&c| c > 255) {
                return Err(parse_err("color component above 255".into()));
            }
            entries.push((fields[0] as u8, [fields[1] as u8, fields[2] as u8, fields[3] as u8]));
        }
        Palette::new(entries)
    }

    pub fn color(&self, class_id: u8) -> Option<[u8; 3]> {
        self.entries.get(&class_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when every class 0..14 has a color.
    pub fn is_complete(&self) -> bool {
        self.entries.len() == NUM_CLASSES
    }
}

fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let h = (hue % 360.0) / 60.0;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Converts a label map to RGB pixels, one per cell.
pub fn colorize(map: &LabelMap, palette: &Palette) -> Result<Vec<u8>> {
    let mut rgb = Vec::with_capacity(map.labels().len() * 3);
    for &label in map.labels() {
        let color = palette.color(label).ok_or(Error::MissingColor(label))?;
        rgb.extend_from_slice(&color);
    }
    Ok(rgb)
}

/// Writes `map` as an 8-bit RGB PNG (no alpha).
pub fn render_map(map: &LabelMap, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let rgb = colorize(map, palette)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), map.width() as u32, map.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::invalid(format!("png encoding failed: {e}"));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&rgb).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}
