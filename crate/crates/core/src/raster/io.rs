//! Plain-text header plus raw little-endian band-sequential payload.
//!
//! ```text
//! width=4192
//! height=2192
//! bands=10
//! dtype=float32
//! byteorder=little
//! interleave=bsq
//! resolution_m=10
//! data_file=scene.raw
//! ```
//!
//! `data_file` is resolved relative to the header's directory; when absent the
//! payload is the header path with its extension replaced by `.raw`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::RasterStack;
use crate::error::{Error, Result};
use crate::spatial::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    Float32,
    Uint8,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::Float32 => "float32",
            Dtype::Uint8 => "uint8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Uint8 => 1,
        }
    }
}

#[derive(Debug)]
struct Header {
    width: usize,
    height: usize,
    bands: usize,
    dtype: Dtype,
    resolution_m: Option<f32>,
    data_file: Option<String>,
}

fn parse_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut width = None;
    let mut height = None;
    let mut bands = None;
    let mut dtype = None;
    let mut resolution_m = None;
    let mut data_file = None;

    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let dim = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| parse_err(format!("bad value for {key}: `{v}`")))
        };
        match key {
            "width" => width = Some(dim(value)?),
            "height" => height = Some(dim(value)?),
            "bands" => bands = Some(dim(value)?),
            "dtype" => {
                dtype = Some(match value {
                    "float32" => Dtype::Float32,
                    "uint8" => Dtype::Uint8,
                    other => return Err(Error::UnsupportedDtype(other.to_string())),
                })
            }
            "byteorder" if value != "little" => return Err(parse_err(format!("unsupported byte order `{value}`"))),
            "interleave" if value != "bsq" => return Err(parse_err(format!("unsupported interleave `{value}`"))),
            "resolution_m" => {
                resolution_m = Some(
                    value
                        .parse::<f32>()
                        .map_err(|_| parse_err(format!("bad resolution `{value}`")))?,
                )
            }
            "data_file" => data_file = Some(value.to_string()),
            _ => {}
        }
    }

    let missing = |k: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("missing required key `{k}`"),
    };
    Ok(Header {
        width: width.ok_or_else(|| missing("width"))?,
        height: height.ok_or_else(|| missing("height"))?,
        bands: bands.ok_or_else(|| missing("bands"))?,
        dtype: dtype.ok_or_else(|| missing("dtype"))?,
        resolution_m,
        data_file,
    })
}

fn default_data_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

fn payload_path(header_path: &Path, header: &Header) -> PathBuf {
    match &header.data_file {
        Some(name) => header_path.parent().unwrap_or_else(|| Path::new("")).join(name),
        None => default_data_path(header_path),
    }
}

fn write_files(
    header_path: &Path,
    header: &Header,
    write_payload: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let data_path = default_data_path(header_path);
    let data_name = data_path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("bad header path {}", header_path.display())))?
        .to_string_lossy()
        .into_owned();

    let mut text = String::new();
    text.push_str(&format!("width={}\n", header.width));
    text.push_str(&format!("height={}\n", header.height));
    text.push_str(&format!("bands={}\n", header.bands));
    text.push_str(&format!("dtype={}\n", header.dtype.name()));
    text.push_str("byteorder=little\n");
    text.push_str("interleave=bsq\n");
    if let Some(res) = header.resolution_m {
        text.push_str(&format!("resolution_m={res}\n"));
    }
    text.push_str(&format!("data_file={data_name}\n"));

    fs::write(header_path, text).map_err(|e| Error::io(header_path, e))?;
    let file = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut out = BufWriter::new(file);
    write_payload(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&data_path, e))
}

fn read_payload(header_path: &Path, header: &Header, expected: Dtype) -> Result<Vec<u8>> {
    if header.dtype != expected {
        return Err(Error::UnsupportedDtype(format!(
            "{} (expected {})",
            header.dtype.name(),
            expected.name()
        )));
    }
    let path = payload_path(header_path, header);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let values = header.width * header.height * header.bands;
    let expected_len = values * expected.size();
    if bytes.len() != expected_len {
        return Err(Error::LengthMismatch {
            expected: expected_len,
            actual: bytes.len(),
        });
    }
    Ok(bytes)
}

/// Reads a float32 raster from its header path.
pub fn load_raster(header_path: impl AsRef<Path>) -> Result<RasterStack> {
    let header_path = header_path.as_ref();
    let header = parse_header(header_path)?;
    let bytes = read_payload(header_path, &header, Dtype::Float32)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let stack = RasterStack::new(header.width, header.height, header.bands, data)?;
    Ok(match header.resolution_m {
        Some(r) => stack.with_resolution(r),
        None => stack,
    })
}

/// Writes `stack` as `header_path` plus a `.raw` payload beside it.
pub fn save_raster(stack: &RasterStack, header_path: impl AsRef<Path>) -> Result<()> {
    if stack.bands() == 0 || stack.width() == 0 || stack.height() == 0 {
        return Err(Error::dims("cannot save an empty raster"));
    }
    let header = Header {
        width: stack.width(),
        height: stack.height(),
        bands: stack.bands(),
        dtype: Dtype::Float32,
        resolution_m: Some(stack.resolution_m()),
        data_file: None,
    };
    write_files(header_path.as_ref(), &header, |out| {
        for v in stack.data() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

/// Reads a single-band uint8 label raster.
pub fn load_label_map(header_path: impl AsRef<Path>) -> Result<LabelMap> {
    let header_path = header_path.as_ref();
    let header = parse_header(header_path)?;
    if header.bands != 1 {
        return Err(Error::dims(format!(
            "label maps have one band, header declares {}",
            header.bands
        )));
    }
    let bytes = read_payload(header_path, &header, Dtype::Uint8)?;
    LabelMap::new(header.width, header.height, bytes)
}

pub fn save_label_map(map: &LabelMap, header_path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        width: map.width(),
        height: map.height(),
        bands: 1,
        dtype: Dtype::Uint8,
        resolution_m: None,
        data_file: None,
    };
    write_files(header_path.as_ref(), &header, |out| out.write_all(map.labels()))
}
