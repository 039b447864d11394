//! The `.cti` slice format: a small text sidecar describing a little-endian
//! `f32` payload stored next to it.
//!
//! ```text
//! cti 1
//! id = phantom-00000007
//! width = 64
//! height = 64
//! dtype = f32le
//! slope = 1
//! intercept = 0
//! payload = phantom-00000007.bin
//! ```
//!
//! Stored values map to HU as `raw * slope + intercept`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::image::CtImage;
use crate::error::{Error, Result};

const MAGIC: &str = "cti 1";

pub fn write_cti(dir: &Path, img: &CtImage) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sidecar = dir.join(format!("{}.cti", img.id()));
    let payload_name = format!("{}.bin", img.id());
    let header = format!(
        "{MAGIC}\nid = {}\nwidth = {}\nheight = {}\ndtype = f32le\nslope = 1\nintercept = 0\npayload = {payload_name}\n",
        img.id(),
        img.width(),
        img.height()
    );
    let mut bytes = Vec::with_capacity(img.pixels().len() * 4);
    for v in img.pixels() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let payload = dir.join(&payload_name);
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
    fs::write(&sidecar, header).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(Error::format("cti sidecar", "missing `cti 1` magic line"));
    }
    let mut fields = BTreeMap::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("cti sidecar", format!("expected key = value, got `{line}`")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(fields)
}

fn field<'a>(fields: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format("cti sidecar", format!("missing field `{key}`")))
}

fn parse_num<T: std::str::FromStr>(fields: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = field(fields, key)?;
    raw.parse()
        .map_err(|_| Error::format("cti sidecar", format!("field `{key}` = `{raw}` is not a number")))
}

pub fn read_cti(path: &Path) -> Result<CtImage> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fields = parse_header(&text)?;
    let id = field(&fields, "id")?.to_string();
    let width: usize = parse_num(&fields, "width")?;
    let height: usize = parse_num(&fields, "height")?;
    let slope: f64 = parse_num(&fields, "slope")?;
    let intercept: f64 = parse_num(&fields, "intercept")?;
    let dtype = field(&fields, "dtype")?;
    if dtype != "f32le" {
        return Err(Error::format("cti sidecar", format!("unsupported dtype `{dtype}`")));
    }
    let payload = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(field(&fields, "payload")?);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() != width * height * 4 {
        return Err(Error::format(
            "cti payload",
            format!(
                "{} holds {} bytes, expected {} for {width}x{height} f32",
                payload.display(),
                bytes.len(),
                width * height * 4
            ),
        ));
    }
    let pixels = bytes
        .chunks_exact(4)
        .map(|c| {
            let raw = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if slope == 1.0 && intercept == 0.0 {
                raw
            } else {
                (raw as f64 * slope + intercept) as f32
            }
        })
        .collect();
    CtImage::new(id, width, height, pixels)
}

/// Sample type of an externally exported raw slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    I16Le,
    U16Le,
    F32Le,
}

/// Layout of a headerless slice exported from a scanner archive (for
/// example the stored-value arrays of Mayo slices, with their rescale
/// slope and intercept copied alongside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSliceFormat {
    pub width: usize,
    pub height: usize,
    pub dtype: RawDtype,
    pub slope: f64,
    pub intercept: f64,
}

/// Converts a raw exported slice into HU; values outside the valid HU
/// range (e.g. scanner padding of -2000 or -3024) are clamped.
pub fn import_raw_slice(path: &Path, format: RawSliceFormat, id: &str) -> Result<CtImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sample = match format.dtype {
        RawDtype::I16Le | RawDtype::U16Le => 2,
        RawDtype::F32Le => 4,
    };
    let expected = format.width * format.height * sample;
    if bytes.len() != expected {
        return Err(Error::format(
            "raw slice",
            format!("{} holds {} bytes, expected {expected}", path.display(), bytes.len()),
        ));
    }
    let raw: Vec<f64> = match format.dtype {
        RawDtype::I16Le => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        RawDtype::U16Le => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        RawDtype::F32Le => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    let hu = raw
        .into_iter()
        .map(|v| (v * format.slope + format.intercept) as f32)
        .collect();
    CtImage::from_hu_clamped(id, format.width, format.height, hu)
}
