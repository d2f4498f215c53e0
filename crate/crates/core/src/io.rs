//! On-disk formats: raw little-endian f64 arrays with a JSON sidecar, 16-bit
//! PGM renderings and small CSV profiles.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{Subband, WaveletDictionary};

pub const DTYPE: &str = "f64le";
pub const ORDER: &str = "row-major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub shape: [usize; 2],
    pub dtype: String,
    pub order: String,
    /// Coefficient files only: one label per row, in storage order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subbands: Option<Vec<String>>,
}

impl ArrayMeta {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { shape: [rows, cols], dtype: DTYPE.into(), order: ORDER.into(), subbands: None }
    }
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(stem.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Paths of the data file and sidecar for `stem`.
pub fn array_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (with_suffix(stem, "f64"), with_suffix(stem, "json"))
}

fn write_raw(stem: &Path, values: impl Iterator<Item = f64>, meta: &ArrayMeta) -> Result<()> {
    let (data, side) = array_paths(stem);
    if let Some(dir) = data.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(&data)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    fs::write(side, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Writes `<stem>.f64` and `<stem>.json`.
pub fn write_array(stem: &Path, a: ArrayView2<f64>) -> Result<()> {
    let (r, c) = a.dim();
    write_raw(stem, a.iter().copied(), &ArrayMeta::new(r, c))
}

pub fn read_meta(stem: &Path) -> Result<ArrayMeta> {
    let (_, side) = array_paths(stem);
    let meta: ArrayMeta = serde_json::from_str(&fs::read_to_string(side)?)?;
    if meta.dtype != DTYPE || meta.order != ORDER {
        return Err(Error::Config(format!(
            "unsupported array encoding {}/{} (expected {DTYPE}/{ORDER})",
            meta.dtype, meta.order
        )));
    }
    Ok(meta)
}

pub fn read_array(stem: &Path) -> Result<Array2<f64>> {
    let meta = read_meta(stem)?;
    let (data, _) = array_paths(stem);
    let bytes = fs::read(&data)?;
    let [r, c] = meta.shape;
    if bytes.len() != r * c * 8 {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, sidecar shape {r}x{c} needs {}",
            data.display(),
            bytes.len(),
            r * c * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Array2::from_shape_vec((r, c), values).expect("length checked"))
}

pub fn subband_label(s: Subband) -> String {
    match s {
        Subband::Approx { level } => format!("approx{level}"),
        Subband::Detail { level, orientation } => format!("detail{level}_{orientation:?}").to_lowercase(),
    }
}

/// Coefficient vector stored as `num_subbands × m²` with subband labels.
pub fn write_coefficients(stem: &Path, coeffs: &[f64], dict: &WaveletDictionary) -> Result<()> {
    if coeffs.len() != dict.num_coefficients() {
        return Err(Error::Shape(format!(
            "{} coefficients do not match the dictionary layout ({})",
            coeffs.len(),
            dict.num_coefficients()
        )));
    }
    let area = dict.side() * dict.side();
    let mut meta = ArrayMeta::new(dict.num_subbands(), area);
    meta.subbands = Some(dict.subbands().into_iter().map(subband_label).collect());
    write_raw(stem, coeffs.iter().copied(), &meta)
}

pub fn read_coefficients(stem: &Path) -> Result<(Vec<f64>, Vec<String>)> {
    let meta = read_meta(stem)?;
    let a = read_array(stem)?;
    let labels = meta.subbands.unwrap_or_default();
    Ok((a.into_raw_vec_and_offset().0, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PgmScale {
    Linear,
    /// `log10(v + 1e-8)` before min–max scaling.
    Log,
}

pub const LOG_FLOOR: f64 = 1e-8;

/// Min–max scales to 16 bits. A constant image maps to 0.
pub fn to_u16(a: ArrayView2<f64>, scale: PgmScale) -> Vec<u16> {
    let vals: Vec<f64> = match scale {
        PgmScale::Linear => a.iter().copied().collect(),
        PgmScale::Log => a.iter().map(|v| (v.max(0.0) + LOG_FLOOR).log10()).collect(),
    };
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    vals.iter()
        .map(|v| {
            if span > 0.0 && span.is_finite() {
                ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect()
}

/// Binary 16-bit PGM (P5, big-endian samples).
pub fn write_pgm(path: &Path, a: ArrayView2<f64>, scale: PgmScale) -> Result<()> {
    let (r, c) = a.dim();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{c} {r}\n65535\n")?;
    for v in to_u16(a, scale) {
        w.write_all(&v.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a 16-bit P5 file back into raw sample values.
pub fn read_pgm(path: &Path) -> Result<Array2<u16>> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Shape("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Shape(format!("bad PGM field {s}")));
    if fields[0] != "P5" || parse(&fields[3])? != 65535 {
        return Err(Error::Shape("only 16-bit P5 is supported".into()));
    }
    let (c, r) = (parse(&fields[1])?, parse(&fields[2])?);
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != r * c * 2 {
        return Err(Error::Shape("PGM body length mismatch".into()));
    }
    let vals = body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok(Array2::from_shape_vec((r, c), vals).expect("length checked"))
}

/// Named columns of equal length as CSV with a header row.
pub fn write_profile_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != len) {
        return Err(Error::Shape("profile columns differ in length".into()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..len {
        let row: Vec<String> = columns.iter().map(|c| format!("{}", c.1[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
