//! Matrix files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! b"ZSLD" | version: u16 | rows: u32 | cols: u32 | rows * cols f32, row-major
//! ```
//!
//! Files ending in `.csv` hold one comma-separated row per line, no header.

use std::fs;
use std::path::Path;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZSLD";
pub const MATRIX_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(
            path,
            "not a ZSLD matrix file (bad magic or short header)",
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MATRIX_VERSION {
        return Err(Error::format(
            path,
            format!("matrix format version {version}, expected {MATRIX_VERSION}"),
        ));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "matrix dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "shape inconsistency: header says {rows}x{cols} ({expected} bytes) but payload has {} bytes",
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    check_finite(&data, path)?;
    Tensor::from_vec(rows, cols, data)
}

fn check_finite(data: &[f64], path: &Path) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            path,
            format!("non-finite entry at flat index {i}"),
        ));
    }
    Ok(())
}

pub fn write_matrix(path: &Path, t: &Tensor) -> Result<()> {
    if is_csv(path) {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::format(path, e.to_string()))?;
        for row in t.iter_rows() {
            w.write_record(row.iter().map(|v| (*v as f32).to_string()))
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Tensor> {
    if is_csv(path) {
        return read_csv(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn read_csv(path: &Path) -> Result<Tensor> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::format(
                    path,
                    format!(
                        "shape inconsistency: row {} has {} fields, expected {c}",
                        i + 1,
                        rec.len()
                    ),
                ))
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f32 = field.parse().map_err(|_| {
                Error::format(path, format!("row {}: not a number: {field:?}", i + 1))
            })?;
            data.push(v as f64);
        }
        rows += 1;
    }
    check_finite(&data, path)?;
    Tensor::from_vec(rows, cols.unwrap_or(0), data)
}
