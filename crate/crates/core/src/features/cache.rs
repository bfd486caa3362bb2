//! Binary matrix files: a `u32` column count, a `u32` row count, then the
//! values row-major as little-endian `f32`.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::FeatureError;

const HEADER: usize = 8;

pub fn encode_matrix(m: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(HEADER + 4 * rows * cols);
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &str) -> Result<Array2<f64>, FeatureError> {
    let bad = |reason: String| FeatureError::Format { path: path.to_string(), reason };
    if bytes.len() < HEADER {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    let cols = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER))
        .ok_or_else(|| bad(format!("implausible shape {rows}x{cols}")))?;
    if bytes.len() != expected {
        return Err(bad(format!("{rows}x{cols} matrix needs {expected} bytes, file has {}", bytes.len())));
    }
    let values = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked above"))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<(), FeatureError> {
    fs::write(path, encode_matrix(m)).map_err(|source| FeatureError::Io { path: path.display().to_string(), source })
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, FeatureError> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io { path: path.display().to_string(), source })?;
    decode_matrix(&bytes, &path.display().to_string())
}
