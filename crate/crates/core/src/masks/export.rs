//! CSV and 8-bit PGM export of T×F matrices for plotting.

use std::fs;
use std::io;
use std::path::Path;

use ndarray::Array2;

/// One CSV row per frame.
pub fn to_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> io::Result<()> {
    fs::write(path, to_csv(m))
}

/// Binary greyscale PGM (P5) with time running left to right and the
/// lowest frequency bin on the bottom row. Values are mapped linearly from
/// `range` (or the matrix min/max) onto 0..=255.
pub fn to_pgm(m: &Array2<f64>, range: Option<(f64, f64)>) -> Vec<u8> {
    let (frames, bins) = m.dim();
    let (lo, hi) = range.unwrap_or_else(|| {
        m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    for k in (0..bins).rev() {
        for t in 0..frames {
            let v = ((m[[t, k]] - lo) / span).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, m: &Array2<f64>, range: Option<(f64, f64)>) -> io::Result<()> {
    fs::write(path, to_pgm(m, range))
}
