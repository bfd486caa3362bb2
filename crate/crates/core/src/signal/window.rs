use std::f64::consts::PI;

/// Periodic Hann window, `0.5 - 0.5 cos(2πn/N)`. Overlap-adds to a constant
/// at any hop of the form `N/k`.
pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Symmetric Hann window with the zero end-points dropped, i.e. the
/// central `len` points of a `len + 2` Hann window.
pub fn hann_symmetric(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (len + 1) as f64).cos())
        .collect()
}
