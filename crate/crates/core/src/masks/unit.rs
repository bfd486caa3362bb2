//! Per-unit mask formulas on complex STFT coefficients.

use num_complex::Complex64;

/// Magnitude guard for the compression inverse.
const SATURATION_MARGIN: f64 = 1e-9;

pub fn ibm(s: Complex64, n: Complex64, theta: f64) -> f64 {
    if s.norm_sqr() - n.norm_sqr() > theta {
        1.0
    } else {
        0.0
    }
}

pub fn irm(s: Complex64, n: Complex64, beta: f64, eps: f64) -> f64 {
    let ps = s.norm_sqr();
    let den = ps + n.norm_sqr();
    if den < eps {
        return 0.0;
    }
    (ps / den).powf(beta)
}

/// `S / Y` written as `S·Y* / |Y|²`; zero when `|Y|² < eps`.
pub fn cirm(s: Complex64, y: Complex64, eps: f64) -> Complex64 {
    let den = y.norm_sqr();
    if den < eps {
        return Complex64::default();
    }
    Complex64::new(s.re * y.re + s.im * y.im, s.im * y.re - s.re * y.im) / den
}

/// `|S|/|Y| · cos(θS - θY)`, i.e. the projection of `S` on `Y` divided by
/// `|Y|`; zero when `|Y|² < eps`.
pub fn psm_unclipped(s: Complex64, y: Complex64, eps: f64) -> f64 {
    let den = y.norm_sqr();
    if den < eps {
        return 0.0;
    }
    (s.re * y.re + s.im * y.im) / den
}

/// Optimal ratio mask `(|S|² + Re(S·N*)) / (|S|² + |N|² + 2 Re(S·N*))`.
///
/// Both numerator and denominator are evaluated through `Y = S + N`
/// (`Re(S·Y*)` and `|Y|²`); the expanded denominator cancels badly when
/// speech and noise nearly annihilate. Zero when `|Y|² < eps`.
pub fn orm(s: Complex64, n: Complex64, eps: f64) -> f64 {
    let y = s + n;
    let den = y.norm_sqr();
    if den < eps {
        return 0.0;
    }
    (s.re * y.re + s.im * y.im) / den
}

/// `K (1 - e^{-cγ}) / (1 + e^{-cγ}) = K tanh(cγ / 2)`.
pub fn compress(gamma: f64, k: f64, c: f64) -> f64 {
    k * (0.5 * c * gamma).tanh()
}

/// `-(1/c) ln((K - m) / (K + m))`, with `|m|` clamped to `K - 1e-9`.
pub fn uncompress(m: f64, k: f64, c: f64) -> f64 {
    let limit = k - SATURATION_MARGIN;
    let m = m.clamp(-limit, limit);
    2.0 / c * (m / k).atanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn compress_is_odd_and_increasing(a in -200.0f64..200.0, d in 1e-3f64..10.0) {
            prop_assert_eq!(compress(-a, 10.0, 0.1), -compress(a, 10.0, 0.1));
            prop_assert!(compress(a + d, 10.0, 0.1) > compress(a, 10.0, 0.1));
            prop_assert!(compress(a, 10.0, 0.1).abs() < 10.0);
        }

        #[test]
        fn compress_round_trip(g in -50.0f64..50.0) {
            prop_assert!((uncompress(compress(g, 10.0, 0.1), 10.0, 0.1) - g).abs() < 1e-9);
        }

        #[test]
        fn expanded_orm_form_agrees(sr in -1.0f64..1.0, si in -1.0f64..1.0, nr in -1.0f64..1.0, ni in -1.0f64..1.0) {
            let s = Complex64::new(sr, si);
            let n = Complex64::new(nr, ni);
            let cross = (s * n.conj()).re;
            let den = s.norm_sqr() + n.norm_sqr() + 2.0 * cross;
            prop_assume!(den > 1e-3);
            let expanded = (s.norm_sqr() + cross) / den;
            prop_assert!((orm(s, n, 1e-12) - expanded).abs() < 1e-9 * (1.0 + expanded.abs()));
        }

        #[test]
        fn psm_matches_polar_form(sr in -1.0f64..1.0, si in -1.0f64..1.0, yr in -1.0f64..1.0, yi in -1.0f64..1.0) {
            let s = Complex64::new(sr, si);
            let y = Complex64::new(yr, yi);
            prop_assume!(y.norm() > 1e-2);
            let polar = s.norm() / y.norm() * (s.arg() - y.arg()).cos();
            prop_assert!((psm_unclipped(s, y, 1e-12) - polar).abs() < 1e-10);
        }

        #[test]
        fn irm_and_ibm_ranges(sr in -5.0f64..5.0, si in -5.0f64..5.0, nr in -5.0f64..5.0, ni in -5.0f64..5.0) {
            let s = Complex64::new(sr, si);
            let n = Complex64::new(nr, ni);
            let v = irm(s, n, 0.5, 1e-12);
            prop_assert!((0.0..=1.0).contains(&v));
            let b = ibm(s, n, 0.0);
            prop_assert!(b == 0.0 || b == 1.0);
        }

        #[test]
        fn ratio_masks_are_scale_invariant(sr in -1.0f64..1.0, si in -1.0f64..1.0, nr in -1.0f64..1.0, ni in -1.0f64..1.0, g in 0.5f64..2.0) {
            let s = Complex64::new(sr, si);
            let n = Complex64::new(nr, ni);
            prop_assume!((s + n).norm_sqr() > 1e-4 && s.norm_sqr() > 1e-4);
            prop_assert!((orm(s, n, 1e-12) - orm(s * g, n * g, 1e-12)).abs() < 1e-9);
            prop_assert!((irm(s, n, 0.5, 0.0) - irm(s * g, n * g, 0.5, 0.0)).abs() < 1e-12);
        }
    }
}
