//! Windowed-sinc polyphase sample-rate conversion.

use std::f64::consts::PI;

use super::{SignalError, Waveform};

/// Passband edge and stopband edge as fractions of the lower of the two
/// sample rates. The stopband begins exactly at the lower Nyquist.
const PASS_EDGE: f64 = 0.44;
const STOP_EDGE: f64 = 0.50;
const STOPBAND_DB: f64 = 90.0;
/// Above this many phases the kernel is evaluated on the fly instead of
/// being tabulated.
const MAX_TABLE_PHASES: usize = 2048;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    /// Cutoff in cycles per input sample.
    cutoff: f64,
    half_width: usize,
    beta: f64,
    i0_beta: f64,
}

impl Kernel {
    fn design(source: u32, target: u32) -> Self {
        let low = source.min(target) as f64;
        let fs = source as f64;
        let cutoff = 0.5 * (PASS_EDGE + STOP_EDGE) * low / fs;
        let transition = 2.0 * PI * (STOP_EDGE - PASS_EDGE) * low / fs;
        // Kaiser's design formulas.
        let taps = (STOPBAND_DB - 7.95) / (2.285 * transition);
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        Self {
            cutoff,
            half_width: (taps / 2.0).ceil() as usize + 1,
            beta,
            i0_beta: bessel_i0(beta),
        }
    }

    /// Kernel value at `t` input samples from the output instant.
    fn eval(&self, t: f64) -> f64 {
        let u = t / self.half_width as f64;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let x = 2.0 * self.cutoff * t;
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let window = bessel_i0(self.beta * (1.0 - u * u).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }

    /// Taps for input offsets `-(H-1) ..= H` relative to the base sample at
    /// fractional position `frac`.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let h = self.half_width as i64;
        (-(h - 1)..=h).map(|j| self.eval(frac - j as f64)).collect()
    }
}

/// Converts `w` to `target_rate`. The output has
/// `round(len · target / source)` samples and is band-limited below the
/// lower of the two Nyquist frequencies. Near the signal edges the
/// truncated kernel is renormalised to unit sum, so constant signals pass
/// unchanged everywhere.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, SignalError> {
    if target_rate == 0 {
        return Err(SignalError::InvalidRate(target_rate));
    }
    let source_rate = w.sample_rate();
    if target_rate == source_rate {
        return Ok(w.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let len = w.len() as u64;
    let out_len = ((len * target_rate as u64 + source_rate as u64 / 2) / source_rate as u64) as usize;

    let kernel = Kernel::design(source_rate, target_rate);
    let h = kernel.half_width as i64;
    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| kernel.taps(p as f64 / up as f64)).collect());

    let x = w.samples();
    let n = x.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let pos = m * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let taps: &[f64] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = kernel.taps(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0;
        let mut norm = 0.0;
        for (i, tap) in taps.iter().enumerate() {
            let k = base - (h - 1) + i as i64;
            if (0..n).contains(&k) {
                acc += tap * x[k as usize];
                norm += tap;
            }
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Waveform::new(out, target_rate)
}
