use num_complex::Complex64;

use super::MaskError;
use crate::signal::{stft, StftConfig, Waveform};

const COHERENCE_FLOOR: f64 = 1e-12;

/// Welch magnitude-squared coherence between two equally long signals,
/// averaged over every frame of the utterance:
/// `|Σ S·N*|² / (Σ|S|² · Σ|N|² + eps)` per frequency bin.
pub fn spectral_coherence(s: &Waveform, n: &Waveform, cfg: &StftConfig) -> Result<Vec<f64>, MaskError> {
    if s.len() != n.len() || s.sample_rate() != n.sample_rate() {
        return Err(MaskError::SignalMismatch(format!(
            "{} samples @ {} Hz vs {} samples @ {} Hz",
            s.len(),
            s.sample_rate(),
            n.len(),
            n.sample_rate()
        )));
    }
    let ss = stft(s, cfg)?;
    let ns = stft(n, cfg)?;
    let coherence = (0..ss.num_bins())
        .map(|k| {
            let a = ss.bins().column(k);
            let b = ns.bins().column(k);
            let cross: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum();
            let pa: f64 = a.iter().map(|x| x.norm_sqr()).sum();
            let pb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
            (cross.norm_sqr() / (pa * pb + COHERENCE_FLOOR)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(coherence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| StandardNormal.sample(&mut rng)).collect(), 16_000).unwrap()
    }

    #[test]
    fn self_coherence_is_one() {
        let x = noise(16_000, 1);
        let c = spectral_coherence(&x, &x, &StftConfig::default()).unwrap();
        assert!(c.iter().all(|&v| v > 0.999_999));
    }

    #[test]
    fn independent_noises_are_incoherent() {
        let len = 160 * 300 + 160;
        let c = spectral_coherence(&noise(len, 2), &noise(len, 3), &StftConfig::default()).unwrap();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        assert!(mean < 0.1, "mean coherence {mean}");
    }

    #[test]
    fn delayed_copy_stays_coherent() {
        let x = noise(32_000, 4);
        let delay = 4;
        let mut d = vec![0.0; delay];
        d.extend_from_slice(&x.samples()[..x.len() - delay]);
        let y = Waveform::new(d, 16_000).unwrap();
        let c = spectral_coherence(&x, &y, &StftConfig::default()).unwrap();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        assert!(mean > 0.9, "mean coherence {mean}");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let r = spectral_coherence(&noise(1000, 1), &noise(999, 1), &StftConfig::default());
        assert!(matches!(r, Err(MaskError::SignalMismatch(_))));
    }
}
