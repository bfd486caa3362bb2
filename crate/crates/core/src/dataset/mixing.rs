//! SNR mixing and in-memory realisation of manifest entries.

use super::{AudioCache, DatasetError, MixtureSpec};
use crate::signal::Waveform;

/// Peak the rendered signals may reach after joint renormalisation.
const PEAK_TARGET: f64 = 0.99;

/// Noise gain that puts `n` at `snr_db` below `s` over the whole signal.
pub(crate) fn mixing_gain(s: &Waveform, n: &Waveform, snr_db: f64) -> Result<f64, DatasetError> {
    if s.sample_rate() != n.sample_rate() {
        return Err(DatasetError::RateMismatch(s.sample_rate(), n.sample_rate()));
    }
    if s.len() != n.len() {
        return Err(DatasetError::LengthMismatch { speech: s.len(), noise: n.len() });
    }
    if s.energy() == 0.0 {
        return Err(DatasetError::Silent("speech".into()));
    }
    if n.energy() == 0.0 {
        return Err(DatasetError::Silent("noise".into()));
    }
    Ok(s.rms() / (n.rms() * 10f64.powf(snr_db / 20.0)))
}

/// Mix `s` and `n` at `snr_db`, returning the mixture and the noise gain.
pub fn mix_at_snr(s: &Waveform, n: &Waveform, snr_db: f64) -> Result<(Waveform, f64), DatasetError> {
    let gain = mixing_gain(s, n, snr_db)?;
    let samples = s.samples().iter().zip(n.samples()).map(|(a, b)| a + gain * b).collect();
    Ok((Waveform::new(samples, s.sample_rate())?, gain))
}

/// Achieved SNR of a clean signal against an additive noise.
pub fn snr_db(s: &Waveform, n: &Waveform) -> f64 {
    10.0 * (s.energy() / n.energy()).log10()
}

/// A manifest entry materialised in memory. `noise` already carries the
/// mixing gain, so `mixture = speech + noise` exactly; all three share
/// `peak_scale`.
#[derive(Debug, Clone)]
pub struct Realized {
    pub speech: Waveform,
    pub noise: Waveform,
    pub mixture: Waveform,
    /// Joint scale applied to keep every rendered signal inside ±1.
    pub peak_scale: f64,
}

pub fn realize(spec: &MixtureSpec, cache: &AudioCache) -> Result<Realized, DatasetError> {
    let speech = cache.get(spec.speech_path.as_ref())?;
    let noise = cache.get(spec.noise_path.as_ref())?;
    if spec.noise_offset + speech.len() > noise.len() {
        return Err(DatasetError::Spec {
            id: spec.id.clone(),
            reason: format!("noise slice at {} overruns {} ({} samples)", spec.noise_offset, spec.noise_path, noise.len()),
        });
    }
    let noise = noise.slice(spec.noise_offset, speech.len()).scaled(spec.noise_gain);
    let samples: Vec<f64> = speech.samples().iter().zip(noise.samples()).map(|(a, b)| a + b).collect();
    let mixture = Waveform::new(samples, speech.sample_rate())?;
    let peak = mixture.peak().max(speech.peak()).max(noise.peak());
    if peak <= 1.0 {
        return Ok(Realized { speech: (*speech).clone(), noise, mixture, peak_scale: 1.0 });
    }
    let k = PEAK_TARGET / peak;
    Ok(Realized { speech: speech.scaled(k), noise: noise.scaled(k), mixture: mixture.scaled(k), peak_scale: k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(len: usize, std: f64, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, std).unwrap();
        Waveform::new((0..len).map(|_| d.sample(&mut rng)).collect(), 16_000).unwrap()
    }

    #[test]
    fn equal_rms_at_zero_db_gives_unit_gain() {
        let s = Waveform::new(vec![1.0, -1.0, 1.0, -1.0], 16_000).unwrap();
        let n = Waveform::new(vec![-1.0, -1.0, 1.0, 1.0], 16_000).unwrap();
        assert_eq!(mix_at_snr(&s, &n, 0.0).unwrap().1, 1.0);
        let (_, g) = mix_at_snr(&s, &n, 6.0206).unwrap();
        assert!((g - 0.5).abs() < 1e-5);
    }

    #[test]
    fn silent_or_mismatched_inputs_are_rejected() {
        let s = gaussian(100, 1.0, 1);
        assert!(matches!(mix_at_snr(&s, &Waveform::zeros(100, 16_000), 0.0), Err(DatasetError::Silent(_))));
        assert!(matches!(mix_at_snr(&Waveform::zeros(100, 16_000), &s, 0.0), Err(DatasetError::Silent(_))));
        assert!(matches!(mix_at_snr(&s, &gaussian(99, 1.0, 2), 0.0), Err(DatasetError::LengthMismatch { .. })));
        let other = Waveform::new(s.samples().to_vec(), 8000).unwrap();
        assert!(matches!(mix_at_snr(&s, &other, 0.0), Err(DatasetError::RateMismatch(..))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn achieved_snr_matches_request(
            seed in any::<u64>(),
            snr in -20.0f64..20.0,
            s_std in 1e-3f64..10.0,
            n_std in 1e-3f64..10.0,
            len in 16usize..4000,
        ) {
            let s = gaussian(len, s_std, seed);
            let n = gaussian(len, n_std, seed.wrapping_add(1));
            let (mix, g) = mix_at_snr(&s, &n, snr).unwrap();
            prop_assert!(g > 0.0);
            prop_assert!((snr_db(&s, &n.scaled(g)) - snr).abs() < 1e-9);
            for i in 0..len {
                prop_assert_eq!(mix.samples()[i], s.samples()[i] + g * n.samples()[i]);
            }
        }
    }
}
