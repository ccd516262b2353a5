use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, MelFilterbank, Stft};

use super::{AnalysisError, PitchTrack};

pub const PROFILE_FFT: usize = 2048;
pub const PROFILE_MELS: usize = 80;

/// Unit-norm mean mel magnitude envelope over voiced frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimbreProfile {
    pub mel_envelope: Vec<f64>,
}

impl TimbreProfile {
    pub fn cosine_similarity(&self, other: &TimbreProfile) -> f64 {
        let dot: f64 = self.mel_envelope.iter().zip(&other.mel_envelope).map(|(a, b)| a * b).sum();
        let na: f64 = self.mel_envelope.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.mel_envelope.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

pub fn estimate_timbre(buffer: &AudioBuffer, track: &PitchTrack) -> Result<TimbreProfile, AnalysisError> {
    if track.voiced_count() == 0 {
        return Err(AnalysisError::NoVoicedFrames);
    }
    let spec = Stft::new(PROFILE_FFT, track.hop)?.spectrogram(buffer)?;
    let bank = MelFilterbank::full_band(PROFILE_FFT, PROFILE_MELS, buffer.sample_rate())?;
    let mel = bank.apply(&spec);
    let frames = mel.ncols().min(track.len());
    let mut acc = vec![0.0; PROFILE_MELS];
    let mut n = 0usize;
    for t in (0..frames).filter(|&t| track.voicing[t]) {
        for (m, a) in acc.iter_mut().enumerate() {
            *a += mel[[m, t]];
        }
        n += 1;
    }
    if n == 0 {
        return Err(AnalysisError::NoVoicedFrames);
    }
    let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(AnalysisError::NoVoicedFrames);
    }
    Ok(TimbreProfile {
        mel_envelope: acc.into_iter().map(|a| a / norm).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::estimate_f0;
    use std::f64::consts::PI;

    fn tone(amps: &[f64], f0: f64, len: usize) -> AudioBuffer {
        AudioBuffer::from_fn(len, 44_100, |t| {
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * (2.0 * PI * f0 * (k + 1) as f64 * t).sin())
                .sum()
        })
    }

    #[test]
    fn profile_is_unit_norm_and_gain_invariant() {
        let b = tone(&[0.5, 0.3, 0.1], 220.0, 22_050);
        let p = estimate_timbre(&b, &estimate_f0(&b, 256)).unwrap();
        let n: f64 = p.mel_envelope.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-9);
        let q = b.scaled(0.25);
        let pq = estimate_timbre(&q, &estimate_f0(&q, 256)).unwrap();
        assert!(p.cosine_similarity(&pq) > 0.999_999);
    }

    #[test]
    fn distinct_spectra_are_less_similar() {
        let bright = tone(&[0.3, 0.3, 0.3, 0.3, 0.3, 0.3], 220.0, 22_050);
        let dull = tone(&[0.6, 0.05], 220.0, 22_050);
        let pb = estimate_timbre(&bright, &estimate_f0(&bright, 256)).unwrap();
        let pd = estimate_timbre(&dull, &estimate_f0(&dull, 256)).unwrap();
        assert!(pb.cosine_similarity(&pd) < 0.9);
    }

    #[test]
    fn unvoiced_input_errors() {
        let s = AudioBuffer::silence(8000, 44_100);
        assert!(matches!(
            estimate_timbre(&s, &estimate_f0(&s, 256)),
            Err(AnalysisError::NoVoicedFrames)
        ));
    }
}
