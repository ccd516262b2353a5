use ndarray::Array2;

use super::{AudioError, Spectrogram};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filterbank, shape `[num_mels, fft_size / 2 + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        fft_size: usize,
        num_mels: usize,
        sample_rate: u32,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self, AudioError> {
        if num_mels == 0 {
            return Err(AudioError::InvalidParameter("num_mels must be >= 1".into()));
        }
        if fft_size < 2 {
            return Err(AudioError::InvalidParameter("fft size must be >= 2".into()));
        }
        if !(fmin >= 0.0 && fmin < fmax) {
            return Err(AudioError::InvalidRange { fmin, fmax });
        }
        let bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..num_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_mels + 1) as f64))
            .collect();
        let mut weights = Array2::<f64>::zeros((num_mels, bins));
        for m in 0..num_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                weights[[m, k]] = rising.min(falling).max(0.0);
            }
            // Filters narrower than the bin spacing fall between bins; give
            // them the bin nearest their center so no row is degenerate.
            if weights.row(m).iter().all(|&w| w == 0.0) {
                let k = ((center / bin_hz).round() as usize).min(bins - 1);
                weights[[m, k]] = 1.0;
            }
        }
        Ok(Self {
            weights,
            centers_hz: edges[1..=num_mels].to_vec(),
        })
    }

    /// Full-band filterbank from 0 Hz to Nyquist.
    pub fn full_band(fft_size: usize, num_mels: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(fft_size, num_mels, sample_rate, 0.0, sample_rate as f64 / 2.0)
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn num_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Mel magnitudes `[num_mels, num_frames]`.
    pub fn apply(&self, spec: &Spectrogram) -> Array2<f64> {
        self.weights.dot(&spec.magnitudes)
    }
}
