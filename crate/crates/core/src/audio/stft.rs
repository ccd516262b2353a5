use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, AudioError};

/// Magnitude spectrogram, shape `[fft_size / 2 + 1, num_frames]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub fft_size: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn num_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// Periodic Hann window.
pub(crate) fn hann(size: usize) -> Vec<f64> {
    (0..size)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos())
        .collect()
}

/// Index into a signal of length `len` with numpy-style reflect padding.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Centered, reflect-padded, Hann-windowed short-time Fourier transform.
pub struct Stft {
    fft_size: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self, AudioError> {
        if !fft_size.is_power_of_two() || fft_size < 2 {
            return Err(AudioError::InvalidParameter(format!(
                "fft size {fft_size} is not a power of two"
            )));
        }
        if hop == 0 {
            return Err(AudioError::InvalidParameter("hop must be positive".into()));
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            fft_size,
            hop,
            window: hann(fft_size),
            fft,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Windowed, reflect-padded frame `t`, centered on sample `t * hop`.
    pub fn frame(&self, samples: &[f32], t: usize) -> Vec<f64> {
        let pad = (self.fft_size / 2) as isize;
        let start = (t * self.hop) as isize - pad;
        (0..self.fft_size)
            .map(|n| {
                let idx = reflect_index(start + n as isize, samples.len());
                samples[idx] as f64 * self.window[n]
            })
            .collect()
    }

    pub fn magnitude(&self, samples: &[f32]) -> Result<Array2<f64>, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyInput);
        }
        let frames = self.num_frames(samples.len());
        let bins = self.fft_size / 2 + 1;
        let mut out = Array2::<f64>::zeros((bins, frames));
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            for (slot, v) in buf.iter_mut().zip(self.frame(samples, t)) {
                *slot = Complex::new(v, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, c) in buf.iter().take(bins).enumerate() {
                out[[k, t]] = c.norm();
            }
        }
        Ok(out)
    }

    pub fn spectrogram(&self, buffer: &AudioBuffer) -> Result<Spectrogram, AudioError> {
        Ok(Spectrogram {
            magnitudes: self.magnitude(buffer.samples())?,
            fft_size: self.fft_size,
            hop: self.hop,
        })
    }
}

/// Magnitude spectrogram with a centered Hann window.
pub fn stft_magnitude(
    buffer: &AudioBuffer,
    fft_size: usize,
    hop: usize,
) -> Result<Spectrogram, AudioError> {
    Stft::new(fft_size, hop)?.spectrogram(buffer)
}
