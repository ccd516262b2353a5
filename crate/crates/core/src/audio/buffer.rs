use super::AudioError;

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

/// Number of whole samples covering `seconds` at `sample_rate`, rounded to nearest.
pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round().max(0.0) as usize
}

/// Mono sample vector at a fixed sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// # Panics
    /// If `sample_rate` is zero.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// Builds a buffer by evaluating `f` at each sample time in seconds.
    pub fn from_fn(len: usize, sample_rate: u32, mut f: impl FnMut(f64) -> f64) -> Self {
        let sr = sample_rate as f64;
        let samples = (0..len).map(|n| f(n as f64 / sr) as f32).collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (e / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }

    /// Copy of `[start, start + len)`, clamped to the buffer end.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let start = start.min(self.samples.len());
        let end = (start + len).min(self.samples.len());
        Self::new(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub fn truncated(mut self, len: usize) -> Self {
        self.samples.truncate(len);
        self
    }
}

/// Frame grid: window length and hop, both in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSpec {
    frame_length: usize,
    hop_length: usize,
}

impl FrameSpec {
    pub fn new(frame_length: usize, hop_length: usize) -> Result<Self, AudioError> {
        if hop_length == 0 || hop_length > frame_length {
            return Err(AudioError::InvalidParameter(format!(
                "frame grid requires 0 < hop ({hop_length}) <= frame ({frame_length})"
            )));
        }
        Ok(Self {
            frame_length,
            hop_length,
        })
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    /// Frame count for a centered analysis of `len` samples.
    pub fn centered_frames(&self, len: usize) -> usize {
        1 + len / self.hop_length
    }

    /// Frame count when every frame must fit inside `len` samples.
    pub fn full_frames(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop_length
        }
    }
}
