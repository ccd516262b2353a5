use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;

pub const CONTOUR_FRAME: usize = 1024;
pub const CONTOUR_HOP: usize = 256;
/// Floor applied to frame RMS before taking the log.
pub const LOG_FLOOR: f64 = 1e-5;

/// Natural-log frame RMS on the centered analysis grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeContour {
    pub log_rms: Vec<f64>,
    pub frame_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl EnvelopeContour {
    pub fn len(&self) -> usize {
        self.log_rms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_rms.is_empty()
    }

    /// Frame RMS values (floored).
    pub fn linear(&self) -> Vec<f64> {
        self.log_rms.iter().map(|v| v.exp()).collect()
    }

    pub fn frame_time_s(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate as f64
    }

    /// Whether frame `t`'s window lies fully inside a signal of `len` samples.
    pub fn is_interior(&self, t: usize, len: usize) -> bool {
        let c = t * self.hop;
        c >= self.frame_length / 2 && c + self.frame_length / 2 <= len
    }
}

/// `ln(max(rms, 1e-5))` per frame; frames are zero-padded at the edges.
pub fn log_rms_contour(buffer: &AudioBuffer, frame: usize, hop: usize) -> EnvelopeContour {
    assert!(frame > 0 && hop > 0, "frame and hop must be positive");
    let x = buffer.samples();
    let frames = 1 + x.len() / hop;
    let half = frame / 2;
    let log_rms = (0..frames)
        .map(|t| {
            let start = (t * hop) as isize - half as isize;
            let lo = start.max(0) as usize;
            let hi = ((start + frame as isize).max(0) as usize).min(x.len());
            let energy: f64 = x[lo.min(hi)..hi].iter().map(|&s| (s as f64) * (s as f64)).sum();
            (energy / frame as f64).sqrt().max(LOG_FLOOR).ln()
        })
        .collect();
    EnvelopeContour {
        log_rms,
        frame_length: frame,
        hop,
        sample_rate: buffer.sample_rate(),
    }
}
