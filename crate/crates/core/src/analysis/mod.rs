//! Attribute extraction: envelope contour (log-RMS), pitch track (YIN),
//! timbre profile (mean mel envelope) and note segmentation.
//!
//! All frame-wise analyses share one centered grid: frame `t` is centered
//! on sample `t * hop`, so a buffer of `n` samples yields `1 + n / hop`
//! frames and the contour, pitch track and timbre spectrogram line up.

mod contour;
mod pitch;
mod segment;
mod timbre;

pub use contour::{log_rms_contour, EnvelopeContour, CONTOUR_FRAME, CONTOUR_HOP, LOG_FLOOR};
pub use pitch::{estimate_f0, estimate_f0_with, PitchTrack, YinConfig};
pub use segment::{segment_notes, segment_notes_with, SegmentConfig};
pub use timbre::{estimate_timbre, TimbreProfile, PROFILE_FFT, PROFILE_MELS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no voiced frames to estimate a timbre from")]
    NoVoicedFrames,
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
