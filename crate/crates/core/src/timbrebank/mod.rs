//! Timbre bank: flatness scoring and one-shot extraction from sustained
//! renders, plus the additive generator that stands in for an external
//! synthesizer.
//!
//! Flatness is scored on the frame-RMS contour (1024-sample frames, hop
//! 512). The contour is normalized by its own peak before the variance is
//! taken, which makes the score independent of playback level: a steady
//! tone scores 1 and an exponential decay scores the same low value
//! wherever the window lands.

mod bank;
mod synth;

pub use bank::{build_timbre_bank, read_timbre_bank, write_timbre_bank, BankIndexEntry, SOURCE_PITCH};
pub use synth::{render_sustained, HarmonicTimbre, MAX_HARMONICS};

use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};

pub const CONTOUR_FRAME: usize = 1024;
pub const CONTOUR_HOP: usize = 512;
/// One-shots are admitted when their flatness is strictly above this.
pub const ADMISSION_THRESHOLD: f64 = 0.95;
/// Windows whose loudest frame is below this RMS are never selected.
pub const SILENCE_GATE: f64 = 1e-3;
const SNAP_RADIUS: usize = 64;

#[derive(Debug, Error)]
pub enum TimbreError {
    #[error("input too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("one-shot must hold exactly {expected} samples, got {got}")]
    BadOneShotLength { expected: usize, got: usize },
    #[error("timbre {timbre_id}: no admissible one-shot after {attempts} attempts")]
    NoAdmissibleOneShot { timbre_id: u32, attempts: usize },
    #[error("timbre bank index line {line}: {source}")]
    Index {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("timbre bank I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// A one-second steady-state timbre sample.
#[derive(Clone, Debug, PartialEq)]
pub struct OneShot {
    pub timbre_id: u32,
    pub source_pitch_midi: u8,
    pub flatness: f64,
    pub audio: AudioBuffer,
}

impl OneShot {
    pub fn new(
        timbre_id: u32,
        source_pitch_midi: u8,
        flatness: f64,
        audio: AudioBuffer,
    ) -> Result<Self, TimbreError> {
        let expected = audio.sample_rate() as usize;
        if audio.len() != expected {
            return Err(TimbreError::BadOneShotLength {
                expected,
                got: audio.len(),
            });
        }
        Ok(Self {
            timbre_id,
            source_pitch_midi,
            flatness,
            audio,
        })
    }
}

/// Frame RMS values over frames that lie entirely inside `samples`.
pub fn amplitude_contour(samples: &[f32], frame: usize, hop: usize) -> Result<Vec<f64>, TimbreError> {
    if samples.len() < frame || frame == 0 || hop == 0 {
        return Err(TimbreError::TooShort {
            got: samples.len(),
            need: frame.max(1),
        });
    }
    let frames = 1 + (samples.len() - frame) / hop;
    Ok((0..frames)
        .map(|t| {
            let e: f64 = samples[t * hop..t * hop + frame]
                .iter()
                .map(|&s| (s as f64) * (s as f64))
                .sum();
            (e / frame as f64).sqrt()
        })
        .collect())
}

/// `1 / (1 + Var(c / max c))` over a contour; a zero contour counts as flat.
pub fn contour_flatness(contour: &[f64]) -> f64 {
    let peak = contour.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 || contour.is_empty() {
        return 1.0;
    }
    let n = contour.len() as f64;
    let mean = contour.iter().map(|c| c / peak).sum::<f64>() / n;
    let var = contour.iter().map(|c| (c / peak - mean).powi(2)).sum::<f64>() / n;
    1.0 / (1.0 + var)
}

pub fn flatness(buffer: &AudioBuffer) -> Result<f64, TimbreError> {
    let need = CONTOUR_FRAME + CONTOUR_HOP;
    if buffer.len() < need {
        return Err(TimbreError::TooShort {
            got: buffer.len(),
            need,
        });
    }
    let contour = amplitude_contour(buffer.samples(), CONTOUR_FRAME, CONTOUR_HOP)?;
    Ok(contour_flatness(&contour))
}

/// Flatness of every `window`-sample segment starting at a multiple of the
/// contour hop.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessReport {
    pub offsets: Vec<usize>,
    pub scores: Vec<f64>,
    /// False for windows below [`SILENCE_GATE`].
    pub eligible: Vec<bool>,
    pub best_offset: Option<usize>,
    pub best_score: f64,
}

pub fn flatness_scan(buffer: &AudioBuffer, window: usize) -> Result<FlatnessReport, TimbreError> {
    if buffer.len() < window || window < CONTOUR_FRAME + CONTOUR_HOP {
        return Err(TimbreError::TooShort {
            got: buffer.len(),
            need: window.max(CONTOUR_FRAME + CONTOUR_HOP),
        });
    }
    let contour = amplitude_contour(buffer.samples(), CONTOUR_FRAME, CONTOUR_HOP)?;
    let per_window = 1 + (window - CONTOUR_FRAME) / CONTOUR_HOP;
    let windows = 1 + (buffer.len() - window) / CONTOUR_HOP;
    let mut report = FlatnessReport {
        offsets: Vec::with_capacity(windows),
        scores: Vec::with_capacity(windows),
        eligible: Vec::with_capacity(windows),
        best_offset: None,
        best_score: 0.0,
    };
    for w in 0..windows {
        let frames = &contour[w..w + per_window];
        let score = contour_flatness(frames);
        let loud = frames.iter().cloned().fold(0.0, f64::max) >= SILENCE_GATE;
        if loud && (report.best_offset.is_none() || score > report.best_score) {
            report.best_offset = Some(w * CONTOUR_HOP);
            report.best_score = score;
        }
        report.offsets.push(w * CONTOUR_HOP);
        report.scores.push(score);
        report.eligible.push(loud);
    }
    Ok(report)
}

/// Outcome of [`extract_one_shot`].
#[derive(Clone, Debug, PartialEq)]
pub enum Extraction {
    Accepted(OneShot),
    Rejected {
        best_offset: Option<usize>,
        best_score: f64,
    },
}

impl Extraction {
    pub fn accepted(self) -> Option<OneShot> {
        match self {
            Extraction::Accepted(shot) => Some(shot),
            Extraction::Rejected { .. } => None,
        }
    }
}

/// Nearest rising zero crossing (`x[n-1] < 0 <= x[n]`) within
/// [`SNAP_RADIUS`] of `offset` that keeps `window` samples in bounds.
fn snap_to_zero_crossing(samples: &[f32], offset: usize, window: usize) -> usize {
    let lo = offset.saturating_sub(SNAP_RADIUS).max(1);
    let hi = (offset + SNAP_RADIUS).min(samples.len() - window);
    (lo..=hi)
        .filter(|&n| samples[n - 1] < 0.0 && samples[n] >= 0.0)
        .min_by_key(|&n| (n.abs_diff(offset), n))
        .unwrap_or(offset)
}

/// Cuts the flattest one-second window out of a sustained render.
pub fn extract_one_shot(
    render: &AudioBuffer,
    source_pitch_midi: u8,
    timbre_id: u32,
) -> Result<Extraction, TimbreError> {
    let window = render.sample_rate() as usize;
    if render.len() < 2 * window {
        return Err(TimbreError::TooShort {
            got: render.len(),
            need: 2 * window,
        });
    }
    let report = flatness_scan(render, window)?;
    let Some(best) = report.best_offset else {
        return Ok(Extraction::Rejected {
            best_offset: None,
            best_score: report.best_score,
        });
    };
    let start = snap_to_zero_crossing(render.samples(), best, window);
    let audio = render.slice(start, window);
    let score = flatness(&audio)?;
    if score > ADMISSION_THRESHOLD {
        Ok(Extraction::Accepted(OneShot::new(
            timbre_id,
            source_pitch_midi,
            score,
            audio,
        )?))
    } else {
        Ok(Extraction::Rejected {
            best_offset: Some(best),
            best_score: report.best_score.max(score),
        })
    }
}
