//! Five-segment amplitude envelopes (attack, hold, decay, sustain, release).
//!
//! Segments are linear in amplitude and run attack -> hold -> decay ->
//! sustain while the gate is open. At note-off the release ramps from
//! whatever gain is current at that instant down to zero, so a note-off
//! during the attack or decay never produces a discontinuity.

use std::io::{BufRead, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{seconds_to_samples, AudioBuffer};

pub const ATTACK_MS: RangeInclusive<f64> = 10.0..=100.0;
pub const DECAY_MS: RangeInclusive<f64> = 50.0..=300.0;
pub const HOLD_MS: RangeInclusive<f64> = 0.0..=200.0;
pub const SUSTAIN_LEVEL: RangeInclusive<f64> = 0.0..=0.80;
pub const RELEASE_MS: RangeInclusive<f64> = 30.0..=300.0;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("invalid envelope parameter: {0}")]
    InvalidParameter(String),
    #[error("envelope bank I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("envelope bank line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdsrEnvelope {
    pub envelope_id: u32,
    pub attack_ms: f64,
    pub hold_ms: f64,
    pub decay_ms: f64,
    pub sustain_level: f64,
    pub release_ms: f64,
}

impl AdsrEnvelope {
    /// Hand-constructed envelope. Times must be non-negative and the sustain
    /// level within [0, 1]; the sampling ranges are not enforced.
    pub fn new(
        envelope_id: u32,
        attack_ms: f64,
        hold_ms: f64,
        decay_ms: f64,
        sustain_level: f64,
        release_ms: f64,
    ) -> Result<Self, EnvelopeError> {
        let env = Self {
            envelope_id,
            attack_ms,
            hold_ms,
            decay_ms,
            sustain_level,
            release_ms,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        for (name, v) in [
            ("attack_ms", self.attack_ms),
            ("hold_ms", self.hold_ms),
            ("decay_ms", self.decay_ms),
            ("release_ms", self.release_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnvelopeError::InvalidParameter(format!("{name} = {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.sustain_level) {
            return Err(EnvelopeError::InvalidParameter(format!(
                "sustain_level = {}",
                self.sustain_level
            )));
        }
        Ok(())
    }

    /// Draws every parameter independently and uniformly from its range.
    pub fn sample<R: Rng + ?Sized>(envelope_id: u32, rng: &mut R) -> Self {
        Self {
            envelope_id,
            attack_ms: rng.gen_range(ATTACK_MS),
            decay_ms: rng.gen_range(DECAY_MS),
            hold_ms: rng.gen_range(HOLD_MS),
            sustain_level: rng.gen_range(SUSTAIN_LEVEL),
            release_ms: rng.gen_range(RELEASE_MS),
        }
    }

    /// True when all five parameters sit inside the sampling ranges.
    pub fn within_sampling_ranges(&self) -> bool {
        ATTACK_MS.contains(&self.attack_ms)
            && DECAY_MS.contains(&self.decay_ms)
            && HOLD_MS.contains(&self.hold_ms)
            && SUSTAIN_LEVEL.contains(&self.sustain_level)
            && RELEASE_MS.contains(&self.release_ms)
    }

    pub fn release_s(&self) -> f64 {
        self.release_ms / 1000.0
    }

    /// Gain while the gate is held, `t_s` seconds after note-on.
    pub fn gated_gain(&self, t_s: f64) -> f64 {
        let a = self.attack_ms / 1000.0;
        let h = self.hold_ms / 1000.0;
        let d = self.decay_ms / 1000.0;
        if t_s < 0.0 {
            0.0
        } else if t_s < a {
            t_s / a
        } else if t_s < a + h {
            1.0
        } else if t_s < a + h + d {
            1.0 - (1.0 - self.sustain_level) * (t_s - a - h) / d
        } else {
            self.sustain_level
        }
    }

    /// Gain at `t_s` seconds after note-on for a gate of `gate_s` seconds.
    pub fn gain(&self, t_s: f64, gate_s: f64) -> f64 {
        if t_s < gate_s {
            return self.gated_gain(t_s);
        }
        let r = self.release_s();
        let since_off = t_s - gate_s;
        if since_off >= r {
            return 0.0;
        }
        self.gated_gain(gate_s) * (1.0 - since_off / r)
    }
}

pub fn sample_envelope<R: Rng + ?Sized>(envelope_id: u32, rng: &mut R) -> AdsrEnvelope {
    AdsrEnvelope::sample(envelope_id, rng)
}

pub fn envelope_gain(env: &AdsrEnvelope, t_s: f64, note_duration_s: f64) -> f64 {
    env.gain(t_s, note_duration_s)
}

/// Multiplies `buffer` by the envelope for a gate of `note_duration_s`,
/// truncating the output at the end of the release tail.
pub fn apply_envelope(buffer: &AudioBuffer, env: &AdsrEnvelope, note_duration_s: f64) -> AudioBuffer {
    let sr = buffer.sample_rate();
    let len = buffer
        .len()
        .min(seconds_to_samples(note_duration_s + env.release_s(), sr));
    let samples = buffer.samples()[..len]
        .iter()
        .enumerate()
        .map(|(n, &x)| (x as f64 * env.gain(n as f64 / sr as f64, note_duration_s)) as f32)
        .collect();
    AudioBuffer::new(samples, sr)
}

/// Samples `count` envelopes with ids `0..count`.
pub fn sample_envelope_bank<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<AdsrEnvelope> {
    (0..count as u32).map(|id| AdsrEnvelope::sample(id, rng)).collect()
}

/// Writes one JSON object per envelope.
pub fn write_envelope_bank(envs: &[AdsrEnvelope], path: impl AsRef<Path>) -> Result<(), EnvelopeError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for env in envs {
        serde_json::to_writer(&mut out, env).map_err(|e| EnvelopeError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_envelope_bank(path: impl AsRef<Path>) -> Result<Vec<AdsrEnvelope>, EnvelopeError> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut envs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let env: AdsrEnvelope =
            serde_json::from_str(&line).map_err(|source| EnvelopeError::Parse { line: i + 1, source })?;
        env.validate()?;
        envs.push(env);
    }
    Ok(envs)
}
