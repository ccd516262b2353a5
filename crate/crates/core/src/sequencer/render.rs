use std::f64::consts::FRAC_PI_2;

use super::{MidiSequence, NoteEvent, SequencerError};
use crate::audio::{resample, seconds_to_samples, AudioBuffer};
use crate::envelope::{apply_envelope, AdsrEnvelope};
use crate::timbrebank::OneShot;

pub const MAX_SHIFT_SEMITONES: i32 = 48;
/// Phrases peaking above full scale are normalized to this peak.
pub const OUTPUT_PEAK: f32 = 0.97;
const CROSSFADE_S: f64 = 0.010;

/// Varispeed shift of the one-shot to `target_pitch_midi`.
pub fn pitch_shift(one_shot: &OneShot, target_pitch_midi: u8) -> Result<AudioBuffer, SequencerError> {
    let semitones = target_pitch_midi as i32 - one_shot.source_pitch_midi as i32;
    if semitones.abs() > MAX_SHIFT_SEMITONES {
        return Err(SequencerError::ShiftOutOfRange {
            semitones,
            max: MAX_SHIFT_SEMITONES,
        });
    }
    if semitones == 0 {
        return Ok(one_shot.audio.clone());
    }
    Ok(resample(&one_shot.audio, 2f64.powf(semitones as f64 / 12.0)))
}

/// Truncates or loop-extends `buffer` to exactly `round(target_s * sr)`
/// samples. Extension repeats the second half of the buffer, joining each
/// repeat with a 10 ms equal-power crossfade.
pub fn align_duration(buffer: &AudioBuffer, target_s: f64) -> AudioBuffer {
    let sr = buffer.sample_rate();
    let target = seconds_to_samples(target_s, sr);
    let input = buffer.samples();
    if input.len() >= target {
        return buffer.clone().truncated(target);
    }
    if input.is_empty() {
        return AudioBuffer::silence(target, sr);
    }
    let region = &input[input.len() / 2..];
    let fade = seconds_to_samples(CROSSFADE_S, sr).min(region.len() / 2);
    let gains: Vec<(f32, f32)> = (0..fade)
        .map(|i| {
            let theta = FRAC_PI_2 * (i as f64 + 0.5) / fade as f64;
            (theta.cos() as f32, theta.sin() as f32)
        })
        .collect();

    let mut out = Vec::with_capacity(target + region.len());
    out.extend_from_slice(input);
    while out.len() < target {
        let join = out.len() - fade;
        for (i, &(fade_out, fade_in)) in gains.iter().enumerate() {
            out[join + i] = out[join + i] * fade_out + region[i] * fade_in;
        }
        out.extend_from_slice(&region[fade..]);
    }
    out.truncate(target);
    AudioBuffer::new(out, sr)
}

/// Pitch shift, align to gate plus release, then shape with the envelope.
pub fn render_note(one_shot: &OneShot, note: &NoteEvent, env: &AdsrEnvelope) -> Result<AudioBuffer, SequencerError> {
    let shifted = pitch_shift(one_shot, note.pitch_midi)?;
    let aligned = align_duration(&shifted, note.duration_s + env.release_s());
    Ok(apply_envelope(&aligned, env, note.duration_s))
}

/// Renders a phrase onto a canvas of `total_duration + release`. Each
/// note's release tail is cut at the next onset so at most one note sounds
/// at a time.
pub fn render_sequence(
    one_shot: &OneShot,
    midi: &MidiSequence,
    env: &AdsrEnvelope,
) -> Result<AudioBuffer, SequencerError> {
    let sr = one_shot.audio.sample_rate();
    let len = seconds_to_samples(midi.total_duration_s() + env.release_s(), sr);
    let mut canvas = vec![0.0f32; len];
    let notes = midi.notes();
    for (i, note) in notes.iter().enumerate() {
        let start = seconds_to_samples(note.onset_s, sr).min(len);
        let stop = notes
            .get(i + 1)
            .map_or(len, |next| seconds_to_samples(next.onset_s, sr))
            .min(len);
        let rendered = render_note(one_shot, note, env)?;
        for (dst, &src) in canvas[start..stop.max(start)].iter_mut().zip(rendered.samples()) {
            *dst += src;
        }
    }
    let peak = canvas.iter().fold(0.0f32, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        let g = OUTPUT_PEAK / peak;
        canvas.iter_mut().for_each(|s| *s *= g);
    }
    Ok(AudioBuffer::new(canvas, sr))
}
