//! Monophonic note sequences and the per-note render chain: pitch shift,
//! duration alignment, envelope shaping, and phrase assembly.

mod midi;
mod phrase;
mod render;

pub use midi::{parse_midi, parse_midi_bytes, read_content_dir, write_midi, write_midi_bytes, MidiSequence, NoteEvent};
pub use phrase::{generate_content_bank, random_phrase};
pub use render::{align_duration, pitch_shift, render_note, render_sequence, MAX_SHIFT_SEMITONES, OUTPUT_PEAK};

use thiserror::Error;

/// Equal-tempered frequency of a (possibly fractional) MIDI note.
pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

pub fn hz_to_midi(hz: f64) -> f64 {
    69.0 + 12.0 * (hz / 440.0).log2()
}

#[derive(Debug, Error)]
pub enum SequencerError {
    #[error("not a standard MIDI file: {0}")]
    NotMidi(String),
    #[error("notes at {onset_s:.6} s share an onset; cannot resolve to monophony")]
    PolyphonyAfterResolution { onset_s: f64 },
    #[error("invalid note sequence: {0}")]
    InvalidSequence(String),
    #[error("pitch shift of {semitones} semitones exceeds the {max} semitone limit")]
    ShiftOutOfRange { semitones: i32, max: i32 },
    #[error("MIDI I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
