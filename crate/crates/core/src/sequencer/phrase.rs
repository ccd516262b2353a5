use rand::Rng;

use super::{MidiSequence, NoteEvent};
use crate::seed::indexed_substream;

/// Generator tick: 960 per second, matching the MIDI writer's grid.
const TICK_S: f64 = 1.0 / 960.0;

/// Random monophonic phrase of 4 to 6 notes, 0.2 to 0.6 s each, with
/// neighbouring pitches 1 to 7 semitones apart. Half of the note
/// boundaries are legato; the rest leave a 50 to 200 ms rest.
pub fn random_phrase<R: Rng + ?Sized>(rng: &mut R, content_id: u32) -> MidiSequence {
    let count = rng.gen_range(4..=6);
    let mut tick: u64 = 48;
    let mut pitch: i32 = rng.gen_range(52..=72);
    let mut notes = Vec::with_capacity(count);
    for i in 0..count {
        if i > 0 {
            let step = rng.gen_range(1..=7) * if rng.gen_bool(0.5) { 1 } else { -1 };
            pitch = if (48..=76).contains(&(pitch + step)) { pitch + step } else { pitch - step };
        }
        let dur = rng.gen_range(192..=576u64);
        notes.push(NoteEvent::new(pitch as u8, tick as f64 * TICK_S, dur as f64 * TICK_S));
        tick += dur;
        if rng.gen_bool(0.5) {
            tick += rng.gen_range(48..=192u64);
        }
    }
    MidiSequence::from_notes(content_id, notes).expect("generated phrases are monophonic")
}

/// `count` phrases with ids `0..count`, each from its own substream.
pub fn generate_content_bank(count: usize, seed: u64) -> Vec<MidiSequence> {
    (0..count as u32)
        .map(|id| random_phrase(&mut indexed_substream(seed, "content", id as u64), id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencer::{parse_midi_bytes, write_midi_bytes};

    #[test]
    fn phrases_are_well_separated() {
        for seq in generate_content_bank(50, 3) {
            let notes = seq.notes();
            assert!((4..=6).contains(&notes.len()));
            for w in notes.windows(2) {
                assert!(w[0].end_s() <= w[1].onset_s + 1e-9);
                assert!((1..=7).contains(&(w[0].pitch_midi as i32 - w[1].pitch_midi as i32).abs()));
            }
            assert!(notes.iter().all(|n| n.duration_s >= 0.2 - 1e-9 && (48..=76).contains(&n.pitch_midi)));
        }
    }

    #[test]
    fn phrases_survive_midi_encoding() {
        for seq in generate_content_bank(5, 8) {
            let back = parse_midi_bytes(&write_midi_bytes(&seq), seq.content_id).unwrap();
            assert_eq!(back.notes().len(), seq.notes().len());
            for (a, b) in seq.notes().iter().zip(back.notes()) {
                assert_eq!(a.pitch_midi, b.pitch_midi);
                assert!((a.onset_s - b.onset_s).abs() < 1e-9 && (a.duration_s - b.duration_s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bank_is_deterministic() {
        assert_eq!(generate_content_bank(4, 10), generate_content_bank(4, 10));
        assert_ne!(generate_content_bank(4, 10), generate_content_bank(4, 11));
    }
}
