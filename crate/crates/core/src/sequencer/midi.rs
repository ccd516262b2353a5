use std::collections::HashMap;
use std::path::Path;

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use serde::{Deserialize, Serialize};

use super::SequencerError;

const TOLERANCE_S: f64 = 1e-6;
/// Ticks per quarter note and tempo used when writing: 960 ticks per second.
const WRITE_PPQ: u16 = 480;
const WRITE_TEMPO_US: u32 = 500_000;
const DEFAULT_TEMPO_US: u32 = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch_midi: u8,
    pub onset_s: f64,
    pub duration_s: f64,
}

impl NoteEvent {
    pub fn new(pitch_midi: u8, onset_s: f64, duration_s: f64) -> Self {
        Self {
            pitch_midi,
            onset_s,
            duration_s,
        }
    }

    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

/// An ordered, non-overlapping note list with its content identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidiSequence {
    pub content_id: u32,
    notes: Vec<NoteEvent>,
    total_duration_s: f64,
}

impl MidiSequence {
    pub fn new(content_id: u32, notes: Vec<NoteEvent>, total_duration_s: f64) -> Result<Self, SequencerError> {
        for (i, n) in notes.iter().enumerate() {
            if n.pitch_midi > 127 || !(n.duration_s > 0.0) || !(n.onset_s >= 0.0) {
                return Err(SequencerError::InvalidSequence(format!("note {i}: {n:?}")));
            }
            if let Some(next) = notes.get(i + 1) {
                if next.onset_s <= n.onset_s || n.end_s() > next.onset_s + TOLERANCE_S {
                    return Err(SequencerError::InvalidSequence(format!(
                        "notes {i} and {} overlap or are out of order",
                        i + 1
                    )));
                }
            }
        }
        let last_end = notes.last().map_or(0.0, NoteEvent::end_s);
        if total_duration_s + TOLERANCE_S < last_end {
            return Err(SequencerError::InvalidSequence(format!(
                "total duration {total_duration_s} ends before the last note ({last_end})"
            )));
        }
        Ok(Self {
            content_id,
            notes,
            total_duration_s: total_duration_s.max(last_end),
        })
    }

    /// Sequence whose total duration is the end of its last note.
    pub fn from_notes(content_id: u32, notes: Vec<NoteEvent>) -> Result<Self, SequencerError> {
        let end = notes.last().map_or(0.0, NoteEvent::end_s);
        Self::new(content_id, notes, end)
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn total_duration_s(&self) -> f64 {
        self.total_duration_s
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

/// Piecewise-constant tempo map resolving ticks to seconds.
struct TempoMap {
    /// (tick, seconds at tick, seconds per tick from here on)
    segments: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u32)>) -> Self {
        match timing {
            Timing::Timecode(fps, sub) => {
                let spt = 1.0 / (fps.as_f32() as f64 * sub as f64);
                Self {
                    segments: vec![(0, 0.0, spt)],
                }
            }
            Timing::Metrical(ppq) => {
                let ppq = ppq.as_int().max(1) as f64;
                changes.sort_by_key(|&(tick, _)| tick);
                let mut segments = vec![(0u64, 0.0, DEFAULT_TEMPO_US as f64 * 1e-6 / ppq)];
                for (tick, tempo) in changes {
                    let &(t0, s0, spt) = segments.last().unwrap();
                    let at = s0 + (tick - t0) as f64 * spt;
                    let next = (tick, at, tempo as f64 * 1e-6 / ppq);
                    if tick == t0 {
                        *segments.last_mut().unwrap() = next;
                    } else {
                        segments.push(next);
                    }
                }
                Self { segments }
            }
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|&(t, _, _)| t <= tick) - 1;
        let (t0, s0, spt) = self.segments[idx];
        s0 + (tick - t0) as f64 * spt
    }
}

/// Parses a type 0 or type 1 standard MIDI file into a monophonic sequence.
///
/// Only the channel of the earliest note-on is used. Overlapping notes are
/// resolved by truncating the earlier note at the later onset; notes that
/// share an onset cannot be resolved and are an error.
pub fn parse_midi_bytes(bytes: &[u8], content_id: u32) -> Result<MidiSequence, SequencerError> {
    let smf = Smf::parse(bytes).map_err(|e| SequencerError::NotMidi(e.to_string()))?;
    if smf.header.format == Format::Sequential {
        return Err(SequencerError::NotMidi("type 2 (sequential) files are not supported".into()));
    }

    let mut tempos = Vec::new();
    // (tick, channel, key, is_on)
    let mut events: Vec<(u64, u8, u8, bool)> = Vec::new();
    let mut last_tick = 0u64;
    for track in &smf.tracks {
        let mut tick = 0u64;
        for ev in track {
            tick += ev.delta.as_int() as u64;
            match ev.kind {
                TrackEventKind::Meta(MetaMessage::Tempo(t)) => tempos.push((tick, t.as_int())),
                TrackEventKind::Midi { channel, message } => match message {
                    MidiMessage::NoteOn { key, vel } => {
                        events.push((tick, channel.as_int(), key.as_int(), vel.as_int() > 0))
                    }
                    MidiMessage::NoteOff { key, .. } => events.push((tick, channel.as_int(), key.as_int(), false)),
                    _ => {}
                },
                _ => {}
            }
        }
        last_tick = last_tick.max(tick);
    }
    let tempo = TempoMap::new(smf.header.timing, tempos);

    let Some(channel) = events
        .iter()
        .filter(|e| e.3)
        .min_by_key(|e| (e.0, e.1))
        .map(|e| e.1)
    else {
        return MidiSequence::new(content_id, Vec::new(), 0.0);
    };
    let mut events: Vec<_> = events.into_iter().filter(|e| e.1 == channel).collect();
    // Note-offs sort before note-ons on the same tick.
    events.sort_by_key(|&(tick, _, _, on)| (tick, on));

    let mut open: HashMap<u8, u64> = HashMap::new();
    let mut spans: Vec<(u64, u64, u8)> = Vec::new();
    for (tick, _, key, on) in events {
        if let Some(start) = open.remove(&key) {
            spans.push((start, tick, key));
        }
        if on {
            open.insert(key, tick);
        }
    }
    spans.extend(open.into_iter().map(|(key, start)| (start, last_tick, key)));
    spans.retain(|&(start, end, _)| end > start);
    spans.sort_by_key(|&(start, _, key)| (start, key));

    let mut notes: Vec<NoteEvent> = Vec::with_capacity(spans.len());
    for (i, &(start, end, key)) in spans.iter().enumerate() {
        if let Some(&(next, _, _)) = spans.get(i + 1) {
            if next == start {
                return Err(SequencerError::PolyphonyAfterResolution {
                    onset_s: tempo.seconds(start),
                });
            }
        }
        let end = spans.get(i + 1).map_or(end, |&(next, _, _)| end.min(next));
        let onset = tempo.seconds(start);
        notes.push(NoteEvent::new(key, onset, tempo.seconds(end) - onset));
    }
    MidiSequence::from_notes(content_id, notes)
}

/// Trailing decimal digits of the file stem, e.g. `content_0042.mid` -> 42.
fn id_from_path(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Parses a MIDI file; the content id comes from trailing digits in the
/// file name, or 0 when there are none.
pub fn parse_midi(path: impl AsRef<Path>) -> Result<MidiSequence, SequencerError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SequencerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_midi_bytes(&bytes, id_from_path(path).unwrap_or(0))
}

/// Loads every `.mid` file in `dir` sorted by name. Files without an id in
/// their name are numbered by position.
pub fn read_content_dir(dir: impl AsRef<Path>) -> Result<Vec<MidiSequence>, SequencerError> {
    let dir = dir.as_ref();
    let io = |source| SequencerError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi")))
        .collect();
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut seq = parse_midi(p)?;
            seq.content_id = id_from_path(p).unwrap_or(i as u32);
            Ok(seq)
        })
        .collect()
}

fn seconds_to_ticks(s: f64) -> u64 {
    (s * 1e6 / WRITE_TEMPO_US as f64 * WRITE_PPQ as f64).round() as u64
}

/// Encodes a sequence as a type 0 SMF at 120 bpm, 480 ticks per beat.
pub fn write_midi_bytes(seq: &MidiSequence) -> Vec<u8> {
    let mut timeline: Vec<(u64, bool, u8)> = Vec::new();
    for n in seq.notes() {
        timeline.push((seconds_to_ticks(n.onset_s), true, n.pitch_midi));
        timeline.push((seconds_to_ticks(n.end_s()), false, n.pitch_midi));
    }
    timeline.sort_by_key(|&(tick, on, _)| (tick, on));

    let mut track = vec![TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::Tempo(u24::new(WRITE_TEMPO_US))),
    }];
    let mut prev = 0u64;
    for (tick, on, key) in timeline {
        let message = if on {
            MidiMessage::NoteOn { key: u7::new(key), vel: u7::new(100) }
        } else {
            MidiMessage::NoteOff { key: u7::new(key), vel: u7::new(0) }
        };
        track.push(TrackEvent {
            delta: u28::new((tick - prev) as u32),
            kind: TrackEventKind::Midi { channel: u4::new(0), message },
        });
        prev = tick;
    }
    track.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });
    let smf = Smf {
        header: Header::new(Format::SingleTrack, Timing::Metrical(u15::new(WRITE_PPQ))),
        tracks: vec![track],
    };
    let mut out = Vec::new();
    smf.write_std(&mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_midi(seq: &MidiSequence, path: impl AsRef<Path>) -> Result<(), SequencerError> {
    let path = path.as_ref();
    std::fs::write(path, write_midi_bytes(seq)).map_err(|source| SequencerError::Io {
        path: path.display().to_string(),
        source,
    })
}
