use crate::sequencer::{hz_to_midi, NoteEvent};

use super::{EnvelopeContour, PitchTrack};

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentConfig {
    /// Frames a new pitch (>= 0.5 semitone away) must persist to start a note.
    pub min_change_frames: usize,
    /// Unvoiced gaps up to this many frames are bridged.
    pub max_gap_frames: usize,
    pub min_note_frames: usize,
    /// Relative drop per frame that counts as release decay.
    pub release_tolerance: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            min_change_frames: 3,
            max_gap_frames: 2,
            min_note_frames: 8,
            release_tolerance: 0.01,
        }
    }
}

pub fn segment_notes(track: &PitchTrack, contour: &EnvelopeContour) -> Vec<NoteEvent> {
    segment_notes_with(track, contour, &SegmentConfig::default())
}

/// Split a monophonic pitch track into notes. Onsets come from voicing or
/// sustained pitch changes; each note's gate is placed where the trailing
/// monotone decline of the RMS contour begins.
pub fn segment_notes_with(track: &PitchTrack, contour: &EnvelopeContour, cfg: &SegmentConfig) -> Vec<NoteEvent> {
    let n = track.len().min(contour.len());
    let semis: Vec<Option<f64>> = (0..n)
        .map(|t| track.voicing[t].then(|| hz_to_midi(track.f0_hz[t])))
        .collect();

    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, f64)> = None;
    let mut pending: Option<(usize, i64, usize)> = None;
    let mut gap = 0usize;
    let mut last_voiced = 0usize;
    for (t, s) in semis.iter().enumerate() {
        match (s, current) {
            (None, Some((start, _))) => {
                gap += 1;
                if gap > cfg.max_gap_frames {
                    regions.push((start, last_voiced + 1));
                    current = None;
                    pending = None;
                }
            }
            (None, None) => {}
            (Some(m), None) => {
                current = Some((t, m.round()));
                gap = 0;
                last_voiced = t;
            }
            (Some(m), Some((start, reference))) => {
                gap = 0;
                last_voiced = t;
                if (m - reference).abs() >= 0.5 {
                    let q = m.round() as i64;
                    pending = match pending {
                        Some((p, pq, c)) if pq == q => Some((p, q, c + 1)),
                        _ => Some((t, q, 1)),
                    };
                    if let Some((p, q, c)) = pending {
                        if c >= cfg.min_change_frames {
                            regions.push((start, p));
                            current = Some((p, q as f64));
                            pending = None;
                        }
                    }
                } else {
                    pending = None;
                }
            }
        }
    }
    if let Some((start, _)) = current {
        regions.push((start, last_voiced + 1));
    }
    // Short regions are usually pitch-change transients; fold one into the
    // note that follows without a gap, otherwise drop it.
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(regions.len());
    let mut carry: Option<usize> = None;
    for (i, &(s, e)) in regions.iter().enumerate() {
        let start = carry.take().unwrap_or(s);
        if e - s < cfg.min_note_frames {
            if regions.get(i + 1).is_some_and(|next| next.0 == e) {
                carry = Some(start);
            }
            continue;
        }
        merged.push((start, e));
    }
    let regions = merged;

    let rms = contour.linear();
    let sr = track.sample_rate as f64;
    let hop = track.hop as f64;
    let mut notes: Vec<NoteEvent> = Vec::with_capacity(regions.len());
    for (i, &(s, e)) in regions.iter().enumerate() {
        let Some(f0) = track.median_f0(s..e) else { continue };
        let onset = s as f64 * hop / sr;
        let mut k = e - 1;
        while k > s && rms[k - 1] > rms[k] * (1.0 + cfg.release_tolerance) {
            k -= 1;
        }
        // A frame only registers the decline once the release reaches about
        // its center, so the gate sits half a window past the plateau frame.
        let mut gate = (k as f64 * hop + contour.frame_length as f64 / 2.0) / sr;
        gate = gate.min(e as f64 * hop / sr);
        if let Some(&(ns, _)) = regions.get(i + 1) {
            gate = gate.min(ns as f64 * hop / sr);
        }
        let pitch = hz_to_midi(f0).round().clamp(0.0, 127.0) as u8;
        notes.push(NoteEvent::new(pitch, onset, (gate - onset).max(hop / sr)));
    }
    notes
}
