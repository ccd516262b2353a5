//! Preset conversion: render the source's notes with the reference's
//! timbre and envelope.
//!
//! Oracle mode works from audio alone. Notes come from segmenting the
//! source, the envelope from a least-squares fit to the reference's RMS
//! contour, and the timbre from an additive one-shot matched to the
//! reference's mel profile. Closed-world mode looks both files up in a
//! rendered dataset and re-renders the true triple, so its output equals
//! the ground truth.

mod fit;
mod oneshot;

pub use fit::{fit_envelope, EnvelopeFit, FIT_STARTS};
pub use oneshot::{estimate_one_shot, PhraseModel, REFINE_ITERATIONS};

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{
    estimate_f0, estimate_timbre, log_rms_contour, segment_notes, AnalysisError, TimbreProfile, CONTOUR_FRAME,
    CONTOUR_HOP,
};
use crate::audio::{AudioBuffer, AudioError};
use crate::dataset::{render_triple, Banks, DatasetError, Manifest, PresetTriple};
use crate::envelope::AdsrEnvelope;
use crate::sequencer::{hz_to_midi, render_sequence, MidiSequence, NoteEvent, SequencerError};
use crate::timbrebank::OneShot;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("no notes detected")]
    NoNotesDetected,
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("{0} is not a manifest entry")]
    NotInManifest(PathBuf),
    #[error("ground truth {0} is missing from the manifest")]
    MissingGroundTruth(PresetTriple),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Everything the oracle needs from one phrase: its notes (content), a
/// fitted envelope and level, and a timbre estimate.
#[derive(Clone, Debug)]
pub struct Attributes {
    pub notes: Vec<NoteEvent>,
    /// Length of the analyzed audio.
    pub duration_s: f64,
    pub envelope: AdsrEnvelope,
    /// Steady-state RMS implied by the envelope fit.
    pub level: f64,
    pub profile: TimbreProfile,
    /// Rounded median pitch over voiced frames.
    pub pitch_midi: u8,
    pub one_shot: OneShot,
}

impl Attributes {
    /// The phrase's notes as a sequence; its end excludes the release tail.
    pub fn content(&self) -> Result<MidiSequence, SequencerError> {
        content_of(&self.notes, self.duration_s, &self.envelope)
    }
}

fn content_of(notes: &[NoteEvent], duration_s: f64, env: &AdsrEnvelope) -> Result<MidiSequence, SequencerError> {
    let last_end = notes.last().map_or(0.0, NoteEvent::end_s);
    let total = (duration_s - env.release_s()).max(last_end);
    MidiSequence::new(0, notes.to_vec(), total)
}

pub fn analyze(buffer: &AudioBuffer) -> Result<Attributes, ConvertError> {
    let track = estimate_f0(buffer, CONTOUR_HOP);
    let contour = log_rms_contour(buffer, CONTOUR_FRAME, CONTOUR_HOP);
    let notes = refine_onsets(buffer, &segment_notes(&track, &contour));
    if notes.is_empty() {
        return Err(ConvertError::NoNotesDetected);
    }
    let tails = note_tails(buffer, &notes);
    let fit = fit_envelope(&contour, &notes, &tails, buffer.len());
    let profile = estimate_timbre(buffer, &track)?;
    let median = track.median_f0(0..track.len()).ok_or(ConvertError::NoNotesDetected)?;
    let pitch_midi = hz_to_midi(median).round().clamp(0.0, 127.0) as u8;
    let content = content_of(&fit.notes, buffer.duration_s(), &fit.envelope)?;
    let one_shot = estimate_one_shot(
        buffer,
        &PhraseModel {
            track: &track,
            content: &content,
            envelope: &fit.envelope,
            pitch_midi,
            level: fit.level,
        },
    )?;
    Ok(Attributes {
        notes: fit.notes,
        duration_s: buffer.duration_s(),
        envelope: fit.envelope,
        level: fit.level,
        profile,
        pitch_midi,
        one_shot,
    })
}

/// Search radius around a segmented onset.
const ONSET_RADIUS_S: f64 = 0.03;
/// Window of the short-time RMS used to find cut points between notes.
const DIP_WINDOW: usize = 32;

/// Sample-accurate onsets. After silence a note starts at its first
/// audible sample; between connected notes the previous note is cut and
/// the next starts from zero gain, which leaves a sharp amplitude dip.
fn refine_onsets(buffer: &AudioBuffer, notes: &[NoteEvent]) -> Vec<NoteEvent> {
    let sr = buffer.sample_rate() as f64;
    let x = buffer.samples();
    let min_run = (TAIL_GAP_S * sr).ceil() as usize;
    let radius = (ONSET_RADIUS_S * sr) as usize;
    let mut out: Vec<NoteEvent> = Vec::with_capacity(notes.len());
    for n in notes {
        let at = (n.onset_s * sr).round() as usize;
        let floor = out.last().map_or(0, |p: &NoteEvent| (p.onset_s * sr).ceil() as usize + 1);
        let lo = at.saturating_sub(radius).max(floor).min(x.len());
        let hi = (at + radius).min(x.len());
        let audible = |i: usize| x[i].abs() > TAIL_THRESHOLD;
        // first audible sample preceded by a silent run
        let after_silence = (lo..hi).find(|&i| {
            audible(i) && i >= min_run && (i - min_run..i).all(|j| !audible(j))
        });
        let onset = after_silence.or_else(|| {
            (lo..hi.saturating_sub(DIP_WINDOW))
                .step_by(4)
                .map(|i| {
                    let e: f64 = x[i..i + DIP_WINDOW].iter().map(|&s| (s as f64).powi(2)).sum();
                    (e, i)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, i)| i + DIP_WINDOW / 2)
        });
        let onset_s = onset.map_or(n.onset_s, |i| i as f64 / sr);
        let end = n.end_s();
        if let Some(prev) = out.last_mut() {
            if prev.end_s() > onset_s {
                prev.duration_s = (onset_s - prev.onset_s).max(1.0 / sr);
            }
        }
        out.push(NoteEvent::new(n.pitch_midi, onset_s, (end - onset_s).max(1.0 / sr)));
    }
    out
}

/// Samples below this are treated as silence when locating note tails.
const TAIL_THRESHOLD: f32 = 1e-4;
/// A tail must end at least this long before the next onset to count as
/// dying out on its own.
const TAIL_GAP_S: f64 = 0.005;

/// Where each note's sound dies out, relative to its onset: the start of
/// the first silent run of at least `TAIL_GAP_S` after the note begins
/// sounding. The last note's sound may also run to the end of the buffer.
fn note_tails(buffer: &AudioBuffer, notes: &[NoteEvent]) -> Vec<Option<f64>> {
    let sr = buffer.sample_rate() as f64;
    let x = buffer.samples();
    let min_run = (TAIL_GAP_S * sr).ceil() as usize;
    notes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let start = ((n.onset_s * sr).round() as usize).min(x.len());
            let is_last = i + 1 == notes.len();
            let stop = notes
                .get(i + 1)
                .map_or(x.len(), |next| ((next.onset_s * sr).round() as usize).min(x.len()));
            let region = &x[start..stop.max(start)];
            let first = region.iter().position(|s| s.abs() > TAIL_THRESHOLD)?;
            let mut run = 0;
            for (j, s) in region.iter().enumerate().skip(first) {
                if s.abs() > TAIL_THRESHOLD {
                    run = 0;
                    continue;
                }
                run += 1;
                if run == min_run {
                    let end = start + j + 1 - run;
                    return Some(end as f64 / sr - n.onset_s);
                }
            }
            // Silence shorter than a run can only end the buffer.
            if is_last {
                let last = region.iter().rposition(|s| s.abs() > TAIL_THRESHOLD)?;
                return Some((start + last + 1) as f64 / sr - n.onset_s);
            }
            None
        })
        .collect()
}

/// Estimated envelope and one-shot of a reference phrase.
pub fn extract_reference_attributes(reference: &AudioBuffer) -> Result<(AdsrEnvelope, OneShot), ConvertError> {
    let attrs = analyze(reference)?;
    Ok((attrs.envelope, attrs.one_shot))
}

/// Render `content`'s notes with `timbre`'s one-shot and `envelope`'s
/// fitted envelope.
pub fn synthesize(content: &Attributes, timbre: &Attributes, envelope: &Attributes) -> Result<AudioBuffer, ConvertError> {
    Ok(render_sequence(&timbre.one_shot, &content.content()?, &envelope.envelope)?)
}

/// A rendered dataset that conversions can be looked up in.
pub struct ClosedWorld {
    root: PathBuf,
    manifest: Manifest,
    banks: Banks,
    by_path: HashMap<String, PresetTriple>,
}

impl ClosedWorld {
    pub fn new(root: impl Into<PathBuf>, manifest: Manifest, banks: Banks) -> Self {
        let by_path = manifest.entries.iter().map(|e| (e.path.clone(), e.triple)).collect();
        Self {
            root: root.into(),
            manifest,
            banks,
            by_path,
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn banks(&self) -> &Banks {
        &self.banks
    }

    /// Resolve a file path (absolute, or relative to the dataset root) to
    /// its triple.
    pub fn triple_for(&self, path: &Path) -> Result<PresetTriple, ConvertError> {
        let not_found = || ConvertError::NotInManifest(path.to_path_buf());
        let rel = match path.strip_prefix(&self.root) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => {
                let canon_root = self.root.canonicalize().ok();
                let canon = path.canonicalize().ok();
                match (canon_root, canon) {
                    (Some(r), Some(p)) => p.strip_prefix(&r).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf()),
                    _ => path.to_path_buf(),
                }
            }
        };
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        self.by_path.get(&key).copied().ok_or_else(not_found)
    }

    /// Render a triple exactly as it was written to disk.
    pub fn render(&self, triple: PresetTriple) -> Result<AudioBuffer, ConvertError> {
        if !self.by_path.contains_key(&triple.rel_path()) {
            return Err(ConvertError::MissingGroundTruth(triple));
        }
        let audio = render_triple(&self.banks, triple)?;
        Ok(self.manifest.header.encoding.quantize(&audio))
    }
}

pub enum ConversionRequest<'a> {
    Oracle {
        source: &'a AudioBuffer,
        reference: &'a AudioBuffer,
    },
    ClosedWorld {
        world: &'a ClosedWorld,
        source: PresetTriple,
        reference: PresetTriple,
    },
}

pub fn convert_preset(request: &ConversionRequest<'_>) -> Result<AudioBuffer, ConvertError> {
    partial_convert(request, true, true)
}

/// Conversion with either attribute optionally kept from the source.
pub fn partial_convert(
    request: &ConversionRequest<'_>,
    convert_timbre: bool,
    convert_envelope: bool,
) -> Result<AudioBuffer, ConvertError> {
    match request {
        ConversionRequest::Oracle { source, reference } => {
            if source.sample_rate() != reference.sample_rate() {
                return Err(ConvertError::SampleRateMismatch(source.sample_rate(), reference.sample_rate()));
            }
            let src = analyze(source)?;
            // Skip analyzing the reference when nothing is taken from it.
            let reference_attrs = if convert_timbre || convert_envelope {
                Some(analyze(reference)?)
            } else {
                None
            };
            let pick = |take: bool| if take { reference_attrs.as_ref().unwrap_or(&src) } else { &src };
            synthesize(&src, pick(convert_timbre), pick(convert_envelope))
        }
        ConversionRequest::ClosedWorld { world, source, reference } => {
            let pick = |take: bool, r: u32, s: u32| if take { r } else { s };
            let triple = PresetTriple::new(
                pick(convert_timbre, reference.timbre_id, source.timbre_id),
                pick(convert_envelope, reference.envelope_id, source.envelope_id),
                source.content_id,
            );
            world.render(triple)
        }
    }
}
