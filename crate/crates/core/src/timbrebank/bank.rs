use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_one_shot, render_sustained, Extraction, HarmonicTimbre, OneShot, TimbreError};
use crate::audio::{read_wav, write_wav, Encoding};
use crate::seed::indexed_substream;

/// MIDI note every built-in sustained render is played at.
pub const SOURCE_PITCH: u8 = 60;
const SUSTAIN_SECONDS: f64 = 3.0;
const MAX_ATTEMPTS: usize = 16;

/// One line of the bank's `index.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankIndexEntry {
    pub timbre_id: u32,
    pub source_pitch_midi: u8,
    pub flatness: f64,
}

fn wav_name(timbre_id: u32) -> String {
    format!("timbre_{timbre_id:04}.wav")
}

/// Renders `count` random additive timbres and extracts one admitted
/// one-shot from each. Timbre `i` draws from its own seeded substream, so
/// the bank is identical regardless of thread count.
pub fn build_timbre_bank(count: usize, seed: u64, sample_rate: u32) -> Result<Vec<OneShot>, TimbreError> {
    (0..count as u32)
        .into_par_iter()
        .map(|id| {
            let mut rng = indexed_substream(seed, "timbre", id as u64);
            for _ in 0..MAX_ATTEMPTS {
                let timbre = HarmonicTimbre::random(&mut rng);
                let render = render_sustained(&timbre, SOURCE_PITCH, SUSTAIN_SECONDS, sample_rate);
                if let Extraction::Accepted(shot) = extract_one_shot(&render, SOURCE_PITCH, id)? {
                    return Ok(shot);
                }
            }
            Err(TimbreError::NoAdmissibleOneShot {
                timbre_id: id,
                attempts: MAX_ATTEMPTS,
            })
        })
        .collect()
}

/// Writes `timbre_{id:04}.wav` (float32) per one-shot plus `index.jsonl`.
pub fn write_timbre_bank(shots: &[OneShot], dir: impl AsRef<Path>) -> Result<(), TimbreError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut index = std::io::BufWriter::new(std::fs::File::create(dir.join("index.jsonl"))?);
    for shot in shots {
        write_wav(&shot.audio, dir.join(wav_name(shot.timbre_id)), Encoding::Float32)?;
        let entry = BankIndexEntry {
            timbre_id: shot.timbre_id,
            source_pitch_midi: shot.source_pitch_midi,
            flatness: shot.flatness,
        };
        serde_json::to_writer(&mut index, &entry).map_err(std::io::Error::from)?;
        index.write_all(b"\n")?;
    }
    index.flush()?;
    Ok(())
}

pub fn read_timbre_bank(dir: impl AsRef<Path>) -> Result<Vec<OneShot>, TimbreError> {
    let dir = dir.as_ref();
    let reader = std::io::BufReader::new(std::fs::File::open(dir.join("index.jsonl"))?);
    let mut shots = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: BankIndexEntry =
            serde_json::from_str(&line).map_err(|source| TimbreError::Index { line: i + 1, source })?;
        let audio = read_wav(dir.join(wav_name(entry.timbre_id)))?;
        shots.push(OneShot::new(entry.timbre_id, entry.source_pitch_midi, entry.flatness, audio)?);
    }
    Ok(shots)
}
