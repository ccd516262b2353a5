//! Cartesian-product dataset: rendering, manifest, splits, perturbation
//! triplets and conversion pairs.

mod pairs;
mod render;
mod splits;
mod triplets;

pub use pairs::{conversion_pairs, ConversionPair};
pub use render::{expected_len, render_dataset, render_triple, RenderOptions, RenderOutcome};
pub use splits::{make_splits, SplitCounts, SplitPlan};
pub use triplets::{sample_triplet, sample_triplet_seeded, PerturbationTriplet, TripleSpace};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, Encoding};
use crate::envelope::{read_envelope_bank, AdsrEnvelope, EnvelopeError};
use crate::sequencer::{read_content_dir, MidiSequence, SequencerError};
use crate::timbrebank::{read_timbre_bank, OneShot, TimbreError};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("{0} bank is empty")]
    EmptyBank(&'static str),
    #[error("duplicate {factor} id {id}")]
    DuplicateId { factor: &'static str, id: u32 },
    #[error("unknown {factor} id {id}")]
    UnknownId { factor: &'static str, id: u32 },
    #[error("insufficient diversity: only one {0} id available")]
    InsufficientDiversity(&'static str),
    #[error("ground truth {0} is missing from the manifest")]
    MissingGroundTruth(PresetTriple),
    #[error("the test split is empty")]
    EmptyTestSplit,
    #[error("rendering {triple}: {source}")]
    Render {
        triple: PresetTriple,
        #[source]
        source: SequencerError,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Timbre(#[from] TimbreError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError {
    let path = path.to_path_buf();
    move |source| DatasetError::Io { path, source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PresetTriple {
    pub timbre_id: u32,
    pub envelope_id: u32,
    pub content_id: u32,
}

impl PresetTriple {
    pub fn new(timbre_id: u32, envelope_id: u32, content_id: u32) -> Self {
        Self {
            timbre_id,
            envelope_id,
            content_id,
        }
    }

    /// Relative file path, `t{t:04}/e{e:04}/c{c:04}.wav`.
    pub fn rel_path(&self) -> String {
        format!("t{:04}/e{:04}/c{:04}.wav", self.timbre_id, self.envelope_id, self.content_id)
    }
}

impl std::fmt::Display for PresetTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(t{}, e{}, c{})", self.timbre_id, self.envelope_id, self.content_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// Mixes held-out and seen factors; in neither split.
    Excluded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub triple: PresetTriple,
    pub path: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema: u32,
    pub sample_rate: u32,
    pub encoding: Encoding,
    /// False when some jobs failed; the entries then cover only the
    /// successful renders.
    pub complete: bool,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self) -> HashMap<PresetTriple, usize> {
        self.entries.iter().enumerate().map(|(i, e)| (e.triple, i)).collect()
    }

    pub fn get(&self, triple: &PresetTriple) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.triple == *triple)
    }

    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    /// No two entries share a triple or a path, and every path follows the
    /// layout of its triple.
    pub fn is_bijective(&self) -> bool {
        let mut triples = std::collections::HashSet::new();
        let mut paths = std::collections::HashSet::new();
        self.entries
            .iter()
            .all(|e| triples.insert(e.triple) && paths.insert(e.path.as_str()) && e.path == e.triple.rel_path())
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            let mut w = BufWriter::new(file);
            let mut line = serde_json::to_string(&self.header).expect("header serializes");
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(io_err(&tmp))?;
            for entry in &self.entries {
                let mut line = serde_json::to_string(entry).expect("entry serializes");
                line.push('\n');
                w.write_all(line.as_bytes()).map_err(io_err(&tmp))?;
            }
            w.flush().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, message: String| DatasetError::Manifest { line, message };
        let first = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?
            .map_err(io_err(path))?;
        let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if header.schema != MANIFEST_SCHEMA {
            return Err(bad(1, format!("unsupported schema {}", header.schema)));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?);
        }
        Ok(Self { header, entries })
    }
}

/// Timbre, envelope and content banks, addressable by id.
#[derive(Clone, Debug)]
pub struct Banks {
    pub timbres: Vec<OneShot>,
    pub envelopes: Vec<AdsrEnvelope>,
    pub contents: Vec<MidiSequence>,
    timbre_index: BTreeMap<u32, usize>,
    envelope_index: BTreeMap<u32, usize>,
    content_index: BTreeMap<u32, usize>,
}

fn index_by<T>(
    items: &[T],
    factor: &'static str,
    id: impl Fn(&T) -> u32,
) -> Result<BTreeMap<u32, usize>, DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::EmptyBank(factor));
    }
    let mut map = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        if map.insert(id(item), i).is_some() {
            return Err(DatasetError::DuplicateId { factor, id: id(item) });
        }
    }
    Ok(map)
}

impl Banks {
    pub fn new(
        timbres: Vec<OneShot>,
        envelopes: Vec<AdsrEnvelope>,
        contents: Vec<MidiSequence>,
    ) -> Result<Self, DatasetError> {
        let timbre_index = index_by(&timbres, "timbre", |t| t.timbre_id)?;
        let envelope_index = index_by(&envelopes, "envelope", |e| e.envelope_id)?;
        let content_index = index_by(&contents, "content", |c| c.content_id)?;
        let sr = timbres[0].audio.sample_rate();
        if let Some(t) = timbres.iter().find(|t| t.audio.sample_rate() != sr) {
            return Err(DatasetError::InvalidCounts(format!(
                "timbre {} has sample rate {} (bank uses {sr})",
                t.timbre_id,
                t.audio.sample_rate()
            )));
        }
        Ok(Self {
            timbres,
            envelopes,
            contents,
            timbre_index,
            envelope_index,
            content_index,
        })
    }

    /// Loads the on-disk layout written by the bank stage.
    pub fn load(timbre_dir: &Path, envelope_path: &Path, content_dir: &Path) -> Result<Self, DatasetError> {
        Self::new(
            read_timbre_bank(timbre_dir)?,
            read_envelope_bank(envelope_path)?,
            read_content_dir(content_dir)?,
        )
    }

    pub fn sample_rate(&self) -> u32 {
        self.timbres[0].audio.sample_rate()
    }

    pub fn timbre(&self, id: u32) -> Result<&OneShot, DatasetError> {
        self.timbre_index
            .get(&id)
            .map(|&i| &self.timbres[i])
            .ok_or(DatasetError::UnknownId { factor: "timbre", id })
    }

    pub fn envelope(&self, id: u32) -> Result<&AdsrEnvelope, DatasetError> {
        self.envelope_index
            .get(&id)
            .map(|&i| &self.envelopes[i])
            .ok_or(DatasetError::UnknownId { factor: "envelope", id })
    }

    pub fn content(&self, id: u32) -> Result<&MidiSequence, DatasetError> {
        self.content_index
            .get(&id)
            .map(|&i| &self.contents[i])
            .ok_or(DatasetError::UnknownId { factor: "content", id })
    }

    pub fn timbre_ids(&self) -> Vec<u32> {
        self.timbre_index.keys().copied().collect()
    }

    pub fn envelope_ids(&self) -> Vec<u32> {
        self.envelope_index.keys().copied().collect()
    }

    pub fn content_ids(&self) -> Vec<u32> {
        self.content_index.keys().copied().collect()
    }

    /// Every triple of the product, ordered by timbre, envelope, content.
    pub fn triples(&self) -> Vec<PresetTriple> {
        let mut out = Vec::with_capacity(self.timbres.len() * self.envelopes.len() * self.contents.len());
        for &t in self.timbre_index.keys() {
            for &e in self.envelope_index.keys() {
                for &c in self.content_index.keys() {
                    out.push(PresetTriple::new(t, e, c));
                }
            }
        }
        out
    }
}
