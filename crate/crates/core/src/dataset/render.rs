use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;

use crate::audio::{seconds_to_samples, write_wav, AudioBuffer, Encoding};
use crate::sequencer::render_sequence;

use super::{io_err, Banks, DatasetError, Manifest, ManifestEntry, ManifestHeader, PresetTriple, MANIFEST_SCHEMA};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderOptions {
    pub workers: usize,
    pub encoding: Encoding,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            encoding: Encoding::Pcm16,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutcome {
    pub manifest: Manifest,
    pub rendered: usize,
    pub skipped: usize,
    pub failed: Vec<(PresetTriple, String)>,
}

pub fn render_triple(banks: &Banks, triple: PresetTriple) -> Result<AudioBuffer, DatasetError> {
    render_sequence(
        banks.timbre(triple.timbre_id)?,
        banks.content(triple.content_id)?,
        banks.envelope(triple.envelope_id)?,
    )
    .map_err(|source| DatasetError::Render { triple, source })
}

/// Sample count of a triple's render, known without rendering it.
pub fn expected_len(banks: &Banks, triple: PresetTriple) -> Result<usize, DatasetError> {
    let midi = banks.content(triple.content_id)?;
    let env = banks.envelope(triple.envelope_id)?;
    Ok(seconds_to_samples(midi.total_duration_s() + env.release_s(), banks.sample_rate()))
}

/// An existing file counts as done when its header matches the requested
/// format and its data chunk holds the expected sample count.
fn is_complete(path: &Path, sample_rate: u32, encoding: Encoding, len: usize) -> bool {
    let Ok(reader) = hound::WavReader::open(path) else {
        return false;
    };
    let spec = reader.spec();
    let (bits, format) = match encoding {
        Encoding::Pcm16 => (16, hound::SampleFormat::Int),
        Encoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let bytes = fs::metadata(path).map(|m| m.len()).unwrap_or(0);
    spec.channels == 1
        && spec.sample_rate == sample_rate
        && spec.bits_per_sample == bits
        && spec.sample_format == format
        && reader.len() as usize == len
        && bytes >= 44 + (len * bits as usize / 8) as u64
}

enum JobResult {
    Rendered(f64),
    Skipped(f64),
}

fn run_job(
    banks: &Banks,
    out_dir: &Path,
    triple: PresetTriple,
    encoding: Encoding,
) -> Result<JobResult, DatasetError> {
    let sr = banks.sample_rate();
    let len = expected_len(banks, triple)?;
    let duration = len as f64 / sr as f64;
    let path = out_dir.join(triple.rel_path());
    if is_complete(&path, sr, encoding, len) {
        return Ok(JobResult::Skipped(duration));
    }
    let audio = render_triple(banks, triple)?;
    debug_assert_eq!(audio.len(), len);
    let parent = path.parent().expect("layout has a parent directory");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    // Write under a temporary name so an interrupted run never leaves a
    // truncated file at the final path.
    let tmp: PathBuf = path.with_extension("wav.part");
    write_wav(&audio, &tmp, encoding)?;
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(JobResult::Rendered(duration))
}

/// Render every triple of the bank product under `out_dir` and write
/// `manifest.jsonl`. Jobs run on a pool of `workers` threads; a single
/// collector assembles the manifest in triple order. Files that already
/// exist with the right format and length are skipped.
pub fn render_dataset(banks: &Banks, out_dir: &Path, options: &RenderOptions) -> Result<RenderOutcome, DatasetError> {
    if options.workers == 0 {
        return Err(DatasetError::InvalidCounts("workers must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let triples = banks.triples();
    let total = triples.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| DatasetError::InvalidCounts(format!("worker pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, Result<JobResult, DatasetError>)>();
    let slots = std::thread::scope(|scope| {
        let collector = scope.spawn(move || {
            let mut slots: Vec<Option<Result<JobResult, DatasetError>>> = (0..total).map(|_| None).collect();
            let step = (total / 20).max(1);
            for (done, (i, result)) in rx.into_iter().enumerate() {
                slots[i] = Some(result);
                if (done + 1) % step == 0 || done + 1 == total {
                    log::info!("render: {}/{} complete", done + 1, total);
                }
            }
            slots
        });
        pool.install(|| {
            triples.par_iter().enumerate().for_each_with(tx, |tx, (i, &triple)| {
                let _ = tx.send((i, run_job(banks, out_dir, triple, options.encoding)));
            });
        });
        collector.join().expect("collector thread panicked")
    });

    let mut entries = Vec::with_capacity(total);
    let (mut rendered, mut skipped) = (0, 0);
    let mut failed = Vec::new();
    for (triple, slot) in triples.iter().zip(slots) {
        let duration_s = match slot.expect("every job reports") {
            Ok(JobResult::Rendered(d)) => {
                rendered += 1;
                d
            }
            Ok(JobResult::Skipped(d)) => {
                skipped += 1;
                d
            }
            Err(e) => {
                log::error!("{triple}: {e}");
                failed.push((*triple, e.to_string()));
                continue;
            }
        };
        entries.push(ManifestEntry {
            triple: *triple,
            path: triple.rel_path(),
            duration_s,
            split: None,
        });
    }
    let manifest = Manifest {
        header: ManifestHeader {
            schema: MANIFEST_SCHEMA,
            sample_rate: banks.sample_rate(),
            encoding: options.encoding,
            complete: failed.is_empty(),
            expected: total,
        },
        entries,
    };
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(RenderOutcome {
        manifest,
        rendered,
        skipped,
        failed,
    })
}
