#![allow(dead_code)]

use synthcat::audio::{Encoding, DEFAULT_SAMPLE_RATE};
use synthcat::dataset::{Banks, Manifest, ManifestEntry, ManifestHeader, PresetTriple, Split};
use synthcat::envelope::sample_envelope_bank;
use synthcat::seed::substream;
use synthcat::sequencer::generate_content_bank;
use synthcat::timbrebank::build_timbre_bank;

pub fn banks(timbres: usize, envelopes: usize, contents: usize, seed: u64) -> Banks {
    Banks::new(
        build_timbre_bank(timbres, seed, DEFAULT_SAMPLE_RATE).unwrap(),
        sample_envelope_bank(envelopes, &mut substream(seed, "envelopes")),
        generate_content_bank(contents, seed),
    )
    .unwrap()
}

/// A manifest over explicit id lists, without any audio behind it.
pub fn manifest_over(timbres: &[u32], envelopes: &[u32], contents: &[u32], split: Option<Split>) -> Manifest {
    let mut entries = Vec::with_capacity(timbres.len() * envelopes.len() * contents.len());
    for &t in timbres {
        for &e in envelopes {
            for &c in contents {
                let triple = PresetTriple::new(t, e, c);
                entries.push(ManifestEntry {
                    triple,
                    path: triple.rel_path(),
                    duration_s: 1.0,
                    split,
                });
            }
        }
    }
    Manifest {
        header: ManifestHeader {
            schema: 1,
            sample_rate: DEFAULT_SAMPLE_RATE,
            encoding: Encoding::Pcm16,
            complete: true,
            expected: entries.len(),
        },
        entries,
    }
}

pub fn product_manifest(timbres: u32, envelopes: u32, contents: u32) -> Manifest {
    let ids = |n: u32| (0..n).collect::<Vec<_>>();
    manifest_over(&ids(timbres), &ids(envelopes), &ids(contents), None)
}

pub fn cents(hz: f64, reference_hz: f64) -> f64 {
    1200.0 * (hz / reference_hz).log2()
}

pub fn midi_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}
