use std::collections::HashSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::seed::indexed_substream;

use super::{DatasetError, Manifest, PresetTriple, Split};

/// Source and reference from the test split, with the ground truth that
/// carries the reference's timbre and envelope and the source's content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionPair {
    pub source: PresetTriple,
    pub reference: PresetTriple,
    pub ground_truth: PresetTriple,
}

/// For every test entry pick `n_refs` distinct other test entries as
/// references (fewer when the split is smaller).
pub fn conversion_pairs(manifest: &Manifest, n_refs: usize, seed: u64) -> Result<Vec<ConversionPair>, DatasetError> {
    let test: Vec<PresetTriple> = manifest.with_split(Split::Test).map(|e| e.triple).collect();
    if test.is_empty() {
        return Err(DatasetError::EmptyTestSplit);
    }
    let present: HashSet<PresetTriple> = manifest.entries.iter().map(|e| e.triple).collect();
    let mut pairs = Vec::with_capacity(test.len() * n_refs);
    for (i, &source) in test.iter().enumerate() {
        let others = test.len() - 1;
        let k = n_refs.min(others);
        let mut rng = indexed_substream(seed, "pairs", i as u64);
        let mut picks: Vec<usize> = sample(&mut rng, others, k).into_vec();
        picks.sort_unstable();
        for p in picks {
            // skip the source itself
            let reference = test[if p >= i { p + 1 } else { p }];
            let ground_truth = PresetTriple::new(reference.timbre_id, reference.envelope_id, source.content_id);
            if !present.contains(&ground_truth) {
                return Err(DatasetError::MissingGroundTruth(ground_truth));
            }
            pairs.push(ConversionPair {
                source,
                reference,
                ground_truth,
            });
        }
    }
    Ok(pairs)
}
