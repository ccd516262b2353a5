use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::substream;

use super::{DatasetError, Manifest, PresetTriple, Split};

/// Held-out envelope and content ids. Every timbre is seen in training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_envelopes: BTreeSet<u32>,
    pub test_contents: BTreeSet<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub excluded: usize,
}

fn hold_out(ids: &[u32], n: usize, seed: u64, name: &str) -> BTreeSet<u32> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.shuffle(&mut substream(seed, name));
    sorted.into_iter().take(n).collect()
}

impl SplitPlan {
    pub fn choose(
        envelope_ids: &[u32],
        content_ids: &[u32],
        n_test_env: usize,
        n_test_midi: usize,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        let distinct = |ids: &[u32]| ids.iter().collect::<BTreeSet<_>>().len();
        let (ne, nc) = (distinct(envelope_ids), distinct(content_ids));
        if n_test_env >= ne {
            return Err(DatasetError::InvalidCounts(format!(
                "cannot hold out {n_test_env} of {ne} envelopes"
            )));
        }
        if n_test_midi >= nc {
            return Err(DatasetError::InvalidCounts(format!(
                "cannot hold out {n_test_midi} of {nc} contents"
            )));
        }
        Ok(Self {
            test_envelopes: hold_out(envelope_ids, n_test_env, seed, "split-envelopes"),
            test_contents: hold_out(content_ids, n_test_midi, seed, "split-contents"),
        })
    }

    pub fn assign(&self, triple: &PresetTriple) -> Split {
        match (
            self.test_envelopes.contains(&triple.envelope_id),
            self.test_contents.contains(&triple.content_id),
        ) {
            (true, true) => Split::Test,
            (false, false) => Split::Train,
            _ => Split::Excluded,
        }
    }

    /// Split sizes over a full product without materializing entries.
    pub fn count(&self, timbre_ids: &[u32], envelope_ids: &[u32], content_ids: &[u32]) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for &t in timbre_ids {
            for &e in envelope_ids {
                for &c in content_ids {
                    match self.assign(&PresetTriple::new(t, e, c)) {
                        Split::Train => counts.train += 1,
                        Split::Test => counts.test += 1,
                        Split::Excluded => counts.excluded += 1,
                    }
                }
            }
        }
        counts
    }
}

/// Label every manifest entry train, test or excluded.
pub fn make_splits(
    manifest: &Manifest,
    n_test_env: usize,
    n_test_midi: usize,
    seed: u64,
) -> Result<(Manifest, SplitPlan), DatasetError> {
    let envs: Vec<u32> = manifest.entries.iter().map(|e| e.triple.envelope_id).collect();
    let contents: Vec<u32> = manifest.entries.iter().map(|e| e.triple.content_id).collect();
    let plan = SplitPlan::choose(&envs, &contents, n_test_env, n_test_midi, seed)?;
    let mut out = manifest.clone();
    for entry in &mut out.entries {
        entry.split = Some(plan.assign(&entry.triple));
    }
    Ok((out, plan))
}
