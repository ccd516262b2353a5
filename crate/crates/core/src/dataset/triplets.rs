use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::indexed_substream;

use super::{DatasetError, Manifest, PresetTriple};

/// Rejection draws before falling back to enumerating candidates.
const MAX_REJECTIONS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerturbationTriplet {
    pub anchor: PresetTriple,
    /// Shares the envelope; timbre and content differ.
    pub x_e: PresetTriple,
    /// Shares the content; timbre and envelope differ.
    pub x_c: PresetTriple,
    /// Shares the timbre; envelope and content differ.
    pub x_t: PresetTriple,
}

impl PerturbationTriplet {
    pub fn is_valid(&self) -> bool {
        let a = self.anchor;
        let (e, c, t) = (self.x_e, self.x_c, self.x_t);
        e.envelope_id == a.envelope_id
            && e.timbre_id != a.timbre_id
            && e.content_id != a.content_id
            && c.content_id == a.content_id
            && c.timbre_id != a.timbre_id
            && c.envelope_id != a.envelope_id
            && t.timbre_id == a.timbre_id
            && t.envelope_id != a.envelope_id
            && t.content_id != a.content_id
    }
}

/// The set of triples triplets may be drawn from.
#[derive(Clone, Debug)]
pub struct TripleSpace {
    timbres: Vec<u32>,
    envelopes: Vec<u32>,
    contents: Vec<u32>,
    present: HashSet<PresetTriple>,
}

impl TripleSpace {
    pub fn new(triples: impl IntoIterator<Item = PresetTriple>) -> Self {
        let present: HashSet<PresetTriple> = triples.into_iter().collect();
        let ids = |f: fn(&PresetTriple) -> u32| {
            let mut v: Vec<u32> = present.iter().map(f).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        Self {
            timbres: ids(|t| t.timbre_id),
            envelopes: ids(|t| t.envelope_id),
            contents: ids(|t| t.content_id),
            present,
        }
    }

    pub fn from_manifest(manifest: &Manifest) -> Self {
        Self::new(manifest.entries.iter().map(|e| e.triple))
    }

    pub fn contains(&self, triple: &PresetTriple) -> bool {
        self.present.contains(triple)
    }

    fn check_diversity(&self) -> Result<(), DatasetError> {
        for (factor, ids) in [("timbre", &self.timbres), ("envelope", &self.envelopes), ("content", &self.contents)] {
            if ids.len() < 2 {
                return Err(DatasetError::InsufficientDiversity(factor));
            }
        }
        Ok(())
    }

    /// Uniform draw over present triples built by `make(a, b)` with `a` from
    /// `xs` and `b` from `ys`, both different from the anchor's values.
    fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        xs: &[u32],
        not_x: u32,
        ys: &[u32],
        not_y: u32,
        make: impl Fn(u32, u32) -> PresetTriple,
    ) -> Option<PresetTriple> {
        let xs: Vec<u32> = xs.iter().copied().filter(|&x| x != not_x).collect();
        let ys: Vec<u32> = ys.iter().copied().filter(|&y| y != not_y).collect();
        for _ in 0..MAX_REJECTIONS {
            let cand = make(*xs.choose(rng)?, *ys.choose(rng)?);
            if self.present.contains(&cand) {
                return Some(cand);
            }
        }
        let all: Vec<PresetTriple> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .map(|(x, y)| make(x, y))
            .filter(|t| self.present.contains(t))
            .collect();
        all.choose(rng).copied()
    }
}

pub fn sample_triplet<R: Rng + ?Sized>(
    space: &TripleSpace,
    anchor: PresetTriple,
    rng: &mut R,
) -> Result<PerturbationTriplet, DatasetError> {
    space.check_diversity()?;
    let a = anchor;
    let x_e = space
        .draw(rng, &space.timbres, a.timbre_id, &space.contents, a.content_id, |t, c| {
            PresetTriple::new(t, a.envelope_id, c)
        })
        .ok_or(DatasetError::InsufficientDiversity("timbre/content"))?;
    let x_c = space
        .draw(rng, &space.timbres, a.timbre_id, &space.envelopes, a.envelope_id, |t, e| {
            PresetTriple::new(t, e, a.content_id)
        })
        .ok_or(DatasetError::InsufficientDiversity("timbre/envelope"))?;
    let x_t = space
        .draw(rng, &space.envelopes, a.envelope_id, &space.contents, a.content_id, |e, c| {
            PresetTriple::new(a.timbre_id, e, c)
        })
        .ok_or(DatasetError::InsufficientDiversity("envelope/content"))?;
    Ok(PerturbationTriplet { anchor, x_e, x_c, x_t })
}

/// Deterministic per (anchor, seed).
pub fn sample_triplet_seeded(
    space: &TripleSpace,
    anchor: PresetTriple,
    seed: u64,
) -> Result<PerturbationTriplet, DatasetError> {
    let key = ((anchor.timbre_id as u64) << 42) ^ ((anchor.envelope_id as u64) << 21) ^ anchor.content_id as u64;
    sample_triplet(space, anchor, &mut indexed_substream(seed, "triplet", key))
}
