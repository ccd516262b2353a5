mod common;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use synthcat::dataset::{
    conversion_pairs, make_splits, render_dataset, sample_triplet, Manifest, RenderOptions, Split, SplitPlan,
    TripleSpace,
};
use synthcat::seed::indexed_substream;

fn file_bytes(root: &Path, manifest: &Manifest) -> Vec<Vec<u8>> {
    manifest.entries.iter().map(|e| fs::read(root.join(&e.path)).unwrap()).collect()
}

#[test]
fn cartesian_render_is_closed_idempotent_and_worker_independent() {
    let banks = common::banks(5, 4, 3, 21);
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let opts = |workers| RenderOptions {
        workers,
        ..RenderOptions::default()
    };

    let first = render_dataset(&banks, one.path(), &opts(1)).unwrap();
    assert_eq!(first.rendered, 60);
    assert!(first.failed.is_empty());
    let m = &first.manifest;
    assert_eq!(m.len(), 60);
    assert!(m.is_bijective());
    let triples: HashSet<_> = m.entries.iter().map(|e| e.triple).collect();
    assert_eq!(triples, banks.triples().into_iter().collect());
    let wavs = walk(one.path()).into_iter().filter(|p| p.extension().is_some_and(|x| x == "wav")).count();
    assert_eq!(wavs, 60);

    let manifest_bytes = fs::read(one.path().join("manifest.jsonl")).unwrap();
    let again = render_dataset(&banks, one.path(), &opts(1)).unwrap();
    assert_eq!((again.rendered, again.skipped), (0, 60));
    assert_eq!(fs::read(one.path().join("manifest.jsonl")).unwrap(), manifest_bytes);

    let parallel = render_dataset(&banks, four.path(), &opts(4)).unwrap();
    assert_eq!(parallel.manifest, first.manifest);
    assert_eq!(fs::read(four.path().join("manifest.jsonl")).unwrap(), manifest_bytes);
    assert!(file_bytes(one.path(), m) == file_bytes(four.path(), m));
}

#[test]
fn interrupted_render_repairs_only_missing_files() {
    let banks = common::banks(2, 2, 2, 5);
    let dir = tempfile::tempdir().unwrap();
    let full = render_dataset(&banks, dir.path(), &RenderOptions::default()).unwrap();
    let victim = dir.path().join(&full.manifest.entries[3].path);
    let original = fs::read(&victim).unwrap();
    // A truncated file is re-rendered, a missing one recreated.
    fs::write(&victim, &original[..original.len() / 2]).unwrap();
    fs::remove_file(dir.path().join(&full.manifest.entries[5].path)).unwrap();
    let repaired = render_dataset(&banks, dir.path(), &RenderOptions::default()).unwrap();
    assert_eq!((repaired.rendered, repaired.skipped), (2, 6));
    assert_eq!(fs::read(&victim).unwrap(), original);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn desk_split_holds_out_ten_entries() {
    let manifest = common::product_manifest(5, 4, 3);
    let (labeled, plan) = make_splits(&manifest, 2, 1, 8).unwrap();
    assert_eq!(labeled.with_split(Split::Test).count(), 10);
    // Train keeps the 2 seen envelopes and 2 seen contents.
    assert_eq!(labeled.with_split(Split::Train).count(), 5 * 2 * 2);
    assert_eq!(labeled.with_split(Split::Excluded).count(), 60 - 10 - 20);
    for e in labeled.with_split(Split::Test) {
        assert!(plan.test_envelopes.contains(&e.triple.envelope_id));
        assert!(plan.test_contents.contains(&e.triple.content_id));
    }
    let (rerun, _) = make_splits(&manifest, 2, 1, 8).unwrap();
    assert_eq!(rerun, labeled);
}

#[test]
fn paper_scale_split_and_pair_counts() {
    let ids = |n: u32| (0..n).collect::<Vec<u32>>();
    let (t, e, c) = (ids(250), ids(120), ids(100));
    let plan = SplitPlan::choose(&e, &c, 20, 10, 2024).unwrap();
    let counts = plan.count(&t, &e, &c);
    assert_eq!(counts.test, 50_000);
    assert_eq!(counts.train, 250 * 100 * 90);
    assert_eq!(counts.train + counts.test + counts.excluded, 3_000_000);

    // Ground truths of test pairs stay inside the test block, so the test
    // entries alone close the pair set.
    let held_e: Vec<u32> = plan.test_envelopes.iter().copied().collect();
    let held_c: Vec<u32> = plan.test_contents.iter().copied().collect();
    let test = common::manifest_over(&t, &held_e, &held_c, Some(Split::Test));
    assert_eq!(test.len(), 50_000);
    let pairs = conversion_pairs(&test, 10, 2024).unwrap();
    assert_eq!(pairs.len(), 500_000);
    let present: HashSet<_> = test.entries.iter().map(|e| e.triple).collect();
    for p in pairs.iter().step_by(97) {
        assert!(present.contains(&p.ground_truth));
        assert_ne!(p.source, p.reference);
        assert_eq!(p.ground_truth.content_id, p.source.content_id);
        assert_eq!(
            (p.ground_truth.timbre_id, p.ground_truth.envelope_id),
            (p.reference.timbre_id, p.reference.envelope_id)
        );
    }
}

#[test]
fn thousand_triplets_have_no_violations() {
    let manifest = common::product_manifest(5, 4, 3);
    let space = TripleSpace::from_manifest(&manifest);
    let mut violations = 0;
    for i in 0..1000u64 {
        let anchor = manifest.entries[(i as usize * 7) % manifest.len()].triple;
        let t = sample_triplet(&space, anchor, &mut indexed_substream(99, "triplets", i)).unwrap();
        if !t.is_valid() || ![t.x_e, t.x_c, t.x_t].iter().all(|x| space.contains(x)) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}
