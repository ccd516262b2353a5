//! Acceptance suite: one PASS/FAIL line per criterion, each with its
//! tolerance and time budget. Exits nonzero if any criterion fails.

#[path = "common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{LN_2, PI};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthcat::analysis::{estimate_f0, log_rms_contour, CONTOUR_FRAME, CONTOUR_HOP, LOG_FLOOR};
use synthcat::audio::{read_wav, AudioBuffer, Encoding};
use synthcat::convert::{analyze, convert_preset, synthesize, Attributes, ClosedWorld, ConversionRequest};
use synthcat::dataset::{
    conversion_pairs, make_splits, render_dataset, render_triple, sample_triplet, Manifest, PresetTriple,
    RenderOptions, Split, SplitPlan, TripleSpace,
};
use synthcat::envelope::AdsrEnvelope;
use synthcat::metrics::{f0rmse, lrmsd, mstft, multiscale_mel_loss};
use synthcat::seed::indexed_substream;
use synthcat::sequencer::{render_sequence, MidiSequence, NoteEvent};
use synthcat::timbrebank::{extract_one_shot, flatness, flatness_scan, Extraction, OneShot, ADMISSION_THRESHOLD};

const SR: u32 = 44_100;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Not measurable on this machine; never counted as a pass.
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Tally {
    passed: usize,
    failed: usize,
    skipped: usize,
}

impl Tally {
    fn run(&mut self, id: u32, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let timing = match budget {
            Some(b) => format!("{:.1} s / budget {} s", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.1} s", elapsed.as_secs_f64()),
        };
        let over = budget.is_some_and(|b| elapsed > b);
        let (tag, detail) = match outcome {
            Verdict::Pass(d) if over => ("FAIL", format!("{d}; over time budget")),
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        match tag {
            "PASS" => self.passed += 1,
            "FAIL" => self.failed += 1,
            _ => self.skipped += 1,
        }
        println!("{tag} {id:>2} {title}: {detail} [{timing}]");
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn split_arithmetic() -> Verdict {
    let ids = |n: u32| (0..n).collect::<Vec<u32>>();
    let (t, e, c) = (ids(250), ids(120), ids(100));
    let plan = SplitPlan::choose(&e, &c, 20, 10, 1).unwrap();
    let paper = plan.count(&t, &e, &c).test;
    let (desk_manifest, _) = make_splits(&common::product_manifest(5, 4, 3), 2, 1, 1).unwrap();
    let desk = desk_manifest.with_split(Split::Test).count();
    verdict(
        paper == 50_000 && desk == 10,
        format!("250x20x10 test split = {paper} (want 50000), 5x2x1 = {desk} (want 10)"),
    )
}

fn walk_wavs(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            if p.is_dir() {
                walk_wavs(&p)
            } else {
                p.extension().is_some_and(|x| x == "wav") as usize
            }
        })
        .sum()
}

fn cartesian_closure() -> Verdict {
    let banks = common::banks(5, 4, 3, 2);
    let (one, four) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let opts = |workers| RenderOptions {
        workers,
        ..RenderOptions::default()
    };
    let first = render_dataset(&banks, one.path(), &opts(1)).unwrap();
    let files = walk_wavs(one.path());
    let bijective = first.manifest.is_bijective() && first.manifest.len() == 60;
    let manifest_bytes = fs::read(one.path().join("manifest.jsonl")).unwrap();
    let rerun = render_dataset(&banks, one.path(), &opts(1)).unwrap();
    let noop = rerun.rendered == 0 && fs::read(one.path().join("manifest.jsonl")).unwrap() == manifest_bytes;
    render_dataset(&banks, four.path(), &opts(4)).unwrap();
    let identical = first.manifest.entries.iter().all(|e| {
        fs::read(one.path().join(&e.path)).unwrap() == fs::read(four.path().join(&e.path)).unwrap()
    }) && fs::read(four.path().join("manifest.jsonl")).unwrap() == manifest_bytes;
    verdict(
        files == 60 && bijective && noop && identical,
        format!(
            "{files} files (want 60), bijective manifest {bijective}, re-run renders {} (want 0), workers 1 vs 4 byte-identical {identical}",
            rerun.rendered
        ),
    )
}

/// Frame RMS straight from the frame definition: `frame` samples centered
/// on `t * hop`, zero outside the signal.
fn oracle_rms(signal: impl Fn(f64) -> f64, len: usize, t: usize) -> f64 {
    let start = (t * CONTOUR_HOP) as i64 - CONTOUR_FRAME as i64 / 2;
    let sum: f64 = (start..start + CONTOUR_FRAME as i64)
        .filter(|&n| n >= 0 && (n as usize) < len)
        .map(|n| signal(n as f64 / SR as f64).powi(2))
        .sum();
    (sum / CONTOUR_FRAME as f64).sqrt()
}

fn envelope_oracle() -> Verdict {
    let cases = [
        (50.0, 0.0, 100.0, 0.5, 100.0),
        (20.0, 30.0, 150.0, 0.6, 200.0),
        (80.0, 0.0, 250.0, 0.3, 60.0),
    ];
    let shot = OneShot::new(
        0,
        69,
        1.0,
        AudioBuffer::from_fn(SR as usize, SR, |t| 0.5 * (2.0 * PI * 440.0 * t).sin()),
    )
    .unwrap();
    let (onset, gate) = (0.1, 0.7);
    let mut worst_frame: f64 = 0.0;
    let (mut worst_sustain, mut worst_attack): (f64, f64) = (0.0, 0.0);
    for (a, h, d, s, r) in cases {
        let env = AdsrEnvelope::new(0, a, h, d, s, r).unwrap();
        let seq = MidiSequence::new(0, vec![NoteEvent::new(69, onset, gate)], onset + gate).unwrap();
        let audio = render_sequence(&shot, &seq, &env).unwrap();
        let contour = log_rms_contour(&audio, CONTOUR_FRAME, CONTOUR_HOP);
        let n = audio.len();
        let signal = |ts: f64| {
            if ts < onset {
                0.0
            } else {
                0.5 * env.gain(ts - onset, gate) * (2.0 * PI * 440.0 * (ts - onset)).sin()
            }
        };
        for t in 0..contour.len() {
            if !contour.is_interior(t, n) {
                continue;
            }
            let expected = oracle_rms(signal, n, t);
            if expected > 1e-3 {
                worst_frame = worst_frame.max((contour.log_rms[t] - expected.ln()).abs());
            }
        }
        let fit = analyze(&audio).unwrap().envelope;
        worst_sustain = worst_sustain.max((fit.sustain_level - s).abs());
        worst_attack = worst_attack.max((fit.attack_ms - a).abs());
    }
    verdict(
        worst_frame <= 0.02 && worst_sustain <= 0.05 && worst_attack <= 20.0,
        format!(
            "worst interior frame |log-RMS error| {worst_frame:.4} (<= 0.02), refit sustain error {worst_sustain:.3} (<= 0.05), attack error {worst_attack:.1} ms (<= 20)"
        ),
    )
}

fn flatness_gate() -> Verdict {
    // 430.66 Hz puts exactly five periods in each 512-sample hop.
    let f = SR as f64 * 5.0 / 512.0;
    let steady = AudioBuffer::from_fn(2 * SR as usize, SR, |t| 0.4 * (2.0 * PI * f * t).sin());
    let dc = AudioBuffer::new(vec![0.3; SR as usize], SR);
    let flat = flatness(&steady).unwrap();
    let flat_dc = flatness(&dc).unwrap();

    let tone = |amp: &dyn Fn(f64) -> f64| {
        AudioBuffer::from_fn(3 * SR as usize, SR, |t| amp(t) * (2.0 * PI * 440.0 * t).sin())
    };
    let decaying = tone(&|t| (-t / 0.3).exp());
    let rejected = matches!(extract_one_shot(&decaying, 69, 0).unwrap(), Extraction::Rejected { best_score, .. } if best_score < ADMISSION_THRESHOLD);

    let transient = tone(&|t| if t < 0.5 { 1.0 - 0.9 * (t / 0.5) } else { 0.1 });
    let best = flatness_scan(&transient, SR as usize).unwrap().best_offset.unwrap_or(0);
    let after = best >= SR as usize / 2;
    verdict(
        (flat - 1.0).abs() <= 1e-9 && (flat_dc - 1.0).abs() <= 1e-9 && rejected && after,
        format!(
            "steady flatness {flat:.12} and DC {flat_dc:.12} (1 +- 1e-9), tau=0.3 s decay rejected {rejected}, window after 0.5 s transient starts at {:.3} s",
            best as f64 / SR as f64
        ),
    )
}

fn metric_identities() -> Verdict {
    let banks = common::banks(5, 4, 3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_identity, mut worst_sign, mut worst_ln2): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let triple = PresetTriple::new(rng.gen_range(0..5), rng.gen_range(0..4), rng.gen_range(0..3));
        let a = render_triple(&banks, triple).unwrap();
        for v in [mstft(&a, &a), multiscale_mel_loss(&a, &a), lrmsd(&a, &a), f0rmse(&a, &a)] {
            worst_identity = worst_identity.max(v.unwrap().abs());
        }
        worst_sign = worst_sign.max(mstft(&a, &a.scaled(-1.0)).unwrap().abs());
        let ca = log_rms_contour(&a, CONTOUR_FRAME, CONTOUR_HOP);
        let ch = log_rms_contour(&a.scaled(0.5), CONTOUR_FRAME, CONTOUR_HOP);
        let diffs: Vec<f64> = ca
            .log_rms
            .iter()
            .zip(&ch.log_rms)
            .filter(|(_, &h)| h > LOG_FLOOR.ln())
            .map(|(x, h)| x - h)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        worst_ln2 = worst_ln2.max((mean - LN_2).abs());
    }
    verdict(
        worst_identity <= 1e-9 && worst_sign <= 1e-9 && worst_ln2 <= 0.01,
        format!(
            "20 files: max metric(a,a) {worst_identity:.1e}, max mstft(a,-a) {worst_sign:.1e} (<= 1e-9), max |lrmsd(a,0.5a) - ln2| on above-floor frames {worst_ln2:.4} (<= 0.01)"
        ),
    )
}

fn pitch_fidelity() -> Verdict {
    let banks = common::banks(4, 4, 4, 6);
    let frame_s = CONTOUR_HOP as f64 / SR as f64;
    let (mut notes, mut worst_cents): (usize, f64) = (0, 0.0);
    for t in 0..4 {
        for e in 0..4 {
            let triple = PresetTriple::new(t, e, (t + e) % 4);
            let audio = render_triple(&banks, triple).unwrap();
            let track = estimate_f0(&audio, CONTOUR_HOP);
            let seq = banks.content(triple.content_id).unwrap();
            for (i, note) in seq.notes().iter().enumerate() {
                let end = seq.notes().get(i + 1).map_or(note.end_s(), |next| next.onset_s.min(note.end_s()));
                let lo = ((note.onset_s + 0.03) / frame_s).ceil() as usize;
                let hi = (((end - 0.03) / frame_s).floor() as usize + 1).min(track.len());
                let Some(median) = track.median_f0(lo..hi) else {
                    return Verdict::Fail(format!("{triple} note {i} has no voiced frames"));
                };
                notes += 1;
                worst_cents = worst_cents.max(common::cents(median, common::midi_hz(note.pitch_midi as f64)).abs());
            }
        }
    }
    let sine = AudioBuffer::from_fn(SR as usize, SR, |t| 0.5 * (2.0 * PI * 440.0 * t).sin());
    let track = estimate_f0(&sine, CONTOUR_HOP);
    let hz = track.median_f0(0..track.len()).unwrap_or(0.0);
    verdict(
        worst_cents <= 50.0 && (hz - 440.0).abs() <= 1.0,
        format!("{notes} notes, worst per-note median {worst_cents:.2} cents (<= 50), 440 Hz tone tracked at {hz:.3} Hz (+- 1)"),
    )
}

fn closed_world_exactness() -> Verdict {
    let banks = common::banks(4, 4, 3, 7);
    let dir = tempfile::tempdir().unwrap();
    let outcome = render_dataset(&banks, dir.path(), &RenderOptions::default()).unwrap();
    let (labeled, _) = make_splits(&outcome.manifest, 2, 1, 7).unwrap();
    let pairs = conversion_pairs(&labeled, 7, 7).unwrap();
    let world = ClosedWorld::new(dir.path(), outcome.manifest, banks);
    let (mut m, mut l, mut f): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let used = pairs.len().min(50);
    for p in &pairs[..used] {
        let out = convert_preset(&ConversionRequest::ClosedWorld {
            world: &world,
            source: p.source,
            reference: p.reference,
        })
        .unwrap();
        let truth = read_wav(dir.path().join(p.ground_truth.rel_path())).unwrap();
        m = m.max(mstft(&out, &truth).unwrap());
        l = l.max(lrmsd(&out, &truth).unwrap());
        f = f.max(f0rmse(&out, &truth).unwrap());
    }
    verdict(
        used == 50 && m < 1e-6 && l < 1e-6 && f < 0.5,
        format!("{used} pairs: max mstft {m:.1e} (< 1e-6), max lrmsd {l:.1e} (< 1e-6), max f0rmse {f:.3} Hz (< 0.5)"),
    )
}

fn oracle_ablation() -> Verdict {
    // 16 timbres x 15 held-out envelopes x 2 held-out contents = 480 test entries.
    let banks = common::banks(16, 16, 3, 7);
    let manifest: Manifest = common::product_manifest(16, 16, 3);
    let (labeled, _) = make_splits(&manifest, 15, 2, 7).unwrap();
    let pairs: Vec<_> = conversion_pairs(&labeled, 1, 7).unwrap().into_iter().take(200).collect();
    let audio = |t: PresetTriple| Encoding::Pcm16.quantize(&render_triple(&banks, t).unwrap());

    let mut needed: Vec<PresetTriple> = pairs.iter().flat_map(|p| [p.source, p.reference]).collect();
    needed.sort();
    needed.dedup();
    let cache: BTreeMap<PresetTriple, (AudioBuffer, Attributes)> = {
        use rayon::prelude::*;
        needed
            .par_iter()
            .map(|&t| {
                let a = audio(t);
                let attrs = analyze(&a).unwrap();
                (t, (a, attrs))
            })
            .collect()
    };

    let n = pairs.len();
    let (mut full_l, mut no_adsr_l, mut full_m, mut no_timbre_m) = (0.0, 0.0, 0.0, 0.0);
    let (mut wins_l, mut wins_m, mut beats_source) = (0, 0, 0);
    for p in &pairs {
        let (src_audio, src) = &cache[&p.source];
        let (_, reference) = &cache[&p.reference];
        let truth = audio(p.ground_truth);
        let full = synthesize(src, reference, reference).unwrap();
        let no_adsr = synthesize(src, reference, src).unwrap();
        let no_timbre = synthesize(src, src, reference).unwrap();
        let (fl, nl) = (lrmsd(&full, &truth).unwrap(), lrmsd(&no_adsr, &truth).unwrap());
        let (fm, nm) = (mstft(&full, &truth).unwrap(), mstft(&no_timbre, &truth).unwrap());
        full_l += fl;
        no_adsr_l += nl;
        full_m += fm;
        no_timbre_m += nm;
        wins_l += (fl < nl) as usize;
        wins_m += (fm < nm) as usize;
        beats_source += (fl < lrmsd(src_audio, &truth).unwrap()) as usize;
    }
    let nf = n as f64;
    let (rate_l, rate_m) = (wins_l as f64 / nf, wins_m as f64 / nf);
    verdict(
        n >= 200 && full_l < no_adsr_l && full_m < no_timbre_m && rate_l >= 0.9 && rate_m >= 0.9,
        format!(
            "{n} pairs ({} analyses): LRMSD full {:.3} < w/o ADSR {:.3}, wins {:.1}%; MSTFT full {:.3} < w/o timbre {:.3}, wins {:.1}% (>= 90%); beats source LRMSD on {:.1}%",
            cache.len(),
            full_l / nf,
            no_adsr_l / nf,
            100.0 * rate_l,
            full_m / nf,
            no_timbre_m / nf,
            100.0 * rate_m,
            100.0 * beats_source as f64 / nf
        ),
    )
}

fn triplet_invariants() -> Verdict {
    let manifest = common::product_manifest(5, 4, 3);
    let space = TripleSpace::from_manifest(&manifest);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut seen = HashSet::new();
    for i in 0..1000u64 {
        let anchor = manifest.entries[rng.gen_range(0..manifest.len())].triple;
        let t = sample_triplet(&space, anchor, &mut indexed_substream(9, "triplets", i)).unwrap();
        seen.insert(t);
        if !t.is_valid() || ![t.x_e, t.x_c, t.x_t].iter().all(|x| space.contains(x)) {
            violations += 1;
        }
    }
    verdict(violations == 0, format!("1000 triplets ({} distinct), {violations} violations (want 0)", seen.len()))
}

fn throughput() -> Verdict {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let banks = common::banks(10, 8, 5, 10);
    let time = |workers| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let out = render_dataset(
            &banks,
            dir.path(),
            &RenderOptions {
                workers,
                ..RenderOptions::default()
            },
        )
        .unwrap();
        assert_eq!(out.rendered, 400);
        start.elapsed().as_secs_f64()
    };
    let serial = time(1);
    let parallel = time(4);
    let ratio = parallel / serial;
    let detail = format!("10x8x5 render: 1 worker {serial:.1} s, 4 workers {parallel:.1} s, ratio {ratio:.2} (<= 0.40)");
    if cores < 4 {
        Verdict::Skip(format!("{detail}; needs >= 4 cores, this machine has {cores}, so the ratio is not meaningful"))
    } else {
        verdict(ratio <= 0.4, detail)
    }
}

fn main() {
    let mut tally = Tally {
        passed: 0,
        failed: 0,
        skipped: 0,
    };
    tally.run(1, "split arithmetic", secs(1), split_arithmetic);
    tally.run(2, "cartesian closure", secs(30), cartesian_closure);
    tally.run(3, "envelope oracle", secs(10), envelope_oracle);
    tally.run(4, "flatness gate", secs(5), flatness_gate);
    tally.run(5, "metric identities", secs(30), metric_identities);
    tally.run(6, "pitch fidelity", secs(30), pitch_fidelity);
    tally.run(7, "closed-world conversion exactness", secs(120), closed_world_exactness);
    tally.run(8, "oracle ablation ordering", secs(600), oracle_ablation);
    tally.run(9, "perturbation-triplet invariants", secs(10), triplet_invariants);
    tally.run(10, "render throughput scaling", None, throughput);
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        tally.passed, tally.failed, tally.skipped
    );
    if tally.failed > 0 {
        std::process::exit(1);
    }
}
