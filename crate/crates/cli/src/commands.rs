use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use synthcat::analysis::{estimate_f0, log_rms_contour, CONTOUR_FRAME, CONTOUR_HOP};
use synthcat::audio::{read_wav, write_wav, AudioBuffer, Encoding};
use synthcat::convert::{analyze, partial_convert, synthesize, Attributes, ClosedWorld, ConversionRequest};
use synthcat::dataset::{
    conversion_pairs, make_splits, render_dataset, sample_triplet, Banks, ConversionPair, DatasetError, Manifest,
    PresetTriple, RenderOptions, Split, TripleSpace,
};
use synthcat::envelope::{sample_envelope_bank, write_envelope_bank};
use synthcat::metrics::{evaluate_pairs, write_csv, EvalPair, MetricReport};
use synthcat::seed::{indexed_substream, substream};
use synthcat::sequencer::{generate_content_bank, write_midi};
use synthcat::timbrebank::{build_timbre_bank, write_timbre_bank};

use crate::config::Layout;
use crate::{Ablation, CliError, Context, ConvertArgs, EvalArgs, InspectArgs, Mode, OutDir, PairArgs, TripletArgs};

type CliResult<T = ()> = Result<T, CliError>;

fn err(e: impl std::error::Error + 'static) -> CliError {
    CliError::from_error(&e)
}

fn dataset_err(e: DatasetError) -> CliError {
    match e {
        DatasetError::InvalidCounts(msg) => CliError::config(msg),
        other => err(other),
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

fn emit(value: &serde_json::Value) {
    println!("{value}");
}

fn pool(ctx: &Context) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.config.workers)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))
}

fn load_banks(layout: &Layout) -> CliResult<Banks> {
    Banks::load(&layout.timbre_bank, &layout.envelope_bank, &layout.content_dir).map_err(dataset_err)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> CliResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    let tmp = path.with_extension("jsonl.part");
    let mut out = BufWriter::new(fs::File::create(&tmp).map_err(io_at(&tmp))?);
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| CliError::io(e.to_string()))?;
        out.write_all(b"\n").map_err(io_at(&tmp))?;
    }
    out.flush().map_err(io_at(&tmp))?;
    drop(out);
    fs::rename(&tmp, path).map_err(io_at(path))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError {
                code: 1,
                kind: "failed",
                message: format!("{} line {}: {e}", path.display(), i + 1),
            })
        })
        .collect()
}

pub fn bank(ctx: &Context, out: &OutDir) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(out.out.as_deref());
    let plan = json!({
        "command": "bank",
        "seed": cfg.seed,
        "timbres": cfg.counts.timbres,
        "envelopes": cfg.counts.envelopes,
        "contents": cfg.counts.contents,
        "timbre_bank": layout.timbre_bank,
        "envelope_bank": layout.envelope_bank,
        "content_dir": layout.content_dir,
    });
    if ctx.dry_run {
        emit(&json!({"dry_run": true, "plan": plan}));
        return Ok(());
    }
    let shots = pool(ctx)?.install(|| build_timbre_bank(cfg.counts.timbres, cfg.seed, cfg.sample_rate)).map_err(err)?;
    log::info!("bank: {}/{} timbres admitted", shots.len(), cfg.counts.timbres);
    write_timbre_bank(&shots, &layout.timbre_bank).map_err(err)?;

    let envelopes = sample_envelope_bank(cfg.counts.envelopes, &mut substream(cfg.seed, "envelopes"));
    if let Some(dir) = layout.envelope_bank.parent() {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    write_envelope_bank(&envelopes, &layout.envelope_bank).map_err(err)?;

    fs::create_dir_all(&layout.content_dir).map_err(io_at(&layout.content_dir))?;
    for seq in generate_content_bank(cfg.counts.contents, cfg.seed) {
        write_midi(&seq, layout.content_dir.join(format!("content_{:04}.mid", seq.content_id))).map_err(err)?;
    }

    // Read everything back so a zero exit means the banks load.
    let banks = load_banks(&layout)?;
    let counts = (banks.timbres.len(), banks.envelopes.len(), banks.contents.len());
    if counts != (cfg.counts.timbres, cfg.counts.envelopes, cfg.counts.contents) {
        return Err(CliError::incomplete(format!("bank reloaded with counts {counts:?}")));
    }
    let min_flatness = banks.timbres.iter().map(|s| s.flatness).fold(f64::INFINITY, f64::min);
    emit(&json!({"plan": plan, "min_flatness": min_flatness}));
    Ok(())
}

pub fn render(ctx: &Context, out: &OutDir) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(out.out.as_deref());
    if ctx.dry_run {
        // Plan from the banks when they exist, otherwise from the config.
        let (t, e, c) = match load_banks(&layout) {
            Ok(b) => (b.timbres.len(), b.envelopes.len(), b.contents.len()),
            Err(_) => (cfg.counts.timbres, cfg.counts.envelopes, cfg.counts.contents),
        };
        log::info!("plan: render {} jobs ({t} timbres x {e} envelopes x {c} contents) into {}", t * e * c, layout.dataset.display());
        emit(&json!({
            "command": "render",
            "dry_run": true,
            "jobs": t * e * c,
            "workers": cfg.workers,
            "encoding": cfg.encoding,
            "out": layout.dataset,
        }));
        return Ok(());
    }
    let banks = load_banks(&layout)?;
    let opts = RenderOptions {
        workers: cfg.workers,
        encoding: cfg.encoding,
    };
    let outcome = render_dataset(&banks, &layout.dataset, &opts).map_err(dataset_err)?;
    let m = &outcome.manifest;
    emit(&json!({
        "command": "render",
        "rendered": outcome.rendered,
        "skipped": outcome.skipped,
        "failed": outcome.failed.len(),
        "entries": m.len(),
        "expected": m.header.expected,
        "manifest": layout.manifest,
    }));
    if !outcome.failed.is_empty() {
        return Err(CliError::incomplete(format!("{} renders failed", outcome.failed.len())));
    }
    if !m.is_bijective() || m.len() != m.header.expected {
        return Err(CliError::incomplete("manifest does not cover the bank product"));
    }
    Ok(())
}

pub fn splits(ctx: &Context, out: &OutDir) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(out.out.as_deref());
    let manifest = Manifest::read(&layout.manifest).map_err(dataset_err)?;
    let (labeled, plan) =
        make_splits(&manifest, cfg.splits.test_envelopes, cfg.splits.test_contents, cfg.seed).map_err(dataset_err)?;
    let count = |s| labeled.with_split(s).count();
    let summary = json!({
        "command": "splits",
        "train": count(Split::Train),
        "test": count(Split::Test),
        "excluded": count(Split::Excluded),
        "test_envelopes": plan.test_envelopes,
        "test_contents": plan.test_contents,
        "manifest": layout.split_manifest,
    });
    if ctx.dry_run {
        emit(&json!({"dry_run": true, "plan": summary}));
        return Ok(());
    }
    labeled.write(&layout.split_manifest).map_err(dataset_err)?;
    emit(&summary);
    Ok(())
}

/// The labeled manifest when `splits` has run, the raw one otherwise.
fn best_manifest(layout: &Layout) -> CliResult<Manifest> {
    if layout.split_manifest.exists() {
        Manifest::read(&layout.split_manifest).map_err(dataset_err)
    } else {
        log::warn!("{} not found; using the unlabeled manifest", layout.split_manifest.display());
        Manifest::read(&layout.manifest).map_err(dataset_err)
    }
}

pub fn triplets(ctx: &Context, args: &TripletArgs) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(args.out.out.as_deref());
    let manifest = best_manifest(&layout)?;
    let labeled = manifest.entries.iter().any(|e| e.split.is_some());
    let pool_entries: Vec<PresetTriple> = manifest
        .entries
        .iter()
        .filter(|e| !labeled || e.split == Some(Split::Train))
        .map(|e| e.triple)
        .collect();
    if pool_entries.is_empty() {
        return Err(CliError::incomplete("no entries to draw anchors from"));
    }
    let count = args.count.unwrap_or(cfg.splits.triplets);
    if ctx.dry_run {
        emit(&json!({"command": "triplets", "dry_run": true, "anchors": count, "space": pool_entries.len(), "out": layout.triplets}));
        return Ok(());
    }
    let space = TripleSpace::new(pool_entries.iter().copied());
    let mut anchor_rng = substream(cfg.seed, "triplet-anchors");
    let anchors: Vec<PresetTriple> =
        (0..count).map(|_| pool_entries[anchor_rng.gen_range(0..pool_entries.len())]).collect();
    let triplets = anchors
        .iter()
        .enumerate()
        .map(|(i, &a)| sample_triplet(&space, a, &mut indexed_substream(cfg.seed, "triplets", i as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(dataset_err)?;
    let violations = triplets
        .iter()
        .filter(|t| !t.is_valid() || ![t.x_e, t.x_c, t.x_t].iter().all(|x| space.contains(x)))
        .count();
    if violations > 0 {
        return Err(CliError::incomplete(format!("{violations} triplets violate the share/differ constraints")));
    }
    write_jsonl(&layout.triplets, &triplets)?;
    emit(&json!({"command": "triplets", "count": triplets.len(), "violations": 0, "out": layout.triplets}));
    Ok(())
}

/// One line of `pairs.jsonl`: the triples plus paths relative to the
/// dataset root.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct PairRecord {
    #[serde(flatten)]
    pub pair: ConversionPair,
    pub source_path: String,
    pub reference_path: String,
    pub ground_truth_path: String,
}

pub fn pairs(ctx: &Context, args: &PairArgs) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(args.out.out.as_deref());
    let manifest = Manifest::read(&layout.split_manifest).map_err(dataset_err)?;
    let n_refs = args.n_refs.unwrap_or(cfg.splits.n_refs);
    if n_refs == 0 {
        return Err(CliError::config("--n-refs must be at least 1"));
    }
    let pairs = conversion_pairs(&manifest, n_refs, cfg.seed).map_err(dataset_err)?;
    if ctx.dry_run {
        emit(&json!({"command": "pairs", "dry_run": true, "pairs": pairs.len(), "out": layout.pairs}));
        return Ok(());
    }
    let records = pairs.iter().map(|&pair| PairRecord {
        pair,
        source_path: pair.source.rel_path(),
        reference_path: pair.reference.rel_path(),
        ground_truth_path: pair.ground_truth.rel_path(),
    });
    write_jsonl(&layout.pairs, records)?;
    emit(&json!({"command": "pairs", "pairs": pairs.len(), "out": layout.pairs}));
    Ok(())
}

fn closed_world(layout: &Layout, dataset: &Path) -> CliResult<ClosedWorld> {
    let manifest = Manifest::read(&dataset.join("manifest.jsonl")).map_err(dataset_err)?;
    Ok(ClosedWorld::new(dataset, manifest, load_banks(layout)?))
}

fn write_output(buffer: &AudioBuffer, path: &Path, encoding: Encoding) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    write_wav(buffer, path, encoding).map_err(err)?;
    Ok(())
}

pub fn convert(ctx: &Context, args: &ConvertArgs) -> CliResult {
    let cfg = &ctx.config;
    let Ablation { no_timbre, no_adsr } = args.ablation;
    if ctx.dry_run {
        emit(&json!({
            "command": "convert",
            "dry_run": true,
            "mode": args.mode,
            "source": args.source,
            "reference": args.reference,
            "convert_timbre": !no_timbre,
            "convert_envelope": !no_adsr,
            "out": args.out,
        }));
        return Ok(());
    }
    let (output, encoding) = match args.mode {
        Mode::Oracle => {
            let source = read_wav(&args.source).map_err(err)?;
            let reference = read_wav(&args.reference).map_err(err)?;
            let req = ConversionRequest::Oracle {
                source: &source,
                reference: &reference,
            };
            (partial_convert(&req, !no_timbre, !no_adsr).map_err(err)?, cfg.encoding)
        }
        Mode::ClosedWorld => {
            let layout = cfg.layout(args.root.as_deref());
            let world = closed_world(&layout, &layout.dataset)?;
            let source = world.triple_for(&args.source).map_err(err)?;
            let reference = world.triple_for(&args.reference).map_err(err)?;
            let req = ConversionRequest::ClosedWorld {
                world: &world,
                source,
                reference,
            };
            let encoding = world.manifest().header.encoding;
            (partial_convert(&req, !no_timbre, !no_adsr).map_err(err)?, encoding)
        }
    };
    write_output(&output, &args.out, encoding)?;
    emit(&json!({
        "command": "convert",
        "mode": args.mode,
        "out": args.out,
        "duration_s": output.duration_s(),
    }));
    Ok(())
}

/// Analyses of every file the oracle needs, each computed once.
fn analyze_files(paths: &BTreeSet<String>, root: &Path) -> BTreeMap<String, Result<Attributes, String>> {
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = paths.len();
    paths
        .par_iter()
        .map(|rel| {
            let result = read_wav(root.join(rel))
                .map_err(|e| e.to_string())
                .and_then(|b| analyze(&b).map_err(|e| e.to_string()));
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if n % (total / 20).max(1) == 0 || n == total {
                log::info!("eval: analyzed {n}/{total}");
            }
            (rel.clone(), result)
        })
        .collect()
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> CliResult {
    let cfg = &ctx.config;
    let layout = cfg.layout(args.out.out.as_deref());
    let mut records: Vec<PairRecord> = read_jsonl(&layout.pairs)?;
    if let Some(limit) = args.limit {
        records.truncate(limit);
    }
    if records.is_empty() {
        return Err(CliError::incomplete("no pairs to evaluate"));
    }
    let Ablation { no_timbre, no_adsr } = args.ablation;
    let (take_timbre, take_envelope) = (!no_timbre, !no_adsr);
    let outputs_dir = layout.eval.join("outputs");
    if ctx.dry_run {
        emit(&json!({
            "command": "eval",
            "dry_run": true,
            "mode": args.mode,
            "pairs": records.len(),
            "convert_timbre": take_timbre,
            "convert_envelope": take_envelope,
            "out": layout.eval,
        }));
        return Ok(());
    }
    fs::create_dir_all(&outputs_dir).map_err(io_at(&outputs_dir))?;
    let dataset = layout.dataset.clone();
    let manifest = Manifest::read(&layout.manifest).map_err(dataset_err)?;
    let encoding = manifest.header.encoding;
    let output_path = |i: usize| outputs_dir.join(format!("{i:06}.wav"));
    let workers = pool(ctx)?;

    let conversions: Vec<Result<(), String>> = match args.mode {
        Mode::ClosedWorld => {
            let world = ClosedWorld::new(&dataset, manifest, load_banks(&layout)?);
            workers.install(|| {
                records
                    .par_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let req = ConversionRequest::ClosedWorld {
                            world: &world,
                            source: r.pair.source,
                            reference: r.pair.reference,
                        };
                        let out = partial_convert(&req, take_timbre, take_envelope).map_err(|e| e.to_string())?;
                        write_wav(&out, output_path(i), encoding).map(|_| ()).map_err(|e| e.to_string())
                    })
                    .collect()
            })
        }
        Mode::Oracle => {
            let mut needed: BTreeSet<String> = records.iter().map(|r| r.source_path.clone()).collect();
            if take_timbre || take_envelope {
                needed.extend(records.iter().map(|r| r.reference_path.clone()));
            }
            let attrs = workers.install(|| analyze_files(&needed, &dataset));
            workers.install(|| {
                records
                    .par_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let get = |p: &String| attrs[p].as_ref().map_err(|e| format!("{p}: {e}"));
                        let src = get(&r.source_path)?;
                        let reference = if take_timbre || take_envelope { get(&r.reference_path)? } else { src };
                        let pick = |take: bool| if take { reference } else { src };
                        let out = synthesize(src, pick(take_timbre), pick(take_envelope)).map_err(|e| e.to_string())?;
                        write_wav(&out, output_path(i), encoding).map(|_| ()).map_err(|e| e.to_string())
                    })
                    .collect()
            })
        }
    };

    let eval_pairs: Vec<EvalPair> = records
        .iter()
        .enumerate()
        .map(|(i, r)| EvalPair {
            output: output_path(i),
            ground_truth: dataset.join(&r.ground_truth_path),
        })
        .collect();
    let scored = workers.install(|| evaluate_pairs(&eval_pairs, None)).map_err(err)?;
    // Conversion failures replace the missing-file errors they cause.
    let rows = scored
        .rows
        .into_iter()
        .zip(&conversions)
        .map(|(mut row, conv)| {
            if let Err(e) = conv {
                row.metrics = None;
                row.error = Some(format!("conversion failed: {e}"));
            }
            row
        })
        .collect();
    let report = MetricReport::from_rows(rows);
    report.write(&layout.eval).map_err(err)?;
    write_csv(&report, &layout.eval.join("metrics.csv")).map_err(err)?;
    emit(&json!({
        "command": "eval",
        "mode": args.mode,
        "convert_timbre": take_timbre,
        "convert_envelope": take_envelope,
        "summary": report.aggregate,
        "out": layout.eval,
    }));
    if report.aggregate.failed > 0 {
        return Err(CliError::incomplete(format!("{} of {} pairs failed", report.aggregate.failed, records.len())));
    }
    Ok(())
}

pub fn inspect(ctx: &Context, args: &InspectArgs) -> CliResult {
    let target: Option<PathBuf> = args.out.as_ref().map(|root| {
        let stem = args.input.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
        root.join("inspect").join(format!("{stem}.jsonl"))
    });
    if ctx.dry_run {
        emit(&json!({"command": "inspect", "dry_run": true, "input": args.input, "out": target}));
        return Ok(());
    }
    let buffer = read_wav(&args.input).map_err(err)?;
    let track = estimate_f0(&buffer, CONTOUR_HOP);
    let contour = log_rms_contour(&buffer, CONTOUR_FRAME, CONTOUR_HOP);
    let attributes = analyze(&buffer);
    let mut lines = Vec::with_capacity(contour.len() + 1);
    let mut summary = json!({
        "kind": "summary",
        "input": args.input,
        "sample_rate": buffer.sample_rate(),
        "duration_s": buffer.duration_s(),
        "frames": contour.len(),
        "hop": CONTOUR_HOP,
        "voiced_frames": track.voiced_count(),
    });
    match &attributes {
        Ok(a) => {
            summary["notes"] = json!(a.notes);
            summary["envelope"] = json!(a.envelope);
            summary["level"] = json!(a.level);
            summary["pitch_midi"] = json!(a.pitch_midi);
            summary["mel_profile"] = json!(a.profile.mel_envelope);
        }
        Err(e) => summary["analysis_error"] = json!(e.to_string()),
    }
    lines.push(summary);
    for t in 0..contour.len().max(track.len()) {
        lines.push(json!({
            "kind": "frame",
            "frame": t,
            "time_s": (t * CONTOUR_HOP) as f64 / buffer.sample_rate() as f64,
            "log_rms": contour.log_rms.get(t),
            "f0_hz": track.f0_hz.get(t),
            "voicing": track.voicing.get(t),
        }));
    }
    match target {
        Some(path) => {
            write_jsonl(&path, &lines)?;
            emit(&json!({"command": "inspect", "frames": lines.len() - 1, "out": path}));
        }
        None => {
            let mut out = BufWriter::new(std::io::stdout().lock());
            let written = lines.iter().try_for_each(|line| writeln!(out, "{line}")).and_then(|_| out.flush());
            match written {
                // A closed pipe (`| head`) is not a failure.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(CliError::io(e.to_string())),
                _ => {}
            }
        }
    }
    Ok(())
}
