use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn synthcat(args: &[&str], dir: &Path) -> Output {
    synthcat_env(args, dir, None)
}

fn synthcat_env(args: &[&str], dir: &Path, seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_synthcat"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "warn").env_remove("SYNTHCAT_SEED");
    if let Some(s) = seed {
        cmd.env("SYNTHCAT_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn last_json(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().unwrap_or_else(|| panic!("no stdout; stderr: {}", String::from_utf8_lossy(&out.stderr)));
    serde_json::from_str(line).unwrap()
}

fn ok(out: Output) -> Value {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    last_json(&out)
}

fn small_config(dir: &Path) {
    fs::write(
        dir.join("run.toml"),
        "seed = 3\nworkers = 2\n[counts]\ntimbres = 3\nenvelopes = 3\ncontents = 3\n\
         [splits]\ntest_envelopes = 1\ntest_contents = 1\nn_refs = 2\ntriplets = 50\n",
    )
    .unwrap();
}

#[test]
fn render_dry_run_plans_sixty_jobs_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let plan = ok(synthcat(&["render", "--dry-run", "--out", "o"], dir.path()));
    assert_eq!(plan["jobs"], 60);
    assert_eq!(plan["dry_run"], true);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthcat(&["render", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("zero.toml"), "[counts]\ntimbres = 0\n").unwrap();
    assert_eq!(synthcat(&["--config", "zero.toml", "bank"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("typo.toml"), "workerz = 2\n").unwrap();
    assert_eq!(synthcat(&["--config", "typo.toml", "bank"], dir.path()).status.code(), Some(2));
    assert_eq!(synthcat_env(&["bank", "--dry-run"], dir.path(), Some("seven")).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_three_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthcat(&["--json-errors", "render", "--out", "empty"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "io");
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn bank_counts_flatness_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.toml"), "seed = 11\n[counts]\ntimbres = 5\nenvelopes = 4\ncontents = 2\n").unwrap();
    for out in ["a", "b"] {
        ok(synthcat(&["--config", "b.toml", "bank", "--out", out], dir.path()));
    }
    let bank = dir.path().join("a/bank");
    let wavs = fs::read_dir(bank.join("timbres"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
        .count();
    assert_eq!(wavs, 5);
    let envelopes = fs::read_to_string(bank.join("envelopes.jsonl")).unwrap();
    assert_eq!(envelopes.lines().count(), 4);
    for line in fs::read_to_string(bank.join("timbres/index.jsonl")).unwrap().lines() {
        let entry: Value = serde_json::from_str(line).unwrap();
        assert!(entry["flatness"].as_f64().unwrap() > 0.95);
    }
    for rel in ["timbres/timbre_0003.wav", "timbres/index.jsonl", "envelopes.jsonl", "contents/content_0001.mid"] {
        assert_eq!(
            fs::read(bank.join(rel)).unwrap(),
            fs::read(dir.path().join("b/bank").join(rel)).unwrap(),
            "{rel} differs between runs"
        );
    }
}

#[test]
fn seed_environment_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.toml"), "seed = 1\n[counts]\ntimbres = 1\nenvelopes = 3\ncontents = 1\n").unwrap();
    ok(synthcat_env(&["--config", "b.toml", "bank", "--out", "x"], dir.path(), None));
    ok(synthcat_env(&["--config", "b.toml", "bank", "--out", "y"], dir.path(), Some("2")));
    ok(synthcat_env(&["--config", "b.toml", "bank", "--out", "z"], dir.path(), Some("1")));
    let env = |d: &str| fs::read_to_string(dir.path().join(d).join("bank/envelopes.jsonl")).unwrap();
    assert_ne!(env("x"), env("y"));
    assert_eq!(env("x"), env("z"));
}

#[test]
fn pipeline_through_closed_world_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "run.toml"];
        full.extend_from_slice(args);
        ok(synthcat(&full, d))
    };
    run(&["bank", "--out", "o"]);
    let r = run(&["render", "--out", "o"]);
    assert_eq!((r["rendered"].as_u64(), r["entries"].as_u64()), (Some(27), Some(27)));
    let again = run(&["render", "--out", "o"]);
    assert_eq!((again["rendered"].as_u64(), again["skipped"].as_u64()), (Some(0), Some(27)));

    let s = run(&["splits", "--out", "o"]);
    assert_eq!(s["test"], 3);
    assert_eq!(s["train"], 12);
    assert!(d.join("o/dataset/manifest_splits.jsonl").exists());

    let t = run(&["triplets", "--out", "o"]);
    assert_eq!(t["count"], 50);
    assert_eq!(fs::read_to_string(d.join("o/triplets.jsonl")).unwrap().lines().count(), 50);

    let p = run(&["pairs", "--out", "o"]);
    assert_eq!(p["pairs"], 6);

    let e = run(&["eval", "--out", "o", "--mode", "closed-world"]);
    let mean = &e["summary"]["mean"];
    assert!(mean["mstft"].as_f64().unwrap() < 1e-6);
    assert!(mean["lrmsd"].as_f64().unwrap() < 1e-6);
    assert!(mean["f0rmse"].as_f64().unwrap() < 0.5);
    assert_eq!(e["summary"]["count"], 6);
    for f in ["rows.jsonl", "summary.json", "metrics.csv"] {
        assert!(d.join("o/eval").join(f).exists(), "{f}");
    }

    // Keeping the source envelope cannot be exact unless every pair shares it.
    let ablated = run(&["eval", "--out", "o", "--mode", "closed-world", "--no-adsr"]);
    assert!(ablated["summary"]["mean"]["lrmsd"].as_f64().unwrap() >= 0.0);

    // Single-file conversion agrees with the dataset file it must equal.
    let src = "o/dataset/t0000/e0000/c0000.wav";
    let reference = "o/dataset/t0002/e0001/c0001.wav";
    run(&["convert", "--source", src, "--reference", reference, "--out", "c.wav", "--mode", "closed-world", "--root", "o"]);
    assert_eq!(fs::read(d.join("c.wav")).unwrap(), fs::read(d.join("o/dataset/t0002/e0001/c0000.wav")).unwrap());

    let i = run(&["inspect", "--input", src, "--out", "o"]);
    let dump = fs::read_to_string(d.join("o/inspect/c0000.jsonl")).unwrap();
    assert_eq!(dump.lines().count() as u64, i["frames"].as_u64().unwrap() + 1);
    let summary: Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert_eq!(summary["kind"], "summary");
    assert!(!summary["notes"].as_array().unwrap().is_empty());
}

#[test]
fn oracle_convert_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    for args in [&["bank", "--out", "o"][..], &["render", "--out", "o"][..]] {
        let mut full = vec!["--config", "run.toml"];
        full.extend_from_slice(args);
        ok(synthcat(&full, d));
    }
    let src = "o/dataset/t0000/e0000/c0000.wav";
    let reference = "o/dataset/t0001/e0002/c0001.wav";
    for out in ["a.wav", "b.wav"] {
        ok(synthcat(&["convert", "--source", src, "--reference", reference, "--out", out], d));
    }
    assert_eq!(fs::read(d.join("a.wav")).unwrap(), fs::read(d.join("b.wav")).unwrap());
}
