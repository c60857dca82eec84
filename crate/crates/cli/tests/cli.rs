use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const VALID: &str = r#"{
    "label": "demo",
    "algorithm": "dpd_oc",
    "graph": { "kind": "ring", "n": 6 },
    "compressor": { "kind": "topk", "k": 2 },
    "objective": { "kind": "random_least_squares", "d": 4 },
    "steps": { "kappa0": 1.0 },
    "max_rounds": 20000,
    "target_accuracy": 1e-6,
    "seed": 3
}"#;

fn stcomp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcomp"))
        .args(args)
        .current_dir(dir)
        .env_remove("STCOMP_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn workspace(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("config.json"), config).unwrap();
    dir
}

#[test]
fn valid_config_writes_trace_and_record() {
    let dir = workspace(VALID);
    let out = stcomp(
        dir.path(),
        &["run", "--config", "config.json", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    let trace = fs::read_to_string(dir.path().join("o/demo.trace.csv")).unwrap();
    assert!(trace.starts_with("round,suboptimality,consensus_error,cumulative_bytes\n"));
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/demo.run.json")).unwrap())
            .unwrap();
    assert_eq!(record["outcome"]["status"], "converged");
    assert_eq!(record["bytes_per_iter"], 16);
    assert_eq!(fs::read_dir(dir.path().join("o")).unwrap().count(), 2);
}

#[test]
fn non_positive_alpha_is_a_config_error() {
    let dir = workspace(&VALID.replace(r#""kappa0": 1.0"#, r#""kappa0": 1.0, "alpha": 0.0"#));
    let out = stcomp(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("steps.alpha"), "{}", text(&out));
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let dir = workspace(&VALID.replace(r#""kappa0": 1.0"#, r#""kappa0": 1.0, "gain": 2"#));
    let out = stcomp(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("steps"), "{}", text(&out));
    assert!(text(&out).contains("gain"), "{}", text(&out));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = stcomp(dir.path(), &["run", "--config", "absent.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = workspace(VALID);
    for o in ["a", "b"] {
        let out = stcomp(dir.path(), &["run", "--config", "config.json", "--out", o]);
        assert_eq!(code(&out), 0);
    }
    for file in ["demo.trace.csv", "demo.run.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = workspace(VALID);
    let out = stcomp(
        dir.path(),
        &[
            "run",
            "--config",
            "config.json",
            "--max-rounds",
            "40",
            "--accuracy",
            "1e-30",
            "--seed",
            "9",
        ],
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("demo.run.json")).unwrap())
            .unwrap();
    assert_eq!(record["outcome"]["status"], "exhausted");
    assert_eq!(record["config"]["seed"], 9);
    let trace = fs::read_to_string(dir.path().join("demo.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 42);
}

#[test]
fn divergence_exits_nonzero_and_keeps_the_partial_trace() {
    let config = VALID
        .replace(r#""kappa0": 1.0"#, r#""kappa": 1e6, "kappa0": 1.0"#)
        .replace("20000", "500");
    let dir = workspace(&config);
    let out = stcomp(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 1, "{}", text(&out));
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("demo.run.json")).unwrap())
            .unwrap();
    assert_eq!(record["outcome"]["status"], "diverged");
    let trace = fs::read_to_string(dir.path().join("demo.trace.csv")).unwrap();
    let rows = trace.lines().count() - 1;
    assert!((1..501).contains(&rows), "{rows} rows");
}

#[test]
fn direct_compression_gate() {
    let config = VALID.replace("dpd_oc", "dpd_dc");
    let dir = workspace(&config);
    let refused = stcomp(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&refused), 2);
    assert!(
        text(&refused).contains("--allow-unverified-delta"),
        "{}",
        text(&refused)
    );
    let allowed = stcomp(
        dir.path(),
        &[
            "run",
            "--config",
            "config.json",
            "--allow-unverified-delta",
            "--max-rounds",
            "50",
        ],
    );
    assert_eq!(code(&allowed), 0, "{}", text(&allowed));
    assert!(text(&allowed).contains("δ̂"), "{}", text(&allowed));
}

#[test]
fn certify_identity_beyond_two_fails() {
    let dir = TempDir::new().unwrap();
    let out = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"identity"}"#,
            "--kappa0",
            "3",
        ],
    );
    assert_eq!(code(&out), 1, "{}", text(&out));
}

#[test]
fn certify_uniform_quantizer_at_its_default_step() {
    let dir = TempDir::new().unwrap();
    let out = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"uniform_quantizer"}"#,
            "--out",
            "c",
        ],
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("c/uniform_quantizer.certify.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["kappa0"], 0.4);
    assert_eq!(report["induced_decay"]["violations"], 0);
}

#[test]
fn certify_checks_the_scaled_floor_range() {
    let dir = TempDir::new().unwrap();
    let bad = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"scaled_floor","gamma":0.2}"#,
        ],
    );
    assert_eq!(code(&bad), 2);
    assert!(text(&bad).contains("compressor.gamma"));
    let good = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"scaled_floor","gamma":0.5}"#,
        ],
    );
    assert_eq!(code(&good), 0, "{}", text(&good));
}

#[test]
fn certify_stochastic_needs_a_seed() {
    let dir = TempDir::new().unwrap();
    let out = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"unbiased_lbits","bits":4}"#,
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("compressor.seed"));
}

#[test]
fn certify_optional_checks() {
    let dir = TempDir::new().unwrap();
    let ok = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"topk","k":2}"#,
            "--contraction",
            "--samples",
            "5000",
        ],
    );
    assert_eq!(code(&ok), 0, "{}", text(&ok));
    let not_excited = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"scalarization"}"#,
            "--pe-window",
            "1",
        ],
    );
    assert_eq!(code(&not_excited), 1, "{}", text(&not_excited));
    let delta = stcomp(
        dir.path(),
        &[
            "certify",
            "--compressor",
            r#"{"kind":"topk","k":1}"#,
            "--delta",
            "--samples",
            "500",
        ],
    );
    assert_eq!(code(&delta), 0, "{}", text(&delta));
    assert!(text(&delta).contains("δ̂"));
}

#[test]
fn table1_preset_writes_its_summary() {
    let dir = TempDir::new().unwrap();
    let out = stcomp(dir.path(), &["preset", "table1", "--out", "t"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let csv = fs::read_to_string(dir.path().join("t/table1.summary.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    let bytes: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(bytes, ["40", "8", "16", "9", "20"]);
    let totals: Vec<u64> = rows
        .iter()
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(totals[1..].iter().all(|t| *t < totals[0]));
}

#[test]
fn config_naming_a_preset_runs_it() {
    let dir = workspace(r#"{ "preset": "convex_rosenbrock" }"#);
    let out = stcomp(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert!(dir.path().join("convex_rosenbrock.trace.csv").exists());
}

#[test]
fn sweep_runs_every_variant() {
    let dir = workspace(VALID);
    fs::write(
        dir.path().join("variants.json"),
        r#"[{ "steps": { "kappa": 0.03 } }, { "label": "scalar", "compressor": { "kind": "scalarization", "k": null } }]"#,
    )
    .unwrap();
    let out = stcomp(
        dir.path(),
        &[
            "sweep",
            "--config",
            "config.json",
            "--variants",
            "variants.json",
            "--out",
            "s",
            "--jobs",
            "2",
        ],
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    for file in [
        "demo_0.trace.csv",
        "demo_0.run.json",
        "scalar.trace.csv",
        "scalar.run.json",
        "demo.sweep.csv",
    ] {
        assert!(dir.path().join("s").join(file).exists(), "{file}");
    }
    let summary = fs::read_to_string(dir.path().join("s/demo.sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn sweep_rejects_bad_variants() {
    let dir = workspace(VALID);
    fs::write(
        dir.path().join("dup.json"),
        r#"[{ "label": "x" }, { "label": "x" }]"#,
    )
    .unwrap();
    let dup = stcomp(
        dir.path(),
        &["sweep", "--config", "config.json", "--variants", "dup.json"],
    );
    assert_eq!(code(&dup), 2);
    fs::write(
        dir.path().join("bad.json"),
        r#"[{ "steps": { "beta": -1 } }]"#,
    )
    .unwrap();
    let bad = stcomp(
        dir.path(),
        &["sweep", "--config", "config.json", "--variants", "bad.json"],
    );
    assert_eq!(code(&bad), 2);
    assert!(text(&bad).contains("steps.beta"), "{}", text(&bad));
}
