use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pinlab_cli::config::schema_json;
use pinlab_cli::record::{Cell, Table};
use pinlab_cli::{emit_report, execute_with_workers, run, write_outputs, CliError, ExperimentConfig, ResultRecord, RunOptions};
use tempfile::TempDir;

fn pinlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinlab"))
        .args(args)
        .env_remove("PINLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.display().to_string()
}

fn read_record(dir: &Path) -> ResultRecord {
    serde_json::from_str(&fs::read_to_string(dir.join("record.json")).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

const SWEEP: &str = r#"{
  "command": "sweep",
  "alpha": 1.5,
  "tilde_alpha": 1.5,
  "beta": 1.0,
  "size": 256,
  "replicas": 8,
  "seed": 17,
  "h_grid": {"min": 0.02, "max": 0.5, "points": 5}
}"#;

#[test]
fn repeated_runs_write_identical_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--quiet", "--workers", "2"]);
        assert!(o.status.code().is_some_and(|c| c <= 1), "{o:?}");
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.iter().any(|(n, _)| n == "free_energy.csv"));
    assert_eq!(fa, fb);
    for (_, bytes) in &fa {
        assert!(!bytes.contains(&b'\r'));
        assert!(bytes.ends_with(b"\n"));
    }
    let header = String::from_utf8(fa.iter().find(|(n, _)| n == "free_energy.csv").unwrap().1.clone()).unwrap();
    assert!(header.starts_with("h,mean,stderr,N,R,seed\n"));
    assert_eq!(header.lines().count(), 6);
}

#[test]
fn excluded_exponent_is_a_config_error_naming_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"command": "partition", "alpha": 1}"#);
    let o = pinlab(&["--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`alpha`"), "{err}");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_keys_and_checks_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"command": "verify", "bogus": 3}"#);
    let o = pinlab(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let cfg = write_config(tmp.path(), r#"{"command": "partition", "size": 10}"#);
    let out = tmp.path().join("o");
    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--check", "no_such_check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`check`"));
}

#[test]
fn verify_suite_passes_and_reports_margins() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"command": "verify", "seed": 3}"#);
    let out = tmp.path().join("o");
    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let record = read_record(&out);
    assert!(record.passed);
    assert!(record.checks.len() >= 12);
    for c in &record.checks {
        assert!(c.passed && c.margin.is_some(), "{c:?}");
    }
    assert!(out.join("report.md").exists());
}

#[test]
fn interrupted_sweep_resumes_to_the_same_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let full = tmp.path().join("full");
    let resumed = tmp.path().join("resumed");
    let args = |out: &Path| {
        vec![
            "--config".to_string(),
            cfg.clone(),
            "--out".to_string(),
            out.display().to_string(),
            "--quiet".to_string(),
        ]
    };
    let run_with = |extra: &[&str], out: &Path| {
        let mut a = args(out);
        a.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        pinlab(&refs)
    };

    let o = run_with(&[], &full);
    assert!(o.status.code().is_some_and(|c| c <= 1));

    let o = run_with(&["--stop-after", "2"], &resumed);
    assert_eq!(o.status.code(), Some(4));
    let partial = fs::read_to_string(resumed.join("free_energy.csv")).unwrap();
    assert_eq!(partial.lines().count(), 3);
    assert!(!resumed.join("record.json").exists());

    let o = run_with(&["--stop-after", "1"], &resumed);
    assert_eq!(o.status.code(), Some(4));
    let o = run_with(&[], &resumed);
    assert!(o.status.code().is_some_and(|c| c <= 1));

    assert_eq!(csv_files(&full), csv_files(&resumed));
    let record = read_record(&resumed);
    assert_eq!(record.scalars["resumed_points"], 3.0);
}

#[test]
fn manifest_from_another_configuration_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let out = tmp.path().join("o");
    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--quiet", "--stop-after", "1"]);
    assert_eq!(o.status.code(), Some(4));
    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--quiet", "--seed", "18"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_replica_values() {
    let config = ExperimentConfig::from_json(SWEEP).unwrap();
    let tmp = TempDir::new().unwrap();
    let records: Vec<ResultRecord> = [1, 8]
        .iter()
        .map(|&w| {
            let opts = RunOptions {
                out_dir: tmp.path().join(format!("w{w}")),
                quiet: true,
                ..Default::default()
            };
            execute_with_workers(&config, &opts, w).unwrap()
        })
        .collect();
    let replicas = |r: &ResultRecord| -> Vec<u64> {
        let t = r.outputs.iter().find(|t| t.name == "replicas").unwrap();
        t.rows
            .iter()
            .map(|row| match row[3] {
                Cell::Real(v) => v.to_bits(),
                _ => panic!("log Z column"),
            })
            .collect()
    };
    assert_eq!(replicas(&records[0]).len(), 40);
    assert_eq!(replicas(&records[0]), replicas(&records[1]));
    assert_eq!(records[0].outputs, records[1].outputs);
}

#[test]
fn zero_disorder_sweep_is_the_homogeneous_curve() {
    let config = ExperimentConfig::from_json(
        r#"{"command": "sweep", "beta": 0, "size": 512, "replicas": 4,
            "h_grid": {"min": 0.01, "max": 0.3, "points": 4}}"#,
    )
    .unwrap();
    let tmp = TempDir::new().unwrap();
    let opts = RunOptions {
        out_dir: tmp.path().to_path_buf(),
        quiet: true,
        ..Default::default()
    };
    let record = run(&config, &opts).unwrap();
    let check = record
        .checks
        .iter()
        .find(|c| c.name == "homogeneous_reduction")
        .unwrap();
    assert!(check.passed);
    assert_eq!(check.measured, Some(0.0));
}

#[test]
fn check_selection_decides_the_exit_status() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"command": "renewal-check", "size": 200, "replicas": 20, "seed": 1}"#,
    );
    let out = tmp.path().join("o");
    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    let record = read_record(&out);
    let all_pass = record.checks.iter().all(|c| c.passed);
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 1 }));

    let o = pinlab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--check", "mean_contact_scaling"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let record = read_record(&out);
    assert!(record.checks.iter().filter(|c| !c.enabled).count() >= 2);
}

#[test]
fn report_merges_records_failing_first() {
    let tmp = TempDir::new().unwrap();
    let good = tmp.path().join("good");
    let cfg = write_config(tmp.path(), r#"{"command": "partition", "size": 10, "h": 0.3}"#);
    assert_eq!(pinlab(&["--config", &cfg, "--out", good.to_str().unwrap()]).status.code(), Some(0));
    let bad = tmp.path().join("bad");
    let cfg = write_config(
        tmp.path(),
        r#"{"command": "tail-fit", "alpha": 0.5, "size": 256, "replicas": 2, "a_window": [2, 20],
            "tolerances": {"tail_mass": 1.5}}"#,
    );
    assert_eq!(pinlab(&["--config", &cfg, "--out", bad.to_str().unwrap(), "--quiet"]).status.code(), Some(1));

    let merged = tmp.path().join("merged");
    let o = pinlab(&[
        "--report",
        good.join("record.json").to_str().unwrap(),
        bad.join("record.json").to_str().unwrap(),
        "--out",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = fs::read_to_string(merged.join("report.md")).unwrap();
    assert!(text.contains("Overall status: FAIL"));
    let tight = text.find("## Tightness of the contact number").unwrap();
    let pinned = text.find("## Pinned versus free partition function").unwrap();
    assert!(tight < pinned);
    assert!(text.contains("```csv\na,probability\n"));
}

#[test]
fn empty_report_has_zero_sections() {
    let o = pinlab(&["--report"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# pinlab report"));
    assert!(!text.contains("## "));
    assert_eq!(text, emit_report(&[]));
}

#[test]
fn non_finite_tables_abort() {
    let config = ExperimentConfig::from_json(r#"{"command": "verify"}"#).unwrap();
    let mut record = ResultRecord::new(&config);
    let mut t = Table::new("bad", &["x"]);
    t.push(vec![Cell::Real(f64::INFINITY)]);
    record.outputs.push(t);
    let tmp = TempDir::new().unwrap();
    let err = write_outputs(&record, tmp.path()).unwrap_err();
    assert!(matches!(err, CliError::NonFinite { .. }));
    assert_eq!(err.exit_code(), 3);
    assert!(!tmp.path().join("record.json").exists());
}

#[test]
fn published_schema_matches_the_config_type() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/config.schema.json");
    assert_eq!(fs::read_to_string(path).unwrap(), schema_json());
    let o = pinlab(&["--print-schema"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), schema_json());
}

#[test]
fn oversized_systems_are_refused() {
    let err = ExperimentConfig::from_json(r#"{"command": "free-energy", "size": 131072}"#).unwrap_err();
    assert_eq!(err.key(), Some("size"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"command": "env-gen", "size": 300, "seed": 1}"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pinlab(&["--config", &cfg, "--out", a.to_str().unwrap()]);
    pinlab(&["--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(read_record(&b).config.seed, 2);
    assert_ne!(fs::read(a.join("stretches.csv")).unwrap(), fs::read(b.join("stretches.csv")).unwrap());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
}
