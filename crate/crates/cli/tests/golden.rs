//! Golden-file and exit-code tests of the `mfglab` binary.
//!
//! Set `MFGLAB_BLESS=1` to rewrite the files under `tests/golden/`.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::{check_golden, files, mfglab, with_grid, GOLDEN_RUNS};

#[test]
fn every_golden_run_matches() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, args) in GOLDEN_RUNS {
        check_golden(name, args, tmp.path()).unwrap();
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = with_grid(&["reconstruct", "--scenario", "s1", "--delta", "0.001", "--seed", "11"]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(mfglab(&args, &a), 0);
    assert_eq!(mfglab(&args, &b), 0);
    for f in files(&a) {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_hashes_match_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fwd");
    assert_eq!(mfglab(&with_grid(&["forward", "--scenario", "s2"]), &out), 0);
    let m: mfglab::Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.scenario, "s2");
    assert_eq!(m.config_hash, mfglab::sha256_hex(m.config.as_bytes()));
    for o in &m.outputs {
        assert_eq!(o.sha256, mfglab::sha256_hex(&fs::read(out.join(&o.file)).unwrap()), "{}", o.file);
    }
}

#[test]
fn negative_control_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let args = with_grid(&["uniqueness-check", "--scenario", "s1", "--inject-noise", "0.3"]);
    assert_eq!(mfglab(&args, &tmp.path().join("neg")), 1);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(mfglab(&["forward", "--scenario", "s9"], &out), 2);
    assert_eq!(mfglab(&["forward", "--set", "grid.nt=abc"], &out), 2);
    assert_eq!(mfglab(&["forward", "--set", "no.such.key=1"], &out), 2);
    assert_eq!(mfglab(&["verify-carleman", "--operator", "sideways"], &out), 2);
    assert_eq!(mfglab(&["reconstruct", "--delta", "-1"], &out), 2);
    assert_eq!(mfglab(&["frobnicate"], &out), 2);
    assert!(!out.exists());
}

#[test]
fn report_collects_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    assert_eq!(mfglab(&with_grid(&["forward", "--scenario", "s1"]), &runs.join("f")), 0);
    assert_eq!(mfglab(&with_grid(&["verify-carleman", "--scenario", "s1"]), &runs.join("c")), 0);
    let code = mfglab::run(["mfglab", "report", "--runs", runs.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(runs.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("c,verify-carleman,s1,"));
}

#[test]
fn output_root_env_prefixes_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mfglab"))
        .args(with_grid(&["verify-carleman", "--scenario", "s1", "--out", "rel/c"]))
        .env(mfglab::OUTPUT_ROOT_ENV, tmp.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(tmp.path().join("rel/c/manifest.json").is_file());
}

#[test]
fn data_file_round_trips_through_reconstruct() {
    let tmp = tempfile::tempdir().unwrap();
    let fwd = tmp.path().join("fwd");
    assert_eq!(mfglab(&with_grid(&["forward", "--scenario", "s1"]), &fwd), 0);
    let from_default = tmp.path().join("a");
    let from_csv = tmp.path().join("b");
    let from_json = tmp.path().join("c");
    assert_eq!(mfglab(&with_grid(&["uniqueness-check", "--scenario", "s1"]), &from_default), 0);
    let csv = fwd.join("cauchy.csv").display().to_string();
    let json = fwd.join("cauchy.json").display().to_string();
    assert_eq!(mfglab(&with_grid(&["reconstruct", "--scenario", "s1", "--data", &csv]), &from_csv), 0);
    assert_eq!(mfglab(&with_grid(&["reconstruct", "--scenario", "s1", "--data", &json]), &from_json), 0);
    let fields = |d: &Path| fs::read(d.join("fields.csv")).unwrap();
    assert_eq!(fields(&from_csv), fields(&from_json));
    assert_eq!(fields(&from_csv), fields(&from_default));
}
