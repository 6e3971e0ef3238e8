//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub const GRID: &[&str] = &["--set", "grid.nx1=21", "--set", "grid.nt=21"];

/// Golden runs: directory name and arguments (before `--out`).
pub const GOLDEN_RUNS: &[(&str, &[&str])] = &[
    ("forward", &["forward", "--scenario", "s1"]),
    ("verify-carleman", &["verify-carleman", "--scenario", "s1", "--operator", "backward"]),
    ("reconstruct", &["reconstruct", "--scenario", "s1", "--delta", "0.01", "--seed", "3"]),
    ("uniqueness-check", &["uniqueness-check", "--scenario", "s1"]),
    ("stability-sweep", &["stability-sweep", "--scenario", "s1", "--deltas", "0.01,0.001"]),
];

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn with_grid<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(GRID).copied().collect()
}

/// Runs `mfglab <args> --out <out>` in process and returns the exit code.
pub fn mfglab(args: &[&str], out: &Path) -> i32 {
    let mut all: Vec<String> = vec!["mfglab".into()];
    all.extend(args.iter().map(|s| s.to_string()));
    all.push("--out".into());
    all.push(out.display().to_string());
    mfglab::run(all)
}

pub fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

/// Byte-wise comparison of every file in two directories.
pub fn same_files(a: &Path, b: &Path) -> Result<(), String> {
    let (fa, fb) = (files(a), files(b));
    if fa != fb {
        return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
    }
    for f in fa {
        if fs::read(a.join(&f)).unwrap() != fs::read(b.join(&f)).unwrap() {
            return Err(format!("{f} differs"));
        }
    }
    Ok(())
}

/// Runs one golden case into `scratch` and compares with (or, under
/// `MFGLAB_BLESS`, rewrites) the stored files.
pub fn check_golden(name: &str, args: &[&str], scratch: &Path) -> Result<(), String> {
    let out = scratch.join(name);
    let code = mfglab(&with_grid(args), &out);
    if code != 0 {
        return Err(format!("{name}: exit code {code}"));
    }
    let gold = golden_dir().join(name);
    if std::env::var_os("MFGLAB_BLESS").is_some() {
        let _ = fs::remove_dir_all(&gold);
        fs::create_dir_all(&gold).unwrap();
        for f in files(&out) {
            fs::copy(out.join(&f), gold.join(&f)).unwrap();
        }
        return Ok(());
    }
    same_files(&out, &gold).map_err(|e| format!("{name}: {e}; rerun with MFGLAB_BLESS=1 if intended"))
}
