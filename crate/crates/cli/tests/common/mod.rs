#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Two noisy classes over `f` features; the first half of the features
/// separates them more strongly. Label 1 on every third row.
pub fn write_toy(dir: &Path, n: usize, f: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut text = String::from("id");
    for j in 0..f {
        text += &format!(",f{j}");
    }
    text += ",label\n";
    for i in 0..n {
        let c = u8::from(i % 3 == 0);
        let s = 2.0 * f64::from(c) - 1.0;
        text += &format!("t{i:04}");
        for j in 0..f {
            let w = if j < f / 2 { 1.5 } else { 0.6 };
            text += &format!(",{:.6}", 10.0 + w * s + rng.random_range(-1.0..1.0));
        }
        text += &format!(",{c}\n");
    }
    let p = dir.join("toy.csv");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p
}

/// Runs the binary; panics with its stderr on failure.
pub fn fedfhe(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_fedfhe")).args(args).output().unwrap();
    assert!(out.status.success(), "fedfhe {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn fedfhe_err(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_fedfhe")).args(args).output().unwrap();
    assert!(!out.status.success(), "fedfhe {args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}
