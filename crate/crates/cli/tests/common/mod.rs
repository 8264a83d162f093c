#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sphx_core::{GroundTruthLabels, HighDimImage};

pub fn sphx() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sphx"));
    cmd.env_remove("SPHX_TEST_MODE").env_remove("SPHX_THREADS");
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("sphx runs");
    assert!(
        out.status.success(),
        "sphx failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn lcg(state: &mut u64) -> f32 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (*state >> 40) as f32 / (1u64 << 24) as f32
}

/// A 2x2 grid of blocks with distinct spectra and small noise, plus its
/// block ground truth (ids 1..=4).
pub fn blocky(width: usize, height: usize, channels: usize, seed: u64) -> (HighDimImage, GroundTruthLabels) {
    let mut s = seed.wrapping_add(17);
    let spectra: Vec<f32> = (0..4 * channels).map(|_| lcg(&mut s)).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let b = (y * 2 / height) * 2 + x * 2 / width;
            labels.push(b as u32 + 1);
            for c in 0..channels {
                values.push(spectra[b * channels + c] + 0.05 * lcg(&mut s));
            }
        }
    }
    (
        HighDimImage::new(width, height, channels, values).unwrap(),
        GroundTruthLabels::new(width, height, labels).unwrap(),
    )
}

/// Default hierarchy flags not overridden by `extra`.
fn with_defaults(extra: &[&str]) -> Vec<String> {
    let defaults = [
        ("--perplexity", "10"),
        ("--walks", "20"),
        ("--steps", "10"),
        ("--seed", "1"),
    ];
    defaults
        .iter()
        .filter(|(flag, _)| !extra.contains(flag))
        .flat_map(|(flag, value)| [flag.to_string(), value.to_string()])
        .collect()
}

/// Writes a blocky image and ground truth into `dir` and builds a run in
/// `dir/run` with `extra` hierarchy flags.
pub fn build_run(dir: &Path, width: usize, height: usize, extra: &[&str]) -> PathBuf {
    let (img, gt) = blocky(width, height, 5, 3);
    img.save(&dir.join("img")).unwrap();
    gt.save(&dir.join("gt")).unwrap();
    let run_dir = dir.join("run");
    run(sphx()
        .arg("hierarchy")
        .arg("--input")
        .arg(dir.join("img"))
        .arg("--gt")
        .arg(dir.join("gt"))
        .arg("--output")
        .arg(&run_dir)
        .args(with_defaults(extra))
        .args(extra));
    run_dir
}

pub fn embed(run_dir: &Path, extra: &[&str]) {
    run(sphx()
        .arg("embed")
        .arg("--run")
        .arg(run_dir)
        .args(["--iterations", "150", "--seed", "4"])
        .args(extra));
}
