//! The `fouriermamba` binary, end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fouriermamba::harness::image_io::{load_png, save_png};
use fouriermamba::harness::train::RunConfig;
use fouriermamba::net::{ModelConfig, ModelWeights};
use fouriermamba::{rng, Tensor};

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fouriermamba"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_png(path: &Path, h: usize, w: usize, seed: u64) {
    save_png(
        path,
        &Tensor::uniform(&[h, w, 3], 0.0, 1.0, &mut rng::seeded(seed)).unwrap(),
    )
    .unwrap();
}

#[test]
fn example_config_is_the_default() {
    let cfg = RunConfig::load(repo_file("configs/toy.toml")).unwrap();
    assert_eq!(cfg, RunConfig::default());
    RunConfig::load(repo_file("configs/smoke.toml")).unwrap();
}

#[test]
fn scan_viz_writes_34_pairs() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["scan-viz", "progressive-zigzag", "8", "8", "out.txt"]);
    let text = fs::read_to_string(d.path().join("out.txt")).unwrap();
    assert_eq!(text.lines().count(), 34);
    assert_eq!(text.lines().next(), Some("4 4"));
}

#[test]
fn derain_keeps_odd_sizes_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let w = ModelWeights::init(&ModelConfig::toy(), &mut rng::seeded(3)).unwrap();
    w.save(d.path().join("w.fmw")).unwrap();
    write_png(&d.path().join("in.png"), 17, 23, 4);
    ok(d.path(), &["derain", "w.fmw", "in.png", "a.png"]);
    ok(d.path(), &["derain", "w.fmw", "in.png", "b.png"]);
    assert_eq!(load_png(d.path().join("a.png")).unwrap().shape(), &[17, 23, 3]);
    assert_eq!(
        fs::read(d.path().join("a.png")).unwrap(),
        fs::read(d.path().join("b.png")).unwrap()
    );
}

#[test]
fn spectrum_swap_writes_two_images() {
    let d = tempfile::tempdir().unwrap();
    write_png(&d.path().join("a.png"), 12, 20, 5);
    write_png(&d.path().join("b.png"), 12, 20, 6);
    ok(d.path(), &["spectrum-swap", "a.png", "b.png", "out1"]);
    ok(d.path(), &["spectrum-swap", "a.png", "b.png", "out2"]);
    for f in ["amp_b_pha_a.png", "amp_a_pha_b.png"] {
        let (p1, p2) = (d.path().join("out1").join(f), d.path().join("out2").join(f));
        assert_eq!(load_png(&p1).unwrap().shape(), &[12, 20, 3]);
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }
    write_png(&d.path().join("c.png"), 8, 8, 7);
    let bad = run(d.path(), &["spectrum-swap", "a.png", "c.png", "out3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_and_ablate_are_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let smoke = fs::read_to_string(repo_file("configs/smoke.toml")).unwrap();
    fs::write(d.path().join("run.toml"), format!("{smoke}\noutput_dir = \"out\"\n")).unwrap();
    for first in [true, false] {
        let out = ok(d.path(), &["--seed", "5", "train", "run.toml"]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("held-out PSNR-Y"));
        ok(d.path(), &["--seed", "5", "ablate", "run.toml"]);
        if first {
            fs::rename(d.path().join("out"), d.path().join("first")).unwrap();
        }
    }
    for f in ["weights.fmw", "log.csv", "run.toml", "ablation.txt", "ablation.csv"] {
        let (a, b) = (d.path().join("first").join(f), d.path().join("out").join(f));
        assert!(
            fs::read(&a).unwrap() == fs::read(&b).unwrap(),
            "{f} differs between runs"
        );
    }
    let resolved = RunConfig::load(d.path().join("out/run.toml")).unwrap();
    assert_eq!(resolved.seed, 5);
    ModelWeights::load(d.path().join("out/weights.fmw")).unwrap();
}

#[test]
fn gradcheck_exit_code_tracks_the_suite() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["gradcheck"]);
    let text = String::from_utf8_lossy(&out.stdout);
    let failing = text.lines().filter(|l| l.ends_with("FAIL")).count();
    assert!(text.lines().count() > 30);
    assert_eq!(out.status.success(), failing == 0, "{text}");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["derain", "missing.fmw", "in.png", "out.png"][..],
        &["train", "missing.toml"],
        &["scan-viz", "spiral", "8", "8", "o.txt"],
        &["scan-viz", "bilateral-zigzag", "6", "8", "o.txt"],
    ] {
        let out = run(d.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
    fs::write(d.path().join("bad.toml"), "iterations = 3\nbogus = 1\n").unwrap();
    assert_eq!(run(d.path(), &["train", "bad.toml"]).status.code(), Some(1));
    assert_ne!(run(d.path(), &["--frobnicate", "gradcheck"]).status.code(), Some(0));
}
