use std::path::Path;
use std::process::{Command, Output};

use hound::{SampleFormat, WavSpec, WavWriter};

fn hdfnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdfnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn write_tone(path: &Path, channels: u16, n: usize) {
    let spec = WavSpec {
        channels,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).unwrap();
    for i in 0..n * channels as usize {
        let v = ((i as f64 * 0.05).sin() * 8000.0) as i16;
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();
}

fn assert_one_line_failure(o: &Output, needle: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains(needle), "{err}");
}

#[test]
fn inspect_reports_budget() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.hdfw");
    let o = hdfnet(&["init", "--out", w.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = hdfnet(&["inspect", "--weights", w.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let params: f64 = value(&out, "params_total").parse().unwrap();
    assert!((0.10e6..=0.40e6).contains(&params));
    let macs: f64 = value(&out, "macs_per_second").parse().unwrap();
    assert!((0.2e9..=0.9e9).contains(&macs));
    assert!(out.contains("layer=stage2/head/conv/weight shape=10x32x1x1"));
    assert!(stderr(&o).is_empty());
}

#[test]
fn enhance_with_zero_weights_is_silent() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("zero.hdfw");
    let noisy = dir.path().join("noisy.wav");
    let clean = dir.path().join("clean.wav");
    write_tone(&noisy, 1, 8000);
    assert!(hdfnet(&["init", "--zeros", "--out", w.to_str().unwrap()]).status.success());

    let o = hdfnet(&[
        "enhance",
        "--in",
        noisy.to_str().unwrap(),
        "--out",
        clean.to_str().unwrap(),
        "--weights",
        w.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "samples"), "8000");
    let mut r = hound::WavReader::open(&clean).unwrap();
    assert_eq!(r.spec().sample_rate, 16_000);
    let samples: Vec<f32> = r.samples::<f32>().map(|s| s.unwrap()).collect();
    assert_eq!(samples.len(), 8000);
    assert!(samples.iter().all(|s| *s == 0.0));
}

#[test]
fn enhance_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("crm.hdfw");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "[model]\nstage1_mode = \"crm\"\nstage2_mode = \"crm\"\n[paths]\nweights = \"{}\"\n",
            w.display()
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert!(hdfnet(&["init", "--config", c, "--out", w.to_str().unwrap()]).status.success());
    let noisy = dir.path().join("noisy.wav");
    let clean = dir.path().join("clean.wav");
    write_tone(&noisy, 1, 3000);
    let o = hdfnet(&["enhance", "--in", noisy.to_str().unwrap(), "--out", clean.to_str().unwrap(), "--config", c]);
    assert!(o.status.success(), "{}", stderr(&o));

    // same bundle against the default config
    let o = hdfnet(&["inspect", "--weights", w.to_str().unwrap()]);
    assert_one_line_failure(&o, "digest mismatch");
}

#[test]
fn failures_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.hdfw");
    assert!(hdfnet(&["init", "--out", w.to_str().unwrap()]).status.success());
    let stereo = dir.path().join("stereo.wav");
    write_tone(&stereo, 2, 1000);
    let out = dir.path().join("o.wav");

    let o = hdfnet(&["enhance", "--in", stereo.to_str().unwrap(), "--out", out.to_str().unwrap(), "--weights", w.to_str().unwrap()]);
    assert_one_line_failure(&o, "channel count");

    let missing = dir.path().join("missing.hdfw");
    let o = hdfnet(&["inspect", "--weights", missing.to_str().unwrap()]);
    assert_one_line_failure(&o, "missing.hdfw");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nlayers = 4\n").unwrap();
    let o = hdfnet(&["inspect", "--weights", w.to_str().unwrap(), "--config", bad.to_str().unwrap()]);
    assert_one_line_failure(&o, "layers");

    let o = hdfnet(&["enhance", "--out", "x.wav"]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
}

#[test]
fn loss_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    write_tone(&a, 1, 4000);
    let p = a.to_str().unwrap();
    let o = hdfnet(&["loss", "--ref", p, "--est", p]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "total_loss").parse::<f64>().unwrap(), 0.0);
    assert_eq!(value(&out, "si_sdr_db").parse::<f64>().unwrap(), 100.0);
}

#[test]
fn verify_passes() {
    let o = hdfnet(&["verify"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains("status=pass")).count(), 8, "{out}");
}
