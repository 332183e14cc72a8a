use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dift::landmarks::{self, Grouping};
use dift::model_io::save_model;
use dift_core::{ArchConfig, ImageBuf, Model};

fn dift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dift")).args(args).output().expect("spawn dift")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let out = dift(&["synth", "--count", &count.to_string(), "--seed", &seed.to_string(), "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("landmarks.txt")
}

fn zero_model(dir: &Path) -> PathBuf {
    let p = dir.join("zero.dift");
    save_model(&Model::zeros(ArchConfig::default()).unwrap(), &p).unwrap();
    p
}

#[test]
fn synth_writes_images_and_landmarks() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let lm = synth(a.path(), 10, 7);
    synth(b.path(), 10, 7);
    let text = fs::read_to_string(&lm).unwrap();
    assert_eq!(text.lines().next(), Some("10"));
    let map = landmarks::load(&lm, &Grouping::default()).unwrap();
    assert_eq!(map.len(), 10);
    for i in 0..10 {
        let name = format!("{i:06}.ppm");
        assert!(map.contains_key(&name));
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
    assert_eq!(text, fs::read_to_string(b.path().join("landmarks.txt")).unwrap());
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dift(&["synth", "--count", "1", "--out", s(dir.path())]).status.code(), Some(2));
    let out = dift(&["train", "--images", s(dir.path()), "--landmarks", "x", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_reduces_loss_on_one_image() {
    let dir = tempfile::tempdir().unwrap();
    let lm = synth(dir.path(), 1, 3);
    let model = dir.path().join("m.dift");
    let out = dift(&[
        "train", "--images", s(dir.path()), "--landmarks", s(&lm), "--batches", "300", "--batchsize", "32", "--seed", "1", "--out", s(&model),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.is_file());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 300);
    assert!(stdout.starts_with("0 : "));
    let csv = fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let running: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(running.len(), 300);
    assert!(running[299] < 0.5 * running[0], "final {} vs initial {}", running[299], running[0]);
}

#[test]
fn train_failures_leave_no_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1, 3);
    let model = dir.path().join("m.dift");
    let missing = dir.path().join("none.txt");
    let out = dift(&["train", "--images", s(dir.path()), "--landmarks", s(&missing), "--seed", "1", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!model.exists());
    let out = dift(&[
        "train", "--images", s(dir.path()), "--landmarks", s(&dir.path().join("landmarks.txt")), "--momentum", "1.5", "--seed", "1", "--out", s(&model),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!model.exists());
}

#[test]
fn zero_learning_rate_dumps_the_init() {
    let dir = tempfile::tempdir().unwrap();
    let lm = synth(dir.path(), 1, 3);
    let run = |batches: &str, lr: &str, name: &str| {
        let out = dift(&[
            "train", "--images", s(dir.path()), "--landmarks", s(&lm), "--batches", batches, "--batchsize", "4", "--lr", lr, "--seed", "9",
            "--quiet", "--out", s(&dir.path().join(name)),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("3", "0", "a.dift"), run("0", "0.05", "b.dift"));
}

#[test]
fn heatmaps_of_a_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1, 4);
    let model = zero_model(dir.path());
    let img = dir.path().join("000000.ppm");
    let out = dift(&["heatmap", "--model", s(&model), "--image", s(&img), "--quantize", "--out", s(dir.path()), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["000000_c0.pgm", "000000_c1.pgm", "000000_c2.pgm", "000000_q_c2.pgm"] {
        let pgm = dift::pnm::read_image(&dir.path().join(name)).unwrap();
        assert_eq!((pgm.width(), pgm.height()), (178, 218));
        assert!(pgm.data().iter().all(|v| *v == 0));
    }
    let rgb = dift::pnm::read_image(&dir.path().join("000000_rgb.ppm")).unwrap();
    assert_eq!(rgb.channels(), 3);
}

#[test]
fn detect_with_a_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1, 4);
    let model = zero_model(dir.path());
    let img = dir.path().join("000000.ppm");
    for mode in ["dense", "saccade"] {
        let out = dift(&["detect", "--model", s(&model), "--image", s(&img), "--mode", mode, "--out", s(dir.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = fs::read_to_string(dir.path().join("000000_detections.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "channel,x,y,score,evals");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("# evals="));
        assert!(dir.path().join("000000_detections.ppm").is_file());
    }
    let out = dift(&["detect", "--model", s(&model), "--image", s(&img), "--mode", "sideways", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_single_image() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    synth(&imgs, 1, 5);
    let model = zero_model(dir.path());
    let report = dir.path().join("bench.csv");
    let out = dift(&["benchmark", "--model", s(&model), "--images", s(&imgs), "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("000000.ppm,26496,"));
    assert!(lines[2].starts_with("mean,"));
}

#[test]
fn kernels_export() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.dift");
    save_model(&Model::init(ArchConfig::default(), &mut dift_core::SeededRng::new(1)).unwrap(), &model).unwrap();
    let out = dift(&["kernels", "--model", s(&model), "--out", s(&dir.path().join("k"))]);
    assert!(out.status.success());
    for i in 0..9 {
        let k = dift::pnm::read_image(&dir.path().join(format!("k{i}.pgm"))).unwrap();
        assert_eq!((k.width(), k.height()), (16, 16));
    }
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let model = zero_model(dir.path());
    let small = dir.path().join("small.ppm");
    dift::pnm::write_image(&small, &ImageBuf::filled(20, 20, [1, 2, 3])).unwrap();
    let out = dift(&["heatmap", "--model", s(&model), "--image", s(&small), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let junk = dir.path().join("junk.dift");
    fs::write(&junk, b"DIFT\x01").unwrap();
    let out = dift(&["detect", "--model", s(&junk), "--image", s(&small), "--mode", "dense", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}
