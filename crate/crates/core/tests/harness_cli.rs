use std::path::Path;
use std::process::{Command, Output};

fn positnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_positnn")).args(args).env_remove("POSITNN_DATA").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

/// A small learnable IDX dataset: each class lights up its own row band.
fn write_idx(dir: &Path, stem: &str, n: usize) {
    let mut images: Vec<u8> = [0x803u32, n as u32, 28, 28].iter().flat_map(|v| v.to_be_bytes()).collect();
    let mut labels: Vec<u8> = [0x801u32, n as u32].iter().flat_map(|v| v.to_be_bytes()).collect();
    for i in 0..n {
        let class = i % 10;
        labels.push(class as u8);
        for p in 0..784 {
            let row = p / 28;
            let noise = ((i * 131 + p * 71) % 97) as u8;
            images.push(if row / 3 == class { 200 + noise / 2 } else { noise });
        }
    }
    std::fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), images).unwrap();
    std::fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), labels).unwrap();
}

fn tiny_dataset() -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("fashion-mnist");
    std::fs::create_dir(&dir).unwrap();
    write_idx(&dir, "train", 200);
    write_idx(&dir, "t10k", 100);
    root
}

fn accuracy(o: &Output) -> f64 {
    let out = stdout(o);
    let line = out.lines().find(|l| l.starts_with("test_acc = ")).unwrap_or_else(|| panic!("{out}"));
    line["test_acc = ".len()..].parse().unwrap()
}

#[test]
fn presets_are_listed() {
    let o = positnn(&["presets"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("O12L10") && l.contains("90.25%")), "{out}");
    assert_eq!(out.lines().count(), 21);
}

#[test]
fn distribution_of_posit8() {
    let o = positnn(&["distribution", "--format", "8:0"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let values: Vec<f64> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 255);
    assert_eq!(values.iter().cloned().fold(0.0, f64::max), 64.0);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted.iter().zip(sorted.iter().rev()).all(|(a, b)| *a == -*b));
}

#[test]
fn failures_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    let o = positnn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!((e["status"].as_str(), e["kind"].as_str()), (Some("error"), Some("config")));
    assert!(e["message"].as_str().unwrap().contains("line 2"), "{e}");

    let o = positnn(&["train", "--set", "data_dir=/nonexistent/data", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["kind"], "io");

    let o = positnn(&["distribution", "--format", "8:9"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["kind"], "invalid_format");

    let o = positnn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["kind"], "usage");
}

#[test]
fn quire_suite_passes_from_the_command_line() {
    let o = positnn(&["verify", "quire", "--count", "50"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().last().unwrap().ends_with("quire: PASS"));
}

#[test]
fn train_then_eval_and_convert() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let data_dir = data.path().join("fashion-mnist");
    let common = ["--set", &format!("data_dir={}", data_dir.display()), "--set", "batch_size=20", "--no-wallclock"];
    let mut args = vec!["float-ref", "--epochs", "3", "--set", "lr=0.05", "--out", out.path().to_str().unwrap()];
    args.extend(common);
    let o = positnn(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trained = accuracy(&o);
    assert!(trained > 50.0, "{trained}");
    let csv = std::fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,step,train_loss,test_acc,seconds\n"));
    assert!(std::fs::read_to_string(out.path().join("config.txt")).unwrap().contains("forward = float32"));

    let ckpt = out.path().join("model.pnn");
    let mut eval = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--set", "precision=float32"];
    eval.extend(common);
    assert_eq!(accuracy(&positnn(&eval)), trained);

    let mut p32 = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--set", "precision=32:2"];
    p32.extend(common);
    let o = positnn(&p32);
    assert_eq!(o.status.code(), Some(1), "loading float weights into posit should need --convert");
    assert_eq!(error_json(&o)["kind"], "checkpoint");
    p32.push("--convert");
    assert!((accuracy(&positnn(&p32)) - trained).abs() <= 0.2);
}

#[test]
fn worker_counts_agree_from_the_command_line() {
    let data = tiny_dataset();
    let out = tempfile::tempdir().unwrap();
    let data_dir = format!("data_dir={}", data.path().join("fashion-mnist").display());
    let o = positnn(&[
        "verify",
        "determinism",
        "--set",
        &data_dir,
        "--set",
        "precision=8:2",
        "--set",
        "quire=true",
        "--subset",
        "96",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("workers 1 vs 4: PASS"));
}
