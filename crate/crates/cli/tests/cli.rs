use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidtemporal"))
        .args(args)
        .output()
        .expect("spawn binary")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONFIG: &str = r#"
epochs = 3
batch_size = 4
learning_rate = 0.01
seed = 1

[model]
kind = "ff_gru"
vocab_size = 5
visual_dim = 6
audio_dim = 2
hidden_size = 4
depth = 2
fc_hidden = 8
seed = 2
"#;

fn gen(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    ok(&[
        "gen-data", "--vocab", "5", "--videos", "16", "--seed", seed, "--visual-dim", "6", "--audio-dim", "2",
        "--min-frames", "2", "--max-frames", "8", "--out", s(&path),
    ]);
    path.to_str().unwrap().to_owned()
}

/// gen-data, train, predict, eval in `dir`; returns predictions and log.
fn pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>, String) {
    let data = gen(dir, "d.flvr", "4");
    let config = dir.join("c.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let run = dir.join("run");
    ok(&["train", "--config", s(&config), "--data", &data, "--out", s(&run)]);
    let preds = dir.join("p.txt");
    ok(&["predict", "--checkpoint", s(&run.join("best.ckpt")), "--data", &data, "--out", s(&preds)]);
    let eval = ok(&["eval", "--predictions", s(&preds), "--data", &data]);
    (
        std::fs::read(&preds).unwrap(),
        std::fs::read(run.join("metrics.tsv")).unwrap(),
        eval,
    )
}

#[test]
fn end_to_end_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    assert_eq!(first, second);
    assert!(first.2.starts_with("gap\t"), "{}", first.2);
    assert_eq!(String::from_utf8(first.1).unwrap().lines().count(), 3);
    let text = String::from_utf8(first.0).unwrap();
    assert_eq!(text.lines().count(), 16);
    // five classes listed per video
    assert!(text.lines().all(|l| l.split(' ').count() == 6));
}

#[test]
fn ensemble_of_a_file_with_itself_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let p = dir.path().join("p.txt");
    let out = dir.path().join("e.txt");
    ok(&["ensemble", "--inputs", &format!("{},{}", s(&p), s(&p)), "--out", s(&out)]);
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&out).unwrap());
    let w = dir.path().join("w.txt");
    ok(&["ensemble", "--inputs", s(&p), s(&out), "--weights", "1,0", "--out", s(&w)]);
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&w).unwrap());
}

#[test]
fn gen_data_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.flvr", "9");
    let b = gen(dir.path(), "b.flvr", "9");
    let c = gen(dir.path(), "c.flvr", "10");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gradcheck_reports_every_block() {
    let out = ok(&["gradcheck", "--model", "temporal_resnet"]);
    assert!(out.lines().count() > 5);
    assert!(out.contains("head.fc2"));
}

#[test]
fn errors_are_one_line_with_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["eval", "--predictions", "/nonexistent/p.txt", "--data", "/nonexistent/d.flvr"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error\t"), "{err}");

    let out = cli(&["gradcheck", "--model", "transformer"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error\tconfig\t"));

    let bad = dir.path().join("bad.flvr");
    std::fs::write(&bad, b"FLVRgarbage").unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = cli(&["train", "--config", s(&cfg), "--data", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error\tformat\t"));

    let good = gen(dir.path(), "g.flvr", "1");
    let bytes = std::fs::read(&good).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    let out = cli(&["train", "--config", s(&cfg), "--data", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error\tcorruption\t"));

    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
}
