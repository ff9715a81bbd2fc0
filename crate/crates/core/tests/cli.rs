use std::path::Path;
use std::process::{Command, Output};

fn scanmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scanmix")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = scanmix(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (src, tgt) = (d.join("src"), d.join("tgt"));
    ok(&["gen-scenes", "--out", s(&src), "--count", "2", "--density", "40", "--seed", "1"]);
    ok(&["gen-scenes", "--out", s(&tgt), "--count", "2", "--density", "40", "--seed", "2", "--role", "target", "--format", "xyzl_text"]);
    let src_m = src.join("manifest.txt");
    let tgt_m = tgt.join("manifest.txt");
    assert!(src_m.exists() && tgt_m.exists());

    ok(&["scan", "--input", s(&src_m), "--out", s(&d.join("scanned"))]);
    ok(&["mix", "--source", s(&src_m), "--target", s(&tgt_m), "--count", "2", "--out", s(&d.join("mixed"))]);

    let cfg = d.join("short.cfg");
    std::fs::write(&cfg, "pretrain.iterations = 3\nselftrain.iterations = 3\n").unwrap();
    let pre = d.join("pre");
    ok(&["pretrain", "--config", s(&cfg), "--source", s(&src_m), "--out", s(&pre)]);
    let model = pre.join("model.segmodel");
    assert!(model.exists() && pre.join("loss.csv").exists());

    let pseudo = d.join("pseudo");
    ok(&["pseudo-label", "--model", s(&model), "--target", s(&tgt_m), "--out", s(&pseudo)]);
    let st = d.join("st");
    ok(&["selftrain", "--config", s(&cfg), "--model", s(&model), "--source", s(&src_m), "--pseudo", s(&pseudo.join("manifest.txt")), "--out", s(&st)]);

    let metrics = ok(&["evaluate", "--model", s(&st.join("model.segmodel")), "--target", s(&tgt_m), "--out", s(&d.join("eval"))]);
    assert!(metrics.starts_with("class,iou\n"), "{metrics}");
    assert!(metrics.contains("mIoU,"));
}

#[test]
fn failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.manifest");
    let out = scanmix(&["scan", "--input", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage scan failed"), "{err}");

    let out = scanmix(&["gen-scenes", "--templates", "castle", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}
