use std::path::Path;
use std::process::{Command, Output};

fn vone(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vone")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_verb() {
    let dir = tempfile::tempdir().unwrap();
    let out = vone(dir.path(), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for verb in ["frontend", "corrupt", "synth-data", "train", "ensemble", "distill", "eval", "report"] {
        assert!(text.contains(verb), "{verb} missing from help");
    }
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = vone(d, &["frontend", "--variant", "ultra_sf"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ultra_sf"));

    std::fs::write(d.join("c.toml"), "epochs = 1\n").unwrap();
    let out = vone(d, &["--config", "c.toml", "synth-data", "--classes", "2", "--per-class", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--config"));

    std::fs::create_dir(d.join("empty")).unwrap();
    let out = vone(d, &["train", "--data", "empty", "--label", "x"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));

    std::fs::write(d.join("bad.toml"), "epochs = 1\nlearning_rate = 3\n").unwrap();
    let out = vone(d, &["--config", "bad.toml", "train", "--data", "empty", "--label", "x"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bad.toml"));
}

#[test]
fn eval_rejects_class_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t.toml"), "epochs = 1\nbatch_size = 4\naugment_train = false\n").unwrap();
    assert!(vone(d, &["--out", "three", "synth-data", "--classes", "3", "--per-class", "5"]).status.success());
    assert!(vone(d, &["--out", "two", "synth-data", "--classes", "2", "--per-class", "5"]).status.success());
    let out = vone(d, &["--config", "t.toml", "--out", "m", "train", "--data", "two", "--label", "pix"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(d.join("m/pix.ckpt").is_file() && d.join("m/pix_log.csv").is_file());
    let out = vone(d, &["--out", "e", "eval", "--data", "three", "--model", "m/pix.ckpt"]);
    assert!(!out.status.success());
    let out = vone(d, &["--out", "e", "eval", "--data", "two", "--model", "m/pix.ckpt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(d.join("e/pix.eval.csv")).unwrap();
    assert!(csv.starts_with("model,kind,severity,accuracy\npix,clean,0,"));
}
