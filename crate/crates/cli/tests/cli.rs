use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn kl_elast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kl-elast")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dir_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn fem_converge_writes_the_table() {
    let dir = TempDir::new().unwrap();
    let out = kl_elast(&["fem-converge", "--fem-ns", "4,8,16", "--output-dir", dir_arg(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("fem_convergence.csv")).unwrap();
    assert!(csv.starts_with("# version = kl-elast-v"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# study\ns = 3\nsigma = 0.5\nseed = 9\n").unwrap();
    let out = kl_elast(&[
        "--config",
        cfg.to_str().unwrap(),
        "--sigma",
        "0.25",
        "--print-config",
        "fem-converge",
        "--fem-ns",
        "4,8",
        "--output-dir",
        dir_arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("s = 3\n"), "{text}");
    assert!(text.contains("sigma = 0.25\n"), "{text}");
    assert!(text.contains("seed = 9\n"), "{text}");
}

#[test]
fn desk_preset_then_flags() {
    let dir = TempDir::new().unwrap();
    let out = kl_elast(&[
        "--desk",
        "--s",
        "5",
        "--print-config",
        "fem-converge",
        "--fem-ns",
        "4,8",
        "--output-dir",
        dir_arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("s = 5\n") && text.contains("mesh_n = 16\n"), "{text}");
}

#[test]
fn synth_then_density() {
    let dir = TempDir::new().unwrap();
    let common = ["--s", "2", "--mesh-n", "4", "--data-mesh-n", "8", "--grid", "4", "--output-dir", dir_arg(dir.path())];
    let synth = kl_elast(&[&["synth"], &common[..]].concat());
    assert!(synth.status.success(), "{}", stderr(&synth));
    assert!(stdout(&synth).contains("10 sensors"));
    let density = kl_elast(&[&["density"], &common[..]].concat());
    assert!(density.status.success(), "{}", stderr(&density));
    assert!(dir.path().join("density.csv").exists());
    assert!(dir.path().join("density.gp").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "s = 3\nno_such_key = 1\n").unwrap();
    let out = kl_elast(&["--config", cfg.to_str().unwrap(), "fem-converge"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.starts_with("error: ") && err.contains("bad.cfg:2:"), "{err}");

    let out = kl_elast(&["--nu", "0.5", "fem-converge", "--output-dir", dir_arg(dir.path())]);
    assert!(!out.status.success());

    let out = kl_elast(&["density", "--s", "3", "--output-dir", dir_arg(dir.path())]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("s = 2"), "{}", stderr(&out));

    assert!(!kl_elast(&["no-such-command"]).status.success());
}
