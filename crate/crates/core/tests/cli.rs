use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roleplay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roleplay")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_train_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(
        &p,
        "seed = 1\n[env]\nname = \"matrix\"\n[roles]\nname = \"svo8\"\n[train]\niterations = 2\ntrials_per_iteration = 4\ntrial_length = 2\ncheckpoint_every = 1\n",
    )
    .unwrap();
    p
}

#[test]
fn verify_writes_reports_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = roleplay(&["verify", "--mdps", "10", "--epsilon", "0.01", "--horizon", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("epsilon_reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(out.join("verify_summary.json").exists());
    let snap = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("mdps = 10"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(roleplay(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(roleplay(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(roleplay(&["train", "--ablate", "everything"]).status.code(), Some(1));
    let o = roleplay(&["train", "--config", "/definitely/missing.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/missing.toml"));
    let o = roleplay(&["crossplay", "--checkpoint", "/definitely/missing.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn training_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_train_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = roleplay(&["train", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["metrics.jsonl", "checkpoint_final.json", "checkpoint_00001.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    // the snapshot alone reproduces the run
    let c = dir.path().join("c");
    let snap = a.join("config.resolved.toml");
    let o = roleplay(&["train", "--config", snap.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("metrics.jsonl")).unwrap(), fs::read(c.join("metrics.jsonl")).unwrap());
}

#[test]
fn evaluation_commands_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_train_config(dir.path());
    let run = dir.path().join("run");
    let o = roleplay(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ck = run.join("checkpoint_final.json");
    let ck = ck.to_str().unwrap();

    let rm = dir.path().join("rm");
    let o = roleplay(&["rolematrix", "--checkpoint", ck, "--episodes", "2", "--out", rm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let matrix = fs::read_to_string(rm.join("role_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 64);
    assert!(rm.join("spotlight.csv").exists());

    let before = fs::read(rm.join("results.csv")).unwrap();
    let summary = fs::read(rm.join("summary.json")).unwrap();
    let o = roleplay(&["export", "--out", rm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(rm.join("results.csv")).unwrap(), before);
    assert_eq!(fs::read(rm.join("summary.json")).unwrap(), summary);

    let cp = dir.path().join("cp");
    let o = roleplay(&["crossplay", "--checkpoint", ck, "--episodes", "3", "--out", cp.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = fs::read_to_string(cp.join("results.csv")).unwrap();
    // 8 roles against the 4 matrix partners
    assert_eq!(results.lines().count(), 1 + 32);

    let cf = dir.path().join("cf");
    let o = roleplay(&["confusion", "--checkpoint", ck, "--episodes", "2", "--out", cf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(cf.join("confusion.csv")).unwrap().lines().count(), 9);
}

#[test]
fn export_of_an_empty_run_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = roleplay(&["export", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("results.csv")).unwrap().lines().count(), 1);
}

#[test]
fn corrupt_records_exit_two_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("records.jsonl"), "\n{\"kind\": 3}\n").unwrap();
    let o = roleplay(&["export", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn pretrain_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.toml");
    fs::write(&p, "[train]\niterations = 1\ntrials_per_iteration = 2\n[pretrain]\nvariant = \"prosocial\"\n").unwrap();
    let out = dir.path().join("out");
    let o = roleplay(&["pretrain", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("checkpoint_final.json").exists());
    assert!(out.join("config.resolved.toml").exists());
}
