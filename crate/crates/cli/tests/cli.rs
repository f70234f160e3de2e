use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flipper(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flipper"))
        .args(args)
        .env("FLIPPER_OUTPUT_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, name: &str, json: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    path
}

fn tiny(output_dir: &str) -> serde_json::Value {
    serde_json::json!({
        "learner": {
            "num_envs": 2,
            "rollout_len": 16,
            "iterations": 2,
            "minibatch_size": 16,
            "checkpoint_interval": 0
        },
        "output_dir": output_dir,
        "seed": 3
    })
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.json");
    let out = flipper(dir.path(), &["train", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nowhere.json"), "{}", stderr(&out));
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", serde_json::json!({"learner": {"gamma": 1.5}}));
    let out = flipper(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learner.gamma"), "{}", stderr(&out));
}

#[test]
fn smoke_training_writes_twenty_rows_reproducibly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = repo_config("smoke.json");
    for root in [a.path(), b.path()] {
        let out = flipper(root, &["train", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let run = a.path().join("runs/smoke");
    let metrics = std::fs::read(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics, std::fs::read(b.path().join("runs/smoke/metrics.csv")).unwrap());
    let text = String::from_utf8(metrics).unwrap();
    assert!(text.starts_with("schema_version,"));
    assert_eq!(text.lines().count(), 21);
    assert!(run.join("config.json").exists());
    assert!(run.join("checkpoint_final.json").exists());
    assert!(run.join("checkpoints/iter_000010.json").exists());
}

#[test]
fn eval_exports_a_fixed_schema_and_consistent_pitch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.json", tiny("runs/tiny"));
    let out = flipper(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = dir.path().join("runs/tiny/checkpoint_final.json");

    let csv_a = dir.path().join("a.csv");
    let out = flipper(
        dir.path(),
        &["eval", "--ckpt", ckpt.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--episodes", "2", "--out", csv_a.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let printed = stdout(&out);
    assert!(printed.contains("episode 0:") && printed.contains("episode 1:") && printed.contains("mean:"));

    // Integrate the exported pitch rate and compare with the reported rotation.
    let mut reader = csv::Reader::from_path(&csv_a).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "schema_version");
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (ep, t, rate) = (col("episode"), col("t"), col("base_pitch_rate"));
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).filter(|r| &r[ep] == "0").collect();
    let (mut integral, mut t_prev) = (0.0, 0.0);
    for r in &rows {
        let (ti, ri): (f64, f64) = (r[t].parse().unwrap(), r[rate].parse().unwrap());
        integral += ri * (ti - t_prev);
        t_prev = ti;
    }
    let line = printed.lines().find(|l| l.starts_with("episode 0:")).unwrap();
    let net: f64 = line.split("net_pitch ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((integral.to_degrees() - net).abs() < 2.0, "integral {} vs {net}", integral.to_degrees());
    assert!(net.abs() < 30.0, "barely trained policy rotated {net} deg");

    // Flags do not change the schema.
    let mut flags = tiny("runs/tiny");
    flags["env"] = serde_json::json!({"use_mor": false, "use_load_reg": false, "aerial_reward_mode": "bav"});
    let cfg_b = write_config(dir.path(), "flags.json", flags);
    let csv_b = dir.path().join("b.csv");
    let out = flipper(
        dir.path(),
        &["eval", "--ckpt", ckpt.to_str().unwrap(), "--config", cfg_b.to_str().unwrap(), "--out", csv_b.to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let header_b = csv::Reader::from_path(&csv_b).unwrap().headers().unwrap().clone();
    assert_eq!(header, header_b);

    // A config asking for different network shapes cannot load the checkpoint.
    let mut wide = tiny("runs/tiny");
    wide["learner"]["networks"] = serde_json::json!({
        "policy_hidden": [32, 32],
        "critic_hidden": [256, 128, 64],
        "estimator_hidden": [256, 128]
    });
    let cfg_c = write_config(dir.path(), "wide.json", wide);
    let out = flipper(dir.path(), &["eval", "--ckpt", ckpt.to_str().unwrap(), "--config", cfg_c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("shape mismatch"), "{}", stderr(&out));
}

#[test]
fn check_passes_and_catches_a_corrupted_barrier() {
    let dir = tempfile::tempdir().unwrap();
    let out = flipper(dir.path(), &["check"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("PASS")).count(), 9);

    let out = flipper(dir.path(), &["check", "--corrupt-barrier"]);
    assert_eq!(out.status.code(), Some(3));
    let failed: Vec<_> = stdout(&out).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].contains("barrier"));
}

fn sweep_rows(root: &Path, axis: &str) -> Vec<csv::StringRecord> {
    let cfg = write_config(root, &format!("{axis}.json"), tiny("runs/sweep"));
    let out = flipper(root, &["sweep", "--axis", axis, "--seeds", "1", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let path = root.join(format!("runs/sweep/sweep_{axis}.csv"));
    let mut reader = csv::Reader::from_path(path).unwrap();
    assert_eq!(&reader.headers().unwrap()[0], "schema_version");
    assert!(reader.headers().unwrap().iter().any(|h| h == "peak_abs_tau_load"));
    reader.records().map(|r| r.unwrap()).collect()
}

#[test]
fn sweeps_produce_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let modes = sweep_rows(dir.path(), "reward-mode");
    assert_eq!(modes.len(), 3);
    let variants: Vec<_> = modes.iter().map(|r| r[2].to_string()).collect();
    assert_eq!(variants, ["cav", "cam", "bav"]);

    let mor = sweep_rows(dir.path(), "mor");
    assert_eq!(mor.len(), 4);
    let cells: Vec<_> = mor.iter().map(|r| format!("{}/{}", &r[2], &r[3])).collect();
    assert_eq!(
        cells,
        [
            "trained_mor_on/eval_mor_on",
            "trained_mor_on/eval_mor_off",
            "trained_mor_off/eval_mor_on",
            "trained_mor_off/eval_mor_off"
        ]
    );

    let load = sweep_rows(dir.path(), "load-reg");
    assert_eq!(load.len(), 2);
    assert!(load.iter().all(|r| &r[6] == "ok" && r[13].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn unknown_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = flipper(dir.path(), &["sweep", "--axis", "gravity"]);
    assert!(!out.status.success());
}
