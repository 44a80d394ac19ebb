use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmimo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--kt", "2", "--kr", "2", "--nt", "8", "--nr", "8"];

#[test]
fn gain_prints_closed_form_value() {
    let o = dmimo(&["gain", "--mode", "full", "--kt", "2", "--kr", "2", "--L", "3", "--ns", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "9");
    let o = dmimo(&["gain", "--mode", "mu-downlink", "--kb", "5", "--L", "3", "--ns", "1"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "15");
}

#[test]
fn missing_field_is_a_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("incomplete.toml");
    fs::write(&cfg, "mode = \"single_user_fc\"\nk_t = 2\nn_t = 8\nn_r = 8\nn_s = 2\nsnr_db = [0.0]\n").unwrap();
    let o = dmimo(&["ber", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k_r"), "{}", stderr(&o));
}

#[test]
fn unknown_field_is_a_config_error() {
    let o = dmimo(&["ber", "--set", "mode=single_user_fc", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn precondition_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ber", "--set", "mode=single_user_pc", "--out-dir", dir.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--ns", "3", "--snr", "0:20:10"]);
    let o = dmimo(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("min(K_t, K_r)"), "{}", stderr(&o));
}

#[test]
fn all_points_capped_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ber", "--set", "mode=single_user_fc", "--out-dir", dir.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--ns", "2", "--snr", "60,70", "--max-trials", "16", "--set", "stopping.batch=16"]);
    let o = dmimo(&args);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(dir.path().join("ber.csv").exists());
}

#[test]
fn same_seed_gives_identical_csvs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let mut args = vec!["pc-compare", "--seed", "7", "--threads", threads, "--out-dir", dir.path().to_str().unwrap()];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--ns", "2", "--snr", "0:20:10", "--max-trials", "2048"]);
        let o = dmimo(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["ber_fc.csv", "ber_pc.csv", "manifest.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let text = fs::read_to_string(a.path().join("ber_fc.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert!(text.contains("seed=7"));
}

#[test]
fn replay_reproduces_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("multiuser_two_rau_bs.toml");
    let o = dmimo(&[
        "multiuser",
        "--config",
        cfg.to_str().unwrap(),
        "--users",
        "1,2",
        "--nt",
        "8",
        "--snr",
        "0:20:10",
        "--max-trials",
        "2048",
        "--out-dir",
        a.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dmimo(&["replay", a.path().to_str().unwrap(), "--threads", "2", "--out-dir", b.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["ber_users_1.csv", "ber_users_2.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn overrides_are_echoed_into_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ber_distributed_fc.toml");
    let o = dmimo(&[
        "ber",
        "--config",
        cfg.to_str().unwrap(),
        "--nt",
        "8",
        "--nr",
        "8",
        "--snr",
        "0,10",
        "--max-trials",
        "1024",
        "--seed",
        "11",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let c = &m["run"]["config"];
    assert_eq!(m["run"]["command"], "ber");
    assert_eq!(c["n_t"], 8);
    assert_eq!(c["seed"], 11);
    assert_eq!(c["stopping"]["max_trials"], 1024);
    assert_eq!(c["k_t"], 2);
    assert_eq!(c["snr_db"], serde_json::json!([0.0, 10.0]));
}

#[test]
fn csv_values_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gsc_three_branch.toml");
    let o = dmimo(&["gsc", "--config", cfg.to_str().unwrap(), "--draws", "5000", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("gsc.csv")).unwrap();
    let parsed = dmimo::montecarlo::read_csv(text.as_bytes()).unwrap();
    let mut rewritten = Vec::new();
    for row in &parsed.rows {
        rewritten.push(format!("{},{},{},{},{}", row.snr_db, row.ber, row.errors, row.trials, row.invalid_trials));
    }
    let body: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(body, rewritten);
    assert!(dir.path().join("dgv.csv").exists());
}

#[test]
fn shipped_run_files_parse() {
    let quick: &[(&str, &str, &[&str])] = &[
        ("svd_sweep_two_rau.toml", "svd-sweep", &["--nr", "8,16", "--seeds", "2", "--set", "indices=[1,2]"]),
        ("ber_distributed_fc.toml", "ber", &["--nt", "8", "--nr", "8", "--snr", "0", "--max-trials", "64"]),
        ("ber_colocated_fc.toml", "ber", &["--nt", "8", "--nr", "8", "--snr", "0", "--max-trials", "64"]),
        ("pc_compare_two_rau.toml", "pc-compare", &["--nt", "8", "--nr", "8", "--snr", "0", "--max-trials", "64"]),
        ("multiuser_two_rau_bs.toml", "multiuser", &["--nt", "8", "--snr", "0", "--max-trials", "64"]),
        ("inhomogeneous_gains.toml", "g-inhomo", &["--nt", "8", "--nr", "8", "--snr", "0", "--max-trials", "64"]),
        ("ber_distributed_fc_n50.toml", "ber", &["--snr", "0", "--max-trials", "64"]),
        ("multiuser_n50.toml", "multiuser", &["--snr", "0", "--max-trials", "64"]),
        ("gsc_three_branch.toml", "gsc", &["--draws", "100"]),
    ];
    for (file, cmd, extra) in quick {
        let dir = tempfile::tempdir().unwrap();
        let cfg = configs().join(file);
        let mut args = vec![*cmd, "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = dmimo(&args);
        assert!(o.status.success(), "{file}: {}", stderr(&o));
        assert!(dir.path().join("manifest.json").exists(), "{file}");
    }
}
