use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use isac_track::config::RunConfig;
use isac_track::dataset::{generate, read_dataset};
use isac_track_core::train::{build_dataset, compute_normalizer};

const SMALL: &str = "\
seed = 5
system.n_tx = 4
system.n_rx = 4
system.n_slots = 24
train.sample_len = 6
train.m_train = 8
train.m_val = 4
train.m_test = 4
train.batch_size = 4
";

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-track"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = bin(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn exit_codes() {
    let d = setup();
    assert_eq!(bin(&["no-such-command"], d.path()).status.code(), Some(2));
    assert_eq!(
        bin(&["train", "--stage", "9", "--data", "x", "--run", "y"], d.path())
            .status
            .code(),
        Some(2)
    );
    fs::write(d.path().join("bad.toml"), "system.no_such_key = 1\n").unwrap();
    let out = bin(&["gen-data", "--config", "bad.toml", "--out", "data"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    assert_eq!(bin(&["--help"], d.path()).status.code(), Some(0));

    ok(&["gen-data", "--config", "small.toml", "--out", "data"], d.path());
    let out = bin(&["train", "--stage", "2", "--data", "data", "--run", "run"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage1.ckpt"));
}

#[test]
fn corrupted_split_is_rejected() {
    let d = setup();
    ok(&["gen-data", "--config", "small.toml", "--out", "data"], d.path());
    let path = d.path().join("data/train.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes[100] ^= 1;
    fs::write(&path, &bytes).unwrap();
    let out = bin(
        &[
            "train",
            "--stage",
            "1",
            "--data",
            "data",
            "--run",
            "run",
            "--max-epochs",
            "1",
        ],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));

    bytes.pop();
    fs::write(&path, &bytes).unwrap();
    let out = bin(
        &[
            "train",
            "--stage",
            "1",
            "--data",
            "data",
            "--run",
            "run",
            "--max-epochs",
            "1",
        ],
        d.path(),
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}

#[test]
fn pipeline_is_byte_reproducible() {
    let d = setup();
    for tag in ["a", "b"] {
        let data = format!("data_{tag}");
        let run = format!("run_{tag}");
        let tracks = format!("tracks_{tag}");
        let eval = format!("eval_{tag}");
        ok(&["gen-data", "--config", "small.toml", "--out", &data], d.path());
        for stage in ["1", "2", "3", "4"] {
            ok(
                &[
                    "train",
                    "--stage",
                    stage,
                    "--data",
                    &data,
                    "--run",
                    &run,
                    "--max-epochs",
                    "2",
                ],
                d.path(),
            );
        }
        ok(
            &[
                "track",
                "--checkpoint",
                &format!("{run}/stage4.ckpt"),
                "--out",
                &tracks,
                "--episodes",
                "2",
            ],
            d.path(),
        );
        ok(&["eval", "--tracks", &tracks, "--out", &eval], d.path());
        ok(&["eval", "--run", &run, "--data", &data, "--out", &eval], d.path());
    }
    let p = d.path();
    let mut files = 0;
    for (dir_a, dir_b) in [
        ("data_a", "data_b"),
        ("run_a", "run_b"),
        ("tracks_a", "tracks_b"),
        ("eval_a", "eval_b"),
    ] {
        let mut names: Vec<_> = fs::read_dir(p.join(dir_a))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            let n = n.to_str().unwrap();
            assert_eq!(read(&p.join(dir_a), n), read(&p.join(dir_b), n), "{dir_a}/{n}");
            files += 1;
        }
    }
    assert!(files >= 20);
}

#[test]
fn oracle_tracks_straight_legs() {
    let d = setup();
    ok(
        &["track", "--oracle-kf", "--out", "tracks", "--episodes", "3"],
        d.path(),
    );
    ok(&["eval", "--tracks", "tracks", "--out", "eval"], d.path());
    let s: serde_json::Value = serde_json::from_slice(&read(d.path(), "eval/summary.json")).unwrap();
    let rmse = s["straight"]["pos_rmse"].as_f64().unwrap();
    assert!(rmse < 0.1, "{rmse}");
    assert_eq!(s["mode"], "oracle-kf");
    let csv = String::from_utf8(read(d.path(), "tracks/episode_2199023255552.csv")).unwrap();
    assert!(csv.starts_with("slot,turning,truth_x"));
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn manifest_statistics_match_records() {
    let d = setup();
    ok(&["gen-data", "--config", "small.toml", "--out", "data"], d.path());
    let (m, ds) = read_dataset(&d.path().join("data")).unwrap();
    let fresh = compute_normalizer(&ds.train);
    for (a, b) in [
        (m.normalization.tx, fresh.tx),
        (m.normalization.rx, fresh.rx),
        (m.normalization.echo, fresh.echo),
    ] {
        assert!((a.mean - b.mean).abs() <= 1e-12 * b.std, "{a:?} {b:?}");
        assert!((a.std - b.std).abs() <= 1e-12 * b.std, "{a:?} {b:?}");
    }
    assert_eq!(m.train.samples, 8);
    assert_eq!(m.val.samples, 4);
}

#[test]
fn parallel_generation_matches_core_builder() {
    let cfg = RunConfig::parse(SMALL).unwrap();
    let par = generate(&cfg, None).unwrap();
    let seq = build_dataset(&cfg.system, &cfg.trajectory, &cfg.prior, &cfg.train, cfg.seed).unwrap();
    assert_eq!(par.train, seq.train);
    assert_eq!(par.val, seq.val);
    assert_eq!(par.test, seq.test);
    assert_eq!(par.norm, seq.norm);
}

#[test]
fn calibrate_writes_config() {
    let d = setup();
    let out = ok(&["calibrate-p0", "--config", "small.toml"], d.path());
    let text = fs::read_to_string(d.path().join("small.toml")).unwrap();
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.system.n_tx, 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("{}", cfg.system.ref_path_gain)));
}

#[test]
fn grad_check_command_passes() {
    let d = setup();
    let out = ok(&["grad-check", "--seeds", "1", "--out", "grad.json"], d.path());
    assert!(String::from_utf8_lossy(&out.stdout)
        .lines()
        .all(|l| l.starts_with("PASS")));
    let v: serde_json::Value = serde_json::from_slice(&read(d.path(), "grad.json")).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
}
