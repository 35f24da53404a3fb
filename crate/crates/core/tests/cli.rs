use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellhmm::ingest::{write_scans, ScanRecord};
use cellhmm::geo::GeoPoint;

fn cellhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellhmm")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        let out = cellhmm(&["simulate", "--out", s(&dir), "--seed", "3", "--train-duration", "600", "--test-duration", "12"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = cellhmm(&[
            "train",
            "--train",
            s(&dir.join("train.csv")),
            "--out",
            s(&dir.join("model.json")),
            "--world",
            s(&dir.join("world.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { _tmp: tmp, dir }
    }

    fn path(&self, f: &str) -> PathBuf {
        self.dir.join(f)
    }

    fn track(&self, test: &str, extra: &[&str]) -> (Output, Vec<String>) {
        let out_path = self.path("track.csv");
        let mut args = vec!["track", "--test", test, "--out", s(&out_path)];
        args.extend_from_slice(extra);
        let out = cellhmm(&args);
        let rows = std::fs::read_to_string(&out_path)
            .map(|t| t.lines().map(str::to_owned).collect())
            .unwrap_or_default();
        (out, rows)
    }
}

#[test]
fn simulate_writes_all_artifacts() {
    let f = Fixture::new();
    for name in ["train.csv", "test.csv", "towers.csv", "world.json", "manifest.json", "model.json"] {
        assert!(f.path(name).is_file(), "{name}");
    }
    let towers = std::fs::read_to_string(f.path("towers.csv")).unwrap();
    assert_eq!(towers.lines().next(), Some("tower_id,lat,lon"));
    assert_eq!(towers.lines().count(), 13);
}

#[test]
fn hmm_track_emits_after_warm_up() {
    let f = Fixture::new();
    let test = f.path("test.csv");
    let (out, rows) = f.track(s(&test), &["--model", s(&f.path("model.json")), "--window", "10"]);
    assert!(out.status.success());
    assert_eq!(rows[0], "timestamp,lat,lon");
    assert_eq!(rows.len() - 1, 3);
}

#[test]
fn cellid_track_emits_one_row_per_sample() {
    let f = Fixture::new();
    let test = f.path("test.csv");
    let (out, rows) = f.track(s(&test), &["--method", "cellid", "--towers", s(&f.path("towers.csv"))]);
    assert!(out.status.success());
    assert_eq!(rows.len() - 1, 12);
    assert!(rows[1..].iter().all(|r| r.split(',').all(|c| !c.is_empty())));
}

#[test]
fn unknown_tower_leaves_position_empty() {
    let f = Fixture::new();
    let rec = ScanRecord {
        timestamp: 100,
        tower_id: "9999:1".into(),
        rssi_dbm: -70,
        pos: GeoPoint::new(30.071, 31.011).unwrap(),
        serving: true,
    };
    let test = f.path("unknown.csv");
    write_scans(std::fs::File::create(&test).unwrap(), &[rec]).unwrap();
    let (out, rows) = f.track(s(&test), &["--method", "cellid", "--towers", s(&f.path("towers.csv"))]);
    assert!(out.status.success());
    assert_eq!(rows, ["timestamp,lat,lon", "100,,"]);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(cellhmm(&["track"]).status.code(), Some(2));
    assert_eq!(cellhmm(&["train", "--train", "/nonexistent.csv", "--out", s(&f.path("m.json"))]).status.code(), Some(2));
    let (out, _) = f.track(s(&f.path("test.csv")), &["--model", s(&f.path("model.json")), "--window", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = f.path("bad.csv");
    std::fs::write(&bad, "timestamp,tower_id,rssi_dbm,lat,lon,serving\n1,a,x,30,31,1\n").unwrap();
    let (out, _) = f.track(s(&bad), &["--model", s(&f.path("model.json"))]);
    assert_eq!(out.status.code(), Some(1));
}
