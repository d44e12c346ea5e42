use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use flatcircle_core::circle::{flat_set, format as mapfmt};
use flatcircle_core::rotation::GOLDEN;
use flatcircle_core::MapDescriptor;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flatcircle"))
}

fn flatcircle(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One stage of the reference construction, shared by the tests.
fn one_stage() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let out = dir.path().join("run");
        let o = flatcircle(&["construct", "--stages", "1", "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    })
    .path()
}

fn run_dir() -> PathBuf {
    one_stage().join("run")
}

#[test]
fn construct_writes_checkpoints_and_tables() {
    let d = run_dir();
    for f in [
        "stage_000.state",
        "stage_001.state",
        "stage_001.mapdesc",
        "conditions.csv",
        "decay.csv",
        "cauchy.csv",
        "lengths.csv",
        "stages.csv",
        "config.txt",
    ] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let decay = fs::read_to_string(d.join("decay.csv")).unwrap();
    assert!(decay.lines().count() > 2);
}

#[test]
fn every_artifact_carries_the_config_hash() {
    let d = run_dir();
    let cfg = fs::read_to_string(d.join("config.txt")).unwrap();
    let header = cfg.lines().next().unwrap().to_string();
    assert!(header.starts_with("# config ") && header.len() == "# config ".len() + 64);
    for f in ["decay.csv", "stage_001.state", "stage_001.mapdesc", "conditions.csv"] {
        let text = fs::read_to_string(d.join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{f}");
    }
}

#[test]
fn short_flat_interval_exits_with_length_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("short.cfg");
    fs::write(&cfg, "eps = sqrt2/8\nl = 0.5\nstages = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = flatcircle(&["construct", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LengthTooSmall"));
}

#[test]
fn verify_accepts_every_stage_of_a_fresh_run() {
    for n in 0..=1 {
        let state = run_dir().join(format!("stage_{n:03}.state"));
        let o = flatcircle(&["verify", path(&state)]);
        assert_eq!(o.status.code(), Some(0), "stage {n}");
        let table = String::from_utf8_lossy(&o.stdout);
        assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 10);
    }
}

#[test]
fn verify_names_the_condition_a_moved_breakpoint_breaks() {
    let dir = TempDir::new().unwrap();
    for f in ["stage_000.mapdesc", "stage_001.mapdesc", "stage_001.state"] {
        fs::copy(run_dir().join(f), dir.path().join(f)).unwrap();
    }
    let desc = dir.path().join("stage_001.mapdesc");
    let text = fs::read_to_string(&desc).unwrap();
    let m = mapfmt::parse(&text).unwrap();
    let (flat, _) = m.flat_pieces().next().unwrap();
    let (lo, hi) = m.piece_span(flat);
    let (old, new) = if lo == 0.0 { (hi, hi + 0.01) } else { (lo, lo - 0.01) };
    let edited = text.replacen(&format!("{old:?} "), &format!("{new:?} "), 1);
    assert_ne!(edited, text);
    fs::write(&desc, edited).unwrap();
    let o = flatcircle(&["verify", path(&dir.path().join("stage_001.state"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("(6)"));
}

#[test]
fn verify_rejects_unreadable_checkpoints() {
    let dir = TempDir::new().unwrap();
    let bogus = dir.path().join("bogus.state");
    fs::write(&bogus, "not a checkpoint\n").unwrap();
    assert_eq!(flatcircle(&["verify", path(&bogus)]).status.code(), Some(3));
    let missing = dir.path().join("missing.state");
    assert_eq!(flatcircle(&["verify", path(&missing)]).status.code(), Some(3));
}

#[test]
fn rotnum_of_a_rotation_is_the_exact_enclosure() {
    let dir = TempDir::new().unwrap();
    let desc = dir.path().join("rotation.mapdesc");
    fs::write(&desc, mapfmt::print(&MapDescriptor::rotation(GOLDEN))).unwrap();
    let o = flatcircle(&["rotnum", path(&desc), "--iters", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let line = String::from_utf8_lossy(&o.stdout)
        .lines()
        .find(|l| l.starts_with('['))
        .unwrap()
        .to_string();
    let inner = line.trim_start_matches('[').split(']').next().unwrap();
    let (lo, hi) = inner.split_once(", ").unwrap();
    let (lo, hi): (f64, f64) = (lo.parse().unwrap(), hi.parse().unwrap());
    assert!((lo - (GOLDEN - 1e-3)).abs() < 1e-12 && (hi - (GOLDEN + 1e-3)).abs() < 1e-12);
}

#[test]
fn basin_is_deterministic_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let state = run_dir().join("stage_001.state");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("b{k}"));
        let o = flatcircle(&[
            "basin",
            path(&state),
            "--samples",
            "200",
            "--seed",
            "11",
            "--out",
            path(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        csvs.push(fs::read(out.join("basin.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn basin_rejects_tiny_samples() {
    let dir = TempDir::new().unwrap();
    let state = run_dir().join("stage_001.state");
    let o = flatcircle(&["basin", path(&state), "--samples", "10", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gapcover_lengths_grow_with_depth() {
    let dir = TempDir::new().unwrap();
    let state = run_dir().join("stage_001.state");
    let o = flatcircle(&["gapcover", path(&state), "--iters", "4", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("gapcover_lengths.csv")).unwrap();
    let lengths: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lengths.len(), 5);
    assert!(lengths.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn trace_svg_shades_the_flat_band() {
    let dir = TempDir::new().unwrap();
    let state = run_dir().join("stage_001.state");
    let o = flatcircle(&["trace", path(&state), "--iters", "6", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let svg = fs::read_to_string(dir.path().join("trace.svg")).unwrap();
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains("version=\"1.1\""));
    assert!(svg.contains("class=\"flat\""));
    assert_eq!(svg.matches("<polyline").count(), 6);
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn tune_writes_a_tuned_descriptor() {
    let dir = TempDir::new().unwrap();
    let desc = run_dir().join("stage_000.mapdesc");
    let o = flatcircle(&["tune", path(&desc), "--iters", "100000", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let tuned = fs::read_to_string(dir.path().join("tuned.mapdesc")).unwrap();
    mapfmt::parse(&tuned).unwrap();
}

#[test]
fn dump_stage_writes_operator_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("dump");
    let o = flatcircle(&["construct", "--stages", "1", "--dump-stage", "0", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let d = out.join("dump_stage_000");
    for f in ["input.mapdesc", "split.mapdesc", "output.mapdesc", "record.txt"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let split = mapfmt::parse(&fs::read_to_string(d.join("split.mapdesc")).unwrap()).unwrap();
    assert_eq!(flat_set(&split).unwrap().len(), 2);
}

#[test]
fn dump_stage_beyond_the_run_is_rejected() {
    let dir = TempDir::new().unwrap();
    let o = flatcircle(&["construct", "--stages", "1", "--dump-stage", "3", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
