use std::fs;
use std::path::{Path, PathBuf};

use flatcircle_core::cherry::{attractor_check, basin_estimate, gap_cover, suspension_trace};
use flatcircle_core::circle::{flat_set, format as mapfmt};
use flatcircle_core::construction::{
    read_checkpoint, replay_split, run, verify_conditions, write_checkpoint, Certificate, StageState,
};
use flatcircle_core::rotation::{rotation_enclosure, tune_translation};
use flatcircle_core::{Error, MapDescriptor};
use log::info;

use crate::config::RunConfig;
use crate::error::CliError;

type CliResult<T = ()> = Result<T, CliError>;

const DEFAULT_DEPTH: usize = 5;
const DEFAULT_ITERS: usize = 2000;
const DEFAULT_PERIODS: usize = 20;
const DEFAULT_ENCLOSURE: usize = 100_000;
const DEFAULT_TUNE: usize = 1_000_000;

fn with_header(cfg: &RunConfig, body: &str) -> String {
    format!("# {}\n{body}", cfg.header())
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(cfg.out.clone())
}

/// A `.state` checkpoint or a bare descriptor.
fn load(path: &Path) -> CliResult<(MapDescriptor, Option<StageState>)> {
    let input = |e: Error| CliError::Input(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "state") {
        let s = read_checkpoint(path).map_err(input)?;
        Ok((s.map.clone(), Some(s)))
    } else {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok((mapfmt::parse(&text).map_err(input)?, None))
    }
}

fn write_certificate(dir: &Path, cfg: &RunConfig, cert: &Certificate) -> CliResult {
    let files = [
        ("conditions.csv", cert.conditions_csv()?),
        ("decay.csv", cert.decay_csv()?),
        ("cauchy.csv", cert.cauchy_csv()?),
        ("lengths.csv", cert.lengths_csv()?),
        ("stages.csv", cert.stages_csv()?),
    ];
    for (name, body) in files {
        write(&dir.join(name), &with_header(cfg, &body))?;
    }
    Ok(())
}

fn dump_stage(dir: &Path, cfg: &RunConfig, prev: &StageState, next: &StageState) -> CliResult {
    let d = dir.join(format!("dump_stage_{:03}", prev.n));
    fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
    let record = next
        .records
        .last()
        .ok_or_else(|| CliError::Input(format!("stage {} has no record", next.n)))?;
    let (split, rec) = replay_split(prev, record)?;
    write(&d.join("input.mapdesc"), &with_header(cfg, &mapfmt::print(&prev.map)))?;
    write(&d.join("split.mapdesc"), &with_header(cfg, &mapfmt::print(&split)))?;
    write(&d.join("output.mapdesc"), &with_header(cfg, &mapfmt::print(&next.map)))?;
    write(
        &d.join("record.txt"),
        &with_header(cfg, &format!("{record:#?}\n{rec:#?}\n")),
    )
}

pub fn construct(cfg: &RunConfig, dump: Option<usize>) -> CliResult {
    cfg.validate()?;
    if let Some(d) = dump {
        if d >= cfg.stages {
            return Err(CliError::Config(format!(
                "--dump-stage {d} needs at least {} stages",
                d + 1
            )));
        }
    }
    let params = cfg.params()?;
    let dir = out_dir(cfg)?;
    write(&dir.join("config.txt"), &with_header(cfg, &cfg.canonical()))?;
    let header = vec![cfg.header()];
    let mut failure: Option<CliError> = None;
    let mut prev: Option<StageState> = None;
    let result = run(&params, |s, report| {
        print!("{report}");
        let step = write_checkpoint(&dir, s, &header)
            .map_err(|e| CliError::io(&dir, e))
            .and_then(|_| match (&prev, dump) {
                (Some(p), Some(d)) if p.n == d => dump_stage(&dir, cfg, p, s),
                _ => Ok(()),
            });
        prev = Some(s.clone());
        step.map_err(|e| {
            failure = Some(e);
            Error::Precondition("output failed".into())
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let (state, cert) = result?;
    write_certificate(&dir, cfg, &cert)?;
    info!("schedule {:?}", state.schedule);
    if cert.all_pass() {
        println!("certificate complete: {} stages, schedule {:?}", cfg.stages, state.schedule);
        Ok(())
    } else {
        Err(CliError::Core(Error::StageRegression {
            stage: state.n,
            conditions: "certificate".into(),
        }))
    }
}

pub fn verify(path: &Path) -> CliResult {
    let (_, state) = load(path)?;
    let state = state.ok_or_else(|| CliError::Input(format!("{}: not a .state checkpoint", path.display())))?;
    let report = verify_conditions(&state);
    print!("{report}");
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "stage {} fails condition(s) {}",
            report.stage,
            report.failure_summary()
        )))
    }
}

pub fn basin(cfg: &RunConfig, path: &Path) -> CliResult {
    let (map, state) = load(path)?;
    let test = state.as_ref().map(|s| s.test);
    let n = cfg
        .iters
        .or_else(|| state.as_ref().and_then(|s| s.schedule.last().copied()))
        .unwrap_or(DEFAULT_ITERS);
    let report = basin_estimate(&map, cfg.samples, n, cfg.seed, test.as_ref())?;
    let dir = out_dir(cfg)?;
    write(&dir.join("basin.csv"), &with_header(cfg, &report.csv()?))?;
    write(&dir.join("basin_probes.csv"), &with_header(cfg, &report.probes_csv()?))?;
    println!(
        "samples {} iters {} seed {}: sink {} attractor {} unresolved {} (± {:.4})",
        report.random.count,
        n,
        cfg.seed,
        report.random.sink,
        report.random.attractor,
        report.random.unresolved,
        report.random.half_width()
    );
    for (x, c) in &report.probes {
        println!("probe {x:?} {}", c.name());
    }
    if let Some(i) = test {
        let a = attractor_check(&map, &i, n)?;
        write(&dir.join("attractor.csv"), &with_header(cfg, &a.csv()?))?;
        print!("{a}");
    }
    Ok(())
}

pub fn gapcover(cfg: &RunConfig, path: &Path) -> CliResult {
    let (map, _) = load(path)?;
    let depth = cfg.iters.unwrap_or(DEFAULT_DEPTH);
    let cover = gap_cover(&map, depth)?;
    let dir = out_dir(cfg)?;
    write(&dir.join("gapcover.csv"), &with_header(cfg, &cover.csv()?))?;
    write(&dir.join("gapcover_lengths.csv"), &with_header(cfg, &cover.lengths_csv()?))?;
    for (j, l) in cover.lengths.iter().enumerate() {
        println!("depth {j}: covered {l:?}");
    }
    if !cover.ambiguous.is_empty() {
        println!("preimage endpoints on the flat interval at depths {:?}", cover.ambiguous);
    }
    Ok(())
}

pub fn trace(cfg: &RunConfig, path: &Path, x0: Option<f64>) -> CliResult {
    let (map, state) = load(path)?;
    let x0 = x0
        .or_else(|| state.as_ref().map(|s| s.test.mid()))
        .unwrap_or(0.0);
    let periods = cfg.iters.unwrap_or(DEFAULT_PERIODS);
    let t = suspension_trace(&map, x0, periods)?;
    let flats = flat_set(&map).unwrap_or_default();
    let dir = out_dir(cfg)?;
    write(&dir.join("trace.csv"), &with_header(cfg, &t.csv()?))?;
    let svg = t.svg(flats.first());
    let svg = svg.replacen("?>\n", &format!("?>\n<!-- {} -->\n", cfg.header()), 1);
    write(&dir.join("trace.svg"), &svg)?;
    println!("trace from {x0:?} over {periods} periods");
    Ok(())
}

pub fn rotnum(cfg: &RunConfig, path: &Path) -> CliResult {
    let (map, _) = load(path)?;
    let n = cfg.iters.unwrap_or(DEFAULT_ENCLOSURE);
    let e = rotation_enclosure(&map, n, 0.0)?;
    println!("# {}", cfg.header());
    println!("[{:?}, {:?}] n={} width={:e}", e.lower, e.upper, e.n, e.width());
    Ok(())
}

pub fn tune(cfg: &RunConfig, path: &Path) -> CliResult {
    let (map, _) = load(path)?;
    let rho = cfg.rho.value()?;
    let n = cfg.iters.unwrap_or(DEFAULT_TUNE);
    let r = tune_translation(&map, rho, 10.0 / n as f64, n)?;
    let dir = out_dir(cfg)?;
    let tuned = map.translated(r.t0).normalized();
    write(&dir.join("tuned.mapdesc"), &with_header(cfg, &mapfmt::print(&tuned)))?;
    println!("# {}", cfg.header());
    println!(
        "t0 {:?} enclosure [{:?}, {:?}] n={} steps {}",
        r.t0, r.enclosure.lower, r.enclosure.upper, r.enclosure.n, r.steps
    );
    Ok(())
}
