//! One PASS/FAIL line per acceptance criterion. Runs as its own binary so
//! the lines come out in order; exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use flatcircle_core::cherry::{basin_estimate, classify_point, gap_cover, interval_probes, OrbitClass};
use flatcircle_core::circle::{cj_distance, flat_set};
use flatcircle_core::construction::{
    base_map, expected_length, gap, replay_split, run, AnchorConfig, Certificate, Params, StageState,
};
use flatcircle_core::rotation::{rotation_enclosure, tune_translation, GOLDEN};
use flatcircle_core::{MapDescriptor, Side};

const EPS: f64 = 0.176_776_695_296_636_9;
const L: f64 = 0.75;
const K: usize = 4;
const ANCHOR_BOUND: f64 = 0.5;
const CAUCHY_GRID: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Run {
    states: Vec<StageState>,
    cert: Certificate,
    elapsed: Duration,
}

fn reference_run() -> Result<Run, String> {
    let t = Instant::now();
    let mut states = Vec::new();
    let (_, cert) = run(&Params::new(EPS, GOLDEN, L, K), |s, _| {
        states.push(s.clone());
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok(Run {
        states,
        cert,
        elapsed: t.elapsed(),
    })
}

fn rotation_law() -> Outcome {
    let t = Instant::now();
    let m = MapDescriptor::rotation(GOLDEN);
    let mut ok = true;
    let mut widths = Vec::new();
    for n in [100, 1_000, 10_000] {
        match rotation_enclosure(&m, n, 0.0) {
            Ok(e) => {
                ok &= e.width() == 2.0 / n as f64 && e.contains(GOLDEN);
                widths.push(format!("{:e}", e.width()));
            }
            Err(_) => ok = false,
        }
    }
    let s = t.elapsed().as_secs_f64();
    outcome(ok && s < 1.0, format!("widths {} in {s:.3}s", widths.join(" ")))
}

fn tuning() -> Outcome {
    let t = Instant::now();
    let Ok((raw, _)) = base_map(EPS, L, None) else {
        return outcome(false, "base map rejected".into());
    };
    match tune_translation(&raw, GOLDEN, 1e-5, 1_000_000) {
        Ok(r) => {
            let s = t.elapsed().as_secs_f64();
            let hit = r.enclosure.contains_mod1(GOLDEN);
            outcome(
                hit && s < 30.0,
                format!(
                    "t0 = {:.12}, enclosure [{:.9}, {:.9}] at n = {}, {s:.1}s",
                    r.t0, r.enclosure.lower, r.enclosure.upper, r.enclosure.n
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn telescoping(r: &Run) -> Outcome {
    let mut worst = 0.0f64;
    for s in &r.states {
        let measured = match flat_set(&s.map) {
            Ok(f) if f.len() == 1 => f[0].len(),
            _ => return outcome(false, format!("stage {} has no single flat interval", s.n)),
        };
        worst = worst.max((measured - expected_length(L, EPS, s.n)).abs());
    }
    outcome(worst <= 1e-12, format!("largest error {worst:e} over {} stages", r.states.len()))
}

fn flat_geometry(r: &Run) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for w in r.states.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let Some(record) = next.records.last() else {
            return outcome(false, format!("stage {} has no record", next.n));
        };
        let split = match replay_split(prev, record) {
            Ok((m, _)) => flat_set(&m).unwrap_or_default(),
            Err(e) => return outcome(false, format!("stage {}: {e}", prev.n)),
        };
        let after = flat_set(&next.map).unwrap_or_default();
        let g = if split.len() == 2 {
            let (a, b) = (split[0], split[1]);
            let d1 = (b.a() - a.b()).rem_euclid(1.0);
            let d2 = (a.a() - b.b()).rem_euclid(1.0);
            d1.min(d2)
        } else {
            f64::NAN
        };
        let stage_ok = split.len() == 2 && (g - gap(EPS, prev.n)).abs() <= 1e-12 && after.len() == 1;
        ok &= stage_ok;
        notes.push(format!("{}->{}/{}", prev.n, split.len(), after.len()));
    }
    outcome(ok, format!("components split/reflatten {}", notes.join(" ")))
}

/// Order read off `derivative()`: lower derivatives vanish, this one does not.
fn order_holds(m: &MapDescriptor, x: f64, side: Side, order: u32) -> bool {
    let d = |k: usize| m.derivative(k, x, Some(side)).unwrap_or(f64::NAN).abs();
    (1..order as usize).all(|k| d(k) <= 1e-8) && d(order as usize) > 1e-8
}

fn tangency(r: &Run) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for s in &r.states {
        let (left, right) = s.expected_orders();
        let rok = order_holds(&s.map, s.flat.b(), Side::Right, right);
        let lok = left.is_none_or(|l| order_holds(&s.map, s.flat.a(), Side::Left, l));
        ok &= rok && lok;
        notes.push(format!("{}:({},{})", s.n, left.map_or("-".into(), |l| l.to_string()), right));
    }
    outcome(ok, format!("orders {}", notes.join(" ")))
}

fn cauchy(r: &Run) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for w in r.states.windows(2) {
        let i = w[1].n;
        let d = cj_distance(&w[1].map, &w[0].map, i, CAUCHY_GRID).value;
        ok &= d <= 2f64.powi(-(i as i32));
        notes.push(format!("{i}:{d:.2e}"));
    }
    outcome(ok, format!("C^i distances {}", notes.join(" ")))
}

fn wandering(r: &Run) -> Outcome {
    let last = r.states.last().expect("stages");
    let rk = *last.schedule.last().expect("schedule");
    let staircase = !r.cert.decay.is_empty()
        && r.cert.decay.iter().all(|d| d.length > 0.0 && d.length < d.bound);
    let covered: Vec<bool> = (1..rk).map(|j| r.cert.decay.iter().any(|d| d.j == j)).collect();
    let avoid = match last.map.iterate_interval(&last.test, rk - 1) {
        Ok(images) => !last.test.intersects(&last.flat) && images.iter().all(|i| !i.intersects(&last.flat)),
        Err(_) => false,
    };
    let s = r.elapsed.as_secs_f64();
    outcome(
        staircase && covered.iter().all(|c| *c) && avoid && s < 300.0,
        format!("r_K = {rk}, {} decay rows, avoidance {avoid}, pipeline {s:.1}s", r.cert.decay.len()),
    )
}

fn cherry(r: &Run) -> Outcome {
    let last = r.states.last().expect("stages");
    let rk = *last.schedule.last().expect("schedule");
    let probes: Vec<OrbitClass> = interval_probes(&last.test)
        .iter()
        .map(|&x| classify_point(&last.map, x, rk))
        .collect();
    let probes_ok = probes.iter().all(|c| *c == OrbitClass::AttractorCandidate);
    let basin = basin_estimate(&last.map, 1000, rk, 1, None);
    let sink = basin.as_ref().map_or(f64::NAN, |b| b.random.sink);
    let cover = gap_cover(&last.map, 5);
    let lengths = cover.as_ref().map(|c| c.lengths.clone()).unwrap_or_default();
    let growing = lengths.len() == 6 && lengths.windows(2).all(|w| w[1] > w[0]);
    let names: Vec<&str> = probes.iter().map(|c| c.name()).collect();
    outcome(
        probes_ok && sink > 0.0 && sink < 1.0 && growing,
        format!(
            "probes in I [{}], sink fraction {sink}, cover lengths strictly increasing {growing}",
            names.join(" ")
        ),
    )
}

fn anchored() -> Outcome {
    let anchor = match AnchorConfig::new(0.0, ANCHOR_BOUND) {
        Ok(a) => a,
        Err(e) => return outcome(false, e.to_string()),
    };
    let params = Params::new(EPS, GOLDEN, L, 2).anchored(anchor);
    let mut states = Vec::new();
    if let Err(e) = run(&params, |s, _| {
        states.push(s.clone());
        Ok(())
    }) {
        return outcome(false, e.to_string());
    }
    let mut ok = states.len() == 3;
    let mut notes = Vec::new();
    for s in &states {
        let a = flat_set(&s.map).ok().and_then(|f| f.first().map(|u| u.a()));
        let held = a.is_some_and(|a| {
            let d = (a - anchor.p).rem_euclid(1.0);
            d.min(1.0 - d) <= 1e-12
        });
        let slope = s.map.derivative(1, anchor.p, Some(Side::Left)).unwrap_or(f64::NAN);
        ok &= held && slope > anchor.k;
        notes.push(format!("{}: left end held {held}, F'(p-) = {slope:.4}", s.n));
    }
    outcome(ok, format!("bound {}; {}", anchor.k, notes.join("; ")))
}

fn csvs(c: &Certificate) -> Vec<String> {
    [
        c.conditions_csv(),
        c.decay_csv(),
        c.cauchy_csv(),
        c.lengths_csv(),
        c.stages_csv(),
    ]
    .into_iter()
    .map(|r| r.unwrap_or_default())
    .collect()
}

fn determinism(first: &Run) -> Outcome {
    match reference_run() {
        Ok(second) => {
            let same = csvs(&first.cert) == csvs(&second.cert);
            outcome(same, format!("two K = {K} runs, certificate CSVs identical {same}"))
        }
        Err(e) => outcome(false, e),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "rotation enclosure law", rotation_law()),
        (2, "stage-0 tuning", tuning()),
    ];
    match reference_run() {
        Ok(r) => {
            results.push((3, "telescoping lengths", telescoping(&r)));
            results.push((4, "flat-set geometry", flat_geometry(&r)));
            results.push((5, "tangency orders", tangency(&r)));
            results.push((6, "Cauchy table", cauchy(&r)));
            results.push((7, "wandering certificate", wandering(&r)));
            results.push((8, "attractor proxies", cherry(&r)));
            results.push((9, "anchored mode", anchored()));
            results.push((10, "determinism", determinism(&r)));
        }
        Err(e) => {
            for (i, name) in [
                (3, "telescoping lengths"),
                (4, "flat-set geometry"),
                (5, "tangency orders"),
                (6, "Cauchy table"),
                (7, "wandering certificate"),
                (8, "attractor proxies"),
            ] {
                results.push((i, name, outcome(false, format!("reference run failed: {e}"))));
            }
            results.push((9, "anchored mode", anchored()));
            results.push((10, "determinism", outcome(false, format!("reference run failed: {e}"))));
        }
    }
    let mut failed = 0;
    for (i, name, o) in &results {
        println!(
            "criterion {i:>2} {:<24} {} {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
