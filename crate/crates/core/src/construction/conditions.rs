use std::fmt;

use super::{end_window, StageState};
use crate::circle::{cj_distance, flat_set, tangency_order, validate, IntervalOnCircle, MapDescriptor, Side};
use crate::rotation::{reference_point, rotation_enclosure};

/// Grid for the Cauchy-table norm.
pub(crate) const CAUCHY_GRID: usize = 64;

/// Samples for the relative derivative bound.
const RATIO_SAMPLES: usize = 10_000;

/// Compact containment margin, as a fraction of the window.
pub const LANDING_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub index: usize,
    pub name: &'static str,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub stage: usize,
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<&ConditionEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    pub fn get(&self, index: usize) -> &ConditionEntry {
        &self.entries[index - 1]
    }

    pub fn failure_summary(&self) -> String {
        self.failures()
            .iter()
            .map(|e| format!("({}) {}: {}", e.index, e.name, e.note))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage {}", self.stage)?;
        for e in &self.entries {
            writeln!(
                f,
                "{:>2} {:<17} {} measured={:<12.6e} bound={:<12.6e} margin={:.6e} {}",
                e.index,
                e.name,
                if e.pass { "PASS" } else { "FAIL" },
                e.measured,
                e.bound,
                e.margin,
                e.note
            )?;
        }
        Ok(())
    }
}

fn entry(index: usize, name: &'static str, measured: f64, bound: f64, margin: f64, pass: bool, note: String) -> ConditionEntry {
    ConditionEntry {
        index,
        name,
        pass,
        measured,
        bound,
        margin,
        note,
    }
}

fn regularity(s: &StageState) -> ConditionEntry {
    let report = validate(&s.map);
    let bps = s.map.breakpoints();
    let mut lowest = u32::MAX;
    for b in &bps[..bps.len() - 1] {
        let corner = s
            .anchor
            .map(|an| (b.x - an.p).abs() < 1e-12)
            .unwrap_or(false);
        if corner {
            continue;
        }
        if let crate::circle::Smoothness::Finite(k) = b.class {
            lowest = lowest.min(k);
        }
    }
    let needed = if s.is_anchored() { 0 } else { s.n as u32 };
    let measured = if lowest == u32::MAX { f64::INFINITY } else { lowest as f64 };
    let mut note = report
        .failures()
        .iter()
        .map(|c| format!("{} at {:?}", c.name, c.location))
        .collect::<Vec<_>>()
        .join(", ");
    if lowest < needed {
        note.push_str(&format!("class C^{lowest} below C^{needed}"));
    }
    let pass = report.all_pass() && lowest >= needed;
    entry(1, "regularity", measured, needed as f64, measured - needed as f64, pass, note)
}

fn rotation(s: &StageState) -> ConditionEntry {
    let x0 = reference_point(&s.map);
    match rotation_enclosure(&s.map, s.budgets.enclosure_iters, x0) {
        Ok(e) => {
            let target = s.rho + (e.midpoint() - s.rho).round();
            let dist = (target - e.midpoint()).abs();
            let half = 0.5 * e.width();
            entry(
                2,
                "rotation",
                dist,
                half,
                half - dist,
                e.contains_mod1(s.rho),
                format!("[{:.12}, {:.12}] n={}", e.lower, e.upper, e.n),
            )
        }
        Err(err) => entry(2, "rotation", f64::NAN, 0.0, f64::NAN, false, err.to_string()),
    }
}

fn flat_geometry(s: &StageState) -> ConditionEntry {
    match flat_set(&s.map) {
        Ok(fs) => {
            let err = if fs.len() == 1 {
                let d = |x: f64, y: f64| {
                    let t = (x - y).rem_euclid(1.0);
                    t.min(1.0 - t)
                };
                d(fs[0].a(), s.flat.a()).max(d(fs[0].b(), s.flat.b()))
            } else {
                f64::INFINITY
            };
            let pass = fs.len() == 1 && err <= 1e-12;
            let note = fs.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            entry(3, "flat_set", fs.len() as f64, 1.0, 1e-12 - err, pass, note)
        }
        Err(e) => entry(3, "flat_set", f64::NAN, 1.0, f64::NAN, false, e.to_string()),
    }
}

fn order_entry(index: usize, name: &'static str, m: &MapDescriptor, x: f64, side: Side, expected: u32) -> ConditionEntry {
    match tangency_order(m, x, side) {
        Ok(k) => entry(
            index,
            name,
            k as f64,
            expected as f64,
            -((k as f64) - expected as f64).abs(),
            k == expected,
            format!("at {x:.15}"),
        ),
        Err(e) => entry(index, name, f64::NAN, expected as f64, f64::NAN, false, e.to_string()),
    }
}

fn endpoints(s: &StageState) -> (ConditionEntry, ConditionEntry) {
    let (left, right) = s.expected_orders();
    let right_entry = |index| order_entry(index, "right_order", &s.map, s.flat.b(), Side::Right, right);
    match (s.anchor, left) {
        (Some(an), _) => {
            let d = s.map.derivative(1, an.p, Some(Side::Left)).unwrap_or(f64::NAN);
            let corner = entry(
                4,
                "left_derivative",
                d,
                an.k,
                d - an.k,
                d > an.k && (s.flat.a() - an.p).abs() <= 1e-12,
                format!("a_n = {:.15}, p = {:.15}", s.flat.a(), an.p),
            );
            (corner, right_entry(5))
        }
        (None, Some(l)) => (
            right_entry(4),
            order_entry(5, "left_order", &s.map, s.flat.a(), Side::Left, l),
        ),
        (None, None) => unreachable!("main mode always has a left tangency"),
    }
}

fn telescoping(s: &StageState) -> ConditionEntry {
    let measured = match flat_set(&s.map) {
        Ok(fs) if fs.len() == 1 => fs[0].len(),
        _ => s.flat.len(),
    };
    let expected = s.expected_length();
    let err = (measured - expected).abs();
    entry(
        6,
        "telescoping",
        measured,
        expected,
        1e-12 - err,
        err <= 1e-12,
        format!("error {err:.3e}"),
    )
}

fn cauchy(s: &StageState) -> ConditionEntry {
    let bound = 2f64.powi(-(s.n as i32));
    match &s.previous {
        None => entry(7, "cauchy", 0.0, bound, bound, true, "initial stage".into()),
        Some((prev, _)) => {
            let d = cj_distance(&s.map, prev, s.n, CAUCHY_GRID);
            entry(
                7,
                "cauchy",
                d.value,
                bound,
                bound - d.value,
                d.value <= bound,
                format!("C^{} per order {:?}", s.n, d.per_order),
            )
        }
    }
}

/// `U` widened by `¼|U|` on each side, capped so that a quarter of the
/// complement stays outside.
pub(crate) fn enlarged(u: &IntervalOnCircle) -> IntervalOnCircle {
    let q = (0.25 * u.len()).min(0.375 * (1.0 - u.len()));
    IntervalOnCircle::new(u.a() - q, u.b() + q).expect("enlarged window shorter than the circle")
}

fn derivative_ratio(s: &StageState) -> ConditionEntry {
    let bound = 2f64.powi(-(s.n as i32 + 1));
    let Some((prev, prev_flat)) = &s.previous else {
        return entry(8, "derivative_ratio", 0.0, bound, bound, true, "initial stage".into());
    };
    let window = enlarged(prev_flat);
    let start = window.b();
    let span = 1.0 - window.len();
    let mut worst = 0.0f64;
    let mut at = start;
    for k in 0..RATIO_SAMPLES {
        let x = start + span * (k as f64 + 0.5) / RATIO_SAMPLES as f64;
        let d1 = s.map.one_sided_jet(x, 1, Side::Right)[1];
        let d0 = prev.one_sided_jet(x, 1, Side::Right)[1];
        let diff = (d1 - d0).abs();
        let ratio = if diff == 0.0 { 0.0 } else { diff / d1 };
        if !(ratio <= worst) {
            worst = if ratio.is_nan() { f64::INFINITY } else { ratio };
            at = x;
        }
    }
    entry(
        8,
        "derivative_ratio",
        worst,
        bound,
        bound - worst,
        worst < bound,
        format!("worst at {:.9}, outside {}", at.rem_euclid(1.0), window),
    )
}

/// `(j, k, |f^j(I)|, 2^{−(k−1)})` for `r_{k−1} ≤ j < r_k`, `k = 1..=n`.
pub(crate) fn decay_rows(s: &StageState) -> Result<Vec<(usize, usize, f64, f64)>, String> {
    let r = &s.schedule;
    let last = s.return_time();
    let images = s
        .map
        .iterate_interval(&s.test, last)
        .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for k in 1..=s.n {
        let bound = 2f64.powi(-(k as i32 - 1));
        for j in r[k - 1]..r[k] {
            rows.push((j, k, images[j - 1].len(), bound));
        }
    }
    Ok(rows)
}

fn decay(s: &StageState) -> ConditionEntry {
    match decay_rows(s) {
        Err(e) => entry(9, "decay", f64::NAN, 1.0, f64::NAN, false, e),
        Ok(rows) if rows.is_empty() => entry(9, "decay", 0.0, 1.0, 1.0, true, "initial stage".into()),
        Ok(rows) => {
            let mut worst = 0.0f64;
            let mut note = String::new();
            let mut pass = true;
            for &(j, k, len, bound) in &rows {
                let ratio = len / bound;
                if ratio > worst {
                    worst = ratio;
                }
                if !(len > 0.0 && len < bound) && pass {
                    pass = false;
                    note = format!("j = {j} (k = {k}) has length {len:e}");
                }
            }
            let smallest = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
            if pass {
                note = format!("smallest image {smallest:.3e}");
            }
            entry(9, "decay", worst, 1.0, 1.0 - worst, pass, note)
        }
    }
}

fn avoidance(s: &StageState) -> ConditionEntry {
    let window = end_window(&s.flat, s.side(), s.gap());
    let need = LANDING_MARGIN * window.len();
    if s.test.intersects(&s.flat) {
        return entry(10, "avoidance", f64::NAN, need, f64::NAN, false, "I meets U at j = 0".into());
    }
    let images = match s.map.iterate_interval(&s.test, s.return_time()) {
        Ok(v) => v,
        Err(e) => return entry(10, "avoidance", f64::NAN, need, f64::NAN, false, e.to_string()),
    };
    if let Some(j) = images[..images.len() - 1]
        .iter()
        .position(|img| img.intersects(&s.flat))
    {
        return entry(
            10,
            "avoidance",
            f64::NAN,
            need,
            f64::NAN,
            false,
            format!("f^{}(I) meets U", j + 1),
        );
    }
    let landing = images.last().expect("r_n >= 1");
    let margin = window.margin_inside(landing);
    entry(
        10,
        "avoidance",
        margin,
        need,
        margin - need,
        margin >= need,
        format!("f^{}(I) = {} in {}", s.return_time(), landing, window),
    )
}

/// All ten stage conditions, measured on `s`.
pub fn verify_conditions(s: &StageState) -> ConditionReport {
    let (c1, c2, c3, (c4, c5), c6, c7, c8, c9, c10) = std::thread::scope(|scope| {
        let h7 = scope.spawn(|| cauchy(s));
        let h8 = scope.spawn(|| derivative_ratio(s));
        let h2 = scope.spawn(|| rotation(s));
        let c1 = regularity(s);
        let c3 = flat_geometry(s);
        let c45 = endpoints(s);
        let c6 = telescoping(s);
        let c9 = decay(s);
        let c10 = avoidance(s);
        (
            c1,
            h2.join().expect("rotation check"),
            c3,
            c45,
            c6,
            h7.join().expect("cauchy check"),
            h8.join().expect("derivative check"),
            c9,
            c10,
        )
    });
    ConditionReport {
        stage: s.n,
        entries: vec![c1, c2, c3, c4, c5, c6, c7, c8, c9, c10],
    }
}
