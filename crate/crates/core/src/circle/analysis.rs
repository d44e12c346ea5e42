use std::fmt;

use crate::error::{Error, Result};
use crate::expr::factorial;

use super::descriptor::{MapDescriptor, Piece, Side, MAX_ORDER};
use super::interval::IntervalOnCircle;

/// Threshold separating a vanishing derivative from a non-vanishing one.
pub const TANGENCY_TOL: f64 = 1e-8;
const HIDDEN_FLAT_TOL: f64 = 1e-14;
const FLAT_SAMPLES: usize = 64;

/// Maximal flat arcs of the map.
pub fn flat_set(m: &MapDescriptor) -> Result<Vec<IntervalOnCircle>> {
    check_hidden_flat(m)?;
    let pieces = m.pieces();
    let n = pieces.len();
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut j = 0;
    while j < n {
        if pieces[j].is_flat() {
            let start = m.piece_span(j).0;
            while j < n && pieces[j].is_flat() {
                j += 1;
            }
            runs.push((start, m.piece_span(j - 1).1));
        } else {
            j += 1;
        }
    }
    let wraps = runs.len() > 1
        && runs[0].0 == 0.0
        && runs[runs.len() - 1].1 == 1.0
        && pieces[0].is_flat()
        && pieces[n - 1].is_flat();
    if wraps {
        let first = runs.remove(0);
        let last = runs.last_mut().unwrap();
        last.1 = 1.0 + first.1;
    }
    runs.into_iter()
        .map(|(a, b)| IntervalOnCircle::new(a, b))
        .collect()
}

fn check_hidden_flat(m: &MapDescriptor) -> Result<()> {
    for (j, p) in m.pieces().iter().enumerate() {
        let Piece::Smooth(e) = p else { continue };
        let (lo, hi) = m.piece_span(j);
        let mut run = 0;
        for i in 0..FLAT_SAMPLES {
            let y = lo + (hi - lo) * (i as f64 + 0.5) / FLAT_SAMPLES as f64;
            let jet = e.jet(y, MAX_ORDER);
            let vanishes = jet
                .iter()
                .enumerate()
                .skip(1)
                .all(|(k, c)| (c * factorial(k)).abs() < HIDDEN_FLAT_TOL);
            run = if vanishes { run + 1 } else { 0 };
            if run >= 3 {
                return Err(Error::HiddenFlatRegion { piece: j, x: y });
            }
        }
    }
    Ok(())
}

/// Least order with a non-vanishing one-sided derivative, up to [`MAX_ORDER`].
pub fn measured_order(m: &MapDescriptor, x: f64, side: Side) -> Option<u32> {
    let jet = m.one_sided_jet(x, MAX_ORDER, side);
    (1..=MAX_ORDER)
        .find(|&k| (jet[k] * factorial(k)).abs() > TANGENCY_TOL)
        .map(|k| k as u32)
}

/// Vanishing order at a flat endpoint, checked against the declared junction.
pub fn tangency_order(m: &MapDescriptor, endpoint: f64, side: Side) -> Result<u32> {
    let measured = measured_order(m, endpoint, side).unwrap_or(MAX_ORDER as u32 + 1);
    let declared = m
        .breakpoint_index(endpoint)
        .and_then(|j| m.breakpoints()[j].junction)
        .filter(|jn| jn.side == side)
        .map(|jn| jn.order);
    match declared {
        Some(d) if d != measured => Err(Error::OrderMismatch {
            declared: d,
            measured,
        }),
        Some(d) => Ok(d),
        None if measured > MAX_ORDER as u32 => Err(Error::OrderMismatch {
            declared: 0,
            measured,
        }),
        None => Ok(measured),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CjDistance {
    pub value: f64,
    /// Sup of `|D^i (F1 - F2)|` for each order `i = 0..=j`.
    pub per_order: Vec<f64>,
    pub converged: bool,
    pub samples: usize,
}

/// Sup-norm distance of the `C^j` kind between two lifts, estimated on a grid
/// refined until the estimate settles. The difference of two degree-one lifts is
/// periodic, so one period suffices.
pub fn cj_distance(m1: &MapDescriptor, m2: &MapDescriptor, j: usize, grid: usize) -> CjDistance {
    let j = j.min(MAX_ORDER);
    let mut cuts: Vec<f64> = m1
        .breakpoints()
        .iter()
        .chain(m2.breakpoints())
        .map(|b| b.x)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);

    let dt = (m1.translation() - m2.translation()).abs();
    let spans: Vec<(f64, f64, bool)> = cuts
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let same = piece_at(m1, mid) == piece_at(m2, mid);
            (w[0], w[1], same)
        })
        .collect();

    let mut grid = grid.max(8);
    let mut prev: Option<Vec<f64>> = None;
    let mut samples = 0;
    for _level in 0..6 {
        let mut sup = vec![0.0f64; j + 1];
        sup[0] = dt;
        for &(lo, hi, same) in &spans {
            if same {
                continue;
            }
            for y in span_samples(lo, hi, grid) {
                let side = if y >= hi { Side::Left } else { Side::Right };
                let a = m1.one_sided_jet(y, j, side);
                let b = m2.one_sided_jet(y, j, side);
                for i in 0..=j {
                    let d = ((a[i] - b[i]) * factorial(i)).abs();
                    if d > sup[i] {
                        sup[i] = d;
                    }
                }
                samples += 1;
            }
        }
        if let Some(p) = &prev {
            let settled = p
                .iter()
                .zip(&sup)
                .all(|(a, b)| (a - b).abs() <= 1e-10 * b.abs().max(1.0));
            if settled {
                return finish(sup, true, samples);
            }
        }
        prev = Some(sup);
        grid *= 2;
    }
    finish(prev.unwrap(), false, samples)
}

fn finish(per_order: Vec<f64>, converged: bool, samples: usize) -> CjDistance {
    let value = per_order.iter().cloned().fold(0.0, f64::max);
    CjDistance {
        value,
        per_order,
        converged,
        samples,
    }
}

fn piece_at(m: &MapDescriptor, y: f64) -> &Piece {
    let j = m.breakpoints().partition_point(|b| b.x <= y).saturating_sub(1);
    &m.pieces()[j.min(m.pieces().len() - 1)]
}

/// Uniform grid on `[lo, hi]` plus points accumulating geometrically at both ends.
fn span_samples(lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let w = hi - lo;
    let mut out: Vec<f64> = (0..=grid).map(|i| lo + w * i as f64 / grid as f64).collect();
    let mut h = w / grid as f64;
    for _ in 0..24 {
        h *= 0.5;
        out.push(lo + h);
        out.push(hi - h);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// Worst-case slack; negative when failing.
    pub margin: f64,
    pub location: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(
                f,
                "{:<12} {} margin={:e}",
                c.name,
                if c.pass { "ok" } else { "FAIL" },
                c.margin
            )?;
            if let Some(x) = c.location {
                write!(f, " at x={x}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

const MONOTONE_SAMPLES: usize = 256;

/// Checks every descriptor invariant and reports margins.
pub fn validate(m: &MapDescriptor) -> ValidationReport {
    let mut checks = Vec::new();
    let bps = m.breakpoints();
    let pieces = m.pieces();
    let n = pieces.len();

    // continuity
    let mut worst = 0.0f64;
    let mut at = None;
    for j in 0..n {
        let (lo, _) = m.piece_span(j);
        let prev = if j == 0 { n - 1 } else { j - 1 };
        let left = if j == 0 {
            pieces[prev].eval(1.0) - 1.0
        } else {
            pieces[prev].eval(lo)
        };
        let right = pieces[j].eval(lo);
        let gap = (left - right).abs();
        if gap > worst || !gap.is_finite() {
            worst = gap;
            at = Some(lo);
        }
    }
    checks.push(Check {
        name: "continuity",
        pass: worst <= 1e-12,
        margin: 1e-12 - worst,
        location: at,
    });

    // monotone
    let mut worst = f64::INFINITY;
    let mut at = None;
    for (j, p) in pieces.iter().enumerate() {
        let (lo, hi) = m.piece_span(j);
        let mut last = p.eval(lo);
        for i in 0..=MONOTONE_SAMPLES {
            let y = lo + (hi - lo) * i as f64 / MONOTONE_SAMPLES as f64;
            let jet = p.jet(y, 1);
            let step = jet[0] - last;
            last = jet[0];
            let slack = jet[1].min(step + 1e-13);
            if slack < worst || slack.is_nan() {
                worst = slack;
                at = Some(y);
            }
        }
    }
    checks.push(Check {
        name: "monotone",
        pass: worst >= -1e-13,
        margin: worst,
        location: at,
    });

    // degree one (structural, spot-checked)
    let mut worst = 0.0f64;
    for i in 0..97 {
        let x = i as f64 / 97.0 + 0.003;
        let d = (m.eval_lift(x + 1.0) - m.eval_lift(x) - 1.0).abs();
        worst = worst.max(d);
    }
    checks.push(Check {
        name: "degree_one",
        pass: worst < 1e-12,
        margin: 1e-12 - worst,
        location: None,
    });

    let f0 = m.eval_lift(0.0);
    checks.push(Check {
        name: "normalized",
        pass: (0.0..1.0).contains(&f0),
        margin: f0.min(1.0 - f0),
        location: Some(0.0),
    });

    // declared smoothness at breakpoints
    let mut worst = f64::INFINITY;
    let mut at = None;
    for (j, b) in bps[..n].iter().enumerate() {
        let orders = b.class.checked_orders();
        if orders == 0 {
            continue;
        }
        let l = m.one_sided_jet(b.x, orders, Side::Left);
        let r = m.one_sided_jet(b.x, orders, Side::Right);
        for i in 1..=orders {
            let (li, ri) = (l[i] * factorial(i), r[i] * factorial(i));
            let tol = m.jump_tolerance(j, i, li, ri);
            let slack = (tol - (li - ri).abs()) / tol;
            if slack < worst || slack.is_nan() {
                worst = slack;
                at = Some(b.x);
            }
        }
    }
    checks.push(Check {
        name: "smoothness",
        pass: worst >= 0.0 || worst == f64::INFINITY,
        margin: if worst.is_finite() { worst } else { 1.0 },
        location: at,
    });

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::descriptor::{Breakpoint, Junction, Smoothness};
    use crate::expr::{constant, pow, x};

    fn flat_with_quartic() -> MapDescriptor {
        // flat 0.1 on (0, 0.4); 0.1 + (x-0.4)^4 * c ... monotone up to 1.1 at x = 1
        let c = 1.0 / 0.6f64.powi(4);
        let right = constant(0.1) + c * pow(x() - constant(0.4), 4);
        let bps = vec![
            Breakpoint {
                x: 0.0,
                class: Smoothness::Finite(0),
                junction: None,
            },
            Breakpoint {
                x: 0.4,
                class: Smoothness::Finite(3),
                junction: Some(Junction {
                    order: 4,
                    coeff: c,
                    side: Side::Right,
                }),
            },
            Breakpoint {
                x: 1.0,
                class: Smoothness::Finite(0),
                junction: None,
            },
        ];
        MapDescriptor::new(bps, vec![Piece::Flat(0.1), Piece::Smooth(right)], 0.0).unwrap()
    }

    #[test]
    fn rotation_has_no_flat_set_and_validates() {
        let m = MapDescriptor::rotation(0.3);
        assert!(flat_set(&m).unwrap().is_empty());
        assert!(validate(&m).all_pass());
        assert_eq!(tangency_order(&m, 0.0, Side::Right).unwrap(), 1);
    }

    #[test]
    fn quartic_junction_order() {
        let m = flat_with_quartic();
        assert_eq!(tangency_order(&m, 0.4, Side::Right).unwrap(), 4);
        let fs = flat_set(&m).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!((fs[0].a(), fs[0].b()), (0.0, 0.4));
    }

    #[test]
    fn decreasing_piece_fails_monotone() {
        let bps = vec![Breakpoint::smooth(0.0), Breakpoint::smooth(0.5), Breakpoint::smooth(1.0)];
        let p1 = Piece::Smooth(constant(0.5) - 0.2 * x());
        let p2 = Piece::Smooth(constant(0.4) + 2.2 * (x() - constant(0.5)));
        let m = MapDescriptor::new(bps, vec![p1, p2], 0.0).unwrap();
        let r = validate(&m);
        let mono = r.get("monotone").unwrap();
        assert!(!mono.pass);
        assert!(mono.location.unwrap() < 0.5);
    }

    #[test]
    fn cj_distance_of_constant_shift() {
        let m = flat_with_quartic();
        let d = cj_distance(&m, &m.translated(0.003), 0, 16);
        assert!((d.value - 0.003).abs() < 1e-15);
        assert_eq!(cj_distance(&m, &m, 3, 16).value, 0.0);
    }

    #[test]
    fn hidden_flat_region_detected() {
        let bps = vec![Breakpoint::smooth(0.0), Breakpoint::smooth(1.0)];
        let m = MapDescriptor::new(bps, vec![Piece::Smooth(constant(0.2) + 0.0 * x())], 0.0);
        // 0 * x folds to a constant expression, which is flat inside a smooth piece
        let m = m.unwrap();
        assert!(matches!(flat_set(&m), Err(Error::HiddenFlatRegion { .. })));
    }
}
