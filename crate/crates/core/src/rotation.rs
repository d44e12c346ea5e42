//! Rotation numbers of monotone degree-one lifts: two-sided enclosures,
//! translation tuning and continued-fraction return times.

use std::cmp::Ordering;

use crate::circle::MapDescriptor;
use crate::error::{Error, Result};

/// `(√5 − 1) / 2`
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `√2 − 1`
pub const SILVER: f64 = 0.414_213_562_373_095_03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnclosureResult {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub x0: f64,
}

impl EnclosureResult {
    /// `2/n`; the endpoints themselves are rounded.
    pub fn width(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, rho: f64) -> bool {
        self.lower <= rho && rho <= self.upper
    }

    /// Contains `rho + k` for some integer `k`.
    pub fn contains_mod1(&self, rho: f64) -> bool {
        let k = (self.lower - rho).ceil();
        rho + k <= self.upper
    }

    pub fn intersects(&self, lo: f64, hi: f64) -> bool {
        self.lower <= hi && lo <= self.upper
    }
}

/// `[(F^n(x0) − x0 − 1)/n, (F^n(x0) − x0 + 1)/n]`, valid for every monotone
/// degree-one lift.
pub fn rotation_enclosure(m: &MapDescriptor, n: usize, x0: f64) -> Result<EnclosureResult> {
    if n == 0 {
        return Err(Error::Precondition("enclosure needs n >= 1".into()));
    }
    let mut x = x0;
    for _ in 0..n {
        x = m.eval_lift(x);
    }
    let d = x - x0;
    let nf = n as f64;
    Ok(EnclosureResult {
        lower: (d - 1.0) / nf,
        upper: (d + 1.0) / nf,
        n,
        x0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    /// Translation added to the input lift.
    pub t0: f64,
    pub enclosure: EnclosureResult,
    pub steps: usize,
    pub residual: f64,
}

/// Lift-level representative of `rho` nearest the rotation number of `m`.
pub fn lift_target(m: &MapDescriptor, rho: f64) -> f64 {
    let e = rotation_enclosure(m, 2000, 0.0).expect("n > 0");
    rho + (e.midpoint() - rho).round()
}

/// Bisection on `t ∈ [0, 1)` for `ρ(F + t) = ρ*`. Stops once the bracket is
/// below `tol / 4` and the enclosure at `t` contains the target.
pub fn tune_translation(m: &MapDescriptor, rho: f64, tol: f64, n: usize) -> Result<TuneResult> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Precondition(format!("target {rho} outside [0, 1)")));
    }
    if n == 0 || tol < 2.0 / n as f64 {
        return Err(Error::Precondition(format!(
            "tolerance {tol} is finer than the enclosure width 2/{n}"
        )));
    }
    let e0 = rotation_enclosure(m, n, 0.0)?;
    let target = rho + (e0.midpoint() - rho).ceil();
    if e0.contains_mod1(rho) {
        return Ok(TuneResult {
            t0: 0.0,
            enclosure: e0,
            steps: 0,
            residual: 0.0,
        });
    }
    let e1 = rotation_enclosure(&m.translated(1.0), n, 0.0)?;
    if e0.lower > target + tol || e1.upper < target - tol {
        return Err(Error::NotBracketed);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for steps in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let e = rotation_enclosure(&m.translated(mid), n, 0.0)?;
        if e.midpoint() < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if e.contains(target) && hi - lo < tol / 4.0 {
            return Ok(TuneResult {
                t0: mid,
                enclosure: e,
                steps,
                residual: 0.5 * (hi - lo),
            });
        }
    }
    Err(Error::BudgetExceeded("tuning bisection did not settle".into()))
}

/// Outcome of comparing `ρ(F)` with a lift-level target along one orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationOrder {
    Below,
    Above,
    /// Orbit consistent with the target for the whole budget; carries the
    /// final deviation `F^N(x0) − x0 − N·target`.
    Undecided(f64),
}

/// Orbit-combinatorial comparison: `F^j(x0) ≥ x0 + p` forces `ρ ≥ p/j`, so one
/// long orbit separates `ρ(F)` from the target much more sharply than the
/// `±1/n` enclosure.
pub fn compare_rotation(m: &MapDescriptor, target: f64, x0: f64, max_iter: usize) -> RotationOrder {
    let mut x = x0;
    for j in 1..=max_iter {
        x = m.eval_lift(x);
        let d = x - x0;
        let jt = j as f64 * target;
        if d >= jt.floor() + 1.0 {
            return RotationOrder::Above;
        }
        if d <= jt.ceil() - 1.0 {
            return RotationOrder::Below;
        }
    }
    RotationOrder::Undecided(x - x0 - max_iter as f64 * target)
}

/// Base point for [`compare_rotation`]: the value of the first flat piece if
/// there is one.
pub fn reference_point(m: &MapDescriptor) -> f64 {
    m.flat_pieces().next().map(|(_, v)| v + m.translation()).unwrap_or(0.0)
}

/// Translation `τ ∈ [lo, hi]` bringing `ρ(F + τ)` onto the target, by
/// bisection driven by [`compare_rotation`].
pub fn center_translation(
    m: &MapDescriptor,
    target: f64,
    lo: f64,
    hi: f64,
    max_iter: usize,
    steps: usize,
) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let mt = m.translated(mid);
        let above = match compare_rotation(&mt, target, reference_point(&mt), max_iter) {
            RotationOrder::Above => true,
            RotationOrder::Below => false,
            RotationOrder::Undecided(dev) => dev > 0.0,
        };
        if above {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `[0; a_1, …, a_k, a_k, a_k, …]`: the last term repeats forever, so the
/// value is a quadratic irrational in `(0, 1)`.
pub fn from_continued_fraction(terms: &[u64]) -> Result<f64> {
    let (&last, head) = terms
        .split_last()
        .ok_or_else(|| Error::Precondition("no continued-fraction terms".into()))?;
    if terms.contains(&0) {
        return Err(Error::Precondition("continued-fraction terms must be positive".into()));
    }
    let a = last as f64;
    let mut x = 0.5 * ((a * a + 4.0).sqrt() - a);
    for &t in head.iter().rev() {
        x = 1.0 / (t as f64 + x);
    }
    Ok(x)
}

/// Denominators `q_1 < q_2 < …` of the continued-fraction convergents.
pub fn return_times(rho: f64, k: usize) -> Result<Vec<u64>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Precondition(format!("target {rho} outside (0, 1)")));
    }
    let mut out = Vec::with_capacity(k);
    let (mut q_prev, mut q_prev2) = (1u64, 0u64);
    let mut x = rho;
    for i in 0..k {
        if x.abs() < 1e-9 {
            return Err(Error::RationalDetected { terms: i });
        }
        let inv = 1.0 / x;
        let a = (inv + 1e-9).floor();
        x = inv - a;
        let q = (a as u64) * q_prev + q_prev2;
        if q > q_prev || out.is_empty() {
            out.push(q);
        }
        q_prev2 = q_prev;
        q_prev = q;
    }
    Ok(out)
}

/// Default hit-time budget: four times the largest convergent denominator below 10^5.
pub fn default_hit_budget(rho: f64) -> usize {
    let mut best = 1;
    for k in 1..60 {
        match return_times(rho, k) {
            Ok(qs) => {
                let last = *qs.last().unwrap();
                if last >= 100_000 {
                    break;
                }
                best = last;
            }
            Err(_) => break,
        }
    }
    4 * best as usize
}

/// Orders two enclosures when they are disjoint.
pub fn order_enclosures(a: &EnclosureResult, b: &EnclosureResult) -> Option<Ordering> {
    if a.upper < b.lower {
        Some(Ordering::Less)
    } else if b.upper < a.lower {
        Some(Ordering::Greater)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_continued_fractions() {
        assert!((from_continued_fraction(&[1]).unwrap() - GOLDEN).abs() < 1e-15);
        assert!((from_continued_fraction(&[2]).unwrap() - SILVER).abs() < 1e-15);
        let x = from_continued_fraction(&[2, 1]).unwrap();
        assert!((x - 1.0 / (2.0 + GOLDEN)).abs() < 1e-15);
        assert!(from_continued_fraction(&[]).is_err());
        assert!(from_continued_fraction(&[1, 0]).is_err());
    }

    #[test]
    fn constants() {
        assert!((GOLDEN - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-16);
        assert!((SILVER - (2f64.sqrt() - 1.0)).abs() < 2e-16);
    }

    #[test]
    fn pure_rotation_enclosure() {
        let m = MapDescriptor::rotation(0.3);
        let e = rotation_enclosure(&m, 1000, 0.2).unwrap();
        assert!((e.lower - (0.3 - 1e-3)).abs() < 1e-12);
        assert!((e.upper - (0.3 + 1e-3)).abs() < 1e-12);
        assert!(rotation_enclosure(&m, 0, 0.0).is_err());
    }

    #[test]
    fn identity_tuning_recovers_target() {
        let m = MapDescriptor::rotation(0.0);
        let r = tune_translation(&m, GOLDEN, 1e-6, 2_000_000).unwrap();
        assert!((r.t0 - GOLDEN).abs() <= 1e-6);
        assert!(r.enclosure.intersects(GOLDEN - 1e-6, GOLDEN + 1e-6));
    }

    #[test]
    fn tuning_rejects_tolerance_below_width() {
        let m = MapDescriptor::rotation(0.0);
        assert!(matches!(
            tune_translation(&m, GOLDEN, 1e-9, 100_000),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn return_time_sequences() {
        assert_eq!(return_times(GOLDEN, 6).unwrap(), vec![1, 2, 3, 5, 8, 13]);
        assert_eq!(return_times(SILVER, 4).unwrap(), vec![2, 5, 12, 29]);
        assert!(matches!(
            return_times(0.5, 3),
            Err(Error::RationalDetected { terms: 1 })
        ));
        assert_eq!(default_hit_budget(GOLDEN), 4 * 75025);
    }

    #[test]
    fn combinatorial_comparison() {
        let m = MapDescriptor::rotation(0.3);
        assert_eq!(compare_rotation(&m, 0.31, 0.0, 1000), RotationOrder::Below);
        assert_eq!(compare_rotation(&m, 0.29, 0.0, 1000), RotationOrder::Above);
        let tau = center_translation(&m, GOLDEN, -0.5, 0.5, 20_000, 60);
        assert!((0.3 + tau - GOLDEN).abs() < 1e-4);
    }
}
