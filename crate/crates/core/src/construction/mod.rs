//! Stage-by-stage construction of a degree-one map with a flat interval whose
//! orbit structure forces a wandering interval.
//!
//! A [`StageState`] holds the current map `M_n`, its flat interval `U_n`, the
//! return schedule `r_0 < … < r_n` and the test interval `I`. Each stage splits
//! a small component `J_n` off one end of `U_n`, steers the orbit of `J_n` into
//! the next landing window, re-smooths `J_n` and re-verifies the ten stage
//! conditions.

pub(crate) mod certificate;
mod conditions;
mod stage;

pub use certificate::{read_checkpoint, write_checkpoint, Certificate, CheckpointPaths, DecayRow};
pub use conditions::{verify_conditions, ConditionEntry, ConditionReport};
pub use stage::{replay_split, run, run_stage, split_spec, StageRecord};

use crate::circle::{Editor, IntervalOnCircle, Junction, MapDescriptor, Piece, Side, Smoothness};
use crate::error::{Error, Result};
use crate::expr::{self, constant, pow, smoothstep};
use crate::perturbation::Parity;
use crate::rotation::{center_translation, default_hit_budget, lift_target, tune_translation};

/// Coefficient of the quadratic junctions of the stage-0 map.
const BASE_JUNCTION: f64 = 5e-4;

/// Fixed left endpoint of the flat interval and a lower bound for the left
/// derivative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorConfig {
    pub p: f64,
    pub k: f64,
}

impl AnchorConfig {
    pub fn new(p: f64, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Precondition(format!("derivative bound {k} must be positive")));
        }
        Ok(Self { p: p.rem_euclid(1.0), k })
    }
}

/// Iteration and search budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    /// Hit-time search limit.
    pub max_hit: usize,
    /// Iterations behind every reported rotation enclosure.
    pub enclosure_iters: usize,
    /// Orbit length used by the combinatorial rotation comparison.
    pub compare_iters: usize,
    /// Target for `k! · coeff` at newly created junctions.
    pub coeff_target: f64,
}

impl Budgets {
    pub fn for_rho(rho: f64) -> Self {
        Self {
            max_hit: default_hit_budget(rho),
            enclosure_iters: 100_000,
            compare_iters: 20_000,
            coeff_target: 1e-6,
        }
    }

    /// Rotation budgets an anchored map can resolve. Next to a corner the
    /// rotation number leaves each plateau with a logarithmic modulus in the
    /// translation, so finer enclosures fall between adjacent doubles.
    pub fn anchored(rho: f64) -> Self {
        Self {
            enclosure_iters: 10_000,
            compare_iters: 10_000,
            ..Self::for_rho(rho)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub eps: f64,
    pub rho: f64,
    pub l: f64,
    pub stages: usize,
    pub anchor: Option<AnchorConfig>,
    pub budgets: Budgets,
}

impl Params {
    pub fn new(eps: f64, rho: f64, l: f64, stages: usize) -> Self {
        Self {
            eps,
            rho,
            l,
            stages,
            anchor: None,
            budgets: Budgets::for_rho(rho),
        }
    }

    /// Anchored run with [`Budgets::anchored`].
    pub fn anchored(mut self, anchor: AnchorConfig) -> Self {
        self.anchor = Some(anchor);
        self.budgets = Budgets::anchored(self.rho);
        self
    }

    /// Split budget at stage `n`.
    pub fn delta(&self, n: usize) -> f64 {
        2f64.powi(-(n as i32 + 2))
    }

    /// Re-smoothing budget at stage `n`.
    pub fn sigma(&self, n: usize) -> f64 {
        2f64.powi(-(n as i32 + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub n: usize,
    pub map: MapDescriptor,
    pub flat: IntervalOnCircle,
    /// `r_0 = 1 < r_1 < … < r_n`
    pub schedule: Vec<usize>,
    pub test: IntervalOnCircle,
    pub eps: f64,
    pub rho: f64,
    pub l: f64,
    pub anchor: Option<AnchorConfig>,
    pub budgets: Budgets,
    /// What each completed stage used.
    pub records: Vec<StageRecord>,
    /// `M_{n−1}` and `U_{n−1}`.
    pub previous: Option<(MapDescriptor, IntervalOnCircle)>,
}

impl StageState {
    pub fn parity(&self) -> Parity {
        Parity::of(self.n)
    }

    /// `ε / 2^n`
    pub fn gap(&self) -> f64 {
        gap(self.eps, self.n)
    }

    pub fn is_anchored(&self) -> bool {
        self.anchor.is_some()
    }

    /// End of `U_n` where `J_n` is carved out.
    pub fn side(&self) -> Side {
        component_side(self.n, self.is_anchored())
    }

    /// Landing window of `f_n^{r_n}(I)`: the `ε/2^n` end of `U_n` on the stage side.
    pub fn window(&self) -> IntervalOnCircle {
        end_window(&self.flat, self.side(), self.gap())
    }

    /// `J_n`, identical to the landing window.
    pub fn component(&self) -> IntervalOnCircle {
        self.window()
    }

    pub fn return_time(&self) -> usize {
        *self.schedule.last().expect("schedule starts with r_0")
    }

    /// Closed-form `|U_n|`.
    pub fn expected_length(&self) -> f64 {
        expected_length(self.l, self.eps, self.n)
    }

    /// Required tangency orders `(left, right)` of `U_n`; `None` where the
    /// endpoint is a corner instead of a tangency.
    pub fn expected_orders(&self) -> (Option<u32>, u32) {
        expected_orders(self.n, self.is_anchored())
    }
}

pub fn gap(eps: f64, n: usize) -> f64 {
    eps / 2f64.powi(n as i32)
}

/// `l − 2ε Σ_{i<n} 2^{−i}`
pub fn expected_length(l: f64, eps: f64, n: usize) -> f64 {
    let sum: f64 = (0..n).map(|i| 2f64.powi(-(i as i32))).sum();
    l - 2.0 * eps * sum
}

pub fn component_side(n: usize, anchored: bool) -> Side {
    if anchored {
        Side::Right
    } else {
        Parity::of(n).component_side()
    }
}

/// The `width` end of `flat` on `side`.
pub fn end_window(flat: &IntervalOnCircle, side: Side, width: f64) -> IntervalOnCircle {
    let w = match side {
        Side::Right => IntervalOnCircle::new(flat.b() - width, flat.b()),
        Side::Left => IntervalOnCircle::new(flat.a(), flat.a() + width),
    };
    w.expect("window inside a valid interval")
}

pub fn expected_orders(n: usize, anchored: bool) -> (Option<u32>, u32) {
    let i = n as u32;
    if anchored {
        return (None, i + 2);
    }
    if n % 2 == 1 {
        (Some(i + 1), i + 3)
    } else {
        (Some(i + 2), i + 2)
    }
}

/// Order of the junction created at stage `n`, read from the stage `n+1` table.
pub fn new_junction_order(n: usize, anchored: bool) -> u32 {
    let (left, right) = expected_orders(n + 1, anchored);
    match component_side(n, anchored) {
        Side::Right => right,
        Side::Left => left.expect("left tangency in the main mode"),
    }
}

/// Order the extension rule prescribes for the same junction.
pub fn extension_junction_order(n: usize, anchored: bool) -> u32 {
    match component_side(n, anchored) {
        Side::Left => n as u32 + 2,
        Side::Right => n as u32 + 3,
    }
}

/// Stage-0 lift before tuning, and its flat interval.
pub fn base_map(eps: f64, l: f64, anchor: Option<&AnchorConfig>) -> Result<(MapDescriptor, IntervalOnCircle)> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::Precondition(format!("eps {eps} outside (0, 1/4)")));
    }
    if l <= 4.0 * eps {
        return Err(Error::LengthTooSmall { l, bound: 4.0 * eps });
    }
    if l >= 1.0 {
        return Err(Error::Precondition(format!("flat length {l} leaves no gap")));
    }
    let w = 1.0 - l;
    let gamma = BASE_JUNCTION * w * w;
    let (a0, b0) = match anchor {
        Some(an) => (an.p, an.p + l),
        None => {
            let b0 = 0.5 - 0.5 * w;
            (b0 - l + 1.0, b0)
        }
    };
    let flat = IntervalOnCircle::new(a0, a0 + l)?;
    // gap branch on (b0, a0 + 1) in the variable s ∈ (0, 1)
    let b_lift = if b0 > a0 { b0 } else { b0 + 1.0 };
    let s = expr::affine(1.0 / w, -b_lift / w);
    let sm = smoothstep(s.clone());
    let rise = match anchor {
        None => {
            sm.clone() + gamma * (pow(s.clone(), 2) * (constant(1.0) - sm.clone()))
                - gamma * (pow(constant(1.0) - s, 2) * sm)
        }
        Some(an) => {
            let lambda = 1.5 * an.k * w;
            if lambda > 1.0 {
                return Err(Error::Precondition(format!(
                    "left derivative bound {} is not reachable with a gap of width {w}",
                    an.k
                )));
            }
            (1.0 - lambda) * sm.clone()
                + lambda * (s.clone() * sm.clone())
                + gamma * (pow(s, 2) * (constant(1.0) - sm))
        }
    };
    let a_lift = b_lift + w;
    let mut ed = Editor::new(&MapDescriptor::rotation(0.0));
    ed.set_region(b_lift - l, b_lift, &Piece::Flat(0.0));
    ed.set_region(b_lift, a_lift, &Piece::Smooth(rise));
    let quad = |side| Junction {
        order: 2,
        coeff: gamma / (w * w),
        side,
    };
    ed.mark(b_lift, Smoothness::Finite(1), Some(quad(Side::Right)));
    match anchor {
        None => ed.mark(a_lift, Smoothness::Finite(1), Some(quad(Side::Left))),
        Some(_) => ed.mark(a_lift, Smoothness::Finite(0), None),
    }
    Ok((ed.finish()?, flat))
}

/// Monotone inverse of the lift on `[lo, hi]`.
pub(crate) fn invert(m: &MapDescriptor, lo: f64, hi: f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if m.eval_lift(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Middle third of `f^{−1}(b − ε, b)` on the smooth branch outside `flat`.
pub fn choose_test_interval(m: &MapDescriptor, flat: &IntervalOnCircle, eps: f64) -> Result<IntervalOnCircle> {
    let (g0, g1) = (flat.b(), flat.a() + 1.0);
    let (v0, v1) = (m.eval_lift(g0), m.eval_lift(g1));
    let hi = flat.b() + (v1 - flat.b()).floor();
    let lo = hi - eps;
    let (x0, x1) = if lo >= v0 {
        (invert(m, g0, g1, lo), invert(m, g0, g1, hi))
    } else {
        // the window straddles the flat value: keep the longer part
        let left = (g0, invert(m, g0, g1, hi));
        let right = (invert(m, g0, g1, lo + 1.0), g1);
        if left.1 - left.0 >= right.1 - right.0 {
            left
        } else {
            right
        }
    };
    let third = (x1 - x0) / 3.0;
    if !(third > 0.0) {
        return Err(Error::PreimageEmpty);
    }
    IntervalOnCircle::new(x0 + third, x1 - third)
}

/// Tuned stage-0 state.
pub fn init_stage0(eps: f64, rho: f64, l: f64, anchor: Option<AnchorConfig>) -> Result<StageState> {
    let budgets = match anchor {
        Some(_) => Budgets::anchored(rho),
        None => Budgets::for_rho(rho),
    };
    init_stage0_with(eps, rho, l, anchor, budgets)
}

pub fn init_stage0_with(eps: f64, rho: f64, l: f64, anchor: Option<AnchorConfig>, budgets: Budgets) -> Result<StageState> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Precondition(format!("target {rho} outside (0, 1)")));
    }
    let (raw, flat) = base_map(eps, l, anchor.as_ref())?;
    let n = 2 * budgets.enclosure_iters;
    let coarse = tune_translation(&raw, rho, 4.0 / budgets.enclosure_iters as f64, n)?;
    let tuned = raw.translated(coarse.t0);
    let target = lift_target(&tuned, rho);
    let tau = center_translation(&tuned, target, -1e-4, 1e-4, budgets.compare_iters, 200);
    let map = tuned.translated(tau).normalized();
    let test = choose_test_interval(&map, &flat, eps)?;
    Ok(StageState {
        n: 0,
        map,
        flat,
        schedule: vec![1],
        test,
        eps,
        rho,
        l,
        anchor,
        budgets,
        records: Vec::new(),
        previous: None,
    })
}

/// Point or arc image along an orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Orbiting {
    Point(f64),
    Arc(IntervalOnCircle),
}

impl Orbiting {
    pub(crate) fn step(&self, m: &MapDescriptor) -> Result<Orbiting> {
        Ok(match self {
            Orbiting::Point(x) => Orbiting::Point(m.eval_circle(*x)),
            Orbiting::Arc(i) => match m.image_interval(i) {
                crate::circle::Image::Point(x) => Orbiting::Point(x),
                crate::circle::Image::Arc(j) => Orbiting::Arc(j),
                crate::circle::Image::Full => return Err(Error::WrapsCircle { step: 0 }),
            },
        })
    }

    pub(crate) fn meets(&self, u: &IntervalOnCircle) -> bool {
        match self {
            Orbiting::Point(x) => u.contains(*x),
            Orbiting::Arc(i) => i.intersects(u),
        }
    }

    fn centre(&self) -> f64 {
        match self {
            Orbiting::Point(x) => *x,
            Orbiting::Arc(i) => i.mid(),
        }
    }
}

/// End of `u` nearest to `x`.
pub(crate) fn nearer_end(u: &IntervalOnCircle, x: f64) -> Side {
    let d = u.offset(x);
    let closer_to_b = if d < u.len() {
        d > 0.5 * u.len()
    } else {
        d - u.len() < 1.0 - d
    };
    if closer_to_b {
        Side::Right
    } else {
        Side::Left
    }
}

/// First `m ≤ max_hit` with `f^m(J) ∩ U ≠ ∅`, and the end of `U` it arrives at.
pub fn find_hit_time(m: &MapDescriptor, j: &IntervalOnCircle, u: &IntervalOnCircle, max_hit: usize) -> Result<(usize, Side)> {
    if j.intersects(u) {
        return Err(Error::Precondition("J must be disjoint from U".into()));
    }
    if max_hit == 0 {
        return Err(Error::Precondition("hit budget must be at least 1".into()));
    }
    let mut cur = Orbiting::Arc(*j);
    for step in 1..=max_hit {
        cur = cur.step(m).map_err(|_| Error::WrapsCircle { step })?;
        if cur.meets(u) {
            let side = match cur {
                Orbiting::Arc(i) if i.contains_closed(u.a()) && !i.contains_closed(u.b()) => Side::Left,
                Orbiting::Arc(i) if i.contains_closed(u.b()) && !i.contains_closed(u.a()) => Side::Right,
                other => nearer_end(u, other.centre()),
            };
            return Ok((step, side));
        }
    }
    Err(Error::HitBudgetExceeded { budget: max_hit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::{flat_set, tangency_order, validate};
    use crate::rotation::{rotation_enclosure, GOLDEN};

    fn eps() -> f64 {
        2f64.sqrt() / 8.0
    }

    #[test]
    fn telescoping_lengths() {
        assert!((expected_length(0.75, eps(), 1) - 0.396_446_609_406_726_2).abs() < 1e-12);
        assert!((expected_length(0.75, eps(), 4) - (0.75 - 3.75 * eps())).abs() < 1e-12);
        assert!(0.75 - 4.0 * eps() > 0.042_89);
    }

    #[test]
    fn parity_table() {
        assert_eq!(expected_orders(0, false), (Some(2), 2));
        assert_eq!(expected_orders(1, false), (Some(2), 4));
        assert_eq!(expected_orders(2, false), (Some(4), 4));
        assert_eq!(expected_orders(3, false), (Some(4), 6));
        assert_eq!(expected_orders(2, true), (None, 4));
        // the endpoint kept at each stage already has its next-stage order
        for n in 0..6 {
            let (l0, r0) = expected_orders(n, false);
            let (l1, r1) = expected_orders(n + 1, false);
            match component_side(n, false) {
                Side::Right => assert_eq!(l0, l1),
                Side::Left => assert_eq!(r0, r1),
            }
        }
        assert_eq!(new_junction_order(0, false), 4);
        assert_eq!(new_junction_order(1, false), 4);
        assert_eq!(new_junction_order(0, true), 3);
    }

    #[test]
    fn base_map_short_interval_rejected() {
        assert!(matches!(
            base_map(0.2, 0.75, None),
            Err(Error::LengthTooSmall { .. })
        ));
    }

    #[test]
    fn base_map_geometry() {
        let (m, flat) = base_map(eps(), 0.75, None).unwrap();
        assert!(validate(&m.normalized()).all_pass(), "{}", validate(&m.normalized()));
        let fs = flat_set(&m).unwrap();
        assert_eq!(fs.len(), 1);
        assert!((fs[0].len() - 0.75).abs() < 1e-12);
        assert_eq!(fs[0], flat);
        assert_eq!(tangency_order(&m, flat.b(), Side::Right).unwrap(), 2);
        assert_eq!(tangency_order(&m, flat.a(), Side::Left).unwrap(), 2);
    }

    #[test]
    fn anchored_base_has_corner() {
        let an = AnchorConfig::new(0.1, 2.0).unwrap();
        let (m, flat) = base_map(eps(), 0.75, Some(&an)).unwrap();
        assert_eq!(flat.a(), 0.1);
        assert!(m.derivative(1, 0.1, Some(Side::Left)).unwrap() > 2.0);
        assert_eq!(tangency_order(&m, flat.b(), Side::Right).unwrap(), 2);
        assert!(validate(&m.normalized()).all_pass());
    }

    #[test]
    fn stage0_is_tuned() {
        let s = init_stage0(eps(), GOLDEN, 0.75, None).unwrap();
        let e = rotation_enclosure(&s.map, 100_000, 0.0).unwrap();
        assert!(e.contains_mod1(GOLDEN));
        let img = s.map.image_interval(&s.test);
        let w = s.window();
        match img {
            crate::circle::Image::Arc(i) => assert!(w.margin_inside(&i) > 0.0),
            other => panic!("{other:?}"),
        }
        assert!(!s.test.intersects(&s.flat));
    }

    #[test]
    fn hit_time_on_rotation() {
        let m = MapDescriptor::rotation(GOLDEN);
        let j = IntervalOnCircle::new(0.0, 0.01).unwrap();
        let u = IntervalOnCircle::new(0.5, 0.6).unwrap();
        let (hit, _) = find_hit_time(&m, &j, &u, 1000).unwrap();
        // brute force
        let brute = (1..1000)
            .find(|&k| {
                let a = (k as f64 * GOLDEN).rem_euclid(1.0);
                let img = IntervalOnCircle::new(a, a + 0.01).unwrap();
                img.intersects(&u)
            })
            .unwrap();
        assert_eq!(hit, brute);
        assert!(matches!(
            find_hit_time(&m, &u, &u, 10),
            Err(Error::Precondition(_))
        ));
        let far = IntervalOnCircle::new(0.0, 0.001).unwrap();
        let tiny = IntervalOnCircle::new(0.3, 0.301).unwrap();
        assert!(matches!(
            find_hit_time(&m, &far, &tiny, 1),
            Err(Error::HitBudgetExceeded { budget: 1 })
        ));
    }
}
