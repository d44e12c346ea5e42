//! Descriptor-to-descriptor operators: splitting a flat interval in two,
//! re-smoothing one of the parts, and small compensating translations.
//!
//! Both operators work in side coordinates `d = s (x − e)`, where `e` is the
//! endpoint of the flat interval next to which the small component `J` is
//! carved out and `s = ±1` points away from the interval. In these
//! coordinates `J = {−g < d < 0}`, the new gap is `{−2g < d < −g}` and the new
//! endpoint of the remaining flat part sits at `d = −2g`.
//! In the default mode the lift of `J` is compensated on `0 < d < w` outside
//! the old interval.

use crate::circle::{
    cj_distance, validate, Editor, IntervalOnCircle, Junction, MapDescriptor, Piece, Side,
    Smoothness,
};
use crate::error::{Error, Result};
use crate::expr::{self, constant, pow, smoothstep, PrimitiveExpr};
use crate::rotation::{
    center_translation, compare_rotation, lift_target, reference_point, rotation_enclosure,
    RotationOrder,
};

/// Halvings allowed in every amplitude search.
pub const MAX_HALVINGS: usize = 40;

/// Grid used for operator norm estimates.
pub const NORM_GRID: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: usize) -> Parity {
        if n.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// End of the flat interval at which the small component is carved out.
    pub fn component_side(&self) -> Side {
        match self {
            Parity::Even => Side::Right,
            Parity::Odd => Side::Left,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// How the two flat components are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Move the small component off the old value; the rest stays put.
    ShiftComponent,
    /// Keep the small component and move the rest, with the compensating
    /// transition placed at the far endpoint. Used when the far endpoint is a
    /// fixed anchor.
    ShiftRemainder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub parity: Parity,
    pub side: Side,
    pub mode: SplitMode,
    pub eps: f64,
    pub delta: f64,
    pub stage: usize,
    pub flat: IntervalOnCircle,
}

impl SplitSpec {
    pub fn new(parity: Parity, eps: f64, delta: f64, stage: usize, flat: IntervalOnCircle) -> Result<Self> {
        let spec = Self {
            parity,
            side: parity.component_side(),
            mode: SplitMode::ShiftComponent,
            eps,
            delta,
            stage,
            flat,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Right-side split that keeps the left endpoint fixed.
    pub fn anchored(eps: f64, delta: f64, stage: usize, flat: IntervalOnCircle) -> Result<Self> {
        let spec = Self {
            parity: Parity::of(stage),
            side: Side::Right,
            mode: SplitMode::ShiftRemainder,
            eps,
            delta,
            stage,
            flat,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.25) {
            return Err(Error::Precondition(format!("eps {} outside (0, 1/4)", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Precondition(format!("delta {} outside (0, 1)", self.delta)));
        }
        if 2.0 * self.gap() >= self.flat.len() {
            return Err(Error::Precondition(
                "flat interval too short for the split".into(),
            ));
        }
        Ok(())
    }

    /// `ε / 2^n`
    pub fn gap(&self) -> f64 {
        self.eps / 2f64.powi(self.stage as i32)
    }
}

/// Geometry of one split, consumed by [`reflatten`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRecord {
    pub side: Side,
    pub mode: SplitMode,
    /// Endpoint of the old flat interval next to `J`, lift coordinates.
    pub e: f64,
    pub g: f64,
    /// Width of the transition outside the old interval.
    pub w: f64,
    pub amplitude: f64,
    /// Editor-level value of the remaining flat part.
    pub rest_value: f64,
    pub old_junction: Option<Junction>,
    /// The two flat components.
    pub rest: IntervalOnCircle,
    pub component: IntervalOnCircle,
}

impl SplitRecord {
    fn s(&self) -> f64 {
        self.side.sign()
    }

    /// Lift coordinate of side coordinate `d`.
    pub fn at(&self, d: f64) -> f64 {
        self.e + self.s() * d
    }

    /// Lift region between side coordinates `d1` and `d2`.
    fn region(&self, d1: f64, d2: f64) -> (f64, f64) {
        let (x1, x2) = (self.at(d1), self.at(d2));
        (x1.min(x2), x1.max(x2))
    }

    /// The side coordinate as an expression in `x`.
    fn d_expr(&self) -> PrimitiveExpr {
        expr::affine(self.s(), -self.s() * self.e)
    }

    /// `(d − d0) / width` as an expression in `x`.
    fn scaled(&self, d0: f64, width: f64) -> PrimitiveExpr {
        expr::affine(self.s() / width, (-self.s() * self.e - d0) / width)
    }

    /// New endpoint of the remaining flat part.
    pub fn new_endpoint(&self) -> f64 {
        self.at(-2.0 * self.g)
    }
}

fn editor_value(m: &MapDescriptor, x: f64) -> f64 {
    m.eval_lift(x) - m.translation()
}

fn junction_at(m: &MapDescriptor, x: f64) -> Option<Junction> {
    m.breakpoint_index(x).and_then(|j| m.breakpoints()[j].junction)
}

/// Split with a prescribed amplitude.
pub fn flatten_split_with(m: &MapDescriptor, spec: &SplitSpec, amplitude: f64) -> Result<(MapDescriptor, SplitRecord)> {
    let (a, b) = (spec.flat.a(), spec.flat.b());
    let len = b - a;
    let g = spec.gap();
    let s = spec.side.sign();
    let e = match spec.side {
        Side::Right => b,
        Side::Left => a,
    };
    let far = match spec.side {
        Side::Right => a,
        Side::Left => b,
    };
    let v = editor_value(m, 0.5 * (a + b));
    let w = 0.2 * len;
    let rest_value = match spec.mode {
        SplitMode::ShiftComponent => v,
        SplitMode::ShiftRemainder => v - s * amplitude,
    };
    let (rest, component) = match spec.side {
        Side::Right => (
            IntervalOnCircle::new(a, b - 2.0 * g)?,
            IntervalOnCircle::new(b - g, b)?,
        ),
        Side::Left => (
            IntervalOnCircle::new(a + 2.0 * g, b)?,
            IntervalOnCircle::new(a, a + g)?,
        ),
    };
    let rec = SplitRecord {
        side: spec.side,
        mode: spec.mode,
        e,
        g,
        w,
        amplitude,
        rest_value,
        old_junction: junction_at(m, e),
        rest,
        component,
    };

    let mut ed = Editor::new(m);
    let amp = s * amplitude;
    let (lo, hi) = rec.region(-g, 0.0);
    ed.set_region(lo, hi, &Piece::Flat(rest_value + amp));
    let (lo, hi) = rec.region(-2.0 * g, -g);
    let connector = constant(rest_value) + amp * smoothstep(rec.scaled(-2.0 * g, g));
    ed.set_region(lo, hi, &Piece::Smooth(connector));
    match spec.mode {
        SplitMode::ShiftComponent => {
            let (lo, hi) = rec.region(0.0, w);
            // offset held on (0, w/2), released on (w/2, w) where the map is steep
            let term = amp * (constant(1.0) - smoothstep(rec.scaled(0.5 * w, 0.5 * w)));
            ed.add_term(lo, hi, &term);
            ed.mark(rec.at(w), Smoothness::Infinite, None);
        }
        SplitMode::ShiftRemainder => {
            // the rest moves by -amp; the move is undone just outside the far endpoint
            ed.set_region(rest.a(), rest.b(), &Piece::Flat(rest_value));
            let outer = far - s * w;
            let t = expr::affine(s / w, 1.0 - s * far / w);
            ed.add_term(outer.min(far), outer.max(far), &(-amp * smoothstep(t)));
            ed.mark(outer, Smoothness::Infinite, None);
            let far_bp = m.breakpoint_index(far).map(|j| m.breakpoints()[j]);
            if let Some(bp) = far_bp {
                ed.mark(far, bp.class, bp.junction);
            }
        }
    }
    ed.mark(rec.at(-2.0 * g), Smoothness::Infinite, None);
    ed.mark(rec.at(-g), Smoothness::Infinite, None);
    let out = ed.finish()?;
    Ok((out, rec))
}

/// `C^j` size of the split perturbation per unit amplitude.
pub fn split_unit_norm(m: &MapDescriptor, spec: &SplitSpec, order: usize) -> Result<f64> {
    let (unit, _) = flatten_split_with(m, spec, 1.0)?;
    Ok(cj_distance(&unit, m, order, NORM_GRID).value)
}

/// Split whose amplitude is the largest power-of-two fraction of the budget
/// that keeps the output valid.
pub fn flatten_split(m: &MapDescriptor, spec: &SplitSpec) -> Result<(MapDescriptor, SplitRecord)> {
    let unit = split_unit_norm(m, spec, spec.stage)?;
    let mut amp = 0.5 * spec.delta / unit;
    for _ in 0..=MAX_HALVINGS {
        let (out, rec) = flatten_split_with(m, spec, amp)?;
        if validate(&out).all_pass() {
            return Ok((out, rec));
        }
        amp *= 0.5;
    }
    Err(Error::BudgetExceeded(format!(
        "no split amplitude within delta = {} keeps the map monotone",
        spec.delta
    )))
}

/// What the re-smoothed map must still do with the test interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landing {
    pub test: IntervalOnCircle,
    pub return_time: usize,
    pub window: IntervalOnCircle,
    /// Flat interval the orbit must avoid before landing.
    pub avoid: IntervalOnCircle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recenter {
    pub rho: f64,
    pub budget: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflattenSpec {
    pub parity: Parity,
    pub eps: f64,
    pub sigma: f64,
    pub stage: usize,
    pub split: SplitRecord,
    /// Tangency order of the new junction.
    pub order: u32,
    /// Target for `order! · coeff` of the new junction.
    pub coeff_target: f64,
    pub landing: Option<Landing>,
    pub recenter: Option<Recenter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflattenOutcome {
    pub map: MapDescriptor,
    pub amplitude: f64,
    pub translation: f64,
    pub norm: f64,
    pub margin: Option<f64>,
    pub halvings: usize,
}

/// Re-smoothing with a prescribed amplitude `B`: `J` stops being flat, the old
/// junction at `e` is smoothed away, and the new endpoint gets a junction of the
/// requested order.
pub fn reflatten_with(mt: &MapDescriptor, spec: &ReflattenSpec, b_amp: f64) -> Result<MapDescriptor> {
    let rec = &spec.split;
    let (g, w, a_amp) = (rec.g, rec.w, rec.amplitude);
    let s = rec.s();
    let k = spec.order;
    let d_end = g.min(0.25 * w);
    let keep = a_amp - b_amp;
    let kappa = (spec.coeff_target * g.powi(k as i32) / (keep * expr::factorial(k as usize))).min(1.0);
    let coeff = keep * kappa / g.powi(k as i32);

    let u = rec.scaled(-2.0 * g, g);
    let sm_u = smoothstep(u.clone());
    let theta = sm_u.clone() + kappa * (pow(u, k) * (constant(1.0) - sm_u));
    let u2 = rec.scaled(-2.0 * g, d_end + 2.0 * g);
    let sm_u2 = smoothstep(u2);

    let mut ed = Editor::new(mt);
    let mut inner = constant(rec.rest_value) + (s * keep) * theta + (s * b_amp) * sm_u2.clone();
    let mut cut_start = None;
    if let Some(old) = rec.old_junction {
        // continue the outer monomial across e so that e becomes a smooth point;
        // the cutoff is short enough for the ramp to dominate its slope
        let w2 = d_end + 2.0 * g;
        let sm = smoothstep(expr::x());
        let ramp = b_amp / w2
            * sm.nth_derivative(1, 1.5 * g / w2).min(sm.nth_derivative(1, 2.0 * g / w2));
        let k = old.order as f64;
        let h = (0.1 * ramp / ((k + 2.0) * old.coeff.abs()))
            .powf(1.0 / (k - 1.0).max(1.0))
            .clamp(1e-6 * g, 0.5 * g);
        let cut = smoothstep(rec.scaled(-h, h));
        inner = inner + (s * old.coeff) * (pow(rec.d_expr(), old.order) * cut);
        cut_start = Some(rec.at(-h));
    }
    let (lo, hi) = rec.region(-2.0 * g, 0.0);
    ed.set_region(lo, hi, &Piece::Smooth(inner));
    if let Some(x) = cut_start {
        ed.mark(x, Smoothness::Infinite, None);
    }
    let (lo, hi) = rec.region(0.0, d_end);
    ed.add_term(lo, hi, &(-(s * b_amp) * (constant(1.0) - sm_u2)));
    ed.mark(rec.at(d_end), Smoothness::Infinite, None);
    ed.mark(rec.e, Smoothness::Infinite, None);
    ed.mark(
        rec.new_endpoint(),
        Smoothness::Finite(k - 1),
        Some(Junction {
            order: k,
            coeff,
            side: rec.side,
        }),
    );
    ed.finish()
}

/// Margin of the landing of the test interval, after checking avoidance.
pub fn landing_margin(m: &MapDescriptor, landing: &Landing) -> Option<f64> {
    let orbit = match m.iterate_interval(&landing.test, landing.return_time) {
        Ok(o) => o,
        Err(e) => {
            log::trace!("orbit of I: {e}");
            return None;
        }
    };
    if landing.test.intersects(&landing.avoid) {
        return None;
    }
    for (j, img) in orbit[..orbit.len() - 1].iter().enumerate() {
        if img.intersects(&landing.avoid) {
            log::trace!("f^{}(I) = {img} meets {}", j + 1, landing.avoid);
            return None;
        }
    }
    let last = orbit.last()?;
    Some(landing.window.margin_inside(last))
}

/// Re-smoothing at a fixed `B`: builds, re-centres and checks one candidate.
/// The error carries the reason the candidate was rejected.
pub fn reflatten_at(mt: &MapDescriptor, spec: &ReflattenSpec, b_amp: f64) -> Result<ReflattenOutcome> {
    if !(spec.sigma > 0.0 && spec.sigma < 1.0) {
        return Err(Error::Precondition(format!("sigma {} outside (0, 1)", spec.sigma)));
    }
    let g = reflatten_with(mt, spec, b_amp)?;
    let (g, tau) = match &spec.recenter {
        Some(rc) => micro_translate(&g, rc.budget, rc.rho, rc.iters)?,
        None => (g, 0.0),
    };
    let margin = match &spec.landing {
        Some(l) => match landing_margin(&g, l) {
            Some(mg) if mg >= 1e-4 * l.window.len() => Some(mg),
            Some(mg) => {
                return Err(Error::ContainmentLost(format!(
                    "landing margin {mg:e} with B = {b_amp:e}"
                )))
            }
            None => {
                return Err(Error::ContainmentLost(format!(
                    "orbit of the test interval breaks with B = {b_amp:e}"
                )))
            }
        },
        None => None,
    };
    let report = validate(&g);
    if !report.all_pass() {
        return Err(Error::ContainmentLost(format!(
            "validation fails with B = {b_amp:e}:\n{report}"
        )));
    }
    let norm = cj_distance(&g.translated(-tau), mt, spec.stage + 1, NORM_GRID).value;
    if norm + tau.abs() >= spec.sigma {
        return Err(Error::BudgetExceeded(format!(
            "norm {norm:e} exceeds sigma with B = {b_amp:e}"
        )));
    }
    Ok(ReflattenOutcome {
        map: g,
        amplitude: b_amp,
        translation: tau,
        norm,
        margin,
        halvings: 0,
    })
}

/// Re-smoothing with amplitude search: halve `B` from `A/2` until
/// [`reflatten_at`] accepts.
pub fn reflatten(mt: &MapDescriptor, spec: &ReflattenSpec) -> Result<ReflattenOutcome> {
    let mut b_amp = 0.5 * spec.split.amplitude;
    let mut last = Error::ContainmentLost("no amplitude tried".into());
    for halvings in 0..=MAX_HALVINGS {
        match reflatten_at(mt, spec, b_amp) {
            Ok(out) => return Ok(ReflattenOutcome { halvings, ..out }),
            Err(e @ Error::Precondition(_)) => return Err(e),
            Err(e) => last = e,
        }
        b_amp *= 0.5;
    }
    Err(Error::ContainmentLost(last.to_string()))
}

/// Small translation `|τ| ≤ budget` that puts `ρ*` back inside the rotation
/// enclosure at `n` iterations.
pub fn micro_translate(m: &MapDescriptor, budget: f64, rho: f64, n: usize) -> Result<(MapDescriptor, f64)> {
    if !(budget > 0.0) {
        return Err(Error::Precondition("translation budget must be positive".into()));
    }
    let target = lift_target(m, rho);
    let side = |tau: f64| {
        let mt = m.translated(tau);
        compare_rotation(&mt, target, reference_point(&mt), n)
    };
    if side(budget) == RotationOrder::Below || side(-budget) == RotationOrder::Above {
        return Err(Error::BudgetExceeded(format!(
            "rotation number cannot be recentred within |tau| <= {budget:e}"
        )));
    }
    let tau = center_translation(m, target, -budget, budget, n, 200);
    let out = m.translated(tau);
    let enc = rotation_enclosure(&out, n, reference_point(&out))?;
    if !enc.contains_mod1(rho) {
        return Err(Error::BudgetExceeded(format!(
            "enclosure [{}, {}] misses the target after recentring",
            enc.lower, enc.upper
        )));
    }
    Ok((out, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpKind {
    FlatToFlat,
    FlatToOrder(u32),
}

/// Monotone connector on `window` rising by `amplitude`.
pub fn bump_primitive(kind: BumpKind, window: &IntervalOnCircle, amplitude: f64) -> PrimitiveExpr {
    if amplitude == 0.0 {
        return constant(0.0);
    }
    let u = expr::affine(1.0 / window.len(), -window.a() / window.len());
    match kind {
        BumpKind::FlatToFlat => amplitude * smoothstep(u),
        BumpKind::FlatToOrder(k) => amplitude * pow(u, k),
    }
}
