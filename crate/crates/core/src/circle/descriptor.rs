use crate::error::{Error, Result};
use crate::expr::{self, PrimitiveExpr};

use super::interval::{Image, IntervalOnCircle};

/// Highest derivative order the evaluators accept.
pub const MAX_ORDER: usize = 12;

/// Breakpoints closer than this are treated as the same point.
const SNAP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Flat(f64),
    Smooth(PrimitiveExpr),
}

impl Piece {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Piece::Flat(v) => *v,
            Piece::Smooth(e) => e.eval(y),
        }
    }

    pub fn jet(&self, y: f64, order: usize) -> Vec<f64> {
        match self {
            Piece::Flat(v) => {
                let mut j = vec![0.0; order + 1];
                j[0] = *v;
                j
            }
            Piece::Smooth(e) => e.jet(y, order),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Piece::Flat(_))
    }

    /// Piece describing `y -> P(y + k) - k`, i.e. the same lift seen one
    /// period over.
    pub fn shifted(&self, k: f64) -> Piece {
        if k == 0.0 {
            return self.clone();
        }
        match self {
            Piece::Flat(v) => Piece::Flat(v - k),
            Piece::Smooth(e) => Piece::Smooth(e.shifted(k) - expr::constant(k)),
        }
    }

    pub fn plus(&self, term: &PrimitiveExpr) -> Piece {
        match (self, term.is_const()) {
            (Piece::Flat(v), Some(c)) => Piece::Flat(v + c),
            (Piece::Flat(v), None) => Piece::Smooth(expr::constant(*v) + term.clone()),
            (Piece::Smooth(e), _) => Piece::Smooth(e.clone() + term.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Finite(u32),
    Infinite,
}

impl Smoothness {
    /// Derivative orders that must agree across the breakpoint.
    pub fn checked_orders(&self) -> usize {
        match self {
            Smoothness::Finite(k) => (*k as usize).min(MAX_ORDER),
            Smoothness::Infinite => MAX_ORDER,
        }
    }

    pub fn at_least(&self, k: u32) -> bool {
        match self {
            Smoothness::Finite(c) => *c >= k,
            Smoothness::Infinite => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(&self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn opposite(&self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Finite-order contact between a flat piece and its smooth neighbour:
/// near the endpoint `e` the lift reads `v + s * coeff * |x - e|^order`, with
/// the smooth piece on `side` and `s` the sign of that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Junction {
    pub order: u32,
    pub coeff: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    pub class: Smoothness,
    pub junction: Option<Junction>,
}

impl Breakpoint {
    pub fn smooth(x: f64) -> Self {
        Self {
            x,
            class: Smoothness::Infinite,
            junction: None,
        }
    }
}

/// Lift of a monotone degree-one circle map: pieces on `[0, 1]` extended by
/// `F(x + 1) = F(x) + 1`, plus a translation.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDescriptor {
    breakpoints: Vec<Breakpoint>,
    pieces: Vec<Piece>,
    translation: f64,
}

impl MapDescriptor {
    pub fn new(breakpoints: Vec<Breakpoint>, pieces: Vec<Piece>, translation: f64) -> Result<Self> {
        if breakpoints.len() != pieces.len() + 1 || pieces.is_empty() {
            return Err(Error::InvalidDescriptor(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints[0].x != 0.0 || breakpoints[breakpoints.len() - 1].x != 1.0 {
            return Err(Error::InvalidDescriptor("breakpoints must run from 0 to 1".into()));
        }
        if breakpoints.windows(2).any(|w| w[0].x >= w[1].x) {
            return Err(Error::InvalidDescriptor(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            pieces,
            translation,
        })
    }

    /// `F(x) = x + t`.
    pub fn rotation(t: f64) -> Self {
        Self::new(
            vec![Breakpoint::smooth(0.0), Breakpoint::smooth(1.0)],
            vec![Piece::Smooth(expr::x())],
            t,
        )
        .expect("rotation descriptor")
        .normalized()
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn translation(&self) -> f64 {
        self.translation
    }

    /// Piece interval `[x_j, x_{j+1}]`.
    pub fn piece_span(&self, j: usize) -> (f64, f64) {
        (self.breakpoints[j].x, self.breakpoints[j + 1].x)
    }

    pub fn with_translation(&self, t: f64) -> Self {
        Self {
            translation: t,
            ..self.clone()
        }
    }

    /// Adds `tau` to the lift.
    pub fn translated(&self, tau: f64) -> Self {
        self.with_translation(self.translation + tau)
    }

    /// Shifts the translation by an integer so that `F(0) ∈ [0, 1)`.
    pub fn normalized(&self) -> Self {
        let f0 = self.eval_lift(0.0);
        let k = f0.floor();
        if k == 0.0 {
            self.clone()
        } else {
            self.translated(-k)
        }
    }

    fn locate(&self, y: f64) -> usize {
        let j = self.breakpoints.partition_point(|b| b.x <= y);
        j.saturating_sub(1).min(self.pieces.len() - 1)
    }

    /// Index of the breakpoint at `y ∈ [0, 1)`, if any.
    pub fn breakpoint_index(&self, y: f64) -> Option<usize> {
        let y = y.rem_euclid(1.0);
        let j = self.breakpoints.partition_point(|b| b.x < y - SNAP);
        if j < self.breakpoints.len() && (self.breakpoints[j].x - y).abs() <= SNAP {
            Some(if j == self.breakpoints.len() - 1 { 0 } else { j })
        } else if (1.0 - y).abs() <= SNAP {
            Some(0)
        } else {
            None
        }
    }

    /// Distance from breakpoint `j` to its nearest neighbour.
    pub fn feature_width(&self, j: usize) -> f64 {
        let n = self.breakpoints.len() - 1;
        let x = |k: usize| self.breakpoints[k].x;
        let (left, right) = if j == 0 || j == n {
            (1.0 - x(n - 1), x(1))
        } else {
            (x(j) - x(j - 1), x(j + 1) - x(j))
        };
        left.min(right)
    }

    /// Allowed mismatch of the one-sided `i`-th derivatives at breakpoint `j`:
    /// relative `1e-9` against the larger side or the natural size
    /// `i! / h^i` of a unit feature of width `h`, whichever is bigger.
    pub fn jump_tolerance(&self, j: usize, i: usize, li: f64, ri: f64) -> f64 {
        let h = self.feature_width(j).min(1.0);
        let natural = expr::factorial(i) / h.powi(i as i32);
        1e-9 * li.abs().max(ri.abs()).max(natural)
    }

    pub fn eval_lift(&self, x: f64) -> f64 {
        let k = x.floor();
        let y = x - k;
        self.pieces[self.locate(y)].eval(y) + k + self.translation
    }

    /// Circle map value in `[0, 1)`.
    pub fn eval_circle(&self, x: f64) -> f64 {
        self.eval_lift(x).rem_euclid(1.0)
    }

    /// Taylor jet of the lift at `x` using the piece on `side` when `x` is a
    /// breakpoint.
    pub fn one_sided_jet(&self, x: f64, order: usize, side: Side) -> Vec<f64> {
        let k = x.floor();
        let mut y = x - k;
        let mut shift = k;
        let j = match self.breakpoint_index(y) {
            Some(b) => {
                y = self.breakpoints[b].x;
                if (x - k) > 0.5 && b == 0 {
                    // x sits just below an integer
                    shift += 1.0;
                }
                match side {
                    Side::Right => b,
                    Side::Left if b == 0 => {
                        y = 1.0;
                        shift -= 1.0;
                        self.pieces.len() - 1
                    }
                    Side::Left => b - 1,
                }
            }
            None => self.locate(y),
        };
        let mut jet = self.pieces[j].jet(y, order);
        jet[0] += shift + self.translation;
        jet
    }

    /// `m`-th derivative. At a breakpoint both sides are compared unless a side
    /// is requested.
    pub fn derivative(&self, m: usize, x: f64, side: Option<Side>) -> Result<f64> {
        if m > MAX_ORDER {
            return Err(Error::OrderTooHigh(m));
        }
        let fact = expr::factorial(m);
        if let Some(s) = side {
            return Ok(self.one_sided_jet(x, m, s)[m] * fact);
        }
        if self.breakpoint_index(x).is_none() {
            return Ok(self.one_sided_jet(x, m, Side::Right)[m] * fact);
        }
        let j = self.breakpoint_index(x).expect("checked above");
        let l = self.one_sided_jet(x, m, Side::Left);
        let r = self.one_sided_jet(x, m, Side::Right);
        for i in 1..=m {
            let (li, ri) = (l[i] * expr::factorial(i), r[i] * expr::factorial(i));
            if (li - ri).abs() > self.jump_tolerance(j, i, li, ri) {
                return Err(Error::BreakpointNonSmooth {
                    x: x.rem_euclid(1.0),
                    order: i,
                });
            }
        }
        Ok(r[m] * fact)
    }

    pub fn image_interval(&self, i: &IntervalOnCircle) -> Image {
        let fa = self.eval_lift(i.a());
        let fb = self.eval_lift(i.b());
        let len = fb - fa;
        if len <= 0.0 {
            Image::Point(fa.rem_euclid(1.0))
        } else if len >= 1.0 {
            Image::Full
        } else {
            Image::Arc(IntervalOnCircle::new(fa, fb).expect("checked length"))
        }
    }

    /// `f^j(I)` for `j = 1..=n`.
    pub fn iterate_interval(&self, i: &IntervalOnCircle, n: usize) -> Result<Vec<IntervalOnCircle>> {
        let mut out = Vec::with_capacity(n);
        let mut cur = *i;
        for step in 1..=n {
            cur = match self.image_interval(&cur) {
                Image::Arc(next) => next,
                Image::Point(_) => return Err(Error::DegenerateOrbit { step }),
                Image::Full => return Err(Error::WrapsCircle { step }),
            };
            out.push(cur);
        }
        Ok(out)
    }

    /// Orbit `x, F(x), ..., F^n(x)` reduced mod 1.
    pub fn orbit(&self, x: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut y = x.rem_euclid(1.0);
        out.push(y);
        for _ in 0..n {
            y = self.eval_circle(y);
            out.push(y);
        }
        out
    }

    /// Interior points of flat pieces, as `(piece index, value)`.
    pub fn flat_pieces(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pieces.iter().enumerate().filter_map(|(j, p)| match p {
            Piece::Flat(v) => Some((j, *v)),
            _ => None,
        })
    }

    pub(crate) fn into_parts(self) -> (Vec<Breakpoint>, Vec<Piece>, f64) {
        (self.breakpoints, self.pieces, self.translation)
    }
}

/// Mutable view used by the perturbation operators. Regions are given in lift
/// coordinates and may wrap across an integer.
#[derive(Debug, Clone)]
pub struct Editor {
    breakpoints: Vec<Breakpoint>,
    pieces: Vec<Piece>,
    translation: f64,
}

impl Editor {
    pub fn new(m: &MapDescriptor) -> Self {
        let (breakpoints, pieces, translation) = m.clone().into_parts();
        Self {
            breakpoints,
            pieces,
            translation,
        }
    }

    pub fn finish(self) -> Result<MapDescriptor> {
        MapDescriptor::new(self.breakpoints, self.pieces, self.translation)
    }

    pub fn set_translation(&mut self, t: f64) {
        self.translation = t;
    }

    fn find(&self, y: f64) -> Option<usize> {
        self.breakpoints.iter().position(|b| (b.x - y).abs() <= SNAP)
    }

    /// Inserts a breakpoint at `y ∈ [0, 1]` and returns its index.
    fn split_at(&mut self, y: f64) -> usize {
        if let Some(j) = self.find(y) {
            return j;
        }
        let j = self.breakpoints.partition_point(|b| b.x < y);
        self.breakpoints.insert(j, Breakpoint::smooth(y));
        let piece = self.pieces[j - 1].clone();
        self.pieces.insert(j, piece);
        j
    }

    /// Splits a lift region into pieces of `[0, 1]` with their integer shift.
    fn parts(lo: f64, hi: f64) -> Vec<(f64, f64, f64)> {
        let k = lo.floor();
        let (y0, y1) = (lo - k, hi - k);
        if y1 <= 1.0 + SNAP {
            vec![(y0, y1.min(1.0), k)]
        } else {
            vec![(y0, 1.0, k), (0.0, y1 - 1.0, k + 1.0)]
        }
    }

    /// Adds `term` (a function of the lift coordinate) on `(lo, hi)`.
    pub fn add_term(&mut self, lo: f64, hi: f64, term: &PrimitiveExpr) {
        for (y0, y1, k) in Self::parts(lo, hi) {
            let shifted = term.shifted(k);
            let j0 = self.split_at(y0);
            let j1 = self.split_at(y1);
            for j in j0..j1 {
                self.pieces[j] = self.pieces[j].plus(&shifted);
            }
        }
    }

    /// Replaces the lift on `(lo, hi)` by `piece`, written in lift coordinates.
    pub fn set_region(&mut self, lo: f64, hi: f64, piece: &Piece) {
        for (y0, y1, k) in Self::parts(lo, hi) {
            let p = piece.shifted(k);
            let j0 = self.split_at(y0);
            let j1 = self.split_at(y1);
            let removed = j1 - j0;
            self.pieces.splice(j0..j1, std::iter::once(p));
            self.breakpoints.drain(j0 + 1..j0 + removed);
        }
    }

    /// Marks the breakpoint at lift coordinate `x`, inserting it if needed.
    pub fn mark(&mut self, x: f64, class: Smoothness, junction: Option<Junction>) {
        let y = x.rem_euclid(1.0);
        let y = if y > 1.0 - SNAP { 0.0 } else { y };
        let j = self.split_at(y);
        self.breakpoints[j].class = class;
        self.breakpoints[j].junction = junction;
        if j == 0 {
            let last = self.breakpoints.len() - 1;
            self.breakpoints[last].class = class;
            self.breakpoints[last].junction = junction;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{constant, pow, x};

    fn flat_bump() -> MapDescriptor {
        // flat at 0.7 on (0.2, 0.5), linear elsewhere, continuous
        let left = Piece::Smooth(constant(0.7) + 0.5 * (x() - constant(0.2)));
        let flat = Piece::Flat(0.7);
        let right = Piece::Smooth(constant(0.7) + 0.8 * (x() - constant(0.5)));
        let bps = [0.0, 0.2, 0.5, 1.0].iter().map(|&x| Breakpoint::smooth(x)).collect();
        MapDescriptor::new(bps, vec![left, flat, right], 0.0).unwrap()
    }

    #[test]
    fn rotation_lift() {
        let m = MapDescriptor::rotation(0.25);
        assert!((m.eval_lift(0.9) - 1.15).abs() < 1e-15);
        assert!((m.eval_lift(-2.1) - (-1.85)).abs() < 1e-12);
    }

    #[test]
    fn flat_piece_value_and_derivatives() {
        let m = flat_bump();
        assert_eq!(m.eval_lift(0.3), 0.7);
        assert_eq!(m.derivative(7, 0.3, None).unwrap(), 0.0);
        assert!(matches!(m.image_interval(&IntervalOnCircle::new(0.25, 0.4).unwrap()), Image::Point(p) if p == 0.7));
    }

    #[test]
    fn breakpoint_requires_side() {
        let m = flat_bump();
        assert!(matches!(
            m.derivative(1, 0.5, None),
            Err(Error::BreakpointNonSmooth { .. })
        ));
        assert_eq!(m.derivative(1, 0.5, Some(Side::Left)).unwrap(), 0.0);
        assert!((m.derivative(1, 0.5, Some(Side::Right)).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn junction_derivatives() {
        // h((x - b)^4) with h(u) = b' + u
        let b = 0.4;
        let bps = [0.0, b, 1.0].iter().map(|&x| Breakpoint::smooth(x)).collect();
        let right = Piece::Smooth(constant(0.1) + pow(x() - constant(b), 4));
        let m = MapDescriptor::new(bps, vec![Piece::Flat(0.1), right], 0.0).unwrap();
        assert!(m.derivative(3, b, Some(Side::Right)).unwrap().abs() < 1e-12);
        assert!((m.derivative(4, b, Some(Side::Right)).unwrap() - 24.0).abs() < 1e-9);
    }

    #[test]
    fn iterate_reports_degenerate_step() {
        let m = flat_bump();
        let i = IntervalOnCircle::new(0.3, 0.4).unwrap();
        assert_eq!(m.iterate_interval(&i, 1), Err(Error::DegenerateOrbit { step: 1 }));
        let r = MapDescriptor::rotation(0.3);
        let imgs = r.iterate_interval(&IntervalOnCircle::new(0.1, 0.2).unwrap(), 5).unwrap();
        assert_eq!(imgs.len(), 5);
        for im in imgs {
            assert!((im.len() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn editor_wraps_regions() {
        let m = MapDescriptor::rotation(0.0);
        let mut ed = Editor::new(&m);
        ed.add_term(0.9, 1.2, &constant(0.0));
        ed.set_region(0.95, 1.05, &Piece::Flat(1.0));
        let out = ed.finish().unwrap();
        assert_eq!(out.eval_lift(0.97), 1.0);
        assert_eq!(out.eval_lift(1.03), 1.0);
        assert_eq!(out.eval_lift(0.03), 0.0);
        assert!((out.eval_lift(1.5) - 1.5).abs() < 1e-15);
    }
}
