use std::fmt;

use crate::error::{Error, Result};

/// Open arc `(a, b)` of the circle stored in lift coordinates with `a ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOnCircle {
    a: f64,
    b: f64,
}

impl IntervalOnCircle {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let len = b - a;
        if !(len > 0.0 && len < 1.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInterval { a, b });
        }
        let k = a.floor();
        Ok(Self { a: a - k, b: b - k })
    }

    /// Arc starting at `a` with the given length.
    pub fn from_len(a: f64, len: f64) -> Result<Self> {
        Self::new(a, a + len)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// Offset of `x` from `a` going forward, in `[0, 1)`.
    pub fn offset(&self, x: f64) -> f64 {
        (x - self.a).rem_euclid(1.0)
    }

    /// Open containment.
    pub fn contains(&self, x: f64) -> bool {
        let d = self.offset(x);
        d > 0.0 && d < self.len()
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        let d = self.offset(x);
        d <= self.len() || d == 0.0
    }

    pub fn intersects(&self, other: &IntervalOnCircle) -> bool {
        let d = self.offset(other.a);
        d < self.len() || d + other.len() > 1.0
    }

    /// Smallest distance from `inner` to the boundary of `self`; positive iff
    /// `inner` sits compactly inside.
    pub fn margin_inside(&self, inner: &IntervalOnCircle) -> f64 {
        let d = self.offset(inner.a);
        let d = if d > 1.0 - 1e-15 { d - 1.0 } else { d };
        d.min(self.len() - d - inner.len())
    }

    /// Distance on the circle from `x` to the closed arc.
    pub fn distance_to(&self, x: f64) -> f64 {
        let d = self.offset(x);
        if d <= self.len() {
            0.0
        } else {
            (d - self.len()).min(1.0 - d)
        }
    }

    pub fn translated(&self, s: f64) -> IntervalOnCircle {
        Self::new(self.a + s, self.b + s).expect("translation keeps length")
    }
}

impl fmt::Display for IntervalOnCircle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Image of an arc under a monotone map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Image {
    Point(f64),
    Arc(IntervalOnCircle),
    /// The image covers the whole circle.
    Full,
}

impl Image {
    pub fn len(&self) -> f64 {
        match self {
            Image::Point(_) => 0.0,
            Image::Arc(i) => i.len(),
            Image::Full => 1.0,
        }
    }
}
