//! Closed-form expressions for the smooth pieces of a lift.
//!
//! The basis is small on purpose: constants, affine maps of the variable,
//! integer powers, reciprocals, sums, products and the one-sided mollifier
//! family `E_k(u) = exp(-1/u) u^-k` (zero for `u <= 0`). The family is closed
//! under differentiation, `E_k' = E_{k+2} - k E_{k+1}`, which is what keeps
//! [`PrimitiveExpr::derivative`] inside the basis.
//!
//! Numerical derivatives go through truncated Taylor jets instead of the
//! symbolic tree, since the symbolic form grows quickly with the order.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveExpr {
    Const(f64),
    /// `a * x + b`
    Affine(f64, f64),
    Sum(Vec<PrimitiveExpr>),
    Product(Vec<PrimitiveExpr>),
    Pow(Box<PrimitiveExpr>, u32),
    /// `exp(-1/u) * u^-k` for `u > 0`, zero otherwise.
    Moll(u32, Box<PrimitiveExpr>),
    Recip(Box<PrimitiveExpr>),
}

use PrimitiveExpr as E;

/// The variable itself.
pub fn x() -> PrimitiveExpr {
    E::Affine(1.0, 0.0)
}

pub fn constant(c: f64) -> PrimitiveExpr {
    E::Const(c)
}

pub fn affine(a: f64, b: f64) -> PrimitiveExpr {
    if a == 0.0 {
        E::Const(b)
    } else {
        E::Affine(a, b)
    }
}

pub fn sum(terms: Vec<PrimitiveExpr>) -> PrimitiveExpr {
    let mut flat = Vec::with_capacity(terms.len());
    let (mut lin, mut off) = (0.0, 0.0);
    let mut saw_affine = false;
    let mut stack: Vec<PrimitiveExpr> = terms.into_iter().rev().collect();
    while let Some(t) = stack.pop() {
        match t {
            E::Sum(inner) => stack.extend(inner.into_iter().rev()),
            E::Const(c) => off += c,
            E::Affine(a, b) => {
                lin += a;
                off += b;
                saw_affine = true;
            }
            other => flat.push(other),
        }
    }
    if saw_affine && lin != 0.0 {
        flat.insert(0, E::Affine(lin, off));
    } else if off != 0.0 {
        flat.insert(0, E::Const(off));
    }
    match flat.len() {
        0 => E::Const(0.0),
        1 => flat.pop().unwrap(),
        _ => E::Sum(flat),
    }
}

pub fn product(factors: Vec<PrimitiveExpr>) -> PrimitiveExpr {
    let mut flat = Vec::with_capacity(factors.len());
    let mut coef = 1.0;
    let mut stack: Vec<PrimitiveExpr> = factors.into_iter().rev().collect();
    while let Some(f) = stack.pop() {
        match f {
            E::Product(inner) => stack.extend(inner.into_iter().rev()),
            E::Const(c) => coef *= c,
            other => flat.push(other),
        }
    }
    if coef == 0.0 {
        return E::Const(0.0);
    }
    if flat.is_empty() {
        return E::Const(coef);
    }
    if flat.len() == 1 {
        let only = flat.pop().unwrap();
        return match only {
            E::Affine(a, b) => affine(coef * a, coef * b),
            E::Sum(ts) if coef != 1.0 => sum(ts.into_iter().map(|t| scale(t, coef)).collect()),
            other if coef == 1.0 => other,
            other => E::Product(vec![E::Const(coef), other]),
        };
    }
    if coef != 1.0 {
        flat.insert(0, E::Const(coef));
    }
    E::Product(flat)
}

fn scale(e: PrimitiveExpr, c: f64) -> PrimitiveExpr {
    product(vec![E::Const(c), e])
}

pub fn pow(base: PrimitiveExpr, k: u32) -> PrimitiveExpr {
    match (base, k) {
        (_, 0) => E::Const(1.0),
        (b, 1) => b,
        (E::Const(c), k) => E::Const(c.powi(k as i32)),
        (b, k) => E::Pow(Box::new(b), k),
    }
}

pub fn moll(k: u32, arg: PrimitiveExpr) -> PrimitiveExpr {
    match arg {
        E::Const(c) => E::Const(moll_value(k, c)),
        a => E::Moll(k, Box::new(a)),
    }
}

pub fn recip(arg: PrimitiveExpr) -> PrimitiveExpr {
    match arg {
        E::Const(c) => E::Const(1.0 / c),
        a => E::Recip(Box::new(a)),
    }
}

/// `S(u) = e(u) / (e(u) + e(1-u))`: 0 for `u <= 0`, 1 for `u >= 1`, flat at both ends.
pub fn smoothstep(u: PrimitiveExpr) -> PrimitiveExpr {
    let one_minus = sum(vec![E::Const(1.0), scale(u.clone(), -1.0)]);
    let left = moll(0, u);
    let right = moll(0, one_minus);
    product(vec![left.clone(), recip(sum(vec![left, right]))])
}

fn moll_value(k: u32, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let e = (-1.0 / u).exp();
    if e == 0.0 {
        return 0.0;
    }
    e * u.powi(-(k as i32))
}

impl PrimitiveExpr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            E::Const(c) => *c,
            E::Affine(a, b) => a * x + b,
            E::Sum(ts) => ts.iter().map(|t| t.eval(x)).sum(),
            E::Product(fs) => fs.iter().map(|f| f.eval(x)).product(),
            E::Pow(b, k) => b.eval(x).powi(*k as i32),
            E::Moll(k, u) => moll_value(*k, u.eval(x)),
            E::Recip(u) => 1.0 / u.eval(x),
        }
    }

    /// Taylor coefficients `f^(i)(x)/i!` for `i = 0..=order`.
    pub fn jet(&self, x: f64, order: usize) -> Vec<f64> {
        let n = order + 1;
        match self {
            E::Const(c) => {
                let mut j = vec![0.0; n];
                j[0] = *c;
                j
            }
            E::Affine(a, b) => {
                let mut j = vec![0.0; n];
                j[0] = a * x + b;
                if n > 1 {
                    j[1] = *a;
                }
                j
            }
            E::Sum(ts) => {
                let mut acc = vec![0.0; n];
                for t in ts {
                    for (s, v) in acc.iter_mut().zip(t.jet(x, order)) {
                        *s += v;
                    }
                }
                acc
            }
            E::Product(fs) => {
                let mut acc = fs[0].jet(x, order);
                for f in &fs[1..] {
                    acc = jet_mul(&acc, &f.jet(x, order));
                }
                acc
            }
            E::Pow(b, k) => jet_pow(&b.jet(x, order), *k),
            E::Recip(u) => jet_recip(&u.jet(x, order)),
            E::Moll(k, u) => {
                let uj = u.jet(x, order);
                if uj[0] <= 0.0 || (-1.0 / uj[0]).exp() == 0.0 {
                    return vec![0.0; n];
                }
                let w = jet_recip(&uj);
                let neg: Vec<f64> = w.iter().map(|v| -v).collect();
                let e = jet_exp(&neg);
                if *k == 0 {
                    e
                } else {
                    jet_mul(&e, &jet_pow(&w, *k))
                }
            }
        }
    }

    /// `m`-th derivative at `x`, evaluated through the jet.
    pub fn nth_derivative(&self, m: usize, x: f64) -> f64 {
        let j = self.jet(x, m);
        j[m] * factorial(m)
    }

    /// Symbolic derivative; the result stays inside the basis.
    pub fn derivative(&self) -> PrimitiveExpr {
        match self {
            E::Const(_) => E::Const(0.0),
            E::Affine(a, _) => E::Const(*a),
            E::Sum(ts) => sum(ts.iter().map(|t| t.derivative()).collect()),
            E::Product(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for i in 0..fs.len() {
                    let mut fac = fs.clone();
                    fac[i] = fs[i].derivative();
                    terms.push(product(fac));
                }
                sum(terms)
            }
            E::Pow(b, k) => product(vec![
                E::Const(*k as f64),
                pow((**b).clone(), k - 1),
                b.derivative(),
            ]),
            E::Moll(k, u) => {
                let inner = sum(vec![
                    moll(k + 2, (**u).clone()),
                    scale(moll(k + 1, (**u).clone()), -(*k as f64)),
                ]);
                product(vec![inner, u.derivative()])
            }
            E::Recip(u) => product(vec![
                E::Const(-1.0),
                pow(recip((**u).clone()), 2),
                u.derivative(),
            ]),
        }
    }

    /// Substitute `inner` for the variable.
    pub fn compose(&self, inner: &PrimitiveExpr) -> PrimitiveExpr {
        match self {
            E::Const(c) => E::Const(*c),
            E::Affine(a, b) => match inner {
                E::Affine(c, d) => affine(a * c, a * d + b),
                E::Const(c) => E::Const(a * c + b),
                other => sum(vec![scale(other.clone(), *a), E::Const(*b)]),
            },
            E::Sum(ts) => sum(ts.iter().map(|t| t.compose(inner)).collect()),
            E::Product(fs) => product(fs.iter().map(|f| f.compose(inner)).collect()),
            E::Pow(b, k) => pow(b.compose(inner), *k),
            E::Moll(k, u) => moll(*k, u.compose(inner)),
            E::Recip(u) => recip(u.compose(inner)),
        }
    }

    /// `x -> self(x + s)`.
    pub fn shifted(&self, s: f64) -> PrimitiveExpr {
        if s == 0.0 {
            return self.clone();
        }
        self.compose(&E::Affine(1.0, s))
    }

    pub fn is_const(&self) -> Option<f64> {
        match self {
            E::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn node_count(&self) -> usize {
        1 + match self {
            E::Const(_) | E::Affine(..) => 0,
            E::Sum(v) | E::Product(v) => v.iter().map(|t| t.node_count()).sum(),
            E::Pow(b, _) | E::Moll(_, b) | E::Recip(b) => b.node_count(),
        }
    }

    pub fn parse(text: &str) -> Result<PrimitiveExpr> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let e = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing tokens in expression `{text}`")));
        }
        Ok(e)
    }
}

impl fmt::Display for PrimitiveExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            E::Const(c) => write!(f, "{c:?}"),
            E::Affine(a, b) => write!(f, "(aff {a:?} {b:?})"),
            E::Sum(ts) => {
                write!(f, "(+")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
            E::Product(fs) => {
                write!(f, "(*")?;
                for t in fs {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
            E::Pow(b, k) => write!(f, "(^ {b} {k})"),
            E::Moll(k, u) => write!(f, "(moll {k} {u})"),
            E::Recip(u) => write!(f, "(recip {u})"),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_num<T: std::str::FromStr>(tok: Option<&String>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad number `{tok}`")))
}

fn expect_close(tokens: &[String], pos: &mut usize) -> Result<()> {
    match tokens.get(*pos) {
        Some(t) if t == ")" => {
            *pos += 1;
            Ok(())
        }
        other => Err(Error::Parse(format!("expected `)`, found {other:?}"))),
    }
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<PrimitiveExpr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("unexpected end of expression".into()))?;
    *pos += 1;
    if tok != "(" {
        return parse_num(Some(tok)).map(E::Const);
    }
    let head = tokens
        .get(*pos)
        .ok_or_else(|| Error::Parse("missing operator".into()))?
        .clone();
    *pos += 1;
    let e = match head.as_str() {
        "aff" => {
            let a = parse_num(tokens.get(*pos))?;
            let b = parse_num(tokens.get(*pos + 1))?;
            *pos += 2;
            E::Affine(a, b)
        }
        "+" | "*" => {
            let mut items = Vec::new();
            while tokens.get(*pos).map(String::as_str) != Some(")") {
                items.push(parse_tokens(tokens, pos)?);
            }
            if items.is_empty() {
                return Err(Error::Parse(format!("empty `{head}`")));
            }
            if head == "+" {
                E::Sum(items)
            } else {
                E::Product(items)
            }
        }
        "^" => {
            let b = parse_tokens(tokens, pos)?;
            let k = parse_num(tokens.get(*pos))?;
            *pos += 1;
            E::Pow(Box::new(b), k)
        }
        "moll" => {
            let k = parse_num(tokens.get(*pos))?;
            *pos += 1;
            E::Moll(k, Box::new(parse_tokens(tokens, pos)?))
        }
        "recip" => E::Recip(Box::new(parse_tokens(tokens, pos)?)),
        other => return Err(Error::Parse(format!("unknown operator `{other}`"))),
    };
    expect_close(tokens, pos)?;
    Ok(e)
}

impl Add for PrimitiveExpr {
    type Output = PrimitiveExpr;
    fn add(self, rhs: PrimitiveExpr) -> PrimitiveExpr {
        sum(vec![self, rhs])
    }
}

impl Sub for PrimitiveExpr {
    type Output = PrimitiveExpr;
    fn sub(self, rhs: PrimitiveExpr) -> PrimitiveExpr {
        sum(vec![self, scale(rhs, -1.0)])
    }
}

impl Mul for PrimitiveExpr {
    type Output = PrimitiveExpr;
    fn mul(self, rhs: PrimitiveExpr) -> PrimitiveExpr {
        product(vec![self, rhs])
    }
}

impl Mul<PrimitiveExpr> for f64 {
    type Output = PrimitiveExpr;
    fn mul(self, rhs: PrimitiveExpr) -> PrimitiveExpr {
        scale(rhs, self)
    }
}

impl Neg for PrimitiveExpr {
    type Output = PrimitiveExpr;
    fn neg(self) -> PrimitiveExpr {
        scale(self, -1.0)
    }
}

pub fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

fn jet_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n];
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..n - i {
            c[i + j] += a[i] * b[j];
        }
    }
    c
}

fn jet_pow(a: &[f64], k: u32) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    out[0] = 1.0;
    let mut base = a.to_vec();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            out = jet_mul(&out, &base);
        }
        k >>= 1;
        if k > 0 {
            base = jet_mul(&base, &base);
        }
    }
    out
}

fn jet_recip(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut r = vec![0.0; n];
    r[0] = 1.0 / a[0];
    for k in 1..n {
        let s: f64 = (1..=k).map(|j| a[j] * r[k - j]).sum();
        r[k] = -s * r[0];
    }
    r
}

fn jet_exp(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut e = vec![0.0; n];
    e[0] = a[0].exp();
    for k in 1..n {
        let s: f64 = (1..=k).map(|j| j as f64 * a[j] * e[k - j]).sum();
        e[k] = s / k as f64;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn richardson(f: impl Fn(f64) -> f64, x: f64, m: usize, h: f64) -> f64 {
        let central = |h: f64| -> f64 {
            // m-th central difference
            let mut acc = 0.0;
            for i in 0..=m {
                let c = binom(m, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
                acc += c * f(x + (m as f64 / 2.0 - i as f64) * h);
            }
            acc / h.powi(m as i32)
        };
        let (d1, d2, d3) = (central(h), central(h / 2.0), central(h / 4.0));
        let (r1, r2) = ((4.0 * d2 - d1) / 3.0, (4.0 * d3 - d2) / 3.0);
        (16.0 * r2 - r1) / 15.0
    }

    fn binom(n: usize, k: usize) -> f64 {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    fn sample_expr() -> PrimitiveExpr {
        let u = affine(2.0, 0.3);
        smoothstep(u.clone()) + 0.2 * pow(x() - constant(0.1), 3) + recip(constant(2.0) + x())
    }

    #[test]
    fn jet_matches_symbolic_derivatives() {
        let e = sample_expr();
        let mut d = e.clone();
        for m in 1..=4 {
            d = d.derivative();
            for &xv in &[0.05, 0.2, 0.31, 0.44] {
                let a = e.nth_derivative(m, xv);
                let b = d.eval(xv);
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "m={m} x={xv}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let e = sample_expr();
        for m in 1..=4 {
            let xv = 0.27;
            let fd = richardson(|t| e.eval(t), xv, m, 0.004);
            let j = e.nth_derivative(m, xv);
            assert!((fd - j).abs() < 1e-5 * (1.0 + j.abs()), "m={m}: {fd} vs {j}");
        }
    }

    #[test]
    fn mollifier_derivative_identity() {
        for k in 0..4u32 {
            let e = moll(k, x());
            let lhs = e.nth_derivative(1, 0.4);
            let rhs = moll_value(k + 2, 0.4) - k as f64 * moll_value(k + 1, 0.4);
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn smoothstep_is_flat_at_both_ends() {
        let s = smoothstep(x());
        for m in 1..=8 {
            assert!(s.nth_derivative(m, 0.0).abs() < 1e-9);
            assert!(s.nth_derivative(m, 1.0).abs() < 1e-9);
        }
        assert_eq!(s.eval(-0.3), 0.0);
        assert_eq!(s.eval(1.7), 1.0);
        assert!((s.eval(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn print_parse_round_trip() {
        let e = sample_expr();
        let text = e.to_string();
        let back = PrimitiveExpr::parse(&text).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_string(), text);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(PrimitiveExpr::parse("(foo 1)").is_err());
        assert!(PrimitiveExpr::parse("(+ 1").is_err());
        assert!(PrimitiveExpr::parse("(+)").is_err());
    }

    #[test]
    fn shift_matches_evaluation() {
        let e = sample_expr();
        let s = e.shifted(1.0);
        assert!((s.eval(-0.8) - e.eval(0.2)).abs() < 1e-15);
    }

    #[test]
    fn monomial_tangency() {
        let h = pow(x() - constant(0.5), 4);
        assert!(h.nth_derivative(3, 0.5).abs() < 1e-12);
        assert!((h.nth_derivative(4, 0.5) - 24.0).abs() < 1e-12);
    }
}
