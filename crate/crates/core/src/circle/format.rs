//! Text form of a descriptor.
//!
//! ```text
//! mapdesc/1
//! breakpoints 3
//! 0.0 inf -
//! 0.4 3 4:2.5:right
//! 1.0 inf -
//! pieces 2
//! FLAT 0.1
//! SMOOTH (+ 0.1 (* 7.7 (^ (aff 1.0 -0.4) 4)))
//! translation 0.0
//! ```

use crate::error::{Error, Result};
use crate::expr::PrimitiveExpr;

use super::descriptor::{Breakpoint, Junction, MapDescriptor, Piece, Side, Smoothness};

pub const HEADER: &str = "mapdesc/1";

pub fn print(m: &MapDescriptor) -> String {
    let mut s = String::new();
    s.push_str(HEADER);
    s.push('\n');
    s.push_str(&format!("breakpoints {}\n", m.breakpoints().len()));
    for b in m.breakpoints() {
        let class = match b.class {
            Smoothness::Infinite => "inf".to_string(),
            Smoothness::Finite(k) => k.to_string(),
        };
        let junction = match b.junction {
            None => "-".to_string(),
            Some(j) => format!("{}:{:?}:{}", j.order, j.coeff, j.side.name()),
        };
        s.push_str(&format!("{:?} {} {}\n", b.x, class, junction));
    }
    s.push_str(&format!("pieces {}\n", m.pieces().len()));
    for p in m.pieces() {
        match p {
            Piece::Flat(v) => s.push_str(&format!("FLAT {v:?}\n")),
            Piece::Smooth(e) => s.push_str(&format!("SMOOTH {e}\n")),
        }
    }
    s.push_str(&format!("translation {:?}\n", m.translation()));
    s
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse(format!("line {}: {}", line + 1, msg.into()))
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| err(line, format!("bad number `{tok}`")))
}

fn count(line: Option<(usize, &str)>, key: &str) -> Result<(usize, usize)> {
    let (i, l) = line.ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
    let rest = l
        .strip_prefix(key)
        .ok_or_else(|| err(i, format!("expected `{key} <n>`")))?;
    Ok((i, num(rest.trim(), i)?))
}

pub fn parse(text: &str) -> Result<MapDescriptor> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(Error::Parse(format!("missing `{HEADER}` header"))),
    }
    let (_, nb) = count(lines.next(), "breakpoints")?;
    let mut bps = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (i, l) = lines.next().ok_or_else(|| Error::Parse("truncated breakpoints".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(i, "breakpoint needs `<x> <class> <junction>`"));
        }
        let class = match toks[1] {
            "inf" => Smoothness::Infinite,
            k => Smoothness::Finite(num(k, i)?),
        };
        let junction = match toks[2] {
            "-" => None,
            j => {
                let parts: Vec<&str> = j.split(':').collect();
                if parts.len() != 3 {
                    return Err(err(i, "junction needs `order:coeff:side`"));
                }
                let side = match parts[2] {
                    "left" => Side::Left,
                    "right" => Side::Right,
                    other => return Err(err(i, format!("bad side `{other}`"))),
                };
                Some(Junction {
                    order: num(parts[0], i)?,
                    coeff: num(parts[1], i)?,
                    side,
                })
            }
        };
        bps.push(Breakpoint {
            x: num(toks[0], i)?,
            class,
            junction,
        });
    }
    let (_, np) = count(lines.next(), "pieces")?;
    let mut pieces = Vec::with_capacity(np);
    for _ in 0..np {
        let (i, l) = lines.next().ok_or_else(|| Error::Parse("truncated pieces".into()))?;
        if let Some(v) = l.strip_prefix("FLAT ") {
            pieces.push(Piece::Flat(num(v.trim(), i)?));
        } else if let Some(e) = l.strip_prefix("SMOOTH ") {
            pieces.push(Piece::Smooth(
                PrimitiveExpr::parse(e).map_err(|e| err(i, e.to_string()))?,
            ));
        } else {
            return Err(err(i, "piece must be `FLAT v` or `SMOOTH expr`"));
        }
    }
    let (i, l) = lines
        .next()
        .ok_or_else(|| Error::Parse("missing translation".into()))?;
    let t = l
        .strip_prefix("translation ")
        .ok_or_else(|| err(i, "expected `translation <t>`"))?;
    let t = num(t.trim(), i)?;
    if let Some((i, _)) = lines.next() {
        return Err(err(i, "trailing content"));
    }
    MapDescriptor::new(bps, pieces, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{constant, pow, smoothstep, x};

    #[test]
    fn round_trip_is_textually_exact() {
        let e = constant(0.1) + (1.0 / 3.0) * pow(x() - constant(0.4), 4) + smoothstep(x());
        let bps = vec![
            Breakpoint::smooth(0.0),
            Breakpoint {
                x: 0.4,
                class: Smoothness::Finite(3),
                junction: Some(Junction {
                    order: 4,
                    coeff: 1.0 / 3.0,
                    side: Side::Right,
                }),
            },
            Breakpoint::smooth(1.0),
        ];
        let m = MapDescriptor::new(bps, vec![Piece::Flat(0.1), Piece::Smooth(e)], 1e-17).unwrap();
        let text = print(&m);
        let back = parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(print(&back), text);
    }

    #[test]
    fn rejects_missing_header() {
        assert!(parse("breakpoints 2\n").is_err());
    }
}
