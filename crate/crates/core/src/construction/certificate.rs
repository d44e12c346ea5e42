use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::conditions::{decay_rows, ConditionReport};
use super::stage::StageRecord;
use super::{expected_length, AnchorConfig, Budgets, StageState};
use crate::circle::{format as mapfmt, IntervalOnCircle, Side};
use crate::error::{Error, Result};
use crate::perturbation::SplitMode;

const STATE_HEADER: &str = "stage/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub j: usize,
    pub k: usize,
    pub length: f64,
    pub bound: f64,
}

/// Everything a finished run certifies.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub stages: usize,
    pub schedule: Vec<usize>,
    /// `|f_K^j(I)|` for `1 ≤ j < r_K`.
    pub decay: Vec<DecayRow>,
    pub reports: Vec<ConditionReport>,
    /// `(i, ‖F_i − F_{i−1}‖_{C^i}, 2^{−i})`
    pub cauchy: Vec<(usize, f64, f64)>,
    /// `(i, measured |U_i|, closed form)`
    pub lengths: Vec<(usize, f64, f64)>,
    /// `l − 4ε`, a lower bound for the length of the limit flat interval.
    pub limit_bound: f64,
    pub records: Vec<StageRecord>,
}

impl Certificate {
    pub(crate) fn assemble(states: &[StageState], reports: Vec<ConditionReport>) -> Result<Self> {
        let last = states.last().ok_or_else(|| Error::Precondition("no stages".into()))?;
        let decay = decay_rows(last)
            .map_err(Error::InvariantRegression)?
            .into_iter()
            .map(|(j, k, length, bound)| DecayRow { j, k, length, bound })
            .collect();
        let cauchy = reports
            .iter()
            .skip(1)
            .map(|r| {
                let e = r.get(7);
                (r.stage, e.measured, e.bound)
            })
            .collect();
        let lengths = states
            .iter()
            .map(|s| (s.n, s.flat.len(), expected_length(s.l, s.eps, s.n)))
            .collect();
        Ok(Self {
            stages: last.n,
            schedule: last.schedule.clone(),
            decay,
            reports,
            cauchy,
            lengths,
            limit_bound: last.l - 4.0 * last.eps,
            records: last.records.clone(),
        })
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.all_pass())
    }

    pub fn decay_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["j", "k", "length", "bound"]).map_err(csv_err)?;
        for r in &self.decay {
            w.write_record([
                r.j.to_string(),
                r.k.to_string(),
                format!("{:e}", r.length),
                format!("{:e}", r.bound),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn cauchy_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "cj_distance", "bound"]).map_err(csv_err)?;
        for (i, v, b) in &self.cauchy {
            w.write_record([i.to_string(), format!("{v:e}"), format!("{b:e}")])
                .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn conditions_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "condition", "name", "pass", "measured", "bound", "margin"])
            .map_err(csv_err)?;
        for r in &self.reports {
            for e in &r.entries {
                w.write_record([
                    r.stage.to_string(),
                    e.index.to_string(),
                    e.name.to_string(),
                    e.pass.to_string(),
                    format!("{:e}", e.measured),
                    format!("{:e}", e.bound),
                    format!("{:e}", e.margin),
                ])
                .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    pub fn lengths_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "measured", "closed_form"]).map_err(csv_err)?;
        for (i, m, c) in &self.lengths {
            w.write_record([i.to_string(), format!("{m:?}"), format!("{c:?}")])
                .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn stages_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "stage",
            "side",
            "amplitude",
            "threshold",
            "hit_time",
            "entry_side",
            "reflatten_amplitude",
            "landing_margin",
            "junction_order",
            "extension_order",
            "orders_disagree",
        ])
        .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.stage.to_string(),
                r.side.name().to_string(),
                format!("{:e}", r.amplitude),
                format!("{:e}", r.threshold),
                r.hit_time.to_string(),
                r.entry_side.name().to_string(),
                format!("{:e}", r.reflatten_amplitude),
                format!("{:e}", r.landing_margin),
                r.junction_order.to_string(),
                r.extension_order.to_string(),
                r.orders_disagree().to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointPaths {
    pub descriptor: PathBuf,
    pub state: PathBuf,
}

fn descriptor_name(n: usize) -> String {
    format!("stage_{n:03}.mapdesc")
}

fn state_name(n: usize) -> String {
    format!("stage_{n:03}.state")
}

fn side_name(s: Side) -> &'static str {
    s.name()
}

fn parse_side(s: &str) -> Result<Side> {
    match s {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(Error::Parse(format!("unknown side {other:?}"))),
    }
}

fn mode_name(m: SplitMode) -> &'static str {
    match m {
        SplitMode::ShiftComponent => "component",
        SplitMode::ShiftRemainder => "remainder",
    }
}

fn parse_mode(s: &str) -> Result<SplitMode> {
    match s {
        "component" => Ok(SplitMode::ShiftComponent),
        "remainder" => Ok(SplitMode::ShiftRemainder),
        other => Err(Error::Parse(format!("unknown split mode {other:?}"))),
    }
}

fn record_line(r: &StageRecord) -> String {
    format!(
        "record stage={} side={} mode={} delta={:?} sigma={:?} cap={:?} threshold={:?} amplitude={:?} \
         split_tau={:?} hit={} entry={} expected={} b={:?} tau={:?} norm={:?} margin={:?} order={} extension={}",
        r.stage,
        side_name(r.side),
        mode_name(r.mode),
        r.delta,
        r.sigma,
        r.amplitude_cap,
        r.threshold,
        r.amplitude,
        r.split_translation,
        r.hit_time,
        side_name(r.entry_side),
        side_name(r.expected_side),
        r.reflatten_amplitude,
        r.reflatten_translation,
        r.reflatten_norm,
        r.landing_margin,
        r.junction_order,
        r.extension_order,
    )
}

fn parse_record(fields: &[&str]) -> Result<StageRecord> {
    let kv: HashMap<&str, &str> = fields
        .iter()
        .filter_map(|f| f.split_once('='))
        .collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Parse(format!("record lacks {k}")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad {k}"))) };
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad {k}"))) };
    Ok(StageRecord {
        stage: int("stage")?,
        side: parse_side(get("side")?)?,
        mode: parse_mode(get("mode")?)?,
        delta: num("delta")?,
        sigma: num("sigma")?,
        amplitude_cap: num("cap")?,
        threshold: num("threshold")?,
        amplitude: num("amplitude")?,
        split_translation: num("split_tau")?,
        hit_time: int("hit")?,
        entry_side: parse_side(get("entry")?)?,
        expected_side: parse_side(get("expected")?)?,
        reflatten_amplitude: num("b")?,
        reflatten_translation: num("tau")?,
        reflatten_norm: num("norm")?,
        landing_margin: num("margin")?,
        junction_order: int("order")? as u32,
        extension_order: int("extension")? as u32,
    })
}

fn interval_fields(i: &IntervalOnCircle) -> String {
    format!("{:?} {:?}", i.a(), i.b())
}

/// Writes `stage_NNN.mapdesc` and the `stage_NNN.state` sidecar into `dir`.
/// Every line of `header` is written as a `#` comment on top of both files.
pub fn write_checkpoint(dir: &Path, s: &StageState, header: &[String]) -> Result<CheckpointPaths> {
    let comments: String = header.iter().map(|h| format!("# {h}\n")).collect();
    let descriptor = dir.join(descriptor_name(s.n));
    fs::write(&descriptor, format!("{comments}{}", mapfmt::print(&s.map))).map_err(io_err)?;
    let mut out = format!("{comments}{STATE_HEADER}\n");
    out.push_str(&format!("n {}\n", s.n));
    out.push_str(&format!("eps {:?}\n", s.eps));
    out.push_str(&format!("rho {:?}\n", s.rho));
    out.push_str(&format!("l {:?}\n", s.l));
    out.push_str(&format!("flat {}\n", interval_fields(&s.flat)));
    out.push_str(&format!("test {}\n", interval_fields(&s.test)));
    let sched: Vec<String> = s.schedule.iter().map(|r| r.to_string()).collect();
    out.push_str(&format!("schedule {}\n", sched.join(" ")));
    match s.anchor {
        Some(an) => out.push_str(&format!("anchor {:?} {:?}\n", an.p, an.k)),
        None => out.push_str("anchor none\n"),
    }
    let b = &s.budgets;
    out.push_str(&format!(
        "budgets {} {} {} {:?}\n",
        b.max_hit, b.enclosure_iters, b.compare_iters, b.coeff_target
    ));
    if let Some((_, prev_flat)) = &s.previous {
        out.push_str(&format!("previous {}\n", descriptor_name(s.n - 1)));
        out.push_str(&format!("previous_flat {}\n", interval_fields(prev_flat)));
    }
    for r in &s.records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    let state = dir.join(state_name(s.n));
    fs::write(&state, out).map_err(io_err)?;
    Ok(CheckpointPaths { descriptor, state })
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(format!("i/o: {e}"))
}

fn read_descriptor(path: &Path) -> Result<crate::circle::MapDescriptor> {
    let text = fs::read_to_string(path).map_err(io_err)?;
    mapfmt::parse(&text)
}

/// Reads a `.state` sidecar, its descriptor and the previous descriptor it
/// references (all resolved relative to the sidecar's directory).
pub fn read_checkpoint(state_path: &Path) -> Result<StageState> {
    let text = fs::read_to_string(state_path).map_err(io_err)?;
    let dir = state_path.parent().unwrap_or_else(|| Path::new("."));
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    if lines.next() != Some(STATE_HEADER) {
        return Err(Error::Parse(format!("missing {STATE_HEADER} header")));
    }
    let mut kv: HashMap<String, Vec<String>> = HashMap::new();
    let mut records = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "record" {
            records.push(parse_record(&fields[1..])?);
        } else {
            kv.insert(fields[0].to_string(), fields[1..].iter().map(|s| s.to_string()).collect());
        }
    }
    let field = |k: &str| kv.get(k).ok_or_else(|| Error::Parse(format!("state lacks {k}")));
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}"))) };
    let one = |k: &str| -> Result<f64> {
        let v = field(k)?;
        num(v.first().ok_or_else(|| Error::Parse(format!("empty {k}")))?)
    };
    let interval = |k: &str| -> Result<IntervalOnCircle> {
        let v = field(k)?;
        if v.len() != 2 {
            return Err(Error::Parse(format!("{k} needs two numbers")));
        }
        IntervalOnCircle::new(num(&v[0])?, num(&v[1])?)
    };
    let n = int(field("n")?.first().map(String::as_str).unwrap_or(""))?;
    let schedule = field("schedule")?
        .iter()
        .map(|s| int(s))
        .collect::<Result<Vec<_>>>()?;
    if schedule.len() != n + 1 || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parse("schedule must hold n + 1 increasing return times".into()));
    }
    let anchor = match field("anchor")?.as_slice() {
        [none] if none == "none" => None,
        [p, k] => Some(AnchorConfig::new(num(p)?, num(k)?)?),
        _ => return Err(Error::Parse("bad anchor line".into())),
    };
    let budgets = match field("budgets")?.as_slice() {
        [h, e, c, t] => Budgets {
            max_hit: int(h)?,
            enclosure_iters: int(e)?,
            compare_iters: int(c)?,
            coeff_target: num(t)?,
        },
        _ => return Err(Error::Parse("bad budgets line".into())),
    };
    let map = read_descriptor(&dir.join(descriptor_name(n)))?;
    let previous = match kv.get("previous") {
        Some(v) => {
            let name = v.first().ok_or_else(|| Error::Parse("empty previous".into()))?;
            Some((read_descriptor(&dir.join(name))?, interval("previous_flat")?))
        }
        None => None,
    };
    Ok(StageState {
        n,
        map,
        flat: interval("flat")?,
        schedule,
        test: interval("test")?,
        eps: one("eps")?,
        rho: one("rho")?,
        l: one("l")?,
        anchor,
        budgets,
        records,
        previous,
    })
}
