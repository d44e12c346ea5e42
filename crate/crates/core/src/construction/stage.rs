use log::{debug, info};

use super::certificate::Certificate;
use super::conditions::{verify_conditions, ConditionReport, LANDING_MARGIN};
use super::{
    component_side, end_window, find_hit_time, init_stage0_with, extension_junction_order, nearer_end,
    new_junction_order, Params, StageState,
};
use crate::circle::{validate, IntervalOnCircle, MapDescriptor, Side};
use crate::error::{Error, Result};
use crate::perturbation::{
    flatten_split_with, micro_translate, reflatten_at, reflatten_with, split_unit_norm, Landing, Recenter, ReflattenSpec,
    SplitMode, SplitRecord, SplitSpec, MAX_HALVINGS,
};

/// Bisection steps for the amplitude threshold and the steering search.
const SEARCH_STEPS: usize = 60;
/// Amplitude scan below the cap: `a_max · GRID_RATIO^k`, `k < GRID_POINTS`.
const GRID_RATIO: f64 = std::f64::consts::FRAC_1_SQRT_2;
const GRID_POINTS: usize = 64;
/// Largest landing jump across an accepted edge, relative to the next window.
const EDGE_TOLERANCE: f64 = 0.01;
/// Attempts at `B = βA` with `β = 1/2, 1/4, ...`.
const BETA_HALVINGS: usize = 6;
/// Doublings of the distance from the threshold while looking for depth.
const EXTEND_STEPS: usize = 24;

/// What one stage chose and measured.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub side: Side,
    pub mode: SplitMode,
    pub delta: f64,
    pub sigma: f64,
    /// Largest admissible split amplitude.
    pub amplitude_cap: f64,
    /// Smallest amplitude at which `J_n` reaches `U_{n+1}` within the hit time.
    pub threshold: f64,
    pub amplitude: f64,
    pub split_translation: f64,
    pub hit_time: usize,
    pub entry_side: Side,
    pub expected_side: Side,
    pub reflatten_amplitude: f64,
    pub reflatten_translation: f64,
    pub reflatten_norm: f64,
    pub landing_margin: f64,
    pub junction_order: u32,
    pub extension_order: u32,
}

impl StageRecord {
    /// The stage-condition table and the smooth-extension rule prescribe different
    /// orders for the new junction.
    pub fn orders_disagree(&self) -> bool {
        self.junction_order != self.extension_order
    }
}

struct Member {
    map: MapDescriptor,
    rec: SplitRecord,
    tau: f64,
}

/// Split maps re-centred onto the target rotation number.
struct Family<'a> {
    base: &'a MapDescriptor,
    spec: SplitSpec,
    rho: f64,
    tau_budget: f64,
    iters: usize,
}

impl Family<'_> {
    fn member(&self, amplitude: f64) -> Result<Member> {
        let (split, rec) = flatten_split_with(self.base, &self.spec, amplitude)?;
        let (map, tau) = micro_translate(&split, self.tau_budget, self.rho, self.iters)?;
        Ok(Member { map, rec, tau })
    }
}

/// `f^j(I)` avoids `U_n` for `j < r_n` and `f^{r_n}(I)` sits compactly in `window`.
fn orbit_ok(m: &MapDescriptor, s: &StageState, window: &IntervalOnCircle) -> bool {
    if s.test.intersects(&s.flat) {
        return false;
    }
    let Ok(images) = m.iterate_interval(&s.test, s.return_time()) else {
        return false;
    };
    let (last, before) = images.split_last().expect("r_n >= 1");
    before.iter().all(|img| !img.intersects(&s.flat))
        && window.margin_inside(last) >= LANDING_MARGIN * window.len()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Entry {
    /// `f^j(J)` lands in `U` at `x`.
    Rest(usize, f64),
    /// `f^j(J)` falls back into `J` first.
    Component(usize),
    None,
}

/// First return of the plateau value of a flat `J` to `J ∪ U` within `limit` steps.
fn plateau_entry(m: &MapDescriptor, comp: &IntervalOnCircle, u: &IntervalOnCircle, limit: usize) -> Entry {
    let mut x = comp.mid();
    for j in 1..=limit {
        x = m.eval_circle(x);
        if u.contains(x) {
            return Entry::Rest(j, x);
        }
        if comp.contains(x) {
            return Entry::Component(j);
        }
    }
    Entry::None
}

/// Edge of the set of amplitudes whose plateau value enters `U` at step `hit`.
struct Boundary {
    /// Amplitude on the edge, from the entering side.
    edge: f64,
    inside: f64,
    outside: f64,
    side: Side,
}

/// Bisects between `inside` (enters at `hit`) and `outside` (does not) and
/// keeps the edge only when the entry point leaves through an end of `U`
/// rather than through an earlier return. `tol` bounds the jump of the entry
/// point across the edge, which is finite once the amplitudes are resolved
/// to the last bit.
fn entry_boundary(
    family: &Family,
    comp: &IntervalOnCircle,
    rest: &IntervalOnCircle,
    hit: usize,
    inside: f64,
    outside: f64,
    tol: f64,
) -> Result<Option<Boundary>> {
    let enters = |m: &MapDescriptor| matches!(plateau_entry(m, comp, rest, hit), Entry::Rest(j, _) if j == hit);
    if family.member(outside).is_ok_and(|mem| enters(&mem.map)) {
        return Ok(None);
    }
    let (mut a_in, mut a_out) = (inside, outside);
    let mut in_map = family.member(a_in)?.map;
    for _ in 0..SEARCH_STEPS {
        let mid = 0.5 * (a_in + a_out);
        if mid == a_in || mid == a_out {
            break;
        }
        match family.member(mid) {
            Ok(mem) if enters(&mem.map) => {
                a_in = mid;
                in_map = mem.map;
            }
            _ => a_out = mid,
        }
    }
    let Ok(out) = family.member(a_out) else {
        return Ok(None);
    };
    let early = plateau_entry(&out.map, comp, rest, hit - 1);
    if early != Entry::None {
        debug!("edge at {a_out:e} for step {hit}: earlier return {early:?}");
        return Ok(None);
    }
    let x_in = point_after(&in_map, comp, hit);
    let x_out = point_after(&out.map, comp, hit);
    let side = nearer_end(rest, x_in);
    let (d_in, d_out) = (signed_depth(rest, x_in, side), signed_depth(rest, x_out, side));
    if d_out > 0.0 || d_out < -tol || d_in > tol {
        debug!("edge at {a_out:e} for step {hit}: depths {d_in:e} inside, {d_out:e} outside");
        return Ok(None);
    }
    Ok(Some(Boundary {
        edge: a_in,
        inside,
        outside: a_out,
        side,
    }))
}

fn point_after(m: &MapDescriptor, comp: &IntervalOnCircle, j: usize) -> f64 {
    let mut x = comp.mid();
    for _ in 0..j {
        x = m.eval_circle(x);
    }
    x
}

/// Depth of `x` below the end of `u` on `side`, negative outside that end.
fn signed_depth(u: &IntervalOnCircle, x: f64, side: Side) -> f64 {
    let v = match side {
        Side::Left => x - u.a(),
        Side::Right => u.b() - x,
    };
    v - v.round()
}

/// One induction step `M_n → M_{n+1}`.
/// Split specification for the step out of `s`.
pub fn split_spec(s: &StageState, delta: f64) -> Result<SplitSpec> {
    if s.is_anchored() {
        SplitSpec::anchored(s.eps, delta, s.n, s.flat)
    } else {
        SplitSpec::new(s.parity(), s.eps, delta, s.n, s.flat)
    }
}

/// Split map the step out of `s` produced, rebuilt from its record.
pub fn replay_split(s: &StageState, record: &StageRecord) -> Result<(MapDescriptor, SplitRecord)> {
    let spec = split_spec(s, record.delta)?;
    let (m, rec) = flatten_split_with(&s.map, &spec, record.amplitude)?;
    Ok((m.translated(record.split_translation), rec))
}

pub fn run_stage(s: &StageState, delta: f64, sigma: f64, max_hit: usize) -> Result<(StageState, ConditionReport)> {
    let n = s.n;
    let anchored = s.is_anchored();
    let spec = split_spec(s, delta)?;
    let family = Family {
        base: &s.map,
        spec,
        rho: s.rho,
        tau_budget: 0.25 * delta,
        iters: s.budgets.compare_iters,
    };
    let window_n = s.window();

    let unit = split_unit_norm(&s.map, &spec, n + 1)?;
    let cap = 0.5 * delta / unit;
    let mut top = None;
    for h in 0..=MAX_HALVINGS {
        let a = cap * 0.5f64.powi(h as i32);
        let Ok(member) = family.member(a) else {
            continue;
        };
        if validate(&member.map).all_pass() && orbit_ok(&member.map, s, &window_n) {
            top = Some((a, member));
            break;
        }
    }
    let (a_max, top) = top.ok_or_else(|| {
        Error::BudgetExceeded(format!(
            "no split amplitude below {cap:e} keeps the orbit of I in place"
        ))
    })?;
    let comp = top.rec.component;
    let rest = top.rec.rest;
    debug!("stage {n}: amplitude cap {a_max:e}");

    let next_side = component_side(n + 1, anchored);
    let window_next = end_window(&rest, next_side, 0.5 * s.gap());
    let limit = max_hit.min(s.budgets.max_hit);
    if let Err(e) = find_hit_time(&top.map, &comp, &rest, limit) {
        debug!("stage {n}: no hit at the cap ({e}), scanning amplitudes");
    }

    let mut grid = Vec::new();
    for k in 0..GRID_POINTS {
        let a = a_max * GRID_RATIO.powi(k as i32);
        if let Ok(mem) = family.member(a) {
            if let Entry::Rest(j, _) = plateau_entry(&mem.map, &comp, &rest, limit) {
                grid.push((k, j));
            }
        }
    }
    grid.sort_by_key(|&(k, j)| (j, k));
    debug!("stage {n}: {} grid amplitudes enter U_(n+1)", grid.len());

    let mut found = None;
    let mut sides_seen = Vec::new();
    'search: for &(k, hit) in &grid {
        let inside = a_max * GRID_RATIO.powi(k as i32);
        for dir in [-1i32, 1] {
            let outside = a_max * GRID_RATIO.powi(k as i32 + dir);
            if outside > a_max {
                continue;
            }
            let Some(b) = entry_boundary(&family, &comp, &rest, hit, inside, outside, EDGE_TOLERANCE * window_next.len())? else {
                continue;
            };
            sides_seen.push(b.side);
            if b.side == next_side {
                found = Some((hit, b));
                break 'search;
            }
        }
    }
    let (hit, bound) = found.ok_or_else(|| match sides_seen.first() {
        Some(side) => Error::SideMismatch {
            found: side.name().into(),
            expected: next_side.name().into(),
        },
        None => Error::HitBudgetExceeded { budget: limit },
    })?;
    let threshold = bound.edge;
    let entry_side = bound.side;
    let r_next = s.return_time() + hit;
    let order = new_junction_order(n, anchored);
    let rspec_for = |rec: SplitRecord| ReflattenSpec {
        parity: s.parity(),
        eps: s.eps,
        sigma,
        stage: n,
        split: rec,
        order,
        coeff_target: s.budgets.coeff_target,
        landing: Some(Landing {
            test: s.test,
            return_time: r_next,
            window: window_next,
            avoid: rest,
        }),
        recenter: Some(Recenter {
            rho: s.rho,
            budget: 0.25 * sigma,
            iters: s.budgets.compare_iters,
        }),
    };
    // depth of f^{r_{n+1}}(I) below the entry end, after re-smoothing with B = βA
    let landing_depth = |a: f64, beta: f64| -> Option<f64> {
        let mem = family.member(a).ok()?;
        let g = reflatten_with(&mem.map, &rspec_for(mem.rec), beta * a).ok()?;
        let (g, _) = micro_translate(&g, 0.25 * sigma, s.rho, s.budgets.compare_iters).ok()?;
        let last = *g.iterate_interval(&s.test, r_next).ok()?.last()?;
        Some(signed_depth(&rest, last.mid(), entry_side))
    };
    let centre = signed_depth(&rest, window_next.mid(), entry_side);
    let inward = (bound.inside - threshold).signum();
    debug!(
        "stage {n}: threshold {threshold:e}, entry step {hit} from the {} end",
        entry_side.name()
    );

    let mut beta = 0.5;
    let mut last_err = None;
    let mut result = None;
    for _ in 0..BETA_HALVINGS {
        // push the inner amplitude away from the edge until the landing is deep enough
        let mut inner = bound.inside;
        let mut best = (f64::NEG_INFINITY, inner);
        for _ in 0..EXTEND_STEPS {
            if let Some(d) = landing_depth(inner, beta) {
                if d > best.0 {
                    best = (d, inner);
                }
                if d >= centre {
                    break;
                }
            }
            let next = threshold + 2.0 * (inner - threshold);
            if next > a_max || next <= 0.0 || inward * (next - threshold) <= 0.0 {
                break;
            }
            match family.member(next) {
                Ok(mem) if matches!(plateau_entry(&mem.map, &comp, &rest, hit), Entry::Rest(j, _) if j == hit) => {
                    inner = next
                }
                _ => break,
            }
        }
        let (reach, inner) = best;
        let goal = if reach >= centre { centre } else { 0.5 * reach };
        debug!("stage {n}: beta {beta}, reach {reach:e}, goal {goal:e}");
        if !(goal > 0.0) {
            last_err = Some(Error::ContainmentLost(format!(
                "stage {n}: re-smoothed landing never enters U_(n+1) (reach {reach:e})"
            )));
            beta *= 0.5;
            continue;
        }
        let (mut lo, mut hi) = (bound.outside, inner);
        for _ in 0..SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if landing_depth(mid, beta).is_some_and(|d| d >= goal) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let amplitude = hi;
        let chosen = family.member(amplitude)?;
        match plateau_entry(&chosen.map, &comp, &rest, hit) {
            Entry::Rest(j, x) if j == hit && rest.contains(x) => {}
            other => {
                last_err = Some(Error::ContainmentLost(format!(
                    "stage {n}: steered entry {other:?} leaves {rest}"
                )));
                beta *= 0.5;
                continue;
            }
        }
        if !orbit_ok(&chosen.map, s, &window_n) {
            last_err = Some(Error::ContainmentLost(format!(
                "stage {n}: steering moved the orbit of I"
            )));
            beta *= 0.5;
            continue;
        }
        match reflatten_at(&chosen.map, &rspec_for(chosen.rec), beta * amplitude) {
            Ok(out) => {
                result = Some((amplitude, chosen, out));
                break;
            }
            Err(e) => {
                debug!("stage {n}: beta {beta} rejected: {e}");
                last_err = Some(e);
                beta *= 0.5;
            }
        }
    }
    let (amplitude, chosen, out) = match result {
        Some(r) => r,
        None => return Err(last_err.unwrap_or_else(|| Error::ContainmentLost("no re-smoothing tried".into()))),
    };
    info!(
        "stage {n}: amplitude {amplitude:e}, B {:e}, hit time {hit}, r = {r_next}, margin {:?}",
        out.amplitude, out.margin
    );

    let record = StageRecord {
        stage: n,
        side: spec.side,
        mode: spec.mode,
        delta,
        sigma,
        amplitude_cap: a_max,
        threshold,
        amplitude,
        split_translation: chosen.tau,
        hit_time: hit,
        entry_side,
        expected_side: next_side,
        reflatten_amplitude: out.amplitude,
        reflatten_translation: out.translation,
        reflatten_norm: out.norm,
        landing_margin: out.margin.unwrap_or(f64::NAN),
        junction_order: order,
        extension_order: extension_junction_order(n, anchored),
    };
    let mut schedule = s.schedule.clone();
    schedule.push(r_next);
    let mut records = s.records.clone();
    records.push(record);
    let next = StageState {
        n: n + 1,
        map: out.map,
        flat: rest,
        schedule,
        test: s.test,
        eps: s.eps,
        rho: s.rho,
        l: s.l,
        anchor: s.anchor,
        budgets: s.budgets,
        records,
        previous: Some((s.map.clone(), s.flat)),
    };
    let report = verify_conditions(&next);
    if !report.all_pass() {
        return Err(Error::StageRegression {
            stage: n + 1,
            conditions: report.failure_summary(),
        });
    }
    Ok((next, report))
}

/// Stage 0 plus `params.stages` induction steps. `on_stage` sees every state
/// with its report, stage 0 included.
pub fn run<F>(params: &Params, mut on_stage: F) -> Result<(StageState, Certificate)>
where
    F: FnMut(&StageState, &ConditionReport) -> Result<()>,
{
    if params.stages == 0 {
        return Err(Error::Precondition("at least one stage is required".into()));
    }
    let mut state = init_stage0_with(params.eps, params.rho, params.l, params.anchor, params.budgets)
        .map_err(|e| Error::Stage {
            stage: 0,
            source: Box::new(e),
        })?;
    let report = verify_conditions(&state);
    if !report.all_pass() {
        return Err(Error::StageRegression {
            stage: 0,
            conditions: report.failure_summary(),
        });
    }
    on_stage(&state, &report)?;
    let mut reports = vec![report];
    let mut states = vec![state.clone()];
    for n in 0..params.stages {
        let (next, report) = run_stage(&state, params.delta(n), params.sigma(n), params.budgets.max_hit)
            .map_err(|e| match e {
                Error::StageRegression { .. } => e,
                other => Error::Stage {
                    stage: n,
                    source: Box::new(other),
                },
            })?;
        on_stage(&next, &report)?;
        reports.push(report);
        states.push(next.clone());
        state = next;
    }
    let cert = Certificate::assemble(&states, reports)?;
    Ok((state, cert))
}
