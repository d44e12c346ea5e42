//! First-return proxies for the Cherry flow obtained by suspending a circle
//! map with a flat interval: orbit classification, basin statistics, the
//! cover of the gaps of the non-wandering set, and suspension traces.

use std::fmt::Write as _;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circle::{flat_set, IntervalOnCircle, MapDescriptor};
use crate::construction::certificate::{csv_err, finish};
use crate::error::{Error, Result};

/// Hausdorff displacement below which an orbit counts as settled.
pub const SETTLE_TOL: f64 = 1e-3;
/// Pass threshold of the minimality distance profile.
pub const PROFILE_TOL: f64 = 5e-3;
/// Trace samples per period.
pub const TRACE_STEPS: usize = 64;
/// Smallest sample accepted by [`basin_estimate`].
pub const MIN_SAMPLES: usize = 100;

const Z95: f64 = 1.959_963_984_540_054;
const BISECT_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitClass {
    /// `f^j(x)` lies in the open flat interval, `j < n`.
    SinkBound(usize),
    AttractorCandidate,
    Unresolved(usize),
}

impl OrbitClass {
    pub fn name(&self) -> &'static str {
        match self {
            OrbitClass::SinkBound(_) => "sink",
            OrbitClass::AttractorCandidate => "attractor",
            OrbitClass::Unresolved(_) => "unresolved",
        }
    }
}

/// Flat arcs of `m`, empty when there are none or the map fails the
/// hidden-flat check.
fn flats(m: &MapDescriptor) -> Vec<IntervalOnCircle> {
    flat_set(m).unwrap_or_default()
}

fn classify_in(m: &MapDescriptor, flats: &[IntervalOnCircle], x: f64, n: usize) -> OrbitClass {
    let n = n.max(1);
    let mut y = x.rem_euclid(1.0);
    let mut tail = Vec::with_capacity(n - n / 2);
    for j in 0..n {
        if flats.iter().any(|u| u.contains(y)) {
            return OrbitClass::SinkBound(j);
        }
        if j >= n / 2 {
            tail.push(y);
        }
        y = m.eval_circle(y);
    }
    let (early, late) = tail.split_at(3 * n / 4 - n / 2);
    if !early.is_empty() && !late.is_empty() && hausdorff(early, late) < SETTLE_TOL {
        OrbitClass::AttractorCandidate
    } else {
        OrbitClass::Unresolved(n)
    }
}

/// Classifies the iterates `f^j(x)`, `j < n`.
pub fn classify_point(m: &MapDescriptor, x: f64, n: usize) -> OrbitClass {
    classify_in(m, &flats(m), x, n)
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Distance from `x` to the nearest point of the sorted set `s`.
fn nearest(s: &[f64], x: f64) -> f64 {
    let i = s.partition_point(|&v| v < x);
    let before = if i == 0 { s[s.len() - 1] } else { s[i - 1] };
    let after = if i == s.len() { s[0] } else { s[i] };
    circle_dist(x, before).min(circle_dist(x, after))
}

/// Hausdorff distance between two finite sets on the circle.
pub fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let sorted = |v: &[f64]| {
        let mut s: Vec<f64> = v.iter().map(|x| x.rem_euclid(1.0)).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let (sa, sb) = (sorted(a), sorted(b));
    let one = |from: &[f64], to: &[f64]| from.iter().map(|&x| nearest(to, x)).fold(0.0, f64::max);
    one(&sa, &sb).max(one(&sb, &sa))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub count: usize,
    pub sink: f64,
    pub attractor: f64,
    pub unresolved: f64,
}

impl Fractions {
    fn of(classes: &[OrbitClass]) -> Self {
        let n = classes.len().max(1) as f64;
        let tally = |f: fn(&OrbitClass) -> bool| classes.iter().filter(|c| f(c)).count() as f64 / n;
        Self {
            count: classes.len(),
            sink: tally(|c| matches!(c, OrbitClass::SinkBound(_))),
            attractor: tally(|c| matches!(c, OrbitClass::AttractorCandidate)),
            unresolved: tally(|c| matches!(c, OrbitClass::Unresolved(_))),
        }
    }

    /// 95% normal-approximation half-width for a fraction `p`.
    pub fn half_width_of(&self, p: f64) -> f64 {
        Z95 * (p * (1.0 - p) / self.count.max(1) as f64).sqrt()
    }

    /// Largest half-width among the three fractions.
    pub fn half_width(&self) -> f64 {
        [self.sink, self.attractor, self.unresolved]
            .into_iter()
            .map(|p| self.half_width_of(p))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinReport {
    pub iters: usize,
    pub seed: u64,
    /// Seeded uniform sample.
    pub random: Fractions,
    /// Midpoint grid of the same size.
    pub grid: Fractions,
    /// Endpoint and midpoint probes of the test interval, when given.
    pub probes: Vec<(f64, OrbitClass)>,
}

impl BasinReport {
    pub fn probes_attract(&self) -> bool {
        !self.probes.is_empty()
            && self.probes.iter().all(|(_, c)| *c == OrbitClass::AttractorCandidate)
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["set", "count", "iters", "seed", "sink", "attractor", "unresolved", "half_width"])
            .map_err(csv_err)?;
        for (name, f) in [("random", &self.random), ("grid", &self.grid)] {
            w.write_record([
                name.to_string(),
                f.count.to_string(),
                self.iters.to_string(),
                self.seed.to_string(),
                format!("{:e}", f.sink),
                format!("{:e}", f.attractor),
                format!("{:e}", f.unresolved),
                format!("{:e}", f.half_width()),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn probes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "class", "step"]).map_err(csv_err)?;
        for (x, c) in &self.probes {
            let step = match c {
                OrbitClass::SinkBound(j) | OrbitClass::Unresolved(j) => j.to_string(),
                OrbitClass::AttractorCandidate => String::new(),
            };
            w.write_record([format!("{x:?}"), c.name().to_string(), step])
                .map_err(csv_err)?;
        }
        finish(w)
    }
}

/// Endpoints and midpoint of `i`.
pub fn interval_probes(i: &IntervalOnCircle) -> [f64; 3] {
    [i.a(), i.mid(), i.b()]
}

fn classify_all(m: &MapDescriptor, flats: &[IntervalOnCircle], xs: &[f64], n: usize) -> Vec<OrbitClass> {
    let workers = thread::available_parallelism().map_or(1, |w| w.get()).min(xs.len().max(1));
    let chunk = xs.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&x| classify_in(m, flats, x, n)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("classification worker"))
            .collect()
    })
}

/// Classifies `samples` seeded uniform points and a grid of `samples` points.
pub fn basin_estimate(
    m: &MapDescriptor,
    samples: usize,
    n: usize,
    seed: u64,
    probe: Option<&IntervalOnCircle>,
) -> Result<BasinReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::Precondition(format!(
            "{samples} samples, at least {MIN_SAMPLES} required"
        )));
    }
    let flats = flats(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<f64> = (0..samples).map(|_| rng.gen::<f64>()).collect();
    let grid: Vec<f64> = (0..samples).map(|i| (i as f64 + 0.5) / samples as f64).collect();
    let probes = match probe {
        Some(i) => {
            let xs = interval_probes(i);
            xs.iter().map(|&x| (x, classify_in(m, &flats, x, n))).collect()
        }
        None => Vec::new(),
    };
    Ok(BasinReport {
        iters: n,
        seed,
        random: Fractions::of(&classify_all(m, &flats, &random, n)),
        grid: Fractions::of(&classify_all(m, &flats, &grid, n)),
        probes,
    })
}

/// Merged arc of preimages with the smallest depth it contains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverArc {
    pub arc: IntervalOnCircle,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapCover {
    pub depth: usize,
    /// Disjoint arcs sorted by left endpoint.
    pub arcs: Vec<CoverArc>,
    pub length: f64,
    /// Covered length after each depth `0..=depth`.
    pub lengths: Vec<f64>,
    /// `f^{-j}(int U)` for `j = 0..=depth`, before merging.
    pub preimages: Vec<IntervalOnCircle>,
    /// Depths whose preimage endpoint fell inside a flat piece and was set
    /// to the piece's boundary.
    pub ambiguous: Vec<usize>,
}

impl GapCover {
    /// The cover at a smaller depth.
    pub fn truncated(&self, depth: usize) -> GapCover {
        let depth = depth.min(self.depth);
        let preimages = self.preimages[..=depth].to_vec();
        GapCover {
            depth,
            arcs: merge(&tagged(&preimages)),
            length: self.lengths[depth],
            lengths: self.lengths[..=depth].to_vec(),
            ambiguous: self.ambiguous.iter().copied().filter(|&j| j <= depth).collect(),
            preimages,
        }
    }

    /// Complement of the cover, the approximation of the non-wandering set.
    pub fn complement(&self) -> Vec<(f64, f64)> {
        let n = self.arcs.len();
        (0..n)
            .filter_map(|k| {
                let lo = self.arcs[k].arc.b();
                let next = self.arcs[(k + 1) % n].arc.a();
                let hi = if next < lo - 0.5 || k + 1 == n { next + 1.0 } else { next };
                (hi > lo).then_some((lo, hi))
            })
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.arcs.iter().any(|c| c.arc.contains(x))
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["a", "b", "length", "depth"]).map_err(csv_err)?;
        for c in &self.arcs {
            w.write_record([
                format!("{:?}", c.arc.a()),
                format!("{:?}", c.arc.b()),
                format!("{:e}", c.arc.len()),
                c.depth.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn lengths_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["depth", "covered"]).map_err(csv_err)?;
        for (j, l) in self.lengths.iter().enumerate() {
            w.write_record([j.to_string(), format!("{l:?}")]).map_err(csv_err)?;
        }
        finish(w)
    }
}

/// Unique flat arc of `m`.
fn unique_flat(m: &MapDescriptor) -> Result<IntervalOnCircle> {
    let f = flat_set(m)?;
    match f.as_slice() {
        [u] => Ok(*u),
        _ => Err(Error::Precondition(format!("{} flat intervals, exactly one required", f.len()))),
    }
}

/// Lift bracket `[lo, hi]` with `F(lo) < y < F(hi)`.
fn bracket(m: &MapDescriptor, y: f64) -> (f64, f64) {
    let mut lo = y - m.translation() - 1.0;
    while m.eval_lift(lo) >= y {
        lo -= 1.0;
    }
    let mut hi = lo + 1.0;
    while m.eval_lift(hi) <= y {
        hi += 1.0;
    }
    (lo, hi)
}

/// `sup {x : F(x) ≤ y}` when `upper`, else `inf {x : F(x) ≥ y}`.
fn inverse(m: &MapDescriptor, y: f64, upper: bool) -> f64 {
    let (mut lo, mut hi) = bracket(m, y);
    for _ in 0..BISECT_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = m.eval_lift(mid);
        if v < y || (upper && v == y) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if upper { lo } else { hi }
}

/// `f^{-1}` of an open arc.
fn preimage(m: &MapDescriptor, v: &IntervalOnCircle) -> Result<IntervalOnCircle> {
    let a = inverse(m, v.a(), true);
    let mut b = inverse(m, v.a() + v.len(), false);
    while b - a >= 1.0 {
        b -= 1.0;
    }
    IntervalOnCircle::new(a, b).map_err(|_| Error::PreimageEmpty)
}

fn tagged(preimages: &[IntervalOnCircle]) -> Vec<CoverArc> {
    preimages
        .iter()
        .enumerate()
        .map(|(depth, &arc)| CoverArc { arc, depth })
        .collect()
}

/// Sorted disjoint union of arcs on the circle, each tagged with its depth.
fn merge(arcs: &[CoverArc]) -> Vec<CoverArc> {
    let mut cut: Vec<(f64, f64, usize)> = Vec::with_capacity(arcs.len() + 1);
    for c in arcs {
        let (a, b) = (c.arc.a(), c.arc.b());
        if b > 1.0 {
            cut.push((a, 1.0, c.depth));
            cut.push((0.0, b - 1.0, c.depth));
        } else {
            cut.push((a, b, c.depth));
        }
    }
    cut.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for (a, b, d) in cut {
        match out.last_mut() {
            Some(last) if a <= last.1 => {
                last.1 = last.1.max(b);
                last.2 = last.2.min(d);
            }
            _ => out.push((a, b, d)),
        }
    }
    if out.len() > 1 && out[0].0 == 0.0 && out[out.len() - 1].1 == 1.0 {
        let first = out.remove(0);
        let last = out.last_mut().expect("two or more arcs");
        last.1 = 1.0 + first.1;
        last.2 = last.2.min(first.2);
    }
    out.into_iter()
        .filter_map(|(a, b, depth)| IntervalOnCircle::new(a, b).ok().map(|arc| CoverArc { arc, depth }))
        .collect()
}

/// `⋃_{j ≤ n} f^{-j}(int U)` for the unique flat interval `U`.
pub fn gap_cover(m: &MapDescriptor, n: usize) -> Result<GapCover> {
    let u = unique_flat(m)?;
    let mut preimages = vec![u];
    let mut lengths = vec![u.len()];
    let mut ambiguous = Vec::new();
    let mut arcs = tagged(&preimages);
    for depth in 1..=n {
        let v = preimage(m, &preimages[depth - 1])?;
        if u.contains(v.a()) || u.contains(v.b()) || v.a() == u.b() || v.b() == u.a() {
            ambiguous.push(depth);
        }
        preimages.push(v);
        arcs = merge(&tagged(&preimages));
        lengths.push(arcs.iter().map(|c| c.arc.len()).sum());
    }
    Ok(GapCover {
        depth: n,
        arcs,
        length: lengths[n],
        lengths,
        ambiguous,
        preimages,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    /// Orbit length and cover depth.
    pub n: usize,
    pub components: usize,
    /// Largest distance from a complement component to the orbit.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorReport {
    pub probes: Vec<(f64, OrbitClass)>,
    /// Heuristic: the interval has positive length and every probe is an
    /// attractor candidate.
    pub positive_realm: bool,
    /// Heuristic: distance from the orbit of the midpoint to each component
    /// of the complement of the gap cover, at doubling depths.
    pub profile: Vec<ProfilePoint>,
    pub threshold: f64,
}

impl AttractorReport {
    pub fn profile_pass(&self) -> bool {
        self.profile.last().is_some_and(|p| p.distance <= self.threshold)
    }

    pub fn profile_decreasing(&self) -> bool {
        self.profile.windows(2).all(|w| w[1].distance <= w[0].distance)
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "components", "distance", "threshold"]).map_err(csv_err)?;
        for p in &self.profile {
            w.write_record([
                p.n.to_string(),
                p.components.to_string(),
                format!("{:e}", p.distance),
                format!("{:e}", self.threshold),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }
}

impl std::fmt::Display for AttractorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "positive realm (heuristic): {}", self.positive_realm)?;
        for (x, c) in &self.probes {
            writeln!(f, "  probe {x:.15} {}", c.name())?;
        }
        writeln!(f, "distance profile (heuristic, threshold {:e}):", self.threshold)?;
        for p in &self.profile {
            writeln!(f, "  n = {:6}  components {:6}  distance {:e}", p.n, p.components, p.distance)?;
        }
        Ok(())
    }
}

/// Distance from the arc `(lo, hi)` to the nearest point of the sorted set.
fn arc_to_set(lo: f64, hi: f64, sorted: &[f64]) -> f64 {
    let arc = match IntervalOnCircle::new(lo, hi) {
        Ok(a) => a,
        Err(_) => return nearest(sorted, lo.rem_euclid(1.0)),
    };
    let a = arc.a();
    let i = sorted.partition_point(|&v| v < a);
    let next = if i == sorted.len() { sorted[0] } else { sorted[i] };
    if arc.contains_closed(next) {
        return 0.0;
    }
    nearest(sorted, a).min(nearest(sorted, arc.b().rem_euclid(1.0)))
}

/// Proxies for the two attractor conditions on the basin of `i`.
pub fn attractor_check(m: &MapDescriptor, i: &IntervalOnCircle, n: usize) -> Result<AttractorReport> {
    let flats = flats(m);
    let probes: Vec<(f64, OrbitClass)> = interval_probes(i)
        .iter()
        .map(|&x| (x, classify_in(m, &flats, x, n)))
        .collect();
    let positive_realm = !flats.is_empty()
        && i.len() > 0.0
        && probes.iter().all(|(_, c)| *c == OrbitClass::AttractorCandidate);
    let mut profile = Vec::new();
    if flats.len() == 1 {
        let orbit = m.orbit(i.mid(), n);
        let mut k = n.max(1);
        let mut depths = vec![k];
        while k > 1 && depths.len() < 5 {
            k /= 2;
            depths.push(k);
        }
        depths.reverse();
        let cover = gap_cover(m, n)?;
        for &d in &depths {
            let partial = cover.truncated(d);
            let mut pts = orbit[..=d].to_vec();
            pts.sort_by(f64::total_cmp);
            let comps = partial.complement();
            let distance = comps
                .iter()
                .map(|&(lo, hi)| arc_to_set(lo, hi, &pts))
                .fold(0.0, f64::max);
            profile.push(ProfilePoint {
                n: d,
                components: comps.len(),
                distance,
            });
        }
    }
    Ok(AttractorReport {
        probes,
        positive_realm,
        profile,
        threshold: PROFILE_TOL,
    })
}

/// Polyline of the suspension flow, broken at each return.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionTrace {
    pub source: f64,
    pub duration: f64,
    /// One vertical segment `(x, s)` per period, `s` running from 0 to 1.
    pub segments: Vec<Vec<(f64, f64)>>,
}

impl SuspensionTrace {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["period", "x", "s"]).map_err(csv_err)?;
        for (k, seg) in self.segments.iter().enumerate() {
            for (x, s) in seg {
                w.write_record([k.to_string(), format!("{x:?}"), format!("{s:?}")])
                    .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    /// Standalone SVG 1.1 of the torus square with the flat band shaded.
    pub fn svg(&self, band: Option<&IntervalOnCircle>) -> String {
        const SIZE: f64 = 400.0;
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
        );
        let _ = writeln!(
            out,
            "<rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\" stroke=\"black\"/>"
        );
        if let Some(u) = band {
            let (a, b) = (u.a(), u.b());
            let parts = if b > 1.0 { vec![(a, 1.0), (0.0, b - 1.0)] } else { vec![(a, b)] };
            for (lo, hi) in parts {
                let _ = writeln!(
                    out,
                    "<rect class=\"flat\" x=\"{:.3}\" y=\"0\" width=\"{:.3}\" height=\"{SIZE}\" fill=\"#cccccc\"/>",
                    lo * SIZE,
                    (hi - lo) * SIZE
                );
            }
        }
        for seg in &self.segments {
            let pts: Vec<String> = seg
                .iter()
                .map(|(x, s)| format!("{:.3},{:.3}", x * SIZE, (1.0 - s) * SIZE))
                .collect();
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f4e99\" stroke-width=\"0.6\"/>",
                pts.join(" ")
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Unit-speed vertical flow from `(x0, 0)` with `x ↦ f(x)` at each `s = 1`.
pub fn suspension_trace(m: &MapDescriptor, x0: f64, periods: usize) -> Result<SuspensionTrace> {
    if periods == 0 {
        return Err(Error::Precondition("at least one period required".into()));
    }
    let mut x = x0.rem_euclid(1.0);
    let mut segments = Vec::with_capacity(periods);
    for _ in 0..periods {
        segments.push(
            (0..=TRACE_STEPS)
                .map(|i| (x, i as f64 / TRACE_STEPS as f64))
                .collect(),
        );
        x = m.eval_circle(x);
    }
    Ok(SuspensionTrace {
        source: x0.rem_euclid(1.0),
        duration: periods as f64,
        segments,
    })
}
