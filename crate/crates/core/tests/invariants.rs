use std::sync::OnceLock;

use flatcircle_core::cherry::{basin_estimate, classify_point, gap_cover, hausdorff, GapCover, OrbitClass};
use flatcircle_core::circle::flat_set;
use flatcircle_core::construction::base_map;
use flatcircle_core::rotation::rotation_enclosure;
use flatcircle_core::{IntervalOnCircle, MapDescriptor};
use proptest::prelude::*;

const EPS: f64 = 0.176_776_695_296_636_9;
const DEPTH: usize = 5;

fn base() -> &'static (MapDescriptor, GapCover) {
    static BASE: OnceLock<(MapDescriptor, GapCover)> = OnceLock::new();
    BASE.get_or_init(|| {
        let (m, _) = base_map(EPS, 0.75, None).unwrap();
        let m = m.translated(0.3);
        let cover = gap_cover(&m, DEPTH).unwrap();
        (m, cover)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arcs_normalise_and_contain_their_midpoint(a in -5.0f64..5.0, len in 1e-6f64..0.999) {
        let i = IntervalOnCircle::new(a, a + len).unwrap();
        prop_assert!((0.0..1.0).contains(&i.a()));
        prop_assert!((i.len() - len).abs() < 1e-12);
        prop_assert!(i.contains(i.mid()));
        prop_assert!(i.contains(i.mid() + 3.0));
        prop_assert!(!i.contains(i.b() + 1e-9) || len > 1.0 - 2e-9);
    }

    #[test]
    fn arc_intersection_is_symmetric(a in 0.0f64..1.0, la in 1e-3f64..0.9, b in 0.0f64..1.0, lb in 1e-3f64..0.9) {
        let i = IntervalOnCircle::new(a, a + la).unwrap();
        let j = IntervalOnCircle::new(b, b + lb).unwrap();
        prop_assert_eq!(i.intersects(&j), j.intersects(&i));
        if i.contains(j.mid()) {
            prop_assert!(i.intersects(&j));
        }
    }

    #[test]
    fn rotation_enclosures_contain_the_angle(t in 0.0f64..1.0, n in 1usize..5000, x0 in 0.0f64..1.0) {
        let e = rotation_enclosure(&MapDescriptor::rotation(t), n, x0).unwrap();
        prop_assert!(e.contains(t));
        prop_assert_eq!(e.width(), 2.0 / n as f64);
    }

    #[test]
    fn hausdorff_is_a_symmetric_distance(xs in prop::collection::vec(0.0f64..1.0, 1..40), ys in prop::collection::vec(0.0f64..1.0, 1..40)) {
        prop_assert_eq!(hausdorff(&xs, &xs), 0.0);
        let d = hausdorff(&xs, &ys);
        prop_assert!((d - hausdorff(&ys, &xs)).abs() < 1e-15);
        prop_assert!((0.0..=0.5).contains(&d));
    }

    #[test]
    fn lift_is_monotone_and_degree_one(x in -2.0f64..2.0, h in 0.0f64..0.5) {
        let (m, _) = base();
        prop_assert!(m.eval_lift(x + h) >= m.eval_lift(x));
        prop_assert!((m.eval_lift(x + 1.0) - m.eval_lift(x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sink_bound_points_lie_in_the_gap_cover(x in 0.0f64..1.0) {
        let (m, cover) = base();
        if let OrbitClass::SinkBound(j) = classify_point(m, x, DEPTH + 1) {
            prop_assert!(j <= DEPTH);
            prop_assert!(cover.truncated(j).contains(x), "x = {x}, depth {j}");
        }
    }
}

#[test]
fn gap_cover_grows_with_depth() {
    let (m, cover) = base();
    assert_eq!(cover.lengths.len(), DEPTH + 1);
    assert!(cover.lengths.windows(2).all(|w| w[1] >= w[0]));
    let flat = flat_set(m).unwrap()[0];
    assert!((cover.lengths[0] - flat.len()).abs() < 1e-12);
    for d in 0..=DEPTH {
        assert_eq!(cover.truncated(d).length, cover.lengths[d]);
    }
}

#[test]
fn basin_estimates_repeat_for_a_seed() {
    let (m, _) = base();
    let a = basin_estimate(m, 300, 200, 7, None).unwrap();
    let b = basin_estimate(m, 300, 200, 7, None).unwrap();
    assert_eq!(a.csv().unwrap(), b.csv().unwrap());
    let f = a.random;
    assert!((f.sink + f.attractor + f.unresolved - 1.0).abs() < 1e-12);
}
