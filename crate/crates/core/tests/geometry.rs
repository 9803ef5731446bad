mod common;

use common::{rng, star_polygon};
use curvegcn::geometry::{
    canonicalize_orientation, close_curve, crs_eval, crs_sample, init_circle, polygon_sample, sample_curve,
    signed_area, spline_knots, ControlCurve, CurveKind, Point2,
};
use proptest::prelude::*;

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

/// Barry-Goldman pyramid for one centripetal Catmull-Rom segment, written
/// out independently of the library.
fn barry_goldman(cp: [Point2; 4], t: f64) -> Point2 {
    let mut k = [0.0; 4];
    for i in 1..4 {
        let d = cp[i] - cp[i - 1];
        k[i] = k[i - 1] + (d.x * d.x + d.y * d.y).sqrt().sqrt();
    }
    let lerp = |a: Point2, b: Point2, ta: f64, tb: f64| a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta));
    let a1 = lerp(cp[0], cp[1], k[0], k[1]);
    let a2 = lerp(cp[1], cp[2], k[1], k[2]);
    let a3 = lerp(cp[2], cp[3], k[2], k[3]);
    let b1 = lerp(a1, a2, k[0], k[2]);
    let b2 = lerp(a2, a3, k[1], k[3]);
    lerp(b1, b2, k[1], k[2])
}

#[test]
fn direct_evaluation_oracle() {
    let cp = [p(0.0, 0.0), p(1.0, 0.0), p(2.0, 1.0), p(3.0, 1.0)];
    let knots = spline_knots(&cp).unwrap();
    // knot spacing is |d|^0.5: 1 then 2^0.25
    assert!((knots[1] - 1.0).abs() < 1e-15);
    assert!((knots[2] - (1.0 + 2f64.powf(0.25))).abs() < 1e-15);
    let mid = 0.5 * (knots[1] + knots[2]);
    let got = crs_eval(&cp, 1, mid).unwrap();
    let want = barry_goldman(cp, mid);
    assert!((got - want).norm() < 1e-9, "{got:?} vs {want:?}");
    // the segment is symmetric under a half turn about (1.5, 0.5)
    assert!((got - p(1.5, 0.5)).norm() < 1e-12);
}

#[test]
fn closure_point_examples() {
    let c = close_curve(&[p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
    assert_eq!((c.after, c.before), (p(1.0, 0.0), p(0.0, 1.0)));

    let c = close_curve(&[p(0.0, 0.0), p(2.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
    // cp_{N+1} = cp_0 + (1 / 2)(2, 0); cp_{-1} = cp_0 + (2 / 1)(0, 1)
    assert!((c.after - p(1.0, 0.0)).norm() < 1e-15);
    assert!((c.before - p(0.0, 2.0)).norm() < 1e-15);

    let mut r = rng(3);
    for _ in 0..50 {
        let pts = star_polygon(&mut r, 12, p(0.5, 0.5), 0.1, 0.4);
        let c = close_curve(&pts).unwrap();
        assert_eq!(c.wrap, pts[0]);
    }
}

#[test]
fn collinear_points_stay_on_their_line() {
    let mut r = rng(5);
    for _ in 0..100 {
        use rand::Rng;
        let (o, d) = (p(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)), p(r.random_range(0.2..1.0), r.random_range(-1.0..1.0)));
        let mut s: Vec<f64> = (0..4).map(|_| r.random_range(0.0..5.0)).collect();
        s.sort_by(f64::total_cmp);
        if s.windows(2).any(|w| w[1] - w[0] < 1e-3) {
            continue;
        }
        let cp: Vec<Point2> = s.iter().map(|&t| o + d * t).collect();
        let knots = spline_knots(&cp).unwrap();
        for j in 0..=10 {
            let t = knots[1] + (knots[2] - knots[1]) * j as f64 / 10.0;
            let q = crs_eval(&cp, 1, t).unwrap();
            let off_line = (q - o).cross(d) / d.norm();
            assert!(off_line.abs() < 1e-12, "{off_line}");
        }
    }
}

#[test]
fn triangle_arc_length_walk() {
    let tri = [p(0.0, 0.0), p(3.0, 0.0), p(0.0, 4.0)];
    let s = polygon_sample(&tri, 12).unwrap();
    // perimeter 12: three steps along the base, five down the hypotenuse,
    // four back up the left side
    let mut expected = Vec::new();
    for i in 0..3 {
        expected.push(p(i as f64, 0.0));
    }
    for i in 0..5 {
        let f = i as f64 / 5.0;
        expected.push(p(3.0 * (1.0 - f), 4.0 * f));
    }
    for i in 0..4 {
        expected.push(p(0.0, 4.0 - i as f64));
    }
    for (got, want) in s.points.iter().zip(&expected) {
        assert!((*got - *want).norm() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn canonical_orientation_matches_shoelace() {
    let mut r = rng(7);
    for _ in 0..200 {
        let mut pts = star_polygon(&mut r, 9, p(0.0, 0.0), 0.5, 2.0);
        if r_bool(&mut r) {
            pts.reverse();
        }
        let shoelace: f64 = 0.5
            * (0..pts.len())
                .map(|i| {
                    let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                    a.x * b.y - b.x * a.y
                })
                .sum::<f64>();
        let o = canonicalize_orientation(&pts);
        assert_eq!(o.reversed, shoelace < 0.0);
        assert_eq!(o.points[0], pts[0]);
        assert!(signed_area(&o.points) > 0.0);
    }
}

fn r_bool(r: &mut impl rand::Rng) -> bool {
    r.random_bool(0.5)
}

#[test]
fn init_circle_is_counter_clockwise() {
    for n in [3, 4, 40] {
        let c = init_circle(n, 112, 112, CurveKind::Spline).unwrap();
        assert_eq!(c.len(), n);
        assert!(c.signed_area() > 0.0);
    }
}

/// One-sided derivatives of the spline in the knot parameter at the start of
/// segment `seg` (from the right) and at the end of the previous segment
/// (from the left), as a relative difference. Second-order one-sided
/// stencils with `h = 1e-6`.
fn joint_mismatch(cp: &[Point2], seg: usize) -> f64 {
    let h = 1e-6;
    let n = cp.len();
    let knots = spline_knots(cp).unwrap();
    let prev = (seg + n - 1) % n;
    let at = |s: usize, t: f64| crs_eval(cp, s, t).unwrap();
    let t0 = knots[seg];
    let right = (at(seg, t0) * -3.0 + at(seg, t0 + h) * 4.0 - at(seg, t0 + 2.0 * h)) * (0.5 / h);
    let t1 = knots[prev + 1];
    let left = (at(prev, t1) * 3.0 - at(prev, t1 - h) * 4.0 + at(prev, t1 - 2.0 * h)) * (0.5 / h);
    (right - left).norm() / right.norm().max(left.norm())
}

#[test]
fn tangent_is_continuous_at_interior_joints() {
    let mut r = rng(11);
    for _ in 0..100 {
        let cp = star_polygon(&mut r, 10, p(0.5, 0.5), 0.15, 0.4);
        for seg in 1..cp.len() {
            let m = joint_mismatch(&cp, seg);
            assert!(m < 1e-4, "joint {seg}: {m}");
        }
    }
}

#[test]
fn seam_is_c1_for_equal_closure_edges_and_g1_otherwise() {
    // a regular polygon has |cp_1 - cp_0| = |cp_{N-1} - cp_0|
    let regular: Vec<Point2> = (0..8)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 8.0;
            p(0.5 + 0.3 * a.cos(), 0.5 + 0.3 * a.sin())
        })
        .collect();
    assert!(joint_mismatch(&regular, 0) < 1e-4);

    // unequal edges at cp_0: the one-sided tangents are parallel but their
    // lengths differ by the factor sqrt(|cp_{N-1} - cp_0| / |cp_1 - cp_0|)
    let cp = [p(0.0, 0.0), p(2.0, 0.0), p(2.0, 1.0), p(0.0, 1.0)];
    let h = 1e-7;
    let knots = spline_knots(&cp).unwrap();
    let right = (crs_eval(&cp, 0, h).unwrap() - cp[0]) * (1.0 / h);
    let left = (cp[0] - crs_eval(&cp, 3, knots[4] - h).unwrap()) * (1.0 / h);
    assert!(right.cross(left).abs() < 1e-5 * right.norm() * left.norm());
    let ratio = left.norm() / right.norm();
    assert!((ratio - (1.0f64 / 2.0).sqrt()).abs() < 1e-5, "{ratio}");
}

fn ring_strategy() -> impl Strategy<Value = Vec<Point2>> {
    (4usize..14, any::<u64>()).prop_map(|(n, seed)| star_polygon(&mut rng(seed), n, p(0.5, 0.5), 0.1, 0.45))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spline_passes_through_control_points(cp in ring_strategy()) {
        let knots = spline_knots(&cp).unwrap();
        for i in 0..cp.len() {
            prop_assert!((crs_eval(&cp, i, knots[i]).unwrap() - cp[i]).norm() < 1e-9);
            let end = crs_eval(&cp, i, knots[i + 1]).unwrap();
            prop_assert!((end - cp[(i + 1) % cp.len()]).norm() < 1e-9);
        }
    }

    #[test]
    fn sampling_commutes_with_translation(cp in ring_strategy(), dx in -3.0f64..3.0, dy in -3.0f64..3.0, k_mult in 1usize..8) {
        let d = p(dx, dy);
        for kind in [CurveKind::Polygon, CurveKind::Spline] {
            let curve = ControlCurve::new(cp.clone(), kind).unwrap();
            let k = cp.len() * k_mult + 1;
            let a = sample_curve(&curve.translated(d), k).unwrap();
            let b = sample_curve(&curve, k).unwrap();
            for (x, y) in a.points.iter().zip(&b.points) {
                prop_assert!((*x - (*y + d)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn samples_are_counted_exactly(cp in ring_strategy(), k_extra in 0usize..50) {
        let k = cp.len() + k_extra;
        prop_assert_eq!(crs_sample(&cp, k).unwrap().len(), k);
        prop_assert_eq!(polygon_sample(&cp, k).unwrap().len(), k);
    }
}
