mod common;

use common::{rel_err, rng, star_polygon};
use curvegcn::geometry::{canonicalize_orientation, sample_curve, ControlCurve, CurveKind, Point2, SampledContour};
use curvegcn::interactive::{
    annotate_until, interactive_sample_gradient, masked_predict, neighborhood, simulate_worst_point, AnnotateOptions,
    Correction, InteractiveGcn,
};
use curvegcn::losses::{matching_loss, resample_ground_truth};
use curvegcn::model::{CurveGcn, ModelConfig};
use curvegcn::numerics::Tensor;
use curvegcn::raster::scanline_fill;
use rand::Rng;

fn small_config() -> ModelConfig {
    ModelConfig { n_points: 12, k_samples: 96, gcn_width: 16, gcn_blocks: 1, input_size: 32, ..ModelConfig::default() }
}

fn random_curve(r: &mut impl Rng, n: usize) -> ControlCurve {
    let pts = star_polygon(r, n, Point2::new(0.5, 0.5), 0.15, 0.4);
    ControlCurve::new(pts, CurveKind::Spline).unwrap()
}

#[test]
fn masked_predict_is_local_and_pins_the_corrected_node() {
    let cfg = small_config();
    let mut r = rng(21);
    let map = Tensor::from_fn(&[cfg.feature_channels(), 8, 8], |_| r.random_range(-1.0..1.0));
    for trial in 0..200 {
        let mut model = InteractiveGcn::new(&cfg, trial);
        let k = trial as usize % 4;
        model.set_k(k);
        let curve = loop {
            let c = random_curve(&mut r, 12);
            if c.len() == 12 {
                break c;
            }
        };
        let i = r.random_range(0..12);
        let corr = Correction::new(curve.points(), i, Point2::new(r.random(), r.random())).unwrap();
        let out = masked_predict(&model, &map, &curve, &corr).unwrap();
        let nb = neighborhood(12, i, k);
        for j in 0..12 {
            if j == i {
                assert_eq!(out.points()[j], corr.new);
            } else if !nb.contains(&j) {
                assert_eq!(out.points()[j].x.to_bits(), curve.points()[j].x.to_bits());
                assert_eq!(out.points()[j].y.to_bits(), curve.points()[j].y.to_bits());
            }
        }
    }
}

#[test]
fn zero_head_keeps_neighbors_in_place() {
    let cfg = small_config();
    let mut model = InteractiveGcn::new(&cfg, 0);
    for s in ["w", "b"] {
        model.params_mut().param_mut(&format!("interactive.head.{s}")).value.fill(0.0);
    }
    let mut r = rng(2);
    let map = Tensor::full(&[cfg.feature_channels(), 8, 8], 0.3);
    let curve = random_curve(&mut r, 12);
    let corr = Correction::new(curve.points(), 3, Point2::new(0.1, 0.9)).unwrap();
    let out = masked_predict(&model, &map, &curve, &corr).unwrap();
    let mut expected = curve.points().to_vec();
    expected[3] = corr.new;
    assert_eq!(out.points(), &expected[..]);
}

/// Exhaustive reference: evaluate every offset, keep the first minimum, then
/// scan nodes in input order keeping the first maximum.
fn worst_point_oracle(pred: &[Point2], gt: &[Point2]) -> (usize, Point2) {
    let n = pred.len();
    let area: f64 = (0..n).map(|i| pred[i].cross(pred[(i + 1) % n])).sum();
    let canon_of = |u: usize| if area < 0.0 { (n - u) % n } else { u };
    let canon: Vec<Point2> = (0..n).map(|c| pred[canon_of(c)]).collect();
    let mut best_j = 0;
    let mut best_sum = f64::INFINITY;
    for j in 0..n {
        let s: f64 = (0..n).map(|c| (canon[c] - gt[(c + j) % n]).l1()).sum();
        if s < best_sum {
            best_sum = s;
            best_j = j;
        }
    }
    let mut out = (0, Point2::ZERO);
    let mut worst = -1.0;
    for u in 0..n {
        let t = gt[(canon_of(u) + best_j) % n];
        let e = (pred[u] - t).l1();
        if e > worst {
            worst = e;
            out = (u, t);
        }
    }
    out
}

#[test]
fn worst_point_matches_exhaustive_scan() {
    let mut r = rng(77);
    for _ in 0..1000 {
        let n = r.random_range(3..=16);
        let pred: Vec<Point2> = (0..n).map(|_| Point2::new(r.random(), r.random())).collect();
        let v = r.random_range(3..20);
        let gt_poly = star_polygon(&mut r, v, Point2::new(0.5, 0.5), 0.1, 0.45);
        if gt_poly.len() < 3 {
            continue;
        }
        let gt = resample_ground_truth(&gt_poly, n).unwrap();
        let corr = simulate_worst_point(&pred, &gt).unwrap();
        let (idx, target) = worst_point_oracle(&pred, &gt);
        assert_eq!((corr.index, corr.new), (idx, target));
    }
}

#[test]
fn worst_point_examples() {
    let mut r = rng(3);
    let poly = star_polygon(&mut r, 10, Point2::new(0.5, 0.5), 0.2, 0.4);
    let gt = resample_ground_truth(&poly, 10).unwrap();
    let same = simulate_worst_point(&gt, &gt).unwrap();
    assert_eq!((same.index, same.shift()), (0, Point2::ZERO));
    let mut pred = gt.clone();
    pred[5].x += 0.2;
    let corr = simulate_worst_point(&pred, &gt).unwrap();
    assert_eq!((corr.index, corr.new), (5, gt[5]));
}

#[test]
fn chained_correction_gradient_matches_finite_differences() {
    let cfg = ModelConfig { interactive_k: 2, ..small_config() };
    let mut r = rng(8);
    let map = Tensor::from_fn(&[cfg.feature_channels(), 8, 8], |_| r.random_range(-1.0..1.0));
    let start = random_curve(&mut r, 12);
    let gt_poly = star_polygon(&mut r, 9, Point2::new(0.5, 0.5), 0.2, 0.4);
    let gt_n = resample_ground_truth(&gt_poly, 12).unwrap();
    let gt_k = resample_ground_truth(&gt_poly, 96).unwrap();
    let mut model = InteractiveGcn::new(&cfg, 5);
    model.params_mut().param_mut("interactive.head.w").value.data_mut().iter_mut().for_each(|v| *v *= 10.0);

    // record the annotator's choices and each round's sampling at the base weights
    let mut plan: Vec<(usize, Point2, SampledContour)> = Vec::new();
    let mut curve = start.clone();
    for _ in 0..3 {
        let corr = simulate_worst_point(curve.points(), &gt_n).unwrap();
        curve = masked_predict(&model, &map, &curve, &corr).unwrap();
        plan.push((corr.index, corr.new, sample_curve(&curve, 96).unwrap()));
    }
    let value = |m: &InteractiveGcn| -> f64 {
        let mut pts = start.points().to_vec();
        let mut total = 0.0;
        for (idx, new, frozen) in &plan {
            let corr = Correction::new(&pts, *idx, *new).unwrap();
            pts = m.forward(&map, &pts, &corr).unwrap().0;
            let samples = canonicalize_orientation(&frozen.reevaluate(&pts).unwrap()).points;
            total += matching_loss(&samples, &gt_k).unwrap().loss / 96.0;
        }
        total
    };
    let (loss, rounds) = interactive_sample_gradient(&mut model, &map, &start, &gt_n, &gt_k, 3).unwrap();
    assert_eq!(rounds, 3);
    assert!((loss - value(&model)).abs() < 1e-12);
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.to_owned()).collect();
    let (mut a, mut num) = (Vec::new(), Vec::new());
    let h = 1e-6;
    for name in &names {
        for _ in 0..4 {
            let len = model.params().value(name).len();
            let idx = r.random_range(0..len);
            a.push(model.params().param(name).grad.data()[idx]);
            let orig = model.params().value(name).data()[idx];
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig + h;
            let plus = value(&model);
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig - h;
            let minus = value(&model);
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig;
            num.push((plus - minus) / (2.0 * h));
        }
    }
    let err = rel_err(&a, &num);
    assert!(err < 1e-4, "rel err {err}");
}

fn annotation_fixture(seed: u64) -> (CurveGcn, InteractiveGcn, Tensor, Vec<Point2>) {
    let cfg = small_config();
    let mut r = rng(seed);
    let model = CurveGcn::new(cfg.clone(), seed).unwrap();
    let interactive = InteractiveGcn::new(&cfg, seed + 1);
    let image = Tensor::from_fn(&[3, 32, 32], |_| r.random_range(-0.5..0.5));
    let poly: Vec<Point2> = star_polygon(&mut r, 10, Point2::new(0.5, 0.5), 0.2, 0.42);
    (model, interactive, image, poly)
}

#[test]
fn annotation_trace_is_monotone_and_deterministic() {
    for seed in 0..4 {
        let (model, interactive, image, poly) = annotation_fixture(seed);
        let px: Vec<Point2> = poly.iter().map(|p| *p * 32.0).collect();
        let mask = scanline_fill(&px, 32, 32);
        let features = model.extract_features(&image).unwrap();
        for use_model in [false, true] {
            let opts = AnnotateOptions { threshold: 0.95, max_clicks: 30, use_model };
            let trace = annotate_until(&model, Some(&interactive), &features, &poly, &mask, opts).unwrap();
            assert_eq!(trace.ious.len(), trace.clicks + 1);
            assert!(trace.ious.windows(2).all(|w| w[1] >= w[0]), "{:?}", trace.ious);
            let again = annotate_until(&model, Some(&interactive), &features, &poly, &mask, opts).unwrap();
            assert_eq!(trace, again);
        }
    }
}

#[test]
fn annotation_stops_immediately_when_nothing_to_do() {
    let (model, interactive, image, poly) = annotation_fixture(1);
    let px: Vec<Point2> = poly.iter().map(|p| *p * 32.0).collect();
    let mask = scanline_fill(&px, 32, 32);
    let features = model.extract_features(&image).unwrap();
    let auto = model.predict_from_features(&features).unwrap().last().clone();
    let opts = AnnotateOptions { threshold: -1.0, max_clicks: 10, use_model: true };
    let t = annotate_until(&model, Some(&interactive), &features, &poly, &mask, opts).unwrap();
    assert_eq!((t.clicks, &t.curve), (0, &auto));
    let opts = AnnotateOptions { threshold: 0.99, max_clicks: 0, use_model: true };
    let t = annotate_until(&model, Some(&interactive), &features, &poly, &mask, opts).unwrap();
    assert_eq!((t.clicks, &t.curve), (0, &auto));
}
