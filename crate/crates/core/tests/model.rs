mod common;

use common::{rel_err, rng, star_polygon};
use curvegcn::geometry::{canonicalize_orientation, sample_curve, CurveKind, Point2, SampledContour};
use curvegcn::losses::{curve_matching_loss, matching_loss, resample_ground_truth};
use curvegcn::model::{gcn, node_input_features, node_input_backward, CurveGcn, ModelConfig};
use curvegcn::numerics::{bce, bce_backward, ParamStore, Tensor};
use rand::Rng;

fn toy_config(iterations: usize, blocks: usize, kind: CurveKind) -> ModelConfig {
    ModelConfig {
        n_points: 6,
        k_samples: 24,
        curve_kind: kind,
        iterations,
        gcn_blocks: blocks,
        gcn_width: 8,
        input_size: 16,
        backbone_channels: vec![4, 5],
        branch_channels: 3,
        use_branches: true,
        offset_scale: 0.25,
        interactive_k: 2,
    }
}

fn random_image(r: &mut impl Rng, size: usize) -> Tensor {
    Tensor::from_fn(&[3, size, size], |_| r.random_range(-0.5..0.5))
}

/// Total training objective used by the oracle: matching loss on every step
/// plus BCE on both branch grids. The samplers treat their parametrization
/// (edge fractions, knots) as constant in backward, so the oracle evaluates
/// the curves with the parametrization frozen at the unperturbed weights.
struct Objective {
    image: Tensor,
    gt: Vec<Point2>,
    edge_target: Tensor,
    vertex_target: Tensor,
    frozen: Vec<SampledContour>,
}

impl Objective {
    fn freeze(&mut self, model: &CurveGcn) {
        let trace = model.forward_trace(&self.image).unwrap();
        self.frozen = trace.prediction.curves[1..]
            .iter()
            .map(|c| sample_curve(c, self.gt.len()).unwrap())
            .collect();
    }

    fn value(&self, model: &CurveGcn) -> f64 {
        let trace = model.forward_trace(&self.image).unwrap();
        let mut total = 0.0;
        for (curve, frozen) in trace.prediction.curves[1..].iter().zip(&self.frozen) {
            let pts = frozen.reevaluate(curve.points()).unwrap();
            let oriented = canonicalize_orientation(&pts);
            total += matching_loss(&oriented.points, &self.gt).unwrap().loss;
        }
        let f = &trace.features;
        total += bce(f.edge.as_ref().unwrap(), &self.edge_target).unwrap();
        total + bce(f.vertex.as_ref().unwrap(), &self.vertex_target).unwrap()
    }

    fn gradient(&self, model: &mut CurveGcn) {
        let trace = model.forward_trace(&self.image).unwrap();
        let d_curves: Vec<Vec<Point2>> = trace.prediction.curves[1..]
            .iter()
            .map(|c| curve_matching_loss(c, &self.gt).unwrap().grad)
            .collect();
        let f = &trace.features;
        let de = bce_backward(f.edge.as_ref().unwrap(), &self.edge_target, 1.0).unwrap();
        let dv = bce_backward(f.vertex.as_ref().unwrap(), &self.vertex_target, 1.0).unwrap();
        model.params_mut().zero_grad();
        model.backward(&trace, &d_curves, Some(&de), Some(&dv)).unwrap();
    }
}

fn check_end_to_end(cfg: ModelConfig, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut model = CurveGcn::new(cfg.clone(), seed).unwrap();
    let g = cfg.grid_size();
    let poly = star_polygon(&mut r, 9, Point2::new(0.5, 0.5), 0.15, 0.4);
    let mut obj = Objective {
        image: random_image(&mut r, cfg.input_size),
        gt: resample_ground_truth(&poly, cfg.k_samples).unwrap(),
        edge_target: Tensor::from_fn(&[g, g], |_| f64::from(r.random_bool(0.3))),
        vertex_target: Tensor::from_fn(&[g, g], |_| f64::from(r.random_bool(0.2))),
        frozen: Vec::new(),
    };
    obj.freeze(&model);
    obj.gradient(&mut model);
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.to_owned()).collect();
    let h = 1e-6;
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for name in &names {
        let len = model.params().value(name).len();
        for _ in 0..3 {
            let idx = r.random_range(0..len);
            analytic.push(model.params().param(name).grad.data()[idx]);
            let orig = model.params().value(name).data()[idx];
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig + h;
            let plus = obj.value(&model);
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig - h;
            let minus = obj.value(&model);
            model.params_mut().param_mut(name).value.data_mut()[idx] = orig;
            numeric.push((plus - minus) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

#[test]
fn one_layer_toy_model_weight_gradients_match_finite_differences() {
    for seed in 0..3 {
        let err = check_end_to_end(toy_config(1, 0, CurveKind::Polygon), seed);
        println!("toy polygon model, seed {seed}: rel err {err:.2e}");
        assert!(err < 1e-3, "seed {seed}: rel err {err}");
    }
}

#[test]
fn iterated_spline_model_weight_gradients_match_finite_differences() {
    for seed in 10..12 {
        let err = check_end_to_end(toy_config(2, 1, CurveKind::Spline), seed);
        println!("toy spline model, seed {seed}: rel err {err:.2e}");
        assert!(err < 1e-3, "seed {seed}: rel err {err}");
    }
}

#[test]
fn node_coordinate_gradient_through_bilinear_sampling() {
    let mut r = rng(5);
    let map = Tensor::from_fn(&[3, 7, 7], |_| r.random_range(-1.0..1.0));
    let pts: Vec<Point2> = (0..5).map(|_| Point2::new(r.random_range(0.1..0.9), r.random_range(0.1..0.9))).collect();
    // scalar head: fixed random projection of the node features
    let proj = Tensor::from_fn(&[5, 5], |_| r.random_range(-1.0..1.0));
    let head = |p: &[Point2]| -> f64 {
        let x = node_input_features(&map, p).unwrap();
        x.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };
    let mut d_map = Tensor::zeros(map.shape());
    let grad = node_input_backward(&map, &pts, &proj, &mut d_map).unwrap();
    let h = 1e-7;
    let (mut a, mut n) = (Vec::new(), Vec::new());
    for i in 0..pts.len() {
        for k in 0..2 {
            let mut plus = pts.clone();
            let mut minus = pts.clone();
            if k == 0 {
                plus[i].x += h;
                minus[i].x -= h;
                a.push(grad[i].x);
            } else {
                plus[i].y += h;
                minus[i].y -= h;
                a.push(grad[i].y);
            }
            n.push((head(&plus) - head(&minus)) / (2.0 * h));
        }
    }
    assert!(rel_err(&a, &n) < 1e-4);
}

#[test]
fn node_features_end_with_coordinates() {
    let map = Tensor::full(&[4, 5, 5], 0.75);
    let pts = [Point2::new(0.1, 0.7), Point2::new(0.33, 0.2), Point2::new(1.0, 0.0)];
    let x = node_input_features(&map, &pts).unwrap();
    for (i, p) in pts.iter().enumerate() {
        let row = x.row(i);
        assert_eq!(&row[..4], &[0.75; 4]);
        assert_eq!((row[4], row[5]), (p.x, p.y));
    }
}

#[test]
fn gcn_stack_is_equivariant_to_cyclic_relabeling() {
    let mut r = rng(9);
    let mut params = ParamStore::new();
    let cfg = ModelConfig { n_points: 11, gcn_width: 16, ..ModelConfig::default() };
    let model = CurveGcn::new(cfg, 4).unwrap();
    for (name, p) in model.params().iter() {
        params.insert(name, p.value.clone());
    }
    let (n, d) = (11, model.config().node_input_width());
    let x = Tensor::from_fn(&[n, d], |_| r.random_range(-1.0..1.0));
    let (out, _) = gcn::forward(&params, "gcn0", 6, &x).unwrap();
    for s in [1, 4, 10] {
        let shifted = Tensor::from_fn(&[n, d], |k| x.data()[((k / d + n - s) % n) * d + k % d]);
        let (out_s, _) = gcn::forward(&params, "gcn0", 6, &shifted).unwrap();
        for i in 0..n {
            assert_eq!(out_s.row((i + s) % n), out.row(i), "shift {s}, node {i}");
        }
    }
}

#[test]
fn identical_nodes_with_identical_neighborhoods_get_identical_offsets() {
    // A constant feature row everywhere makes every node indistinguishable.
    let model = CurveGcn::new(ModelConfig { gcn_width: 16, ..ModelConfig::default() }, 2).unwrap();
    let d = model.config().node_input_width();
    let x = Tensor::from_fn(&[8, d], |k| (k % d) as f64 * 0.01);
    let (out, _) = gcn::forward(model.params(), "gcn1", 6, &x).unwrap();
    for i in 1..8 {
        assert_eq!(out.row(i), out.row(0));
    }
}

#[test]
fn zero_head_leaves_curve_unchanged_and_outputs_stay_in_unit_square() {
    let cfg = ModelConfig { gcn_width: 16, gcn_blocks: 2, ..ModelConfig::default() };
    let mut model = CurveGcn::new(cfg.clone(), 3).unwrap();
    let mut r = rng(3);
    let image = random_image(&mut r, cfg.input_size);
    let features = model.extract_features(&image).unwrap();
    let init = model.init_curve().unwrap();
    for t in 0..cfg.iterations {
        for suffix in ["w", "b"] {
            model.params_mut().param_mut(&format!("gcn{t}.head.{suffix}")).value.fill(0.0);
        }
    }
    assert_eq!(model.predict_step(&features.map, &init, 0).unwrap(), init);

    // large head weights push offsets to the clamp
    for t in 0..cfg.iterations {
        model.params_mut().param_mut(&format!("gcn{t}.head.b")).value.fill(50.0);
    }
    let pred = model.predict_from_features(&features).unwrap();
    assert_eq!(pred.curves.len(), cfg.iterations + 1);
    for c in &pred.curves {
        assert!(c.points().iter().all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
    }
}

#[test]
fn zero_image_gives_half_probability_branches() {
    let cfg = ModelConfig { gcn_width: 16, ..ModelConfig::default() };
    let model = CurveGcn::new(cfg, 0).unwrap();
    let f = model.extract_features(&Tensor::zeros(&[3, 112, 112])).unwrap();
    assert_eq!(f.map.shape(), &[34, 28, 28]);
    assert!(f.edge.unwrap().data().iter().all(|&v| v == 0.5));
    assert!(f.vertex.unwrap().data().iter().all(|&v| v == 0.5));
}

#[test]
fn zero_iterations_return_the_initial_circle() {
    let cfg = ModelConfig { iterations: 0, gcn_width: 16, ..ModelConfig::default() };
    let model = CurveGcn::new(cfg, 0).unwrap();
    let pred = model.predict(&Tensor::zeros(&[3, 112, 112])).unwrap();
    assert_eq!(pred.curves.len(), 1);
    assert_eq!(pred.last(), &model.init_curve().unwrap());
}

#[test]
fn prediction_is_deterministic_and_survives_checkpoint_round_trip() {
    let cfg = ModelConfig { gcn_width: 32, ..ModelConfig::default() };
    let model = CurveGcn::new(cfg, 7).unwrap();
    let mut r = rng(7);
    let image = random_image(&mut r, 112);
    assert_eq!(model.predict(&image).unwrap(), model.predict(&image).unwrap());
    let restored = CurveGcn::from_checkpoint(&model.to_checkpoint()).unwrap();
    let again = CurveGcn::from_checkpoint(&restored.to_checkpoint()).unwrap();
    assert_eq!(restored.to_checkpoint(), again.to_checkpoint());
    assert_eq!(restored.predict(&image).unwrap(), again.predict(&image).unwrap());
    assert_eq!(CurveGcn::new(model.config().clone(), 7).unwrap().to_checkpoint(), model.to_checkpoint());
}

#[test]
fn branch_training_reduces_bce_on_an_edge_map() {
    let cfg = toy_config(1, 0, CurveKind::Polygon);
    let mut model = CurveGcn::new(ModelConfig { input_size: 32, ..cfg.clone() }, 1).unwrap();
    let mut r = rng(1);
    let image = random_image(&mut r, 32);
    let g = 8;
    // ring-shaped edge target
    let target = Tensor::from_fn(&[g, g], |k| {
        let (y, x) = ((k / g) as f64 - 3.5, (k % g) as f64 - 3.5);
        f64::from(((x * x + y * y).sqrt() - 2.5).abs() < 0.8)
    });
    let loss = |m: &CurveGcn| bce(m.extract_features(&image).unwrap().edge.as_ref().unwrap(), &target).unwrap();
    let before = loss(&model);
    for _ in 0..200 {
        let trace = model.forward_trace(&image).unwrap();
        let de = bce_backward(trace.features.edge.as_ref().unwrap(), &target, 1.0).unwrap();
        model.backward(&trace, &[vec![]], Some(&de), None).unwrap();
        model.params_mut().adam_step(1e-2).unwrap();
    }
    let after = loss(&model);
    assert!(after < 0.5 * before, "bce {before} -> {after}");
}
