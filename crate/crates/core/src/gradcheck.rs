//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each case draws random inputs, projects the output on a random direction
//! `r` so the objective is the scalar `<r, f(x)>`, and compares the analytic
//! gradient against central differences coordinate by coordinate. The error
//! of a case is `|g - g_fd| / max(|g|, |g_fd|)` in the Euclidean norm.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{crs_sample, polygon_sample, Point2};
use crate::model::gcn;
use crate::numerics::{
    bce, bce_backward, bilinear_sample, bilinear_sample_backward, conv2d, conv2d_backward, linear,
    linear_backward, relu, relu_backward, sigmoid, sigmoid_backward_from_output, tanh_backward_from_output,
    ParamStore, Tensor,
};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const SAMPLER_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`.
fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let up = f(&probe);
            probe[i] = orig - STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, so ReLU kinks are out of FD reach.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v = rng.random_range(0.01..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn with(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).expect("shape matches probe")
}

fn case_linear(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
    let (x, w, b, r) = (random(rng, &[n, i]), random(rng, &[i, o]), random(rng, &[o]), random(rng, &[n, o]));
    let (dx, dw, db) = linear_backward(&x, &w, &r)?;
    let obj = |x: &Tensor, w: &Tensor, b: &Tensor| dot(linear(x, w, b).unwrap().data(), r.data());
    let nx = numeric_grad(x.data(), |p| obj(&with(x.shape(), p), &w, &b));
    let nw = numeric_grad(w.data(), |p| obj(&x, &with(w.shape(), p), &b));
    let nb = numeric_grad(b.data(), |p| obj(&x, &w, &with(b.shape(), p)));
    Ok(rel_err(dx.data(), &nx).max(rel_err(dw.data(), &nw)).max(rel_err(db.data(), &nb)))
}

fn case_relu(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.random_range(1..20);
    let x = away_from_zero(rng, &[n]);
    let r = random(rng, x.shape());
    let dx = relu_backward(&x, &r)?;
    let nx = numeric_grad(x.data(), |p| dot(relu(&with(x.shape(), p)).data(), r.data()));
    Ok(rel_err(dx.data(), &nx))
}

fn case_sigmoid(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x = Tensor::from_fn(&[rng.random_range(1..20)], |_| rng.random_range(-6.0..6.0));
    let r = random(rng, x.shape());
    let dx = sigmoid_backward_from_output(&sigmoid(&x), &r);
    let nx = numeric_grad(x.data(), |p| dot(sigmoid(&with(x.shape(), p)).data(), r.data()));
    Ok(rel_err(dx.data(), &nx))
}

fn case_tanh(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(-4.0..4.0)).collect();
    let r: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let dx: Vec<f64> = x.iter().zip(&r).map(|(v, g)| tanh_backward_from_output(v.tanh(), *g)).collect();
    let nx = numeric_grad(&x, |p| p.iter().zip(&r).map(|(v, g)| v.tanh() * g).sum());
    Ok(rel_err(&dx, &nx))
}

fn case_bce(rng: &mut ChaCha8Rng) -> Result<f64> {
    let shape = [rng.random_range(1..6), rng.random_range(1..6)];
    let pred = Tensor::from_fn(&shape, |_| rng.random_range(0.05..0.95));
    let target = Tensor::from_fn(&shape, |_| f64::from(rng.random_bool(0.5)));
    let upstream = rng.random_range(0.5..2.0);
    let dp = bce_backward(&pred, &target, upstream)?;
    let np = numeric_grad(pred.data(), |p| upstream * bce(&with(&shape, p), &target).unwrap());
    Ok(rel_err(dp.data(), &np))
}

/// A unit coordinate whose pixel-grid position is at least 0.05 from a tap
/// boundary, where bilinear interpolation has a kink.
fn smooth_coord(rng: &mut impl Rng, extent: usize) -> f64 {
    let cell = rng.random_range(0..extent - 1) as f64;
    (cell + rng.random_range(0.05..0.95) + 0.5) / extent as f64
}

fn case_bilinear(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (c, h, w) = (rng.random_range(1..4), rng.random_range(2..7), rng.random_range(2..7));
    let f = random(rng, &[c, h, w]);
    let (x, y) = (smooth_coord(rng, w), smooth_coord(rng, h));
    let r: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut df = Tensor::zeros(f.shape());
    let (gx, gy) = bilinear_sample_backward(&f, x, y, &r, &mut df)?;
    let nf = numeric_grad(f.data(), |p| dot(&bilinear_sample(&with(f.shape(), p), x, y).unwrap(), &r));
    let nxy = numeric_grad(&[x, y], |p| dot(&bilinear_sample(&f, p[0], p[1]).unwrap(), &r));
    Ok(rel_err(df.data(), &nf).max(rel_err(&[gx, gy], &nxy)))
}

fn case_conv2d(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (c, o) = (rng.random_range(1..4), rng.random_range(1..4));
    let k = [1, 3][rng.random_range(0..2)];
    let (stride, pad) = (rng.random_range(1..3), rng.random_range(0..2));
    let (h, w) = (rng.random_range(k..7), rng.random_range(k..7));
    let (x, kern, b) = (random(rng, &[c, h, w]), random(rng, &[o, c, k, k]), random(rng, &[o]));
    let y = conv2d(&x, &kern, Some(&b), stride, pad)?;
    let r = random(rng, y.shape());
    let (dx, dk, db) = conv2d_backward(&x, &kern, stride, pad, &r)?;
    let obj = |x: &Tensor, k: &Tensor, b: &Tensor| dot(conv2d(x, k, Some(b), stride, pad).unwrap().data(), r.data());
    let nx = numeric_grad(x.data(), |p| obj(&with(x.shape(), p), &kern, &b));
    let nk = numeric_grad(kern.data(), |p| obj(&x, &with(kern.shape(), p), &b));
    let nb = numeric_grad(b.data(), |p| obj(&x, &kern, &with(b.shape(), p)));
    Ok(rel_err(dx.data(), &nx).max(rel_err(dk.data(), &nk)).max(rel_err(db.data(), &nb)))
}

fn case_graph_stack(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, d, width, blocks) = (rng.random_range(5..9), rng.random_range(1..4), rng.random_range(2..6), rng.random_range(0..3));
    let mut params = ParamStore::default();
    gcn::init(&mut params, "g", d, width, blocks, rng);
    // lift the head so the check is not dominated by its small init
    for (name, p) in params.iter_mut() {
        if name.ends_with(".b") || name.starts_with("g.head") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    let x = random(rng, &[n, d]);
    let r = random(rng, &[n, 2]);
    let (_, cache) = gcn::forward(&params, "g", blocks, &x)?;
    let dx = gcn::backward(&mut params, "g", &cache, &r)?;
    let nx = numeric_grad(x.data(), |p| dot(gcn::forward(&params, "g", blocks, &with(x.shape(), p)).unwrap().0.data(), r.data()));
    let mut err = rel_err(dx.data(), &nx);
    for name in ["g.in.w", "g.out.b", "g.head.w"] {
        let analytic = params.param(name).grad.clone();
        let value = params.value(name).clone();
        let mut probe = params.clone();
        let nw = numeric_grad(value.data(), |p| {
            probe.param_mut(name).value = with(value.shape(), p);
            dot(gcn::forward(&probe, "g", blocks, &x).unwrap().0.data(), r.data())
        });
        err = err.max(rel_err(analytic.data(), &nw));
    }
    Ok(err)
}

fn ring(rng: &mut impl Rng, n: usize) -> Vec<Point2> {
    // perturbed circle: a simple curve with well separated control points
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.2..0.2)) / n as f64;
            let rad = rng.random_range(0.2..0.4);
            Point2::new(0.5 + rad * a.cos(), 0.5 + rad * a.sin())
        })
        .collect()
}

fn flat(points: &[Point2]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflat(v: &[f64]) -> Vec<Point2> {
    v.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect()
}

fn sampler_case(rng: &mut ChaCha8Rng, spline: bool) -> Result<f64> {
    let n = rng.random_range(3..12);
    let k = rng.random_range(n..6 * n);
    let cp = ring(rng, n);
    let sampled = if spline { crs_sample(&cp, k)? } else { polygon_sample(&cp, k)? };
    let r: Vec<Point2> = (0..k).map(|_| Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let analytic = flat(&sampled.backward(&cp, &r)?);
    // sample parameters stay fixed while control points move
    let numeric = numeric_grad(&flat(&cp), |p| {
        let pts = sampled.reevaluate(&unflat(p)).unwrap();
        pts.iter().zip(&r).map(|(a, b)| a.dot(*b)).sum()
    });
    Ok(rel_err(&analytic, &numeric))
}

type Case = fn(&mut ChaCha8Rng) -> Result<f64>;

/// Every check with its name and tolerance.
pub fn checks() -> Vec<(&'static str, f64, Case)> {
    vec![
        ("linear", PRIMITIVE_TOLERANCE, case_linear as Case),
        ("relu", PRIMITIVE_TOLERANCE, case_relu),
        ("sigmoid", PRIMITIVE_TOLERANCE, case_sigmoid),
        ("tanh", PRIMITIVE_TOLERANCE, case_tanh),
        ("bce", PRIMITIVE_TOLERANCE, case_bce),
        ("bilinear_sample", PRIMITIVE_TOLERANCE, case_bilinear),
        ("conv2d", PRIMITIVE_TOLERANCE, case_conv2d),
        ("graph_stack", PRIMITIVE_TOLERANCE, case_graph_stack),
        ("polygon_sampler", SAMPLER_TOLERANCE, |r| sampler_case(r, false)),
        ("spline_sampler", SAMPLER_TOLERANCE, |r| sampler_case(r, true)),
    ]
}

/// Runs `cases` random cases of every check; each check has its own stream.
pub fn run_suite(cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    checks()
        .into_iter()
        .enumerate()
        .map(|(i, (name, tolerance, case))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut max_rel_err: f64 = 0.0;
            for _ in 0..cases {
                max_rel_err = max_rel_err.max(case(&mut rng)?);
            }
            Ok(CheckResult { name, cases, max_rel_err, tolerance })
        })
        .collect()
}
