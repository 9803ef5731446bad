//! The contour predictor: conv backbone with edge/vertex branches, per-node
//! feature sampling, a Graph-ResNet per refinement step and the offset head.

mod backbone;
mod checkpoint;
mod config;
pub mod gcn;

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use backbone::{BackboneCache, ImageFeatures};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use gcn::{GcnCache, GraphTopology};

use crate::error::{Error, Result};
use crate::geometry::{init_circle, ControlCurve, Point2};
use crate::numerics::{bilinear_sample, bilinear_sample_backward, tanh_backward_from_output, ParamStore, Tensor};

/// Uniform Glorot initialization.
pub(crate) fn glorot(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
}

/// `f_i = [F(x_i, y_i) | x_i | y_i]` for every node, shape `N×(C+2)`.
pub fn node_input_features(map: &Tensor, points: &[Point2]) -> Result<Tensor> {
    let (c, _, _) = map.dims3()?;
    let mut data = Vec::with_capacity(points.len() * (c + 2));
    for p in points {
        data.extend(bilinear_sample(map, p.x, p.y)?);
        data.push(p.x);
        data.push(p.y);
    }
    Tensor::new(&[points.len(), c + 2], data)
}

/// Backward of [`node_input_features`]: scatters into `d_map` and returns the
/// gradient w.r.t. the node positions.
pub fn node_input_backward(map: &Tensor, points: &[Point2], d_x: &Tensor, d_map: &mut Tensor) -> Result<Vec<Point2>> {
    let (c, _, _) = map.dims3()?;
    if d_x.shape() != [points.len(), c + 2] {
        return Err(Error::shape("node_input_backward", format!("d_x {:?}", d_x.shape())));
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let row = d_x.row(i);
            let (gx, gy) = bilinear_sample_backward(map, p.x, p.y, &row[..c], d_map)?;
            Ok(Point2::new(gx + row[c], gy + row[c + 1]))
        })
        .collect()
}

/// Per-coordinate local derivatives of [`apply_offsets`].
#[derive(Clone, Copy, Debug, Default)]
pub struct OffsetGrad {
    /// The coordinate was not clamped, so `d new / d old = 1`.
    pub pass: [bool; 2],
    /// `d new / d raw` (zero where clamped).
    pub slope: [f64; 2],
}

impl OffsetGrad {
    /// Splits the gradient w.r.t. a new point into `(d old, d raw)`.
    pub fn split(&self, g: Point2) -> (Point2, [f64; 2]) {
        let keep = |k: usize, v: f64| if self.pass[k] { v } else { 0.0 };
        (Point2::new(keep(0, g.x), keep(1, g.y)), [g.x * self.slope[0], g.y * self.slope[1]])
    }
}

/// Applies `p + scale * tanh(raw)` and clamps to the unit square.
pub fn apply_offsets(points: &[Point2], raw: &Tensor, scale: f64) -> (Vec<Point2>, Vec<OffsetGrad>) {
    let mut out = Vec::with_capacity(points.len());
    let mut grads = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let r = raw.row(i);
        let mut grad = OffsetGrad::default();
        let mut coord = [p.x, p.y];
        for k in 0..2 {
            let t = r[k].tanh();
            let v = coord[k] + scale * t;
            if (0.0..=1.0).contains(&v) {
                grad.pass[k] = true;
                grad.slope[k] = tanh_backward_from_output(t, scale);
            }
            coord[k] = v.clamp(0.0, 1.0);
        }
        out.push(Point2::new(coord[0], coord[1]));
        grads.push(grad);
    }
    (out, grads)
}

/// Initialization plus the output of every refinement step.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePrediction {
    pub curves: Vec<ControlCurve>,
}

impl CurvePrediction {
    pub fn initial(&self) -> &ControlCurve {
        &self.curves[0]
    }

    pub fn last(&self) -> &ControlCurve {
        self.curves.last().expect("at least the initial curve")
    }
}

#[derive(Clone, Debug)]
struct StepCache {
    points_in: Vec<Point2>,
    gcn: GcnCache,
    offsets: Vec<OffsetGrad>,
}

/// Forward activations of a full prediction, consumed by [`CurveGcn::backward`].
#[derive(Clone, Debug)]
pub struct PredictionTrace {
    pub features: ImageFeatures,
    pub prediction: CurvePrediction,
    backbone: BackboneCache,
    steps: Vec<StepCache>,
}

/// Weights and configuration of the automatic predictor (and, once trained,
/// of the interactive correction model, stored under `interactive.*`).
#[derive(Clone, Debug)]
pub struct CurveGcn {
    config: ModelConfig,
    params: ParamStore,
}

impl CurveGcn {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        backbone::init(&mut params, &config, &mut rng);
        for t in 0..config.iterations {
            let prefix = Self::step_prefix(t);
            gcn::init(&mut params, &prefix, config.node_input_width(), config.gcn_width, config.gcn_blocks, &mut rng);
            shrink_head(&mut params, &prefix);
        }
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, params })
    }

    pub(crate) fn step_prefix(t: usize) -> String {
        format!("gcn{t}")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn init_curve(&self) -> Result<ControlCurve> {
        let s = self.config.input_size;
        init_circle(self.config.n_points, s, s, self.config.curve_kind)
    }

    pub fn extract_features(&self, image: &Tensor) -> Result<ImageFeatures> {
        Ok(backbone::extract_features(&self.params, &self.config, image)?.0)
    }

    /// One refinement step with the weights of iteration `t`.
    pub fn predict_step(&self, map: &Tensor, curve: &ControlCurve, t: usize) -> Result<ControlCurve> {
        Ok(self.step_forward(map, curve.points(), t)?.0)
    }

    fn step_forward(&self, map: &Tensor, points: &[Point2], t: usize) -> Result<(ControlCurve, StepCache)> {
        if t >= self.config.iterations {
            return Err(Error::IndexOutOfRange { index: t, len: self.config.iterations });
        }
        let x = node_input_features(map, points)?;
        let (raw, gcn) = gcn::forward(&self.params, &Self::step_prefix(t), self.config.gcn_blocks, &x)?;
        let (next, offsets) = apply_offsets(points, &raw, self.config.offset_scale);
        // clamping can stack nodes on a border; the jitter is constant in backward
        let curve = ControlCurve::new(next, self.config.curve_kind)?.separated();
        Ok((curve, StepCache { points_in: points.to_vec(), gcn, offsets }))
    }

    /// Runs all refinement steps from the initial circle on precomputed features.
    pub fn predict_from_features(&self, features: &ImageFeatures) -> Result<CurvePrediction> {
        let mut curves = vec![self.init_curve()?];
        for t in 0..self.config.iterations {
            let next = self.predict_step(&features.map, curves.last().expect("nonempty"), t)?;
            curves.push(next);
        }
        Ok(CurvePrediction { curves })
    }

    pub fn predict(&self, image: &Tensor) -> Result<CurvePrediction> {
        self.predict_from_features(&self.extract_features(image)?)
    }

    /// Forward pass keeping every activation needed for [`Self::backward`].
    pub fn forward_trace(&self, image: &Tensor) -> Result<PredictionTrace> {
        let (features, backbone) = backbone::extract_features(&self.params, &self.config, image)?;
        let mut curves = vec![self.init_curve()?];
        let mut steps = Vec::with_capacity(self.config.iterations);
        for t in 0..self.config.iterations {
            let (next, cache) = self.step_forward(&features.map, curves[t].points(), t)?;
            curves.push(next);
            steps.push(cache);
        }
        Ok(PredictionTrace { features, prediction: CurvePrediction { curves }, backbone, steps })
    }

    /// Accumulates parameter gradients. `d_curves[t]` is the loss gradient
    /// w.r.t. the control points output by step `t` (empty slices count as
    /// zero); `d_edge`/`d_vertex` are gradients w.r.t. the branch grids.
    pub fn backward(
        &mut self,
        trace: &PredictionTrace,
        d_curves: &[Vec<Point2>],
        d_edge: Option<&Tensor>,
        d_vertex: Option<&Tensor>,
    ) -> Result<()> {
        let cfg = &self.config;
        if d_curves.len() != cfg.iterations {
            return Err(Error::shape("CurveGcn::backward", format!("{} curve gradients for {} steps", d_curves.len(), cfg.iterations)));
        }
        let map = &trace.features.map;
        let mut d_map = Tensor::zeros(map.shape());
        let plane = cfg.grid_size() * cfg.grid_size();
        for (slot, grad) in [d_edge, d_vertex].into_iter().enumerate() {
            let Some(grad) = grad else { continue };
            if !cfg.use_branches || grad.len() != plane {
                return Err(Error::shape("CurveGcn::backward", "branch gradient without matching branch"));
            }
            let start = (cfg.backbone_out() + slot) * plane;
            for (d, g) in d_map.data_mut()[start..start + plane].iter_mut().zip(grad.data()) {
                *d += g;
            }
        }
        let n = cfg.n_points;
        let mut carry = vec![Point2::ZERO; n];
        for t in (0..cfg.iterations).rev() {
            let step = &trace.steps[t];
            let upstream = &d_curves[t];
            if !upstream.is_empty() && upstream.len() != n {
                return Err(Error::shape("CurveGcn::backward", format!("{} point gradients for {n} nodes", upstream.len())));
            }
            let mut d_raw = Tensor::zeros(&[n, 2]);
            for i in 0..n {
                let g = carry[i] + upstream.get(i).copied().unwrap_or(Point2::ZERO);
                let (d_old, d_r) = step.offsets[i].split(g);
                carry[i] = d_old;
                d_raw.row_mut(i).copy_from_slice(&d_r);
            }
            let d_x = gcn::backward(&mut self.params, &Self::step_prefix(t), &step.gcn, &d_raw)?;
            let d_pts = node_input_backward(map, &step.points_in, &d_x, &mut d_map)?;
            for (c, d) in carry.iter_mut().zip(d_pts) {
                *c += d;
            }
        }
        backbone::backward(&mut self.params, &self.config, &trace.backbone, &d_map)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        encode_checkpoint(&self.config, &self.params)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let (config, params) = decode_checkpoint(bytes)?;
        Self::from_parts(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&bytes)
    }
}

/// Starts the offset head near zero so the first updates stay close to the
/// initial circle.
fn shrink_head(params: &mut ParamStore, prefix: &str) {
    let w = &mut params.param_mut(&format!("{prefix}.head.w")).value;
    w.data_mut().iter_mut().for_each(|v| *v *= 0.1);
}
