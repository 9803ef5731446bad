//! Correction-conditioned re-prediction, the simulated annotator and the
//! click loop built on top of them.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{canonicalize_orientation, curve_outline, ControlCurve, Point2};
use crate::losses::{curve_matching_loss, matching_loss, resample_ground_truth};
use crate::model::{apply_offsets, gcn, node_input_backward, node_input_features, CurveGcn, GcnCache, ImageFeatures, ModelConfig, OffsetGrad};
use crate::numerics::{ParamStore, Tensor};
use crate::raster::{iou, render, Mask};

/// Parameter-name prefix of the interactive GCN inside a model's store.
pub const INTERACTIVE_PREFIX: &str = "interactive";

/// An annotator moving node `index` from `old` to `new`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correction {
    pub index: usize,
    pub old: Point2,
    pub new: Point2,
}

impl Correction {
    /// Builds a correction against `curve`; `new` is clamped to the unit square.
    pub fn new(curve: &[Point2], index: usize, new: Point2) -> Result<Self> {
        let old = *curve.get(index).ok_or(Error::IndexOutOfRange { index, len: curve.len() })?;
        if !new.is_finite() {
            return Err(Error::Invalid(format!("non-finite correction target {new:?}")));
        }
        let new = Point2::new(new.x.clamp(0.0, 1.0), new.y.clamp(0.0, 1.0));
        Ok(Self { index, old, new })
    }

    pub fn shift(&self) -> Point2 {
        self.new - self.old
    }
}

/// Nodes `i ± 1 ... i ± k` (mod `n`), excluding `i`, ascending.
pub fn neighborhood(n: usize, i: usize, k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=k.min(n))
        .flat_map(|d| [(i + d) % n, (i + n - d % n) % n])
        .filter(|&j| j != i)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Per-node inputs of the interactive GCN: base node features sampled with
/// node `i` at its corrected position, plus the shift in two extra slots
/// (zero for every other node).
pub fn correction_features(map: &Tensor, curve: &[Point2], corr: &Correction) -> Result<Tensor> {
    let positions = corrected_positions(curve, corr)?;
    let base = node_input_features(map, &positions)?;
    let (n, d) = base.dims2()?;
    let shift = corr.shift();
    let mut data = Vec::with_capacity(n * (d + 2));
    for r in 0..n {
        data.extend_from_slice(base.row(r));
        if r == corr.index {
            data.extend([shift.x, shift.y]);
        } else {
            data.extend([0.0, 0.0]);
        }
    }
    Tensor::new(&[n, d + 2], data)
}

fn corrected_positions(curve: &[Point2], corr: &Correction) -> Result<Vec<Point2>> {
    if corr.index >= curve.len() {
        return Err(Error::IndexOutOfRange { index: corr.index, len: curve.len() });
    }
    let mut positions = curve.to_vec();
    positions[corr.index] = corr.new;
    Ok(positions)
}

/// The correction model. Its weights live under [`INTERACTIVE_PREFIX`].
#[derive(Clone, Debug)]
pub struct InteractiveGcn {
    params: ParamStore,
    blocks: usize,
    k: usize,
    offset_scale: f64,
}

/// Activations of one [`InteractiveGcn::forward`] call.
#[derive(Clone, Debug)]
pub struct MaskedCache {
    corr: Correction,
    positions: Vec<Point2>,
    neighbors: Vec<usize>,
    gcn: GcnCache,
    offsets: Vec<OffsetGrad>,
}

impl InteractiveGcn {
    pub fn new(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        gcn::init(
            &mut params,
            INTERACTIVE_PREFIX,
            config.node_input_width() + 2,
            config.gcn_width,
            config.gcn_blocks,
            &mut rng,
        );
        let head = &mut params.param_mut(&format!("{INTERACTIVE_PREFIX}.head.w")).value;
        head.data_mut().iter_mut().for_each(|v| *v *= 0.1);
        Self { params, blocks: config.gcn_blocks, k: config.interactive_k, offset_scale: config.offset_scale }
    }

    /// The interactive weights stored in `model`, if it has any.
    pub fn from_model(model: &CurveGcn) -> Option<Self> {
        let prefix = format!("{INTERACTIVE_PREFIX}.");
        let mut params = ParamStore::new();
        for (name, p) in model.params().iter().filter(|(n, _)| n.starts_with(&prefix)) {
            params.insert(name, p.value.clone());
        }
        if params.is_empty() {
            return None;
        }
        let cfg = model.config();
        Some(Self { params, blocks: cfg.gcn_blocks, k: cfg.interactive_k, offset_scale: cfg.offset_scale })
    }

    /// Copies these weights into `model` (replacing earlier ones).
    pub fn attach(&self, model: &mut CurveGcn) {
        for (name, p) in self.params.iter() {
            model.params_mut().insert(name, p.value.clone());
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn set_k(&mut self, k: usize) {
        self.k = k;
    }

    pub fn forward(&self, map: &Tensor, curve: &[Point2], corr: &Correction) -> Result<(Vec<Point2>, MaskedCache)> {
        let x = correction_features(map, curve, corr)?;
        let (raw, cache) = gcn::forward(&self.params, INTERACTIVE_PREFIX, self.blocks, &x)?;
        let positions = corrected_positions(curve, corr)?;
        let (moved, offsets) = apply_offsets(&positions, &raw, self.offset_scale);
        let neighbors = neighborhood(curve.len(), corr.index, self.k);
        let mut out = positions.clone();
        for &j in &neighbors {
            out[j] = moved[j];
        }
        Ok((out, MaskedCache { corr: *corr, positions, neighbors, gcn: cache, offsets }))
    }

    /// Accumulates weight gradients given `d loss / d output` and returns the
    /// gradient w.r.t. the input curve. The feature map is treated as constant.
    pub fn backward(&mut self, map: &Tensor, cache: &MaskedCache, d_out: &[Point2]) -> Result<Vec<Point2>> {
        let n = cache.positions.len();
        if d_out.len() != n {
            return Err(Error::shape("InteractiveGcn::backward", format!("{} gradients for {n} nodes", d_out.len())));
        }
        let mut d_in = d_out.to_vec();
        // the corrected node is pinned to a constant
        d_in[cache.corr.index] = Point2::ZERO;
        let mut d_raw = Tensor::zeros(&[n, 2]);
        for &j in &cache.neighbors {
            let (d_old, d_r) = cache.offsets[j].split(d_out[j]);
            d_in[j] = d_old;
            d_raw.row_mut(j).copy_from_slice(&d_r);
        }
        let d_x = gcn::backward(&mut self.params, INTERACTIVE_PREFIX, &cache.gcn, &d_raw)?;
        let c = map.dims3()?.0;
        let base_w = c + 2;
        let d_base = Tensor::from_fn(&[n, base_w], |k| d_x.data()[(k / base_w) * (base_w + 2) + k % base_w]);
        let mut scratch = Tensor::zeros(map.shape());
        let d_pos = node_input_backward(map, &cache.positions, &d_base, &mut scratch)?;
        for (j, d) in d_pos.into_iter().enumerate() {
            if j != cache.corr.index {
                d_in[j] += d;
            }
        }
        // the shift slots hold new - old
        let row = d_x.row(cache.corr.index);
        d_in[cache.corr.index] -= Point2::new(row[base_w], row[base_w + 1]);
        Ok(d_in)
    }
}

/// Re-predicts the `k` neighbors on either side of the corrected node; the
/// corrected node is pinned and every other node is returned untouched.
pub fn masked_predict(model: &InteractiveGcn, map: &Tensor, curve: &ControlCurve, corr: &Correction) -> Result<ControlCurve> {
    let (points, _) = model.forward(map, curve.points(), corr)?;
    curve.with_points(points)
}

/// Moves only the corrected node (annotator without model assistance).
pub fn pin_only(curve: &ControlCurve, corr: &Correction) -> Result<ControlCurve> {
    curve.with_points(corrected_positions(curve.points(), corr)?)
}

/// The annotator's next correction: align the control points with the
/// `N`-point ground truth by the cyclic matching minimum, then move the node
/// with the largest L1 error onto its matched point (ties: lowest index).
/// `gt` must already be resampled to `N` points in canonical orientation.
pub fn simulate_worst_point(pred: &[Point2], gt: &[Point2]) -> Result<Correction> {
    let n = pred.len();
    let oriented = canonicalize_orientation(pred);
    let m = matching_loss(&oriented.points, gt)?;
    let mut best = (0, f64::NEG_INFINITY, Point2::ZERO);
    for (u, p) in pred.iter().enumerate() {
        // source_index is an involution, so it also maps input to canonical order
        let ci = oriented.source_index(u);
        let target = gt[(ci + m.offset) % n];
        let err = (*p - target).l1();
        if err > best.1 {
            best = (u, err, target);
        }
    }
    Correction::new(pred, best.0, best.2)
}

/// IoU of the rendered outline of `curve` (see [`curve_outline`]) against
/// `gt_mask`.
pub fn curve_iou(curve: &ControlCurve, k: usize, gt_mask: &Mask) -> Result<f64> {
    let outline = curve_outline(curve, k)?;
    let mask = render(&outline, gt_mask.height(), gt_mask.width())?;
    iou(&mask, gt_mask)
}

/// IoU gain below which a click counts as "not improving".
pub const STALL_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnotateOptions {
    /// Stop once IoU exceeds this.
    pub threshold: f64,
    pub max_clicks: usize,
    /// Re-predict neighbors with the interactive model; otherwise only the
    /// corrected node moves.
    pub use_model: bool,
}

/// Outcome of [`annotate_until`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationTrace {
    pub curve: ControlCurve,
    pub clicks: usize,
    /// IoU before any click, then after every click.
    pub ious: Vec<f64>,
    pub reached: bool,
}

/// Simulated annotation session starting from the automatic prediction of
/// `model`; see [`annotate_from`].
pub fn annotate_until(
    model: &CurveGcn,
    interactive: Option<&InteractiveGcn>,
    features: &ImageFeatures,
    gt_polygon: &[Point2],
    gt_mask: &Mask,
    opts: AnnotateOptions,
) -> Result<AnnotationTrace> {
    let start = model.predict_from_features(features)?.last().clone();
    let assist = interactive.map(|im| (im, &features.map));
    annotate_from(start, assist, model.config().k_samples, gt_polygon, gt_mask, opts)
}

/// Simulated annotation session starting from `start`.
///
/// Each click corrects the worst node. The result of the click is the model's
/// re-prediction if it does not lower IoU, otherwise the pin-only edit if that
/// does not lower IoU, otherwise the click is undone; it is counted either
/// way. Stops when IoU exceeds the threshold, after two consecutive clicks
/// gaining at most [`STALL_EPS`], when the worst node is already exact, or at
/// `max_clicks`. `assist` pairs the interactive model with the feature map of
/// the image; `k` is the spline rendering resolution.
pub fn annotate_from(
    start: ControlCurve,
    assist: Option<(&InteractiveGcn, &Tensor)>,
    k: usize,
    gt_polygon: &[Point2],
    gt_mask: &Mask,
    opts: AnnotateOptions,
) -> Result<AnnotationTrace> {
    if opts.use_model && assist.is_none() {
        return Err(Error::Invalid("model-assisted annotation needs interactive weights".into()));
    }
    let gt_n = resample_ground_truth(gt_polygon, start.len())?;
    let mut curve = start;
    let mut current = curve_iou(&curve, k, gt_mask)?;
    let mut ious = vec![current];
    let mut clicks = 0;
    let mut stalls = 0;
    while current <= opts.threshold && clicks < opts.max_clicks {
        let corr = simulate_worst_point(curve.points(), &gt_n)?;
        if corr.shift() == Point2::ZERO {
            break;
        }
        clicks += 1;
        let mut accepted = None;
        if let (true, Some((im, map))) = (opts.use_model, assist) {
            let c = masked_predict(im, map, &curve, &corr)?;
            let v = curve_iou(&c, k, gt_mask)?;
            if v >= current {
                accepted = Some((c, v));
            }
        }
        if accepted.is_none() {
            let c = pin_only(&curve, &corr)?;
            let v = curve_iou(&c, k, gt_mask)?;
            if v >= current {
                accepted = Some((c, v));
            }
        }
        let gain = match accepted {
            Some((c, v)) => {
                let gain = v - current;
                curve = c;
                current = v;
                gain
            }
            None => 0.0,
        };
        ious.push(current);
        stalls = if gain <= STALL_EPS { stalls + 1 } else { 0 };
        if stalls >= 2 {
            break;
        }
    }
    Ok(AnnotationTrace { curve, clicks, ious, reached: current > opts.threshold })
}

/// One sample of interactive training: `rounds` annotator/re-prediction
/// rounds chained from `start`, each scored by the matching loss of its
/// output (per point) against `gt_k`. Gradients flow through the whole
/// chain into the interactive weights. Returns the summed loss and the number
/// of rounds run (fewer if the annotator has nothing left to fix).
pub fn interactive_sample_gradient(
    model: &mut InteractiveGcn,
    map: &Tensor,
    start: &ControlCurve,
    gt_n: &[Point2],
    gt_k: &[Point2],
    rounds: usize,
) -> Result<(f64, usize)> {
    let scale = 1.0 / gt_k.len() as f64;
    let mut curve = start.clone();
    let mut caches = Vec::with_capacity(rounds);
    let mut d_outputs = Vec::with_capacity(rounds);
    let mut total = 0.0;
    for _ in 0..rounds {
        let corr = simulate_worst_point(curve.points(), gt_n)?;
        if corr.shift() == Point2::ZERO {
            break;
        }
        let (points, cache) = model.forward(map, curve.points(), &corr)?;
        curve = curve.with_points(points)?;
        // the jitter is a constant shift, so the gradient passes through
        let l = curve_matching_loss(&curve.separated(), gt_k)?;
        total += l.loss * scale;
        d_outputs.push(l.grad.into_iter().map(|g| g * scale).collect::<Vec<_>>());
        caches.push(cache);
    }
    let n = start.len();
    let mut carry = vec![Point2::ZERO; n];
    for (cache, d_out) in caches.iter().zip(&d_outputs).rev() {
        let d: Vec<Point2> = d_out.iter().zip(&carry).map(|(a, b)| *a + *b).collect();
        carry = model.backward(map, cache, &d)?;
    }
    Ok((total, caches.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighborhoods() {
        assert_eq!(neighborhood(8, 0, 2), vec![1, 2, 6, 7]);
        assert_eq!(neighborhood(8, 0, 0), Vec::<usize>::new());
        assert_eq!(neighborhood(4, 1, 2), vec![0, 2, 3]);
        assert_eq!(neighborhood(40, 39, 2), vec![0, 1, 37, 38]);
    }

    #[test]
    fn correction_slots() {
        let map = Tensor::full(&[2, 4, 4], 0.5);
        let curve = [Point2::new(0.2, 0.2), Point2::new(0.8, 0.2), Point2::new(0.5, 0.8)];
        let corr = Correction::new(&curve, 1, Point2::new(0.7, 0.3)).unwrap();
        let x = correction_features(&map, &curve, &corr).unwrap();
        assert_eq!(x.shape(), &[3, 6]);
        assert_eq!(&x.row(0)[4..], &[0.0, 0.0]);
        assert_eq!(&x.row(1)[2..4], &[0.7, 0.3]);
        let s = corr.shift();
        assert_eq!(&x.row(1)[4..], &[s.x, s.y]);
        assert!(Correction::new(&curve, 3, Point2::ZERO).is_err());
    }
}
