//! Training phases, evaluation and the config file format.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::Rgb32FImage;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_of, Sample, Split};
use crate::error::{Error, Result};
use crate::geometry::{curve_outline, ControlCurve, Point2};
use crate::interactive::{
    annotate_from, curve_iou, interactive_sample_gradient, AnnotateOptions, AnnotationTrace, InteractiveGcn,
};
use crate::losses::{curve_matching_loss, curve_render_loss, resample_ground_truth};
use crate::model::{CurveGcn, ModelConfig};
use crate::numerics::{bce, bce_backward, step_decay_lr, Tensor};
use crate::raster::{boundary_f, iou, render, Mask};

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub batch_size: usize,
    /// Initial learning rate of the matching phase.
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub matching_epochs: usize,
    pub diffacc_epochs: usize,
    pub diffacc_lr: f64,
    /// Weight of the edge/vertex BCE terms.
    pub bce_weight: f64,
    /// Supervise every refinement step with the matching loss, not only the last.
    pub intermediate_supervision: bool,
    /// Stop after this many epochs without a validation IoU improvement.
    pub patience: usize,
    pub val_fraction: f64,
    pub interactive_epochs: usize,
    pub interactive_lr: f64,
    /// Annotator rounds per sample during interactive training.
    pub interactive_rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seed: 0,
            batch_size: 8,
            lr: 1e-3,
            lr_decay: 0.1,
            lr_decay_every: 7,
            matching_epochs: 30,
            diffacc_epochs: 5,
            diffacc_lr: 1e-4,
            bce_weight: 0.01,
            intermediate_supervision: true,
            patience: 5,
            val_fraction: 0.1,
            interactive_epochs: 5,
            interactive_lr: 1e-3,
            interactive_rounds: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        for (name, v) in [("lr", self.lr), ("diffacc_lr", self.diffacc_lr), ("interactive_lr", self.interactive_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Invalid(format!("val_fraction must be in [0, 1), got {}", self.val_fraction)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn lr_at(&self, initial: f64, epoch: usize) -> f64 {
        step_decay_lr(initial, self.lr_decay, self.lr_decay_every, epoch)
    }
}

/// A sample converted to network units.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub id: String,
    /// `3×S×S` network input, centered around zero.
    pub input: Tensor,
    /// Ground-truth polygon in unit coordinates.
    pub polygon: Vec<Point2>,
    /// Ground-truth mask at the native image resolution.
    pub mask: Mask,
    /// Ground truth resampled to `K` points.
    pub gt_k: Vec<Point2>,
    /// Edge and vertex targets on the feature grid.
    pub edge: Tensor,
    pub vertex: Tensor,
}

/// Bilinear resize of a `3×H×W` image to `3×size×size`.
pub fn resize_image(image: &Tensor, size: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(Error::shape("resize_image", format!("{c} channels")));
    }
    if h == size && w == size {
        return Ok(image.clone());
    }
    let plane = h * w;
    let data: Vec<f32> = (0..plane)
        .flat_map(|p| (0..3).map(move |ch| image.data()[ch * plane + p] as f32))
        .collect();
    let img = Rgb32FImage::from_raw(w as u32, h as u32, data).expect("buffer matches dimensions");
    let out = imageops::resize(&img, size as u32, size as u32, FilterType::Triangle);
    let raw = out.as_raw();
    Ok(Tensor::from_fn(&[3, size, size], |k| {
        let (ch, p) = (k / (size * size), k % (size * size));
        raw[p * 3 + ch] as f64
    }))
}

/// Network input for an image with values in `[0, 1]`.
pub fn network_input(image: &Tensor, size: usize) -> Result<Tensor> {
    let mut t = resize_image(image, size)?;
    t.data_mut().iter_mut().for_each(|v| *v -= 0.5);
    Ok(t)
}

/// Marks the cells touched by `points` (unit coordinates) on a `g×g` grid and
/// dilates by one cell.
fn grid_target(points: impl Iterator<Item = Point2>, g: usize) -> Tensor {
    let mut hit = vec![false; g * g];
    for p in points {
        let c = ((p.x * g as f64).floor() as isize).clamp(0, g as isize - 1);
        let r = ((p.y * g as f64).floor() as isize).clamp(0, g as isize - 1);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < g && (cc as usize) < g {
                    hit[rr as usize * g + cc as usize] = true;
                }
            }
        }
    }
    Tensor::from_fn(&[g, g], |k| f64::from(hit[k]))
}

pub fn prepare(sample: &Sample, cfg: &ModelConfig) -> Result<PreparedSample> {
    let (_, h, w) = sample.image.dims3()?;
    let polygon: Vec<Point2> =
        sample.polygon.iter().map(|p| Point2::new(p.x / w as f64, p.y / h as f64)).collect();
    let g = cfg.grid_size();
    // walk every edge in quarter-cell steps so no crossed cell is skipped
    let n = polygon.len();
    let boundary = (0..n).flat_map(|i| {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        let steps = ((b - a).norm() * g as f64 * 4.0).ceil().max(1.0) as usize;
        (0..steps).map(move |s| a.lerp(b, s as f64 / steps as f64))
    });
    let edge = grid_target(boundary, g);
    let vertex = grid_target(polygon.iter().copied(), g);
    Ok(PreparedSample {
        id: sample.id.clone(),
        input: network_input(&sample.image, cfg.input_size)?,
        gt_k: resample_ground_truth(&polygon, cfg.k_samples)?,
        polygon,
        mask: sample.mask.clone(),
        edge,
        vertex,
    })
}

pub fn prepare_all(samples: &[Sample], cfg: &ModelConfig) -> Result<Vec<PreparedSample>> {
    samples.iter().map(|s| prepare(s, cfg)).collect()
}

/// Splits prepared samples into (train, validation) by [`split_of`].
pub fn train_val_split(samples: Vec<PreparedSample>, cfg: &TrainConfig) -> (Vec<PreparedSample>, Vec<PreparedSample>) {
    samples.into_iter().partition(|s| split_of(&s.id, cfg.seed, cfg.val_fraction) == Split::Train)
}

/// Which loss drives the contour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Matching,
    Diffacc,
}

impl std::str::FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matching" => Ok(Phase::Matching),
            "diffacc" => Ok(Phase::Diffacc),
            other => Err(Error::Invalid(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_iou: f64,
}

/// Result of a training phase. `model` is decoded from `checkpoint`, so it
/// predicts exactly like a model loaded from disk.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CurveGcn,
    pub checkpoint: Vec<u8>,
    pub history: Vec<EpochRecord>,
    pub best_val_iou: f64,
}

/// Loss of one sample; accumulates its gradient into the model.
pub fn sample_gradient(model: &mut CurveGcn, sample: &PreparedSample, phase: Phase, cfg: &TrainConfig) -> Result<f64> {
    let trace = model.forward_trace(&sample.input)?;
    let iters = model.config().iterations;
    let k = sample.gt_k.len() as f64;
    let mut total = 0.0;
    let mut d_curves = vec![Vec::new(); iters];
    for (t, slot) in d_curves.iter_mut().enumerate() {
        let curve = &trace.prediction.curves[t + 1];
        let last = t + 1 == iters;
        match phase {
            Phase::Matching if last || cfg.intermediate_supervision => {
                let l = curve_matching_loss(curve, &sample.gt_k)?;
                total += l.loss / k;
                *slot = l.grad.into_iter().map(|g| g * (1.0 / k)).collect();
            }
            Phase::Diffacc if last => {
                let (l, _) = curve_render_loss(curve, sample.gt_k.len(), &sample.mask)?;
                let pixels = sample.mask.values().len() as f64;
                total += l.loss / pixels;
                *slot = l.grad.into_iter().map(|g| g * (1.0 / pixels)).collect();
            }
            _ => {}
        }
    }
    let (mut d_edge, mut d_vertex) = (None, None);
    if model.config().use_branches && cfg.bce_weight > 0.0 {
        let f = &trace.features;
        let (edge, vertex) = (f.edge.as_ref().expect("branches"), f.vertex.as_ref().expect("branches"));
        total += cfg.bce_weight * (bce(edge, &sample.edge)? + bce(vertex, &sample.vertex)?);
        d_edge = Some(bce_backward(edge, &sample.edge, cfg.bce_weight)?);
        d_vertex = Some(bce_backward(vertex, &sample.vertex, cfg.bce_weight)?);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    model.backward(&trace, &d_curves, d_edge.as_ref(), d_vertex.as_ref())?;
    Ok(total)
}

/// Mean IoU of the automatic prediction over `samples`.
pub fn mean_iou(model: &CurveGcn, samples: &[PreparedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        let pred = model.predict(&s.input)?;
        total += curve_iou(pred.last(), model.config().k_samples, &s.mask)?;
    }
    Ok(total / samples.len() as f64)
}

/// Runs one phase. The matching phase starts from `init`, or from fresh
/// weights seeded by `cfg.seed`. Keeps the checkpoint with the best validation
/// IoU (the incoming model counts as a candidate when fine-tuning) and stops
/// after `cfg.patience` epochs without improvement.
pub fn train_phase(
    cfg: &TrainConfig,
    phase: Phase,
    init: Option<&CurveGcn>,
    train: &[PreparedSample],
    val: &[PreparedSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = match init {
        Some(m) => CurveGcn::from_checkpoint(&m.to_checkpoint())?,
        None => CurveGcn::new(cfg.model.clone(), cfg.seed)?,
    };
    let (epochs, lr0, stream) = match phase {
        Phase::Matching => (cfg.matching_epochs, cfg.lr, 1),
        Phase::Diffacc => (cfg.diffacc_epochs, cfg.diffacc_lr, 2),
    };
    let mut best = (f64::NEG_INFINITY, model.to_checkpoint());
    if phase == Phase::Diffacc || epochs == 0 {
        best.0 = mean_iou(&model, val)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 0..epochs {
        let lr = cfg.lr_at(lr0, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().zero_grad();
            for &i in batch {
                let loss = sample_gradient(&mut model, &train[i], phase, cfg)
                    .map_err(|e| Error::Invalid(format!("epoch {epoch}, sample {}: {e}", train[i].id)))?;
                epoch_loss += loss;
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f64);
            model.params_mut().adam_step(lr).map_err(|e| {
                let ids: Vec<&str> = batch.iter().map(|&i| train[i].id.as_str()).collect();
                Error::Invalid(format!("epoch {epoch}, batch {ids:?}: {e}"))
            })?;
        }
        let val_iou = mean_iou(&model, if val.is_empty() { train } else { val })?;
        let record = EpochRecord { epoch, lr, train_loss: epoch_loss / train.len() as f64, val_iou };
        log::info!(
            "{phase:?} epoch {epoch}: lr {lr:.2e} loss {:.5} val IoU {val_iou:.4}",
            record.train_loss
        );
        history.push(record);
        if val_iou > best.0 {
            best = (val_iou, model.to_checkpoint());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let model = CurveGcn::from_checkpoint(&best.1)?;
    Ok(TrainOutcome { model, checkpoint: best.1, history, best_val_iou: best.0 })
}

/// Trains the correction model on top of a frozen automatic model and
/// returns the combined checkpoint.
pub fn train_interactive(cfg: &TrainConfig, base: &CurveGcn, train: &[PreparedSample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut interactive = InteractiveGcn::new(base.config(), cfg.seed.wrapping_add(1));
    let n = base.config().n_points;
    // the base model is frozen, so its features and predictions are fixed
    let mut cached = Vec::with_capacity(train.len());
    for s in train {
        let features = base.extract_features(&s.input)?;
        let start = base.predict_from_features(&features)?.last().clone();
        let gt_n = resample_ground_truth(&s.polygon, n)?;
        cached.push((features.map, start, gt_n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..cfg.interactive_epochs {
        if cfg.interactive_rounds == 0 {
            break;
        }
        let lr = cfg.lr_at(cfg.interactive_lr, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            interactive.params_mut().zero_grad();
            for &i in batch {
                let (map, start, gt_n) = &cached[i];
                let (loss, _) =
                    interactive_sample_gradient(&mut interactive, map, start, gt_n, &train[i].gt_k, cfg.interactive_rounds)?;
                epoch_loss += loss;
            }
            interactive.params_mut().scale_grads(1.0 / batch.len() as f64);
            interactive.params_mut().adam_step(lr)?;
        }
        let record = EpochRecord { epoch, lr, train_loss: epoch_loss / train.len() as f64, val_iou: f64::NAN };
        log::info!("interactive epoch {epoch}: lr {lr:.2e} loss {:.5}", record.train_loss);
        history.push(record);
    }
    let mut model = CurveGcn::from_checkpoint(&base.to_checkpoint())?;
    interactive.attach(&mut model);
    let checkpoint = model.to_checkpoint();
    let model = CurveGcn::from_checkpoint(&checkpoint)?;
    Ok(TrainOutcome { model, checkpoint, history, best_val_iou: f64::NAN })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub iou: f64,
    pub f_1px: f64,
    pub f_2px: f64,
}

/// Click statistics of one annotator setting at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickStats {
    /// Mean clicks until IoU exceeded the threshold; samples that never got
    /// there count as `max_clicks`.
    pub mean_clicks: f64,
    pub reached_fraction: f64,
    /// Mean IoU after `b` clicks for `b = 0 ..= max_clicks` (a finished trace
    /// keeps its final IoU).
    pub mean_iou_by_clicks: Vec<f64>,
    /// Per-sample IoU traces.
    pub traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    /// Interactive model re-predicts the neighbors of each correction.
    /// Absent when the predictor has no interactive weights.
    pub assisted: Option<ClickStats>,
    /// Only the corrected node moves.
    pub baseline: ClickStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_iou: f64,
    pub f_1px: f64,
    pub f_2px: f64,
    pub samples: Vec<SampleRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactive: Vec<ThresholdReport>,
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "samples   {:>8}\nmean IoU  {:>8.4}\nF @ 1px   {:>8.4}\nF @ 2px   {:>8.4}\n",
            self.samples.len(),
            self.mean_iou,
            self.f_1px,
            self.f_2px
        );
        if !self.interactive.is_empty() {
            out.push_str("\nthreshold  clicks(model)  reached  clicks(baseline)  reached\n");
            for t in &self.interactive {
                let (mc, mr) = match &t.assisted {
                    Some(a) => (format!("{:.3}", a.mean_clicks), format!("{:.3}", a.reached_fraction)),
                    None => ("-".into(), "-".into()),
                };
                out.push_str(&format!(
                    "{:>9.3}  {:>13}  {:>7}  {:>16.3}  {:>7.3}\n",
                    t.threshold, mc, mr, t.baseline.mean_clicks, t.baseline.reached_fraction
                ));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalMode {
    Automatic,
    Interactive { thresholds: Vec<f64>, max_clicks: usize },
}

impl EvalMode {
    /// Builds a mode from its name and threshold list, rejecting thresholds
    /// in automatic mode and a missing or out-of-range list in interactive mode.
    pub fn parse(mode: &str, thresholds: &[f64], max_clicks: usize) -> Result<Self> {
        match mode {
            "automatic" if thresholds.is_empty() => Ok(EvalMode::Automatic),
            "automatic" => Err(Error::Invalid("thresholds only apply to interactive evaluation".into())),
            "interactive" => {
                if thresholds.is_empty() {
                    return Err(Error::Invalid("interactive evaluation needs at least one threshold".into()));
                }
                if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                    return Err(Error::Invalid(format!("threshold {t} outside [0, 1]")));
                }
                Ok(EvalMode::Interactive { thresholds: thresholds.to_vec(), max_clicks })
            }
            other => Err(Error::Invalid(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// Something that maps an input to a contour (lets tests plug in stubs).
pub trait Predictor {
    fn predict_curve(&self, sample: &PreparedSample) -> Result<ControlCurve>;
}

impl Predictor for CurveGcn {
    fn predict_curve(&self, sample: &PreparedSample) -> Result<ControlCurve> {
        Ok(self.predict(&sample.input)?.last().clone())
    }
}

fn mean_of(records: &[SampleRecord], f: fn(&SampleRecord) -> f64) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(f).sum::<f64>() / records.len() as f64
    }
}

fn click_stats(traces: Vec<AnnotationTrace>, max_clicks: usize) -> ClickStats {
    let n = traces.len().max(1) as f64;
    let mean_clicks =
        traces.iter().map(|t| if t.reached { t.clicks } else { max_clicks } as f64).sum::<f64>() / n;
    let reached_fraction = traces.iter().filter(|t| t.reached).count() as f64 / n;
    let mean_iou_by_clicks = (0..=max_clicks)
        .map(|b| traces.iter().map(|t| t.ious[b.min(t.ious.len() - 1)]).sum::<f64>() / n)
        .collect();
    ClickStats { mean_clicks, reached_fraction, mean_iou_by_clicks, traces: traces.into_iter().map(|t| t.ious).collect() }
}

/// Evaluates `predictor`; `k` is the spline rendering resolution. When
/// `assist` holds interactive weights and one feature map per sample, the
/// interactive sweep also runs the model-assisted annotator.
pub fn evaluate_predictor(
    predictor: &dyn Predictor,
    k: usize,
    samples: &[PreparedSample],
    mode: &EvalMode,
    assist: Option<(&InteractiveGcn, &[Tensor])>,
) -> Result<EvalReport> {
    let mut records = Vec::with_capacity(samples.len());
    let mut starts = Vec::with_capacity(samples.len());
    for s in samples {
        let curve = predictor.predict_curve(s)?;
        let outline = curve_outline(&curve, k)?;
        let mask = render(&outline, s.mask.height(), s.mask.width())?;
        records.push(SampleRecord {
            id: s.id.clone(),
            iou: iou(&mask, &s.mask)?,
            f_1px: boundary_f(&mask, &s.mask, 1.0)?,
            f_2px: boundary_f(&mask, &s.mask, 2.0)?,
        });
        starts.push(curve);
    }
    let mut report = EvalReport {
        mean_iou: mean_of(&records, |r| r.iou),
        f_1px: mean_of(&records, |r| r.f_1px),
        f_2px: mean_of(&records, |r| r.f_2px),
        samples: records,
        interactive: Vec::new(),
    };
    let EvalMode::Interactive { thresholds, max_clicks } = mode else {
        return Ok(report);
    };
    if thresholds.is_empty() {
        return Err(Error::Invalid("interactive evaluation needs at least one threshold".into()));
    }
    if let Some((_, maps)) = assist {
        if maps.len() != samples.len() {
            return Err(Error::shape("evaluate", format!("{} feature maps for {} samples", maps.len(), samples.len())));
        }
    }
    let run = |threshold: f64, use_model: bool| -> Result<ClickStats> {
        let opts = AnnotateOptions { threshold, max_clicks: *max_clicks, use_model };
        let mut traces = Vec::with_capacity(samples.len());
        for (i, (s, start)) in samples.iter().zip(&starts).enumerate() {
            let a = assist.map(|(im, maps)| (im, &maps[i]));
            traces.push(annotate_from(start.clone(), a, k, &s.polygon, &s.mask, opts)?);
        }
        Ok(click_stats(traces, *max_clicks))
    };
    for &threshold in thresholds {
        let assisted = match assist {
            Some(_) => Some(run(threshold, true)?),
            None => None,
        };
        report.interactive.push(ThresholdReport { threshold, assisted, baseline: run(threshold, false)? });
    }
    Ok(report)
}

/// Full evaluation of a trained model. Never modifies the model. Interactive
/// mode requires a checkpoint with interactive weights.
pub fn evaluate(model: &CurveGcn, samples: &[PreparedSample], mode: &EvalMode) -> Result<EvalReport> {
    let k = model.config().k_samples;
    if *mode == EvalMode::Automatic {
        return evaluate_predictor(model, k, samples, mode, None);
    }
    let interactive = InteractiveGcn::from_model(model)
        .ok_or_else(|| Error::Invalid("checkpoint has no interactive weights".into()))?;
    let maps: Vec<Tensor> =
        samples.iter().map(|s| Ok(model.extract_features(&s.input)?.map)).collect::<Result<_>>()?;
    evaluate_predictor(model, k, samples, mode, Some((&interactive, &maps)))
}
