//! Dense resampling of control curves.
//!
//! Every sample is a linear combination of (at most four) extended control
//! points with coefficients fixed by the sampling parametrization. The backward
//! pass holds that parametrization constant: knot values and arc-length
//! positions receive no gradient. The closure points of a spline are genuine
//! functions of `cp_0`, `cp_1` and `cp_{N-1}` and are differentiated exactly.

use super::curve::{ControlCurve, CurveKind};
use super::point::Point2;
use crate::error::{Error, Result};

/// Knot exponent of the centripetal Catmull-Rom spline.
pub const CENTRIPETAL_ALPHA: f64 = 0.5;

const COINCIDENT_EPS: f64 = 1e-12;

/// The three extra control points that close a Catmull-Rom spline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Closure {
    /// `cp_{-1}`
    pub before: Point2,
    /// `cp_N`, always equal to `cp_0`
    pub wrap: Point2,
    /// `cp_{N+1}`
    pub after: Point2,
}

/// Computes `cp_{-1}`, `cp_N`, `cp_{N+1}` so the closed spline has a
/// continuous tangent at `cp_0`.
pub fn close_curve(points: &[Point2]) -> Result<Closure> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("closing a spline needs 3 points, got {n}")));
    }
    let c0 = points[0];
    let to_next = points[1] - c0;
    let to_prev = points[n - 1] - c0;
    let (b, a) = (to_next.norm(), to_prev.norm());
    if b <= COINCIDENT_EPS || a <= COINCIDENT_EPS {
        return Err(Error::Degenerate("coincident control points at the closure".into()));
    }
    Ok(Closure {
        before: c0 + to_prev * (b / a),
        wrap: c0,
        after: c0 + to_next * (a / b),
    })
}

/// Control points `cp_{-1} ... cp_{N+1}` (length `N + 3`).
fn extended_points(points: &[Point2]) -> Result<Vec<Point2>> {
    let closure = close_curve(points)?;
    let mut ext = Vec::with_capacity(points.len() + 3);
    ext.push(closure.before);
    ext.extend_from_slice(points);
    ext.push(closure.wrap);
    ext.push(closure.after);
    Ok(ext)
}

/// Knots `t_{-1} ... t_{N+1}` with `t_0 = 0` and
/// `t_{i+1} = t_i + |cp_{i+1} - cp_i|^alpha`.
pub fn knot_sequence(extended: &[Point2], alpha: f64) -> Result<Vec<f64>> {
    let mut knots = Vec::with_capacity(extended.len());
    let first = extended[1].distance(extended[0]);
    if first <= COINCIDENT_EPS {
        return Err(Error::Degenerate("coincident control points cp_-1, cp_0".into()));
    }
    knots.push(-first.powf(alpha));
    knots.push(0.0);
    for i in 2..extended.len() {
        let d = extended[i].distance(extended[i - 1]);
        if d <= COINCIDENT_EPS {
            return Err(Error::Degenerate(format!(
                "coincident consecutive control points at index {}",
                (i - 2) % (extended.len() - 3)
            )));
        }
        knots.push(knots[i - 1] + d.powf(alpha));
    }
    Ok(knots)
}

/// Coefficients of `P0..P3` in the Catmull-Rom segment between `P1` and `P2`
/// with knots `k[0..4]`, evaluated at `t`.
pub fn crs_coefficients(k: [f64; 4], t: f64) -> [f64; 4] {
    let [t0, t1, t2, t3] = k;
    let (a0, a1) = ((t1 - t) / (t1 - t0), (t - t0) / (t1 - t0));
    let (b1, b2) = ((t2 - t) / (t2 - t1), (t - t1) / (t2 - t1));
    let (c2, c3) = ((t3 - t) / (t3 - t2), (t - t2) / (t3 - t2));
    let (d0, d1) = ((t2 - t) / (t2 - t0), (t - t0) / (t2 - t0));
    let (e0, e1) = ((t3 - t) / (t3 - t1), (t - t1) / (t3 - t1));
    let (f0, f1) = ((t2 - t) / (t2 - t1), (t - t1) / (t2 - t1));
    // S = f0 (d0 L01 + d1 L12) + f1 (e0 L12 + e1 L23)
    let l01 = f0 * d0;
    let l12 = f0 * d1 + f1 * e0;
    let l23 = f1 * e1;
    [l01 * a0, l01 * a1 + l12 * b1, l12 * b2 + l23 * c2, l23 * c3]
}

/// Where a sample sits on the curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParam {
    /// Edge index (polygon) or segment index (spline), i.e. the sample lies
    /// between control points `segment` and `segment + 1`.
    pub segment: usize,
    /// Edge fraction in `[0, 1]` (polygon) or knot value `t` (spline).
    pub local: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Basis {
    Polygon,
    Spline { knots: Vec<f64> },
}

/// `K` points resampled from a [`ControlCurve`], with enough bookkeeping to
/// route gradients back to the control points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledContour {
    pub points: Vec<Point2>,
    params: Vec<SampleParam>,
    basis: Basis,
    n_control: usize,
}

impl SampledContour {
    pub fn params(&self) -> &[SampleParam] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    /// Wraps raw points (e.g. a ground-truth ring) that have no generating curve.
    pub fn from_points(points: Vec<Point2>) -> Self {
        let n = points.len();
        let params = (0..n).map(|i| SampleParam { segment: i, local: 0.0 }).collect();
        Self { points, params, basis: Basis::Polygon, n_control: n }
    }

    /// Re-evaluates the samples on `curve` keeping this contour's
    /// parametrization (edge fractions, or knots and `t` values) fixed. This is
    /// exactly the function whose derivative [`Self::backward`] computes.
    pub fn reevaluate(&self, curve: &[Point2]) -> Result<Vec<Point2>> {
        self.check_len(curve)?;
        match &self.basis {
            Basis::Polygon => Ok(self
                .params
                .iter()
                .map(|p| polygon_point(curve, p))
                .collect()),
            Basis::Spline { knots } => {
                let ext = extended_points(curve)?;
                Ok(self.params.iter().map(|p| spline_point(&ext, knots, p)).collect())
            }
        }
    }

    /// Pulls per-sample gradients back to the control points of `curve`.
    pub fn backward(&self, curve: &[Point2], grad: &[Point2]) -> Result<Vec<Point2>> {
        self.check_len(curve)?;
        if grad.len() != self.points.len() {
            return Err(Error::shape(
                "SampledContour::backward",
                format!("{} gradients for {} samples", grad.len(), self.points.len()),
            ));
        }
        let n = curve.len();
        match &self.basis {
            Basis::Polygon => {
                let mut out = vec![Point2::ZERO; n];
                for (p, &g) in self.params.iter().zip(grad) {
                    out[p.segment] += g * (1.0 - p.local);
                    out[(p.segment + 1) % n] += g * p.local;
                }
                Ok(out)
            }
            Basis::Spline { knots } => {
                let mut ext_grad = vec![Point2::ZERO; n + 3];
                for (p, &g) in self.params.iter().zip(grad) {
                    let k = segment_knots(knots, p.segment);
                    let coeffs = crs_coefficients(k, p.local);
                    for (j, c) in coeffs.iter().enumerate() {
                        ext_grad[p.segment + j] += g * *c;
                    }
                }
                closure_backward(curve, &ext_grad)
            }
        }
    }

    fn check_len(&self, curve: &[Point2]) -> Result<()> {
        if curve.len() != self.n_control {
            return Err(Error::shape(
                "SampledContour",
                format!("sampled from {} control points, got {}", self.n_control, curve.len()),
            ));
        }
        Ok(())
    }
}

fn segment_knots(knots: &[f64], segment: usize) -> [f64; 4] {
    [knots[segment], knots[segment + 1], knots[segment + 2], knots[segment + 3]]
}

fn polygon_point(curve: &[Point2], p: &SampleParam) -> Point2 {
    let n = curve.len();
    curve[p.segment].lerp(curve[(p.segment + 1) % n], p.local)
}

fn spline_point(ext: &[Point2], knots: &[f64], p: &SampleParam) -> Point2 {
    let c = crs_coefficients(segment_knots(knots, p.segment), p.local);
    let s = p.segment;
    ext[s] * c[0] + ext[s + 1] * c[1] + ext[s + 2] * c[2] + ext[s + 3] * c[3]
}

/// Folds gradients on the extended points `cp_{-1} .. cp_{N+1}` back onto
/// the `N` control points through the closure formulas.
fn closure_backward(curve: &[Point2], ext_grad: &[Point2]) -> Result<Vec<Point2>> {
    let n = curve.len();
    let mut out: Vec<Point2> = ext_grad[1..=n].to_vec();
    let (g_before, g_wrap, g_after) = (ext_grad[0], ext_grad[n + 1], ext_grad[n + 2]);
    out[0] += g_wrap;

    let c0 = curve[0];
    let d_next = curve[1] - c0;
    let d_prev = curve[n - 1] - c0;
    let (b, a) = (d_next.norm(), d_prev.norm());
    if b <= COINCIDENT_EPS || a <= COINCIDENT_EPS {
        return Err(Error::Degenerate("coincident control points at the closure".into()));
    }

    // after = c0 + (a / b) d_next
    let g = g_after;
    let via_next = (g - d_next * (d_next.dot(g) / (b * b))) * (a / b);
    let via_prev = d_prev * (d_next.dot(g) / (b * a));
    out[1] += via_next;
    out[n - 1] += via_prev;
    out[0] += g - via_next - via_prev;

    // before = c0 + (b / a) d_prev
    let g = g_before;
    let via_prev = (g - d_prev * (d_prev.dot(g) / (a * a))) * (b / a);
    let via_next = d_next * (d_prev.dot(g) / (a * b));
    out[n - 1] += via_prev;
    out[1] += via_next;
    out[0] += g - via_prev - via_next;
    Ok(out)
}

/// Samples `k` points on the curve using the sampler matching its kind.
pub fn sample_curve(curve: &ControlCurve, k: usize) -> Result<SampledContour> {
    match curve.kind() {
        CurveKind::Polygon => polygon_sample(curve.points(), k),
        CurveKind::Spline => crs_sample(curve.points(), k),
    }
}

/// Closed ring bounding the region of `curve`, for rendering and metrics. A
/// polygon is its own vertex ring; a spline is densely resampled to `k`
/// points (after separating coincident control points).
pub fn curve_outline(curve: &ControlCurve, k: usize) -> Result<Vec<Point2>> {
    match curve.kind() {
        CurveKind::Polygon => Ok(curve.points().to_vec()),
        CurveKind::Spline => Ok(crs_sample(curve.separated().points(), k)?.points),
    }
}

/// `k` points at equal arc-length spacing along the closed polyline, the
/// first one at `points[0]`.
pub fn polygon_sample(points: &[Point2], k: usize) -> Result<SampledContour> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("polygon with {n} vertices")));
    }
    if k == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    let lengths: Vec<f64> = (0..n).map(|i| points[i].distance(points[(i + 1) % n])).collect();
    let total: f64 = lengths.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("polygon has zero perimeter".into()));
    }
    let mut params = Vec::with_capacity(k);
    let mut edge = 0;
    let mut edge_start = 0.0;
    for s in 0..k {
        let target = total * s as f64 / k as f64;
        while edge + 1 < n && (lengths[edge] == 0.0 || edge_start + lengths[edge] <= target) {
            edge_start += lengths[edge];
            edge += 1;
        }
        let local = if lengths[edge] > 0.0 {
            ((target - edge_start) / lengths[edge]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        params.push(SampleParam { segment: edge, local });
    }
    let samples = params.iter().map(|p| polygon_point(points, p)).collect();
    Ok(SampledContour { points: samples, params, basis: Basis::Polygon, n_control: n })
}

/// `k` points on the closed centripetal Catmull-Rom spline through `points`.
/// Segment `i` gets `k / N` samples (the first `k % N` segments one more) at
/// uniformly spaced knot values in `[t_i, t_{i+1})`.
pub fn crs_sample(points: &[Point2], k: usize) -> Result<SampledContour> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    let ext = extended_points(points)?;
    let knots = knot_sequence(&ext, CENTRIPETAL_ALPHA)?;
    let (base, extra) = (k / n, k % n);
    let mut params = Vec::with_capacity(k);
    for segment in 0..n {
        let count = base + usize::from(segment < extra);
        let (start, end) = (knots[segment + 1], knots[segment + 2]);
        for j in 0..count {
            let t = start + (end - start) * j as f64 / count as f64;
            params.push(SampleParam { segment, local: t });
        }
    }
    let samples = params.iter().map(|p| spline_point(&ext, &knots, p)).collect();
    Ok(SampledContour {
        points: samples,
        params,
        basis: Basis::Spline { knots },
        n_control: n,
    })
}

/// Evaluates spline segment `segment` at knot value `t` (used by tests and the
/// UI test vectors; the sampler uses the same coefficients).
pub fn crs_eval(points: &[Point2], segment: usize, t: f64) -> Result<Point2> {
    let ext = extended_points(points)?;
    let knots = knot_sequence(&ext, CENTRIPETAL_ALPHA)?;
    if segment >= points.len() {
        return Err(Error::IndexOutOfRange { index: segment, len: points.len() });
    }
    Ok(spline_point(&ext, &knots, &SampleParam { segment, local: t }))
}

/// Knot values `t_0 .. t_N` of the closed spline through `points`.
pub fn spline_knots(points: &[Point2]) -> Result<Vec<f64>> {
    let ext = extended_points(points)?;
    let knots = knot_sequence(&ext, CENTRIPETAL_ALPHA)?;
    Ok(knots[1..=points.len() + 1].to_vec())
}
