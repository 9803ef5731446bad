//! Training losses over sampled contours: the cyclic point-matching loss and
//! the L1 render loss, with gradients routed back to control points.

use crate::error::{Error, Result};
use crate::geometry::{canonicalize_orientation, polygon_sample, sample_curve, ControlCurve, Point2};
use crate::raster::{render, render_backward, Mask};

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub loss: f64,
    /// Best cyclic offset `j*`: `pred[i]` is paired with `gt[(i + j*) % K]`.
    pub offset: usize,
    /// `d loss / d pred[i]`: the L1 sign vector at the best alignment.
    pub grad: Vec<Point2>,
}

fn check_pair(pred: &[Point2], gt: &[Point2]) -> Result<usize> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "matching_loss",
            format!("{} predicted vs {} ground-truth points", pred.len(), gt.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Empty("matching_loss"));
    }
    Ok(pred.len())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `min_j sum_i |pred_i - gt_{(i + j) % K}|_1`, exact over all `K` offsets;
/// ties go to the smallest offset.
pub fn matching_loss(pred: &[Point2], gt: &[Point2]) -> Result<MatchResult> {
    let k = check_pair(pred, gt)?;
    let mut best = f64::INFINITY;
    let mut offset = 0;
    for j in 0..k {
        let mut total = 0.0;
        let mut complete = true;
        for (i, p) in pred.iter().enumerate() {
            total += (*p - gt[(i + j) % k]).l1();
            // partial sums only grow, so this offset can no longer win
            if total >= best {
                complete = false;
                break;
            }
        }
        if complete && total < best {
            best = total;
            offset = j;
        }
    }
    let grad = pred
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = *p - gt[(i + offset) % k];
            Point2::new(sign(d.x), sign(d.y))
        })
        .collect();
    Ok(MatchResult { loss: best, offset, grad })
}

/// Direct `O(K^2)` evaluation of the matching loss (reference implementation).
pub fn matching_loss_naive(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    let k = check_pair(pred, gt)?;
    let sums: Vec<f64> = (0..k)
        .map(|j| (0..k).map(|i| (pred[i] - gt[(i + j) % k]).l1()).sum())
        .collect();
    Ok(sums.into_iter().fold(f64::INFINITY, f64::min))
}

/// Resamples a ground-truth ring to `k` points at equal arc length, in
/// canonical orientation, starting at its first vertex.
pub fn resample_ground_truth(polygon: &[Point2], k: usize) -> Result<Vec<Point2>> {
    let oriented = canonicalize_orientation(polygon);
    Ok(polygon_sample(&oriented.points, k)?.points)
}

/// Loss value and gradient on the control points of a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveLoss {
    pub loss: f64,
    pub grad: Vec<Point2>,
}

/// Matching loss between the `k`-point resampling of `curve` and an already
/// resampled, canonically oriented ground truth. The prediction is reoriented
/// if needed and the gradient mapped back to the original sample order.
pub fn curve_matching_loss(curve: &ControlCurve, gt: &[Point2]) -> Result<CurveLoss> {
    let sampled = sample_curve(curve, gt.len())?;
    let oriented = canonicalize_orientation(&sampled.points);
    let m = matching_loss(&oriented.points, gt)?;
    let mut sample_grad = vec![Point2::ZERO; sampled.len()];
    for (i, g) in m.grad.iter().enumerate() {
        sample_grad[oriented.source_index(i)] = *g;
    }
    let grad = sampled.backward(curve.points(), &sample_grad)?;
    Ok(CurveLoss { loss: m.loss, grad })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderLoss {
    pub loss: f64,
    pub mask: Mask,
    /// Gradient w.r.t. the contour points (unit coordinates).
    pub grad: Vec<Point2>,
}

/// `||render(contour) - M_gt||_1` summed over pixels, with its first-order
/// gradient on the contour points.
pub fn render_loss(contour: &[Point2], target: &Mask) -> Result<RenderLoss> {
    let mask = render(contour, target.height(), target.width())?;
    let loss = mask.values().iter().zip(target.values()).map(|(a, b)| (a - b).abs()).sum();
    let grad = render_backward(contour, &mask, target)?.points;
    Ok(RenderLoss { loss, mask, grad })
}

/// [`render_loss`] on the dense resampling of a curve, routed to its
/// control points.
pub fn curve_render_loss(curve: &ControlCurve, k: usize, target: &Mask) -> Result<(CurveLoss, Mask)> {
    let sampled = sample_curve(curve, k)?;
    let r = render_loss(&sampled.points, target)?;
    let grad = sampled.backward(curve.points(), &r.grad)?;
    Ok((CurveLoss { loss: r.loss, grad }, r.mask))
}
