//! Signed triangle-fan rendering and its first-order backward pass.
//!
//! A closed ring `p_0 .. p_{K-1}` is split into the fan `(p_0, p_j, p_{j+1})`,
//! `j = 1 .. K-2`. Each triangle is rasterized to its own winding number
//! (+1 or -1 depending on orientation) under the shared pixel rule, and the
//! per-pixel sum is the winding number of the ring: fan diagonals appear once
//! in each direction and cancel exactly.

use super::scanline::{crossing, first_col_at_or_after};
use super::Mask;
use crate::error::{Error, Result};
use crate::geometry::{signed_area, Point2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FanTriangle {
    /// Indices into the contour: `[0, j, j + 1]`.
    pub vertices: [usize; 3],
    /// +1 for positive signed area in pixel coordinates (clockwise on a
    /// y-down screen), -1 for negative, 0 for degenerate.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleFan {
    pub apex: usize,
    pub triangles: Vec<FanTriangle>,
}

impl TriangleFan {
    pub fn new(points: &[Point2]) -> Result<Self> {
        let k = points.len();
        if k < 3 {
            return Err(Error::Degenerate(format!("cannot fan a ring of {k} points")));
        }
        let apex = points[0];
        let triangles = (1..k - 1)
            .map(|j| {
                let area = (points[j] - apex).cross(points[j + 1] - apex);
                FanTriangle { vertices: [0, j, j + 1], sign: area.partial_cmp(&0.0).map_or(0, |o| o as i8) }
            })
            .collect();
        Ok(Self { apex: 0, triangles })
    }
}

/// Horizontal coverage of one triangle on one scanline: columns
/// `start .. end` carry winding `dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Span {
    start: i64,
    end: i64,
    dir: i32,
}

impl Span {
    fn contains(&self, c: i64) -> bool {
        self.start <= c && c < self.end
    }
}

fn row_span(tri: &[Point2; 3], y: f64, lo: i64, hi: i64) -> Option<Span> {
    let mut xs = [(0.0, 0); 3];
    let mut count = 0;
    for e in 0..3 {
        if let Some(x) = crossing(tri[e], tri[(e + 1) % 3], y) {
            xs[count] = x;
            count += 1;
        }
    }
    if count != 2 {
        return None;
    }
    let (left, right) = if xs[0].0 <= xs[1].0 { (xs[0], xs[1]) } else { (xs[1], xs[0]) };
    let start = first_col_at_or_after(left.0, lo, hi);
    let end = first_col_at_or_after(right.0, lo, hi);
    (start < end).then_some(Span { start, end, dir: right.1 })
}

fn row_range(tri: &[Point2; 3], h: usize) -> Option<(i64, i64)> {
    let ymin = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    if !(ymin.is_finite() && ymax.is_finite()) {
        return None;
    }
    let lo = ((ymin - 0.5).floor() as i64).max(-1);
    let hi = ((ymax - 0.5).ceil() as i64).min(h as i64);
    (lo <= hi).then_some((lo, hi))
}

fn to_pixels(points: &[Point2], h: usize, w: usize) -> Vec<Point2> {
    points.iter().map(|p| Point2::new(p.x * w as f64, p.y * h as f64)).collect()
}

/// Per-pixel sum of the signed fan triangles of a ring in pixel coordinates.
pub fn fan_winding(points: &[Point2], h: usize, w: usize) -> Vec<i32> {
    let mut diff = vec![0i32; h * (w + 1)];
    for j in 1..points.len().saturating_sub(1) {
        let tri = [points[0], points[j], points[j + 1]];
        let Some((lo, hi)) = row_range(&tri, h) else { continue };
        for r in lo.max(0)..hi.min(h as i64) {
            if let Some(s) = row_span(&tri, r as f64 + 0.5, 0, w as i64) {
                let base = r as usize * (w + 1);
                diff[base + s.start as usize] += s.dir;
                diff[base + s.end as usize] -= s.dir;
            }
        }
    }
    let mut out = vec![0; h * w];
    for r in 0..h {
        let mut acc = 0;
        for c in 0..w {
            acc += diff[r * (w + 1) + c];
            out[r * w + c] = acc;
        }
    }
    out
}

/// Renders a contour given in unit crop coordinates into an `h × w` mask: the
/// signed fan sum, set wherever it is nonzero.
pub fn render(contour: &[Point2], h: usize, w: usize) -> Result<Mask> {
    if contour.len() < 3 {
        return Err(Error::Degenerate(format!("cannot render {} points", contour.len())));
    }
    let px = to_pixels(contour, h, w);
    let values = fan_winding(&px, h, w)
        .into_iter()
        .map(|v| if v != 0 { 1.0 } else { 0.0 })
        .collect();
    Mask::from_values(h, w, values)
}

/// Gradient of the L1 render loss w.r.t. each contour point.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGrad {
    pub points: Vec<Point2>,
}

/// Barycentric weights of `q`, clamped to `[0, 1]` and renormalized.
fn clamped_barycentric(tri: &[Point2; 3], q: Point2) -> [f64; 3] {
    let area = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    if area == 0.0 {
        return [1.0 / 3.0; 3];
    }
    let raw = [
        (tri[1] - q).cross(tri[2] - q) / area,
        (tri[2] - q).cross(tri[0] - q) / area,
        (tri[0] - q).cross(tri[1] - q) / area,
    ];
    let clamped = raw.map(|v| v.clamp(0.0, 1.0));
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.map(|v| v / total)
    } else {
        [1.0 / 3.0; 3]
    }
}

/// First-order gradient of `||M - M_gt||_1` w.r.t. the contour points, in
/// pixel units.
///
/// For each fan triangle, the change of its own raster under a one-pixel
/// shift in x (or y) is read off by subtracting neighboring pixels, taken
/// symmetrically: `(R(f + 1) - R(f - 1)) / 2`. Weighting those differences by
/// `dL/dM = sign(M - M_gt)` gives the triangle's gradient, which each changed
/// pixel hands to the three vertices by its (clamped) barycentric coordinates.
pub fn render_backward_pixels(points: &[Point2], rendered: &Mask, target: &Mask) -> Result<Vec<Point2>> {
    rendered.same_shape(target, "render_backward")?;
    let k = points.len();
    if k < 3 {
        return Err(Error::Degenerate(format!("cannot render {k} points")));
    }
    let (h, w) = (rendered.height(), rendered.width());
    let (hi_row, wi) = (h as i64, w as i64);
    let orientation = if signed_area(points) < 0.0 { -1.0 } else { 1.0 };
    let upstream: Vec<f64> = rendered
        .values()
        .iter()
        .zip(target.values())
        .map(|(&m, &t)| if m == t { 0.0 } else { orientation * (m - t).signum() })
        .collect();
    let mut grad = vec![Point2::ZERO; k];
    let mut spans: Vec<Option<Span>> = Vec::new();

    for j in 1..k - 1 {
        let idx = [0, j, j + 1];
        let tri = idx.map(|i| points[i]);
        let Some((lo, hi)) = row_range(&tri, h) else { continue };
        let first = lo - 2;
        spans.clear();
        spans.extend((first..=hi + 2).map(|r| row_span(&tri, r as f64 + 0.5, -2, wi + 2)));
        let winding = |r: i64, c: i64| -> i32 {
            spans[(r - first) as usize].map_or(0, |s| if s.contains(c) { s.dir } else { 0 })
        };
        let mut add = |r: i64, c: i64, d: Point2| {
            if r < 0 || c < 0 || r >= hi_row || c >= wi {
                return;
            }
            let g = upstream[r as usize * w + c as usize];
            if g == 0.0 {
                return;
            }
            let bary = clamped_barycentric(&tri, Point2::new(c as f64 + 0.5, r as f64 + 0.5));
            for (v, b) in idx.iter().zip(bary) {
                grad[*v] += d * (g * b);
            }
        };

        for r in (lo - 1).max(0)..=(hi + 1).min(hi_row - 1) {
            let here = spans[(r - first) as usize];
            // x-shift: only columns next to the span ends change
            if let Some(s) = here {
                let mut cols = [s.start - 1, s.start, s.end - 1, s.end];
                cols.sort_unstable();
                let mut last = None;
                for c in cols {
                    if last == Some(c) {
                        continue;
                    }
                    last = Some(c);
                    let d = winding(r, c - 1) - winding(r, c + 1);
                    if d != 0 {
                        add(r, c, Point2::new(0.5 * f64::from(d), 0.0));
                    }
                }
            }
            // y-shift: columns where the rows above and below disagree
            let (above, below) = (spans[(r - 1 - first) as usize], spans[(r + 1 - first) as usize]);
            let (c_lo, c_hi) = match (above, below) {
                (None, None) => continue,
                (Some(a), None) | (None, Some(a)) => (a.start, a.end),
                (Some(a), Some(b)) => (a.start.min(b.start), a.end.max(b.end)),
            };
            for c in c_lo.max(0)..c_hi.min(wi) {
                let d = winding(r - 1, c) - winding(r + 1, c);
                if d != 0 {
                    add(r, c, Point2::new(0.0, 0.5 * f64::from(d)));
                }
            }
        }
    }
    Ok(grad)
}

/// [`render_backward_pixels`] for a contour in unit crop coordinates; the
/// gradient is returned w.r.t. those unit coordinates.
pub fn render_backward(contour: &[Point2], rendered: &Mask, target: &Mask) -> Result<RenderGrad> {
    let (h, w) = (rendered.height(), rendered.width());
    let px = to_pixels(contour, h, w);
    let grad = render_backward_pixels(&px, rendered, target)?;
    Ok(RenderGrad {
        points: grad.into_iter().map(|g| Point2::new(g.x * w as f64, g.y * h as f64)).collect(),
    })
}
