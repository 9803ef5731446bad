//! Shared pixel rule and a classic scanline nonzero-winding polygon filler.
//!
//! Pixel `(r, c)` is sampled at its center `(c + 0.5, r + 0.5)`. An edge
//! crosses the scanline `y` when `y` lies in the half-open span
//! `[min(y_a, y_b), max(y_a, y_b))` of the edge, and it counts toward the
//! winding number of a pixel when its crossing abscissa is strictly to the
//! right of the pixel center. Centers on a top or left boundary are therefore
//! inside, centers on a bottom or right boundary outside.

use super::Mask;
use crate::geometry::Point2;

/// Crossing abscissa and winding direction of edge `a → b` at height `y`.
///
/// The abscissa is computed from the endpoints in ascending-y order so that
/// `crossing(a, b, y)` and `crossing(b, a, y)` agree bit for bit and only the
/// direction flips.
#[inline]
pub fn crossing(a: Point2, b: Point2, y: f64) -> Option<(f64, i32)> {
    let (lo, hi, dir) = if a.y < b.y {
        (a, b, 1)
    } else if a.y > b.y {
        (b, a, -1)
    } else {
        return None;
    };
    if lo.y <= y && y < hi.y {
        Some((lo.x + (y - lo.y) * (hi.x - lo.x) / (hi.y - lo.y), dir))
    } else {
        None
    }
}

/// Smallest column whose center is at or right of `x`.
#[inline]
pub(crate) fn first_col_at_or_after(x: f64, lo: i64, hi: i64) -> i64 {
    if x.is_nan() {
        return hi;
    }
    let guess = (x - 0.5).ceil().clamp(lo as f64, hi as f64) as i64;
    let mut c = guess;
    while c > lo && (c - 1) as f64 + 0.5 >= x {
        c -= 1;
    }
    while c < hi && (c as f64 + 0.5) < x {
        c += 1;
    }
    c
}

/// Per-pixel winding number of the closed ring `points` (pixel units).
pub fn winding_numbers(points: &[Point2], h: usize, w: usize) -> Vec<i32> {
    let n = points.len();
    let mut out = vec![0; h * w];
    let mut xs: Vec<(f64, i32)> = Vec::new();
    for r in 0..h {
        let y = r as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            if let Some(x) = crossing(points[i], points[(i + 1) % n], y) {
                xs.push(x);
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut wind: i32 = xs.iter().map(|x| x.1).sum();
        let mut next = 0;
        let row = &mut out[r * w..(r + 1) * w];
        for (c, slot) in row.iter_mut().enumerate() {
            let center = c as f64 + 0.5;
            while next < xs.len() && xs[next].0 <= center {
                wind -= xs[next].1;
                next += 1;
            }
            *slot = wind;
        }
    }
    out
}

/// Nonzero-winding fill of a closed ring given in pixel coordinates.
pub fn scanline_fill(points: &[Point2], h: usize, w: usize) -> Mask {
    let values = winding_numbers(points, h, w)
        .into_iter()
        .map(|v| if v != 0 { 1.0 } else { 0.0 })
        .collect();
    Mask::from_values(h, w, values).expect("winding counts are finite")
}
