use super::Mask;
use crate::error::{Error, Result};

fn binary_pair(a: &Mask, b: &Mask, op: &'static str) -> Result<()> {
    a.same_shape(b, op)?;
    if !a.is_binary() || !b.is_binary() {
        return Err(Error::Invalid(format!("{op} expects binary masks")));
    }
    Ok(())
}

/// Intersection over union; two empty masks count as a perfect match.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    binary_pair(a, b, "iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x == 1.0, y == 1.0);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Set pixels with at least one 4-neighbor that is clear or off the canvas.
pub fn boundary_pixels(m: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = (m.height(), m.width());
    let set = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m.get(r as usize, c as usize) == 1.0
    };
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if m.get(r, c) != 1.0 {
                continue;
            }
            let (ri, ci) = (r as isize, c as isize);
            if !(set(ri - 1, ci) && set(ri + 1, ci) && set(ri, ci - 1) && set(ri, ci + 1)) {
                out.push((r, c));
            }
        }
    }
    out
}

fn matched_fraction(from: &[(usize, usize)], to: &[(usize, usize)], h: usize, w: usize, radius: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let mut grid = vec![false; h * w];
    for &(r, c) in to {
        grid[r * w + c] = true;
    }
    let reach = radius.floor() as isize;
    let offsets: Vec<(isize, isize)> = (-reach..=reach)
        .flat_map(|dr| (-reach..=reach).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64).sqrt() <= radius)
        .collect();
    let hits = from
        .iter()
        .filter(|&&(r, c)| {
            offsets.iter().any(|&(dr, dc)| {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && grid[rr as usize * w + cc as usize]
            })
        })
        .count();
    hits as f64 / from.len() as f64
}

/// Boundary F-measure with a Euclidean pixel tolerance. Precision is the share
/// of `pred`'s boundary within `threshold` px of `gt`'s boundary, recall the
/// converse. Two masks without boundary pixels score 1.
pub fn boundary_f(pred: &Mask, gt: &Mask, threshold: f64) -> Result<f64> {
    binary_pair(pred, gt, "boundary_f")?;
    if !(threshold >= 0.0) {
        return Err(Error::Invalid(format!("boundary threshold {threshold}")));
    }
    let (bp, bg) = (boundary_pixels(pred), boundary_pixels(gt));
    if bp.is_empty() && bg.is_empty() {
        return Ok(1.0);
    }
    let (h, w) = (pred.height(), pred.width());
    let precision = matched_fraction(&bp, &bg, h, w, threshold);
    let recall = matched_fraction(&bg, &bp, h, w, threshold);
    Ok(if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, r0: usize, c0: usize, side_r: usize, side_c: usize) -> Mask {
        let mut m = Mask::zeros(h, w);
        for r in r0..r0 + side_r {
            for c in c0..c0 + side_c {
                m.set(r, c, 1.0);
            }
        }
        m
    }

    #[test]
    fn iou_cases() {
        let a = square(20, 20, 2, 2, 10, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let far = square(20, 20, 14, 14, 4, 4);
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
        let shifted = square(20, 20, 2, 7, 10, 10);
        assert!((iou(&a, &shifted).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&Mask::zeros(4, 4), &Mask::zeros(4, 4)).unwrap(), 1.0);
        assert!(iou(&a, &Mask::zeros(4, 4)).is_err());
    }

    #[test]
    fn boundary_f_cases() {
        let a = square(20, 20, 4, 4, 8, 8);
        assert_eq!(boundary_f(&a, &a, 1.0).unwrap(), 1.0);
        assert_eq!(boundary_f(&a, &a, 2.0).unwrap(), 1.0);
        assert_eq!(boundary_f(&a, &Mask::zeros(20, 20), 1.0).unwrap(), 0.0);
        assert_eq!(boundary_pixels(&a).len(), 28);
    }
}
