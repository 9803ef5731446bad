#![allow(dead_code)]

use curvegcn::geometry::Point2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Star-shaped (hence simple) polygon around `center` with `n` vertices.
pub fn star_polygon(rng: &mut impl Rng, n: usize, center: Point2, r_min: f64, r_max: f64) -> Vec<Point2> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    angles
        .into_iter()
        .map(|a| {
            let r = rng.random_range(r_min..r_max);
            Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect()
}

pub fn random_triangle(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec<Point2> {
    (0..3).map(|_| Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi))).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Norm-wise relative error `|a - b| / max(|a| + |b|, 1e-12)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}
