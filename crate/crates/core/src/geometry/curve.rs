use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::point::{signed_area, Point2};
use crate::error::{Error, Result};

/// Normalized radius of the initial circle (its diameter is 70% of the crop height).
/// Nudge applied by [`ControlCurve::separated`].
pub const SEPARATION_JITTER: f64 = 1e-6;

pub const INIT_RADIUS: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Polygon,
    Spline,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Polygon => "polygon",
            CurveKind::Spline => "spline",
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polygon" => Ok(CurveKind::Polygon),
            "spline" => Ok(CurveKind::Spline),
            other => Err(Error::Invalid(format!("unknown curve kind {other:?}"))),
        }
    }
}

/// An implicitly closed ring of control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCurve {
    points: Vec<Point2>,
    kind: CurveKind,
}

impl ControlCurve {
    pub fn new(points: Vec<Point2>, kind: CurveKind) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Degenerate(format!(
                "a closed curve needs at least 3 control points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("non-finite control point {p:?}")));
        }
        Ok(Self { points, kind })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point2] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn translated(&self, d: Point2) -> Self {
        Self { points: self.points.iter().map(|&p| p + d).collect(), kind: self.kind }
    }

    /// Copy in which every point that coincides with its predecessor is
    /// nudged by [`SEPARATION_JITTER`] toward `(0.5, 0.5)`, so the curve can be
    /// sampled. Unit-square points stay inside the square.
    pub fn separated(&self) -> Self {
        let mut points = self.points.clone();
        let n = points.len();
        if n > 1 {
            for i in 0..n {
                let prev = points[(i + n - 1) % n];
                if points[i].distance(prev) <= SEPARATION_JITTER * 0.5 {
                    let p = &mut points[i];
                    p.x += if p.x < 0.5 { SEPARATION_JITTER } else { -SEPARATION_JITTER };
                    p.y += if p.y < 0.5 { SEPARATION_JITTER } else { -SEPARATION_JITTER };
                }
            }
        }
        Self { points, kind: self.kind }
    }

    pub fn with_points(&self, points: Vec<Point2>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::shape(
                "ControlCurve::with_points",
                format!("{} points for a {}-point curve", points.len(), self.points.len()),
            ));
        }
        Self::new(points, self.kind)
    }
}

/// `n` points evenly spaced in angle on a circle centered in the crop,
/// starting at angle 0 and running counter-clockwise by signed area. The
/// x-radius is rescaled by `crop_h / crop_w` so the circle is round in pixels.
pub fn init_circle(n: usize, crop_h: usize, crop_w: usize, kind: CurveKind) -> Result<ControlCurve> {
    if n < 3 {
        return Err(Error::Invalid(format!("init_circle needs n >= 3, got {n}")));
    }
    if crop_h == 0 || crop_w == 0 {
        return Err(Error::Invalid("init_circle needs a non-empty crop".into()));
    }
    let ry = INIT_RADIUS;
    let rx = INIT_RADIUS * crop_h as f64 / crop_w as f64;
    let points = (0..n)
        .map(|i| {
            let theta = TAU * i as f64 / n as f64;
            Point2::new(0.5 + rx * theta.cos(), 0.5 + ry * theta.sin())
        })
        .collect();
    ControlCurve::new(points, kind)
}

/// Result of [`canonicalize_orientation`].
#[derive(Clone, Debug, PartialEq)]
pub struct Oriented {
    pub points: Vec<Point2>,
    /// The input was reversed (keeping the first point in place).
    pub reversed: bool,
    /// Zero signed area: orientation is undefined and the input was kept.
    pub degenerate: bool,
}

impl Oriented {
    /// Maps an index of the canonical order back to the input order.
    pub fn source_index(&self, i: usize) -> usize {
        let n = self.points.len();
        if self.reversed {
            (n - i) % n
        } else {
            i
        }
    }
}

/// Reverses the ring (first point fixed) iff its signed area is negative.
pub fn canonicalize_orientation(points: &[Point2]) -> Oriented {
    let area = signed_area(points);
    if area < 0.0 {
        let n = points.len();
        let reversed = (0..n).map(|i| points[(n - i) % n]).collect();
        Oriented { points: reversed, reversed: true, degenerate: false }
    } else {
        Oriented { points: points.to_vec(), reversed: false, degenerate: area == 0.0 }
    }
}
