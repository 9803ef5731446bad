//! Control curves, initialization, and dense resampling (polygon edges or a
//! closed centripetal Catmull-Rom spline).

mod curve;
mod point;
mod sampling;

pub use curve::{canonicalize_orientation, init_circle, ControlCurve, CurveKind, Oriented, INIT_RADIUS, SEPARATION_JITTER};
pub use point::{perimeter, signed_area, Point2};
pub use sampling::{
    close_curve, crs_coefficients, crs_eval, crs_sample, curve_outline, knot_sequence, polygon_sample,
    sample_curve, spline_knots, Closure, SampleParam, SampledContour, CENTRIPETAL_ALPHA,
};
