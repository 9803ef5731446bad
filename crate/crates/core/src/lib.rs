//! Contour prediction with graph convolutions over polygon/spline control
//! points, trained with a cyclic point-matching loss and a differentiable
//! rasterization loss, plus correction-conditioned re-prediction for
//! annotator-in-the-loop editing.

pub mod data;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod interactive;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod raster;
pub mod trainer;

pub use error::{Error, Result};
