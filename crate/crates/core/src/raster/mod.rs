//! Rasterization of closed contours, its first-order backward pass, and mask
//! metrics.

mod fan;
mod mask;
mod metrics;
mod scanline;

pub use fan::{fan_winding, render, render_backward, render_backward_pixels, FanTriangle, RenderGrad, TriangleFan};
pub use mask::Mask;
pub use metrics::{boundary_f, boundary_pixels, iou};
pub use scanline::{crossing, scanline_fill, winding_numbers};
