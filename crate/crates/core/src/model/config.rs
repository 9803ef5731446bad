use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CurveKind;

/// Architecture hyper-parameters. Stored verbatim in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Control points `N`.
    pub n_points: usize,
    /// Dense samples `K` per curve used by the losses.
    pub k_samples: usize,
    pub curve_kind: CurveKind,
    /// GCN refinement steps; each step has its own weights.
    pub iterations: usize,
    /// Graph-ResNet blocks between the input and output graph layers.
    pub gcn_blocks: usize,
    pub gcn_width: usize,
    /// Side of the square network input; the feature grid is a quarter of it.
    pub input_size: usize,
    /// Channels of the backbone conv layers; the first two use stride 2.
    pub backbone_channels: Vec<usize>,
    /// Hidden channels of the edge/vertex branch conv.
    pub branch_channels: usize,
    /// Append edge and vertex probability grids to the feature map.
    pub use_branches: bool,
    /// Offsets are `offset_scale * tanh(head)`.
    pub offset_scale: f64,
    /// Neighbors on either side of a corrected node that the interactive
    /// model may move.
    pub interactive_k: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_points: 40,
            k_samples: 1280,
            curve_kind: CurveKind::Spline,
            iterations: 3,
            gcn_blocks: 6,
            gcn_width: 128,
            input_size: 112,
            backbone_channels: vec![8, 16, 32, 32],
            branch_channels: 16,
            use_branches: true,
            offset_scale: 0.25,
            interactive_k: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.n_points < 3 {
            return bad(format!("n_points must be at least 3, got {}", self.n_points));
        }
        if self.k_samples < self.n_points {
            return bad(format!("k_samples ({}) must be >= n_points ({})", self.k_samples, self.n_points));
        }
        if self.gcn_width == 0 || self.branch_channels == 0 {
            return bad("widths must be positive".into());
        }
        if self.backbone_channels.len() < 2 || self.backbone_channels.contains(&0) {
            return bad("backbone needs at least two non-empty conv layers".into());
        }
        if self.input_size < 4 || self.input_size % 4 != 0 {
            return bad(format!("input_size must be a positive multiple of 4, got {}", self.input_size));
        }
        if !(self.offset_scale > 0.0 && self.offset_scale.is_finite()) {
            return bad(format!("offset_scale must be positive, got {}", self.offset_scale));
        }
        Ok(())
    }

    /// Side of the feature grid.
    pub fn grid_size(&self) -> usize {
        self.input_size / 4
    }

    /// Channels of the backbone output `F_c`.
    pub fn backbone_out(&self) -> usize {
        *self.backbone_channels.last().expect("validated")
    }

    /// Channels of the augmented feature map `F`.
    pub fn feature_channels(&self) -> usize {
        self.backbone_out() + if self.use_branches { 2 } else { 0 }
    }

    /// Width of a node input vector: sampled features plus `(x, y)`.
    pub fn node_input_width(&self) -> usize {
        self.feature_channels() + 2
    }
}
