//! Small conv feature extractor plus the edge/vertex probability branches.

use rand::Rng;

use super::{glorot, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{
    conv2d, conv2d_backward, relu, relu_backward, sigmoid, sigmoid_backward_from_output, ParamStore, Tensor,
};

const BRANCHES: [&str; 2] = ["edge", "vertex"];

fn stride(layer: usize) -> usize {
    if layer < 2 {
        2
    } else {
        1
    }
}

pub(crate) fn init(params: &mut ParamStore, cfg: &ModelConfig, rng: &mut impl Rng) {
    let mut c_in = 3;
    for (i, &c_out) in cfg.backbone_channels.iter().enumerate() {
        params.insert(format!("backbone.conv{i}.w"), glorot(rng, &[c_out, c_in, 3, 3], c_in * 9, c_out * 9));
        params.insert(format!("backbone.conv{i}.b"), Tensor::zeros(&[c_out]));
        c_in = c_out;
    }
    if cfg.use_branches {
        let (c, hidden) = (cfg.backbone_out(), cfg.branch_channels);
        for name in BRANCHES {
            params.insert(format!("{name}.conv.w"), glorot(rng, &[hidden, c, 3, 3], c * 9, hidden * 9));
            params.insert(format!("{name}.conv.b"), Tensor::zeros(&[hidden]));
            params.insert(format!("{name}.fc.w"), glorot(rng, &[1, hidden, 1, 1], hidden, 1));
            params.insert(format!("{name}.fc.b"), Tensor::zeros(&[1]));
        }
    }
}

/// Output of [`extract_features`].
#[derive(Clone, Debug)]
pub struct ImageFeatures {
    /// `F`: backbone channels, then edge and vertex probabilities when enabled.
    pub map: Tensor,
    /// Edge probability grid `G×G` (branches enabled only).
    pub edge: Option<Tensor>,
    pub vertex: Option<Tensor>,
}

#[derive(Clone, Debug)]
struct BranchCache {
    hidden_pre: Tensor,
    hidden: Tensor,
    prob: Tensor,
}

/// Activations kept for [`backward`].
#[derive(Clone, Debug)]
pub struct BackboneCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    backbone_out: Tensor,
    branches: Vec<BranchCache>,
}

/// Runs the backbone on an image `3×S×S`.
pub fn extract_features(params: &ParamStore, cfg: &ModelConfig, image: &Tensor) -> Result<(ImageFeatures, BackboneCache)> {
    let (c, h, w) = image.dims3()?;
    if c != 3 || h != cfg.input_size || w != cfg.input_size {
        return Err(Error::shape(
            "extract_features",
            format!("expected 3x{0}x{0} image, got {c}x{h}x{w}", cfg.input_size),
        ));
    }
    let mut inputs = Vec::with_capacity(cfg.backbone_channels.len());
    let mut pre = Vec::with_capacity(cfg.backbone_channels.len());
    let mut x = image.clone();
    for i in 0..cfg.backbone_channels.len() {
        let y = conv2d(
            &x,
            params.value(&format!("backbone.conv{i}.w")),
            Some(params.value(&format!("backbone.conv{i}.b"))),
            stride(i),
            1,
        )?;
        let next = relu(&y);
        inputs.push(x);
        pre.push(y);
        x = next;
    }
    let fc = x;
    let g = cfg.grid_size();
    let mut branches = Vec::new();
    let mut map_data = fc.data().to_vec();
    if cfg.use_branches {
        for name in BRANCHES {
            let hidden_pre = conv2d(
                &fc,
                params.value(&format!("{name}.conv.w")),
                Some(params.value(&format!("{name}.conv.b"))),
                1,
                1,
            )?;
            let hidden = relu(&hidden_pre);
            let logits = conv2d(
                &hidden,
                params.value(&format!("{name}.fc.w")),
                Some(params.value(&format!("{name}.fc.b"))),
                1,
                0,
            )?;
            let prob = sigmoid(&logits);
            map_data.extend_from_slice(prob.data());
            branches.push(BranchCache { hidden_pre, hidden, prob });
        }
    }
    let map = Tensor::new(&[cfg.feature_channels(), g, g], map_data)?;
    map.ensure_finite("extract_features")?;
    let grid = |b: &BranchCache| b.prob.clone().reshape(&[g, g]).expect("1xGxG");
    let features = ImageFeatures {
        map,
        edge: branches.first().map(grid),
        vertex: branches.get(1).map(grid),
    };
    Ok((features, BackboneCache { inputs, pre, backbone_out: fc, branches }))
}

/// Accumulates parameter gradients given `d loss / d F`. Gradients w.r.t. the
/// edge/vertex probabilities (e.g. from their BCE losses) belong in the
/// corresponding channels of `d_map`.
pub fn backward(params: &mut ParamStore, cfg: &ModelConfig, cache: &BackboneCache, d_map: &Tensor) -> Result<()> {
    if d_map.shape() != [cfg.feature_channels(), cfg.grid_size(), cfg.grid_size()] {
        return Err(Error::shape("backbone::backward", format!("d_map {:?}", d_map.shape())));
    }
    let g = cfg.grid_size();
    let plane = g * g;
    let cc = cfg.backbone_out();
    let mut d_fc = Tensor::new(&[cc, g, g], d_map.data()[..cc * plane].to_vec())?;
    for (b, (name, br)) in BRANCHES.iter().zip(&cache.branches).enumerate() {
        let start = (cc + b) * plane;
        let d_prob = Tensor::new(&[1, g, g], d_map.data()[start..start + plane].to_vec())?;
        let d_logits = sigmoid_backward_from_output(&br.prob, &d_prob);
        let fc_w = format!("{name}.fc.w");
        let (d_hidden, dw, db) = conv2d_backward(&br.hidden, params.value(&fc_w), 1, 0, &d_logits)?;
        params.accumulate(&fc_w, &dw)?;
        params.accumulate(&format!("{name}.fc.b"), &db)?;
        let d_hidden_pre = relu_backward(&br.hidden_pre, &d_hidden)?;
        let conv_w = format!("{name}.conv.w");
        let (dx, dw, db) = conv2d_backward(&cache.backbone_out, params.value(&conv_w), 1, 1, &d_hidden_pre)?;
        params.accumulate(&conv_w, &dw)?;
        params.accumulate(&format!("{name}.conv.b"), &db)?;
        d_fc.add_assign(&dx)?;
    }
    let mut dy = d_fc;
    for i in (0..cfg.backbone_channels.len()).rev() {
        let d_pre = relu_backward(&cache.pre[i], &dy)?;
        let w_name = format!("backbone.conv{i}.w");
        let (dx, dw, db) = conv2d_backward(&cache.inputs[i], params.value(&w_name), stride(i), 1, &d_pre)?;
        params.accumulate(&w_name, &dw)?;
        params.accumulate(&format!("backbone.conv{i}.b"), &db)?;
        dy = dx;
    }
    Ok(())
}
