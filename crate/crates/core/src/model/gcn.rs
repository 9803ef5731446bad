//! Graph-ResNet over the cyclic control-point graph and the offset head.

use rand::Rng;

use super::glorot;
use crate::error::{Error, Result};
use crate::numerics::{linear, linear_backward, relu, relu_backward, ParamStore, Tensor};

/// Ring graph where node `i` is joined to `i ± 1` and `i ± 2` (mod `N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphTopology {
    n: usize,
}

impl GraphTopology {
    pub const OFFSETS: [isize; 4] = [-2, -1, 1, 2];

    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The four neighbors of `i`, in offset order `-2, -1, +1, +2`. For
    /// `N < 5` some coincide and are counted with multiplicity.
    pub fn neighbors(&self, i: usize) -> [usize; 4] {
        let n = self.n as isize;
        Self::OFFSETS.map(|d| (i as isize + d).rem_euclid(n) as usize)
    }

    /// `out_i = sum_{j in N(i)} x_j` for `x: N×D`. The adjacency is symmetric,
    /// so this is also its own adjoint.
    pub fn aggregate(&self, x: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * d];
        for i in 0..self.n {
            let dst = &mut out[i * d..(i + 1) * d];
            for j in self.neighbors(i) {
                for (o, v) in dst.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                    *o += v;
                }
            }
        }
        out
    }
}

/// Parameter names of one GCN stack under `prefix`.
#[derive(Clone, Debug)]
struct Names {
    input: String,
    blocks: Vec<(String, String)>,
    output: String,
    head: String,
}

impl Names {
    fn new(prefix: &str, blocks: usize) -> Self {
        Self {
            input: format!("{prefix}.in"),
            blocks: (0..blocks)
                .map(|b| (format!("{prefix}.block{b}.conv1"), format!("{prefix}.block{b}.conv2")))
                .collect(),
            output: format!("{prefix}.out"),
            head: format!("{prefix}.head"),
        }
    }
}

fn insert_layer(params: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) {
    params.insert(format!("{name}.w"), glorot(rng, &[d_in, d_out], d_in, d_out));
    params.insert(format!("{name}.b"), Tensor::zeros(&[d_out]));
}

/// Graph layer over `[x_i | sum_j x_j]`. The neighbor rows start scaled by
/// `1 / |offsets|` so the sum enters with the same variance as `x_i`; `gain`
/// scales the whole layer.
fn insert_graph_layer(params: &mut ParamStore, name: &str, d_in: usize, d_out: usize, gain: f64, rng: &mut impl Rng) {
    let mut w = glorot(rng, &[2 * d_in, d_out], 2 * d_in, d_out);
    let neighbor_scale = 1.0 / GraphTopology::OFFSETS.len() as f64;
    for (k, v) in w.data_mut().iter_mut().enumerate() {
        *v *= if k / d_out >= d_in { gain * neighbor_scale } else { gain };
    }
    params.insert(format!("{name}.w"), w);
    params.insert(format!("{name}.b"), Tensor::zeros(&[d_out]));
}

/// Registers the weights of a stack with node input width `d_in`.
pub(crate) fn init(params: &mut ParamStore, prefix: &str, d_in: usize, width: usize, blocks: usize, rng: &mut impl Rng) {
    let names = Names::new(prefix, blocks);
    insert_graph_layer(params, &names.input, d_in, width, 1.0, rng);
    // residual branches start small so the stack begins close to identity
    for (c1, c2) in &names.blocks {
        insert_graph_layer(params, c1, width, width, 1.0, rng);
        insert_graph_layer(params, c2, width, width, 0.1, rng);
    }
    insert_graph_layer(params, &names.output, width, width, 1.0, rng);
    insert_layer(params, &names.head, width, 2, rng);
}

/// `[x_i | sum_{j in N(i)} x_j]`, shape `N×2D`.
fn concat_neighbors(topo: &GraphTopology, x: &Tensor) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if n != topo.len() {
        return Err(Error::shape("graph layer", format!("{n} node rows for a {}-node graph", topo.len())));
    }
    let agg = topo.aggregate(x.data(), d);
    let mut cat = Vec::with_capacity(2 * n * d);
    for i in 0..n {
        cat.extend_from_slice(x.row(i));
        cat.extend_from_slice(&agg[i * d..(i + 1) * d]);
    }
    Tensor::new(&[n, 2 * d], cat)
}

/// One graph layer `w_0 x_i + w_1 sum_j x_j + b`; returns `(pre, cat)`.
fn graph_layer(params: &ParamStore, name: &str, topo: &GraphTopology, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let cat = concat_neighbors(topo, x)?;
    let pre = linear(&cat, params.value(&format!("{name}.w")), params.value(&format!("{name}.b")))?;
    Ok((pre, cat))
}

fn graph_layer_backward(
    params: &mut ParamStore,
    name: &str,
    topo: &GraphTopology,
    cat: &Tensor,
    d_pre: &Tensor,
) -> Result<Tensor> {
    let w_name = format!("{name}.w");
    let (d_cat, dw, db) = linear_backward(cat, params.value(&w_name), d_pre)?;
    params.accumulate(&w_name, &dw)?;
    params.accumulate(&format!("{name}.b"), &db)?;
    let (n, d2) = d_cat.dims2()?;
    let d = d2 / 2;
    let mut own = Vec::with_capacity(n * d);
    let mut nbr = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = d_cat.row(i);
        own.extend_from_slice(&row[..d]);
        nbr.extend_from_slice(&row[d..]);
    }
    for (o, a) in own.iter_mut().zip(topo.aggregate(&nbr, d)) {
        *o += a;
    }
    Tensor::new(&[n, d], own)
}

#[derive(Clone, Debug)]
struct BlockCache {
    cat1: Tensor,
    pre1: Tensor,
    cat2: Tensor,
    sum: Tensor,
}

/// Activations kept for [`backward`].
#[derive(Clone, Debug)]
pub struct GcnCache {
    in_cat: Tensor,
    in_pre: Tensor,
    blocks: Vec<BlockCache>,
    out_cat: Tensor,
    out_pre: Tensor,
    head_in: Tensor,
}

/// Runs the stack on node inputs `x: N×d_in` and returns the raw head output
/// `N×2` (before the offset squashing).
pub fn forward(params: &ParamStore, prefix: &str, blocks: usize, x: &Tensor) -> Result<(Tensor, GcnCache)> {
    let names = Names::new(prefix, blocks);
    let topo = GraphTopology::new(x.dims2()?.0);
    let (in_pre, in_cat) = graph_layer(params, &names.input, &topo, x)?;
    let mut f = relu(&in_pre);
    let mut caches = Vec::with_capacity(blocks);
    for (c1, c2) in &names.blocks {
        let (pre1, cat1) = graph_layer(params, c1, &topo, &f)?;
        let r = relu(&pre1);
        let (mut sum, cat2) = graph_layer(params, c2, &topo, &r)?;
        sum.add_assign(&f)?;
        f = relu(&sum);
        caches.push(BlockCache { cat1, pre1, cat2, sum });
    }
    let (out_pre, out_cat) = graph_layer(params, &names.output, &topo, &f)?;
    let head_in = relu(&out_pre);
    let raw = linear(&head_in, params.value(&format!("{}.w", names.head)), params.value(&format!("{}.b", names.head)))?;
    raw.ensure_finite("gcn forward")?;
    Ok((raw, GcnCache { in_cat, in_pre, blocks: caches, out_cat, out_pre, head_in }))
}

/// Accumulates weight gradients and returns `d loss / d x`.
pub fn backward(params: &mut ParamStore, prefix: &str, cache: &GcnCache, d_raw: &Tensor) -> Result<Tensor> {
    let names = Names::new(prefix, cache.blocks.len());
    let topo = GraphTopology::new(d_raw.dims2()?.0);
    let head_w = format!("{}.w", names.head);
    let (d_head_in, dw, db) = linear_backward(&cache.head_in, params.value(&head_w), d_raw)?;
    params.accumulate(&head_w, &dw)?;
    params.accumulate(&format!("{}.b", names.head), &db)?;
    let d_out_pre = relu_backward(&cache.out_pre, &d_head_in)?;
    let mut d_f = graph_layer_backward(params, &names.output, &topo, &cache.out_cat, &d_out_pre)?;
    for ((c1, c2), bc) in names.blocks.iter().zip(&cache.blocks).rev() {
        let d_sum = relu_backward(&bc.sum, &d_f)?;
        let d_r = graph_layer_backward(params, c2, &topo, &bc.cat2, &d_sum)?;
        let d_pre1 = relu_backward(&bc.pre1, &d_r)?;
        d_f = graph_layer_backward(params, c1, &topo, &bc.cat1, &d_pre1)?;
        d_f.add_assign(&d_sum)?;
    }
    let d_in_pre = relu_backward(&cache.in_pre, &d_f)?;
    graph_layer_backward(params, &names.input, &topo, &cache.in_cat, &d_in_pre)
}
