use ndarray::{s, Array2, ArrayView2, Axis};

use super::{ConvLayer, EcnConfig, EcnParams};
use crate::error::{Error, Result};
use crate::features::GraphInstance;

/// Scores for every ordered pair `(i, j)`, `i ≠ j`, stored densely with an
/// unused diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    logits: Array2<f64>,
    probs: Array2<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl PairScores {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let mut logits = logits;
        logits.diag_mut().fill(0.0);
        let mut probs = logits.mapv(sigmoid);
        probs.diag_mut().fill(0.0);
        PairScores { logits, probs }
    }

    /// Build from probabilities in `[0, 1]`; logits are recovered for
    /// interior values.
    pub fn from_probabilities(probs: Array2<f64>) -> Self {
        let mut probs = probs;
        probs.diag_mut().fill(0.0);
        let logits = probs.mapv(|p| (p / (1.0 - p)).ln());
        PairScores { logits, probs }
    }

    pub fn node_count(&self) -> usize {
        self.probs.nrows()
    }

    /// `n·(n−1)`.
    pub fn len(&self) -> usize {
        let n = self.node_count();
        n * n.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, head: usize, tail: usize) -> f64 {
        self.probs[[head, tail]]
    }

    pub fn logit(&self, head: usize, tail: usize) -> f64 {
        self.logits[[head, tail]]
    }

    pub fn probabilities(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.node_count();
        (0..n).flat_map(move |i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.probs[[i, j]]))
        })
    }
}

/// Intermediate values of one convolution layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Array2<f64>,
    pub edge_input: Array2<f64>,
    /// `Φ(h)`, `n × d`.
    pub mu: Array2<f64>,
    /// `Ψ e`, `E × d`.
    pub edge_proj: Array2<f64>,
    /// `(Ψ e) [W_1 | … | W_K]`, `E × K·d`.
    pub filtered: Array2<f64>,
    /// `ReLU(μ ⊕ γ)`, `n × (K+1)·d`.
    pub output: Array2<f64>,
    pub edge_output: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Array2<f64>,
    pub layers: Vec<LayerCache>,
    /// Head half of the decoder's hidden pre-activation, bias included.
    pub head: Array2<f64>,
    pub tail: Array2<f64>,
    pub scores: PairScores,
}

impl ForwardCache {
    pub fn final_states(&self) -> &Array2<f64> {
        match self.layers.last() {
            Some(l) => &l.output,
            None => &self.x,
        }
    }
}

fn check_cols(context: &str, a: &ArrayView2<f64>, expected: usize) -> Result<()> {
    if a.ncols() != expected {
        return Err(Error::shape(context, expected, a.ncols()));
    }
    Ok(())
}

/// One edge-convolution layer. `edges[r] = (i, j)` means row `r` of `e`
/// carries node `j`'s message into node `i`.
pub fn ecn_layer_forward(
    h: &Array2<f64>,
    e: &Array2<f64>,
    edges: &[(usize, usize)],
    layer: &ConvLayer,
) -> Result<LayerCache> {
    let n = h.nrows();
    let d = layer.node_proj.weight.ncols();
    let kd = layer.filters.ncols();
    check_cols(
        "layer node input",
        &h.view(),
        layer.node_proj.weight.nrows(),
    )?;
    check_cols("layer edge input", &e.view(), layer.edge_proj.nrows())?;
    if e.nrows() != edges.len() {
        return Err(Error::shape("edge rows", edges.len(), e.nrows()));
    }
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::shape(
            "edge endpoint",
            format!("< {n}"),
            format!("({i}, {j})"),
        ));
    }

    let mu = layer.node_proj.apply(h);
    let edge_proj = e.dot(&layer.edge_proj);
    let filtered = edge_proj.dot(&layer.filters);

    let mut pre = Array2::<f64>::zeros((n, d + kd));
    pre.slice_mut(s![.., ..d]).assign(&mu);
    {
        let mu = mu.as_slice().expect("standard layout");
        let q = filtered.as_slice().expect("standard layout");
        let pre = pre.as_slice_mut().expect("standard layout");
        let width = d + kd;
        for (r, &(i, j)) in edges.iter().enumerate() {
            let msg = &q[r * kd..(r + 1) * kd];
            let src = &mu[j * d..(j + 1) * d];
            let dst = &mut pre[i * width + d..(i + 1) * width];
            for (blk_dst, blk_msg) in dst.chunks_exact_mut(d).zip(msg.chunks_exact(d)) {
                for ((o, &m), &u) in blk_dst.iter_mut().zip(blk_msg).zip(src) {
                    *o += m * u;
                }
            }
        }
    }
    let output = pre.mapv_into(|v| v.max(0.0));
    let edge_output = layer
        .edge_update
        .as_ref()
        .map(|u| u.apply(e).mapv_into(|v| v.max(0.0)));

    Ok(LayerCache {
        input: h.clone(),
        edge_input: e.clone(),
        mu,
        edge_proj,
        filtered,
        output,
        edge_output,
    })
}

pub fn forward_with_cache(
    input: &GraphInstance,
    params: &EcnParams,
    config: &EcnConfig,
) -> Result<ForwardCache> {
    if params.layers.len() != config.layers {
        return Err(Error::shape(
            "layer count",
            config.layers,
            params.layers.len(),
        ));
    }
    let x = input.node_matrix(params.label_embedding.as_ref())?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let (h, e) = match layers.last() {
            None => (&x, &input.edge_features),
            Some(prev) => (
                &prev.output,
                prev.edge_output.as_ref().ok_or_else(|| {
                    Error::shape(format!("layer {l} edge input"), "an edge state", "none")
                })?,
            ),
        };
        let cache = ecn_layer_forward(h, e, &input.edges, layer)?;
        layers.push(cache);
    }
    let h_final = layers.last().map(|l| &l.output).unwrap_or(&x);

    let dec = &params.decoder;
    let out = h_final.ncols();
    check_cols(
        "decoder input",
        &h_final.view(),
        dec.hidden.weight.nrows() / 2,
    )?;
    let head = h_final.dot(&dec.hidden.weight.slice(s![..out, ..])) + &dec.hidden.bias;
    let tail = h_final.dot(&dec.hidden.weight.slice(s![out.., ..]));
    let logits = pair_logits(&head, &tail, &dec.output.weight, dec.output.bias[0]);

    Ok(ForwardCache {
        x,
        layers,
        head,
        tail,
        scores: PairScores::from_logits(logits),
    })
}

/// `z_ij = v · ReLU(head_i + tail_j) + c` for `i ≠ j`.
fn pair_logits(head: &Array2<f64>, tail: &Array2<f64>, v: &Array2<f64>, c: f64) -> Array2<f64> {
    let n = head.nrows();
    let v = v.index_axis(Axis(1), 0);
    let v = v.as_slice().expect("contiguous column");
    let mut z = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let hi = head.row(i);
        let hi = hi.as_slice().expect("standard layout");
        for j in (0..n).filter(|&j| j != i) {
            let tj = tail.row(j);
            let tj = tj.as_slice().expect("standard layout");
            let mut acc = c;
            for ((&a, &b), &w) in hi.iter().zip(tj).zip(v) {
                let t = a + b;
                if t > 0.0 {
                    acc += t * w;
                }
            }
            z[[i, j]] = acc;
        }
    }
    z
}

/// Final node states and pair scores.
pub fn forward(
    input: &GraphInstance,
    params: &EcnParams,
    config: &EcnConfig,
) -> Result<(Array2<f64>, PairScores)> {
    let cache = forward_with_cache(input, params, config)?;
    let h = cache.final_states().clone();
    Ok((h, cache.scores))
}
