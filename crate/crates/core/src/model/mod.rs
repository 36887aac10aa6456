//! Edge convolution network with learned edge embeddings and a
//! fully-connected pairwise relation decoder.
//!
//! Layer `l` maps node states `h` and edge states `e` to
//!
//! ```text
//! μ_i      = Φ(h_i)
//! conv_k(i) = Σ_{j ∈ N(i)} W_k (Ψ e_ij) ⊙ μ_j        k = 1..K
//! h'_i     = ReLU(μ_i ⊕ conv_1(i) ⊕ … ⊕ conv_K(i))
//! e'_ij    = ReLU(E(e_ij))
//! ```
//!
//! The node's own projection `μ_i` stays separate from its neighbourhood
//! aggregate. The first layer sees the raw 14-dim edge geometry; each later
//! layer sees the edge state projected by the previous one. After the last
//! layer every ordered pair is scored by `sigmoid(FFN(h_i ⊕ h_j))`.

mod backward;
mod checkpoint;
mod forward;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Relation;
use crate::features::{FeatureLayout, DEFAULT_LABEL_DIM};
use crate::geometry::EDGE_FEATURE_DIM;

pub use backward::backward;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    ecn_layer_forward, forward, forward_with_cache, ForwardCache, LayerCache, PairScores,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcnConfig {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub layers: usize,
    pub stacked_convolutions: usize,
    pub decoder_hidden: usize,
    pub label_dim: usize,
    pub nonlinearity: Nonlinearity,
    pub threshold: f64,
}

impl EcnConfig {
    /// Selected monolingual configuration: d = 128, d_e = 128, 6 layers,
    /// 6 stacked convolutions.
    pub fn monolingual() -> Self {
        EcnConfig {
            node_dim: 128,
            edge_dim: 128,
            layers: 6,
            stacked_convolutions: 6,
            decoder_hidden: 128,
            label_dim: DEFAULT_LABEL_DIM,
            nonlinearity: Nonlinearity::Relu,
            threshold: 0.5,
        }
    }

    /// Selected multilingual configuration: d = 256, 8 stacked convolutions.
    pub fn multilingual() -> Self {
        EcnConfig {
            node_dim: 256,
            stacked_convolutions: 8,
            decoder_hidden: 256,
            ..Self::monolingual()
        }
    }

    /// Width of every layer's node output, `(K + 1) · d`.
    pub fn layer_output_dim(&self) -> usize {
        (self.stacked_convolutions + 1) * self.node_dim
    }

    pub fn validate(&self) -> crate::Result<()> {
        let dims = [
            ("node_dim", self.node_dim),
            ("edge_dim", self.edge_dim),
            ("layers", self.layers),
            ("stacked_convolutions", self.stacked_convolutions),
            ("decoder_hidden", self.decoder_hidden),
            ("label_dim", self.label_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(crate::Error::InvalidArgument(format!(
                "{name} must be at least 1"
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(crate::Error::InvalidArgument(
                "threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

impl Default for EcnConfig {
    fn default() -> Self {
        Self::monolingual()
    }
}

/// Affine map stored as `in × out` so rows transform as `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: glorot(rng, fan_in, fan_out),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// Φ: node state → d.
    pub node_proj: Linear,
    /// Ψ: edge state → d, no bias.
    pub edge_proj: Array2<f64>,
    /// `[W_1 | … | W_K]`, each block `d × d`.
    pub filters: Array2<f64>,
    /// Edge-state update feeding the next layer; absent on the last layer.
    pub edge_update: Option<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `2·(K+1)·d → hidden`; rows `0..(K+1)d` act on the head node.
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcnParams {
    pub label_embedding: Option<Array2<f64>>,
    pub layers: Vec<ConvLayer>,
    pub decoder: Decoder,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-a..a))
}

/// Fan-aware uniform initialization, zero biases. Deterministic in `seed`.
pub fn init_params(config: &EcnConfig, layout: &FeatureLayout, seed: u64) -> EcnParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.node_dim;
    let k = config.stacked_convolutions;
    let label_embedding = layout
        .label_classes
        .as_ref()
        .map(|classes| glorot(&mut rng, classes.len(), layout.label_dim));

    let mut layers = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let node_in = if l == 0 {
            layout.input_dim()
        } else {
            config.layer_output_dim()
        };
        let edge_in = if l == 0 {
            EDGE_FEATURE_DIM
        } else {
            config.edge_dim
        };
        let node_proj = Linear::init(&mut rng, node_in, d);
        let edge_proj = glorot(&mut rng, edge_in, d);
        let mut filters = Array2::zeros((d, k * d));
        for block in 0..k {
            let w = glorot(&mut rng, d, d);
            filters
                .slice_mut(ndarray::s![.., block * d..(block + 1) * d])
                .assign(&w);
        }
        let edge_update =
            (l + 1 < config.layers).then(|| Linear::init(&mut rng, edge_in, config.edge_dim));
        layers.push(ConvLayer {
            node_proj,
            edge_proj,
            filters,
            edge_update,
        });
    }
    let out = config.layer_output_dim();
    let decoder = Decoder {
        hidden: Linear::init(&mut rng, 2 * out, config.decoder_hidden),
        output: Linear::init(&mut rng, config.decoder_hidden, 1),
    };
    EcnParams {
        label_embedding,
        layers,
        decoder,
    }
}

/// Named view of one parameter tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

impl EcnParams {
    /// All tensors in a fixed order: label embedding, layers, decoder.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        if let Some(t) = &self.label_embedding {
            out.push(view2("label_embedding".into(), t));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{l}");
            out.push(view2(
                format!("{p}.node_proj.weight"),
                &layer.node_proj.weight,
            ));
            out.push(view1(format!("{p}.node_proj.bias"), &layer.node_proj.bias));
            out.push(view2(format!("{p}.edge_proj"), &layer.edge_proj));
            out.push(view2(format!("{p}.filters"), &layer.filters));
            if let Some(u) = &layer.edge_update {
                out.push(view2(format!("{p}.edge_update.weight"), &u.weight));
                out.push(view1(format!("{p}.edge_update.bias"), &u.bias));
            }
        }
        out.push(view2(
            "decoder.hidden.weight".into(),
            &self.decoder.hidden.weight,
        ));
        out.push(view1(
            "decoder.hidden.bias".into(),
            &self.decoder.hidden.bias,
        ));
        out.push(view2(
            "decoder.output.weight".into(),
            &self.decoder.output.weight,
        ));
        out.push(view1(
            "decoder.output.bias".into(),
            &self.decoder.output.bias,
        ));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        let mut out = Vec::new();
        if let Some(t) = &mut self.label_embedding {
            out.push(view2_mut("label_embedding".into(), t));
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let p = format!("layer{l}");
            out.push(view2_mut(
                format!("{p}.node_proj.weight"),
                &mut layer.node_proj.weight,
            ));
            out.push(view1_mut(
                format!("{p}.node_proj.bias"),
                &mut layer.node_proj.bias,
            ));
            out.push(view2_mut(format!("{p}.edge_proj"), &mut layer.edge_proj));
            out.push(view2_mut(format!("{p}.filters"), &mut layer.filters));
            if let Some(u) = &mut layer.edge_update {
                out.push(view2_mut(format!("{p}.edge_update.weight"), &mut u.weight));
                out.push(view1_mut(format!("{p}.edge_update.bias"), &mut u.bias));
            }
        }
        let dec = &mut self.decoder;
        out.push(view2_mut(
            "decoder.hidden.weight".into(),
            &mut dec.hidden.weight,
        ));
        out.push(view1_mut(
            "decoder.hidden.bias".into(),
            &mut dec.hidden.bias,
        ));
        out.push(view2_mut(
            "decoder.output.weight".into(),
            &mut dec.output.weight,
        ));
        out.push(view1_mut(
            "decoder.output.bias".into(),
            &mut dec.output.bias,
        ));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> EcnParams {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.fill(0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

fn view2(name: String, a: &Array2<f64>) -> TensorView<'_> {
    TensorView {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn view1(name: String, a: &Array1<f64>) -> TensorView<'_> {
    TensorView {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn view2_mut(name: String, a: &mut Array2<f64>) -> TensorViewMut<'_> {
    TensorViewMut {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice_mut().expect("standard layout"),
    }
}

fn view1_mut(name: String, a: &mut Array1<f64>) -> TensorViewMut<'_> {
    TensorViewMut {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice_mut().expect("standard layout"),
    }
}

/// Emit every ordered pair scoring at or above `threshold`.
pub fn predict(scores: &PairScores, threshold: f64) -> Vec<Relation> {
    scores
        .iter()
        .filter(|&(_, _, p)| p >= threshold)
        .map(|(i, j, _)| Relation::new(i, j))
        .collect()
}
