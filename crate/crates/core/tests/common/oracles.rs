//! Slow, direct reference implementations used to check the library.

// Index loops mirror the layer maths term by term.
#![allow(clippy::needless_range_loop)]

use ecn_core::geometry::NormalizedBBox;

/// O(n³) sightline reference: for every pair, build the open band on the
/// axis where the projections overlap and test every third box against it.
pub fn sightline_oracle(boxes: &[NormalizedBBox]) -> Vec<(usize, usize)> {
    let open_overlap = |a0: f64, a1: f64, b0: f64, b1: f64| a0.max(b0) < a1.min(b1);
    let mut edges = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let (a, b) = (&boxes[i], &boxes[j]);
            let x_overlap = open_overlap(a.x0, a.x1, b.x0, b.x1);
            let y_overlap = open_overlap(a.y0, a.y1, b.y0, b.y1);
            let band = match (x_overlap, y_overlap) {
                (true, true) => {
                    edges.push((i, j));
                    continue;
                }
                (false, false) => continue,
                (true, false) => (
                    a.x0.max(b.x0),
                    a.x1.min(b.x1),
                    a.y1.min(b.y1),
                    a.y0.max(b.y0),
                ),
                (false, true) => (
                    a.x1.min(b.x1),
                    a.x0.max(b.x0),
                    a.y0.max(b.y0),
                    a.y1.min(b.y1),
                ),
            };
            let (bx0, bx1, by0, by1) = band;
            let blocked = (0..boxes.len()).filter(|&k| k != i && k != j).any(|k| {
                let c = &boxes[k];
                c.area() > 0.0
                    && open_overlap(c.x0, c.x1, bx0, bx1)
                    && open_overlap(c.y0, c.y1, by0, by1)
            });
            if !blocked {
                edges.push((i, j));
            }
        }
    }
    edges
}

use ecn_core::features::GraphInstance;
use ecn_core::model::{ConvLayer, EcnConfig, EcnParams};
use ecn_core::training::bce_loss;
use ndarray::Array2;

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// One layer written as explicit sums over nodes, neighbours, channels and
/// filter blocks. Returns the node output and the updated edge state.
pub fn naive_layer(
    h: &Array2<f64>,
    e: &Array2<f64>,
    edges: &[(usize, usize)],
    layer: &ConvLayer,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let n = h.nrows();
    let d = layer.node_proj.weight.ncols();
    let k_blocks = layer.filters.ncols() / d;

    // μ_i = Φ(h_i)
    let mut mu = vec![vec![0.0; d]; n];
    for i in 0..n {
        for c in 0..d {
            let mut acc = layer.node_proj.bias[c];
            for f in 0..h.ncols() {
                acc += h[[i, f]] * layer.node_proj.weight[[f, c]];
            }
            mu[i][c] = acc;
        }
    }

    let mut out = Array2::zeros((n, (k_blocks + 1) * d));
    for i in 0..n {
        for c in 0..d {
            out[[i, c]] = mu[i][c];
        }
    }
    for (r, &(i, j)) in edges.iter().enumerate() {
        // ψ = Ψ e_ij
        let mut psi = vec![0.0; d];
        for (c, p) in psi.iter_mut().enumerate() {
            for f in 0..e.ncols() {
                *p += e[[r, f]] * layer.edge_proj[[f, c]];
            }
        }
        for k in 0..k_blocks {
            for c in 0..d {
                // (W_k ψ)_c as a row-vector product with block k.
                let mut filt = 0.0;
                for m in 0..d {
                    filt += psi[m] * layer.filters[[m, k * d + c]];
                }
                out[[i, d + k * d + c]] += filt * mu[j][c];
            }
        }
    }
    out.mapv_inplace(relu);

    let edge_out = layer.edge_update.as_ref().map(|u| {
        let mut o = Array2::zeros((e.nrows(), u.weight.ncols()));
        for r in 0..e.nrows() {
            for c in 0..u.weight.ncols() {
                let mut acc = u.bias[c];
                for f in 0..e.ncols() {
                    acc += e[[r, f]] * u.weight[[f, c]];
                }
                o[[r, c]] = relu(acc);
            }
        }
        o
    });
    (out, edge_out)
}

/// Pair probabilities from the naive layers and a loop-based decoder.
pub fn naive_probabilities(input: &GraphInstance, params: &EcnParams) -> Array2<f64> {
    let mut h = input.node_matrix(params.label_embedding.as_ref()).unwrap();
    let mut e = input.edge_features.clone();
    for layer in &params.layers {
        let (out, edge_out) = naive_layer(&h, &e, &input.edges, layer);
        h = out;
        if let Some(eo) = edge_out {
            e = eo;
        }
    }
    let n = h.nrows();
    let w = h.ncols();
    let dec = &params.decoder;
    let hidden = dec.hidden.weight.ncols();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut z = dec.output.bias[0];
            for m in 0..hidden {
                let mut a = dec.hidden.bias[m];
                for f in 0..w {
                    a += h[[i, f]] * dec.hidden.weight[[f, m]]
                        + h[[j, f]] * dec.hidden.weight[[w + f, m]];
                }
                z += relu(a) * dec.output.weight[[m, 0]];
            }
            p[[i, j]] = 1.0 / (1.0 + (-z).exp());
        }
    }
    p
}

pub fn loss_at(
    input: &GraphInstance,
    params: &EcnParams,
    config: &EcnConfig,
    pos_weight: f64,
) -> f64 {
    let (_, scores) = ecn_core::model::forward(input, params, config).unwrap();
    bce_loss(&scores, &input.gold, pos_weight)
}

/// Worst relative error between `analytic` and central differences of the
/// loss over every parameter. The denominator is floored at `floor` so
/// entries that are zero on both sides are compared absolutely.
pub fn finite_difference_error(
    input: &GraphInstance,
    params: &EcnParams,
    config: &EcnConfig,
    pos_weight: f64,
    analytic: &EcnParams,
    step: f64,
    floor: f64,
) -> (f64, String) {
    let mut probe = params.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();
    let mut worst = (0.0, String::new());
    for (t, (name, g)) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let original = probe.tensors()[t].data[idx];
            probe.tensors_mut()[t].data[idx] = original + step;
            let up = loss_at(input, &probe, config, pos_weight);
            probe.tensors_mut()[t].data[idx] = original - step;
            let down = loss_at(input, &probe, config, pos_weight);
            probe.tensors_mut()[t].data[idx] = original;
            let numeric = (up - down) / (2.0 * step);
            let rel = (g[idx] - numeric).abs() / g[idx].abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{name}[{idx}]: analytic {} numeric {numeric}", g[idx]),
                );
            }
        }
    }
    worst
}
