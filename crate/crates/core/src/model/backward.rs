//! Reverse pass through the decoder and the convolution stack.

use ndarray::{s, Array1, Array2, Axis};

use super::forward::ForwardCache;
use super::{ConvLayer, EcnParams, Linear};
use crate::error::{Error, Result};
use crate::features::GraphInstance;

/// Gradients of a scalar objective with respect to every parameter, given
/// the objective's gradient with respect to the pair logits (diagonal
/// ignored).
pub fn backward(
    input: &GraphInstance,
    params: &EcnParams,
    cache: &ForwardCache,
    dlogits: &Array2<f64>,
) -> Result<EcnParams> {
    let mut grads = params.zeros_like();
    let n = input.node_count();
    if dlogits.dim() != (n, n) {
        return Err(Error::shape(
            "logit gradient",
            format!("{n}x{n}"),
            format!("{:?}", dlogits.dim()),
        ));
    }

    let h_final = cache.final_states();
    let mut dh = decoder_backward(params, cache, h_final, dlogits, &mut grads);

    let mut de: Option<Array2<f64>> = None;
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let (dh_in, de_in) = layer_backward(
            layer,
            &cache.layers[l],
            &input.edges,
            &dh,
            de.as_ref(),
            &mut grads.layers[l],
        );
        dh = dh_in;
        de = Some(de_in);
    }

    if let (Some(rows), Some(table)) = (&input.label_rows, grads.label_embedding.as_mut()) {
        let range = input.layout.label_range();
        for (node, &row) in rows.iter().enumerate() {
            let g = dh.slice(s![node, range.clone()]);
            let mut dst = table.row_mut(row);
            dst += &g;
        }
    }

    for t in grads.tensors() {
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", t.name)));
        }
    }
    Ok(grads)
}

fn decoder_backward(
    params: &EcnParams,
    cache: &ForwardCache,
    h_final: &Array2<f64>,
    dlogits: &Array2<f64>,
    grads: &mut EcnParams,
) -> Array2<f64> {
    let dec = &params.decoder;
    let n = h_final.nrows();
    let out = h_final.ncols();
    let hidden = dec.hidden.weight.ncols();
    let v = dec.output.weight.index_axis(Axis(1), 0);
    let v = v.as_slice().expect("contiguous column");

    let mut d_head = Array2::<f64>::zeros((n, hidden));
    let mut d_tail = Array2::<f64>::zeros((n, hidden));
    let mut dv = vec![0.0; hidden];
    let mut dc = 0.0;
    for i in 0..n {
        let hi = cache.head.row(i);
        let hi = hi.as_slice().expect("standard layout");
        for j in (0..n).filter(|&j| j != i) {
            let g = dlogits[[i, j]];
            if g == 0.0 {
                continue;
            }
            dc += g;
            let tj = cache.tail.row(j);
            let tj = tj.as_slice().expect("standard layout");
            let mut dhi = d_head.row_mut(i);
            let dhi = dhi.as_slice_mut().expect("standard layout");
            for k in 0..hidden {
                let t = hi[k] + tj[k];
                if t > 0.0 {
                    dv[k] += g * t;
                    dhi[k] += g * v[k];
                }
            }
            let mut dtj = d_tail.row_mut(j);
            let dtj = dtj.as_slice_mut().expect("standard layout");
            for k in 0..hidden {
                if hi[k] + tj[k] > 0.0 {
                    dtj[k] += g * v[k];
                }
            }
        }
    }

    let gdec = &mut grads.decoder;
    gdec.output.weight.column_mut(0).assign(&Array1::from(dv));
    gdec.output.bias[0] = dc;
    gdec.hidden
        .weight
        .slice_mut(s![..out, ..])
        .assign(&h_final.t().dot(&d_head));
    gdec.hidden
        .weight
        .slice_mut(s![out.., ..])
        .assign(&h_final.t().dot(&d_tail));
    gdec.hidden.bias.assign(&d_head.sum_axis(Axis(0)));

    let w = &dec.hidden.weight;
    d_head.dot(&w.slice(s![..out, ..]).t()) + d_tail.dot(&w.slice(s![out.., ..]).t())
}

/// Returns gradients with respect to the layer's node and edge inputs.
fn layer_backward(
    layer: &ConvLayer,
    cache: &super::forward::LayerCache,
    edges: &[(usize, usize)],
    d_output: &Array2<f64>,
    d_edge_output: Option<&Array2<f64>>,
    grads: &mut ConvLayer,
) -> (Array2<f64>, Array2<f64>) {
    let d = layer.node_proj.weight.ncols();
    let kd = layer.filters.ncols();
    let width = d + kd;

    let mut d_pre = d_output.clone();
    ndarray::Zip::from(&mut d_pre)
        .and(&cache.output)
        .for_each(|g, &o| {
            if o <= 0.0 {
                *g = 0.0
            }
        });

    let mut d_mu = d_pre.slice(s![.., ..d]).to_owned();
    let mut d_filtered = Array2::<f64>::zeros((edges.len(), kd));
    {
        let d_pre = d_pre.as_slice().expect("standard layout");
        let mu = cache.mu.as_slice().expect("standard layout");
        let q = cache.filtered.as_slice().expect("standard layout");
        let d_mu = d_mu.as_slice_mut().expect("standard layout");
        let dq = d_filtered.as_slice_mut().expect("standard layout");
        for (r, &(i, j)) in edges.iter().enumerate() {
            let g = &d_pre[i * width + d..(i + 1) * width];
            let msg = &q[r * kd..(r + 1) * kd];
            let dmsg = &mut dq[r * kd..(r + 1) * kd];
            let src = &mu[j * d..(j + 1) * d];
            let dsrc = &mut d_mu[j * d..(j + 1) * d];
            for ((g_blk, m_blk), dm_blk) in g
                .chunks_exact(d)
                .zip(msg.chunks_exact(d))
                .zip(dmsg.chunks_exact_mut(d))
            {
                for c in 0..d {
                    dm_blk[c] = g_blk[c] * src[c];
                    dsrc[c] += g_blk[c] * m_blk[c];
                }
            }
        }
    }

    grads.filters.assign(&cache.edge_proj.t().dot(&d_filtered));
    let d_edge_proj = d_filtered.dot(&layer.filters.t());
    grads
        .edge_proj
        .assign(&cache.edge_input.t().dot(&d_edge_proj));
    let mut d_edge_in = d_edge_proj.dot(&layer.edge_proj.t());

    if let (Some(update), Some(out), Some(d_out), Some(g)) = (
        &layer.edge_update,
        &cache.edge_output,
        d_edge_output,
        grads.edge_update.as_mut(),
    ) {
        let mut d_pre_e = d_out.clone();
        ndarray::Zip::from(&mut d_pre_e).and(out).for_each(|g, &o| {
            if o <= 0.0 {
                *g = 0.0
            }
        });
        linear_backward(&cache.edge_input, &d_pre_e, g);
        d_edge_in = d_edge_in + d_pre_e.dot(&update.weight.t());
    }

    linear_backward(&cache.input, &d_mu, &mut grads.node_proj);
    let d_input = d_mu.dot(&layer.node_proj.weight.t());
    (d_input, d_edge_in)
}

fn linear_backward(x: &Array2<f64>, d_out: &Array2<f64>, grads: &mut Linear) {
    grads.weight.assign(&x.t().dot(d_out));
    grads.bias.assign(&d_out.sum_axis(Axis(0)));
}
