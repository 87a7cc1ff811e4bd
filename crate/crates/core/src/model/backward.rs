//! Hand-derived sparse backward pass.
//!
//! Output errors exist only where the loss looks: observed items in explicit
//! mode, every item in implicit mode (unobserved ones weighted by confidence).
//! The first-layer gradient touches only the columns of the corrupted input's
//! non-zero entries.

use super::forward::{prediction_slope, ForwardTrace};
use super::params::{Gradients, ModelParams};
use crate::config::{Mode, TrainConfig};
use crate::data::{ConfidenceVector, SparseVector};
use crate::error::{Error, Result};
use crate::linalg::axpy;

/// `d loss / d z^L` for every evaluated output unit of the trace.
fn output_error(
    trace: &ForwardTrace,
    u: &SparseVector,
    config: &TrainConfig,
    confidence: Option<&ConfidenceVector>,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; trace.output.len()];
    match trace.mode {
        Mode::Explicit => {
            if u.is_empty() {
                return Ok(grad);
            }
            let k = u.nnz() as f64;
            let slope = prediction_slope(Mode::Explicit);
            for (pos, g) in grad.iter_mut().enumerate() {
                let j = trace.output_item(pos);
                let Some(target) = u.get(j) else { continue };
                let weight = if trace.dropped.binary_search(&j).is_ok() {
                    config.alpha
                } else {
                    config.beta
                };
                let pred = super::forward::to_prediction(Mode::Explicit, trace.output[pos]);
                *g = 2.0 * weight * (pred - target) / k * slope;
            }
        }
        Mode::Implicit => {
            let c = confidence.ok_or_else(|| {
                Error::Config("implicit training requires a confidence vector".into())
            })?;
            if !trace.covers_all() || c.len() != trace.output.len() {
                return Err(Error::Dimension(format!(
                    "implicit backward needs all {} outputs and matching confidence",
                    c.len()
                )));
            }
            let weights = c.weights();
            let mut observed = u.iter().peekable();
            for (j, g) in grad.iter_mut().enumerate() {
                let z = trace.output[j];
                *g = match observed.peek() {
                    Some(&(k, target)) if k == j => {
                        observed.next();
                        2.0 * (z - target)
                    }
                    _ => 2.0 * weights[j] * z,
                };
            }
        }
    }
    Ok(grad)
}

/// Adds `scale * d loss / d theta` for layers `from_layer..L` into `grads`.
pub(crate) fn accumulate_gradient(
    params: &ModelParams,
    trace: &ForwardTrace,
    u: &SparseVector,
    config: &TrainConfig,
    confidence: Option<&ConfidenceVector>,
    scale: f64,
    from_layer: usize,
    grads: &mut Gradients,
) -> Result<()> {
    let num_layers = params.num_layers();
    let top = num_layers - 1;
    let act = params.output_activation();
    let dz = output_error(trace, u, config, confidence)?;

    let h_top = &trace.hidden[top - 1];
    let mut upstream = vec![0.0; h_top.len()];
    let need_upstream = from_layer < top;
    {
        let w_top = &params.layer(top).weights;
        let g_top = &mut grads.layers[top];
        for (pos, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let delta = scale * d * act.derivative_from_output(trace.output[pos]);
            let j = trace.output_item(pos);
            axpy(delta, h_top, g_top.weights.row_mut(j));
            g_top.bias[j] += delta;
            if need_upstream {
                axpy(delta, w_top.row(j), &mut upstream);
            }
        }
    }

    // hidden layers, top-down; `upstream` is d loss / d z^{l+1} (already scaled)
    for l in (from_layer..top).rev() {
        let z = &trace.hidden[l];
        let delta: Vec<f64> = upstream
            .iter()
            .zip(z)
            .map(|(g, z)| g * (1.0 - z * z))
            .collect();
        let g = &mut grads.layers[l];
        if l == 0 {
            let cols = g.weights.cols();
            let data = g.weights.as_mut_slice();
            for (j, v) in trace.input.iter() {
                for (k, d) in delta.iter().enumerate() {
                    data[k * cols + j] += d * v;
                }
            }
        } else {
            let below = &trace.hidden[l - 1];
            for (k, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    axpy(*d, below, g.weights.row_mut(k));
                }
            }
        }
        axpy(1.0, &delta, &mut g.bias);
        if l > from_layer {
            let mut next = vec![0.0; params.layer(l).in_dim()];
            params.layer(l).weights.add_transpose_product(&delta, &mut next);
            upstream = next;
        }
    }
    Ok(())
}

/// `grads += lambda * theta` for layers `from_layer..L`.
pub(crate) fn add_regularization(
    params: &ModelParams,
    lambda: f64,
    from_layer: usize,
    grads: &mut Gradients,
) {
    if lambda == 0.0 {
        return;
    }
    for (g, p) in grads.layers[from_layer..]
        .iter_mut()
        .zip(&params.layers()[from_layer..])
    {
        g.add_scaled(lambda, p);
    }
}

/// Gradient of one user's loss plus `(lambda/2) * ||theta||^2` for every layer.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    u: &SparseVector,
    config: &TrainConfig,
    confidence: Option<&ConfidenceVector>,
) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    accumulate_gradient(params, trace, u, config, confidence, 1.0, 0, &mut grads)?;
    add_regularization(params, config.weight_decay, 0, &mut grads);
    Ok(grads)
}
