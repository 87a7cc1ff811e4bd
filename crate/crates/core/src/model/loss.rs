//! Per-user training objectives.

use super::forward::ForwardTrace;
use crate::data::{ConfidenceVector, SparseVector};
use crate::error::{Error, Result};

fn missing(j: usize) -> Error {
    Error::Dimension(format!("forward trace has no output for item {}", j))
}

/// Masked rating loss: squared errors on observed items only, `alpha` on
/// dropped inputs and `beta` on surviving ones, both divided by `|K(u)|`.
pub fn explicit_loss(trace: &ForwardTrace, u: &SparseVector, alpha: f64, beta: f64) -> Result<f64> {
    if u.is_empty() {
        return Ok(0.0);
    }
    let mut dropped_sum = 0.0;
    let mut kept_sum = 0.0;
    for (j, target) in u.iter() {
        let pred = trace.prediction_at(j).ok_or_else(|| missing(j))?;
        let err = (pred - target) * (pred - target);
        if trace.dropped.binary_search(&j).is_ok() {
            dropped_sum += err;
        } else {
            kept_sum += err;
        }
    }
    let k = u.nnz() as f64;
    Ok(alpha / k * dropped_sum + beta / k * kept_sum)
}

/// Whole-row implicit loss: squared error on observed items plus
/// confidence-weighted squared scores on every unobserved item.
pub fn implicit_loss(trace: &ForwardTrace, u: &SparseVector, c: &ConfidenceVector) -> Result<f64> {
    if !trace.covers_all() {
        return Err(Error::Dimension(
            "implicit loss needs predictions for every item".into(),
        ));
    }
    let n = trace.output.len();
    if c.len() != n {
        return Err(Error::Dimension(format!(
            "confidence has {} entries for {} items",
            c.len(),
            n
        )));
    }
    let weights = c.weights();
    let mut loss = 0.0;
    let mut observed = u.iter().peekable();
    for (j, &z) in trace.output.iter().enumerate() {
        match observed.peek() {
            Some(&(k, target)) if k == j => {
                loss += (z - target) * (z - target);
                observed.next();
            }
            _ => loss += weights[j] * z * z,
        }
    }
    Ok(loss)
}
