use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::error::{Error, Result};

/// Per-item weights on the errors of unobserved entries.
///
/// `c_j = c0 * f_j^omega / sum_k f_k^omega` with `f_j = |R_j| / sum_k |R_k|`;
/// items never observed get weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    weights: Vec<f64>,
    counts: Vec<usize>,
    c0: f64,
    omega: f64,
}

impl ConfidenceVector {
    /// Explicit weights, e.g. all zeros to switch reweighting off.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("confidence weights must be finite and >= 0".into()));
        }
        let c0 = weights.iter().sum();
        Ok(ConfidenceVector {
            counts: vec![0; weights.len()],
            weights,
            c0,
            omega: 0.0,
        })
    }

    pub fn uniform(num_items: usize, weight: f64) -> Result<Self> {
        Self::from_weights(vec![weight; num_items])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Items ordered from most to least popular (by observation count), ties by index.
    pub fn popularity_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        order
    }
}

pub fn compute_confidence(matrix: &InteractionMatrix, c0: f64, omega: f64) -> Result<ConfidenceVector> {
    if !(c0.is_finite() && c0 >= 0.0) || !omega.is_finite() {
        return Err(Error::Config(format!(
            "confidence needs finite c0 >= 0 and finite omega, got c0={} omega={}",
            c0, omega
        )));
    }
    let counts = matrix.item_counts().to_vec();
    let total: usize = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(Error::Degenerate(
            "item popularity is undefined for a matrix without observations".into(),
        ));
    }
    let powered: Vec<f64> = counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                (n as f64 / total as f64).powf(omega)
            }
        })
        .collect();
    let norm: f64 = powered.iter().sum();
    let weights = powered.iter().map(|p| c0 * p / norm).collect();
    Ok(ConfidenceVector {
        weights,
        counts,
        c0,
        omega,
    })
}
