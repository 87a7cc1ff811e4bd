use rand::Rng;

use super::params::ModelParams;
use crate::config::Mode;
use crate::data::SparseVector;
use crate::error::{Error, Result};

/// Affine map from tanh range `[-1, 1]` onto the rating scale `[0.5, 5.0]`.
pub const RATING_SCALE: f64 = 2.25;
pub const RATING_OFFSET: f64 = 2.75;

#[inline]
pub fn to_prediction(mode: Mode, z: f64) -> f64 {
    match mode {
        Mode::Explicit => RATING_SCALE * z + RATING_OFFSET,
        Mode::Implicit => z,
    }
}

/// `d prediction / d z`
#[inline]
pub fn prediction_slope(mode: Mode) -> f64 {
    match mode {
        Mode::Explicit => RATING_SCALE,
        Mode::Implicit => 1.0,
    }
}

/// A corrupted input row together with the positions that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub input: SparseVector,
    /// Dropped indices `C`, increasing; always a subset of the source row's indices.
    pub dropped: Vec<usize>,
}

impl Corrupted {
    /// The uncorrupted row, as used at inference time.
    pub fn clean(u: &SparseVector) -> Self {
        Corrupted {
            input: u.clone(),
            dropped: Vec::new(),
        }
    }
}

/// Input dropout: each observed entry is zeroed with probability `q`,
/// survivors are scaled by `1 / (1 - q)`.
pub fn corrupt<R: Rng + ?Sized>(u: &SparseVector, q: f64, rng: &mut R) -> Result<Corrupted> {
    if !(q >= 0.0 && q < 1.0) {
        return Err(Error::Config(format!("dropout ratio must lie in [0, 1), got {}", q)));
    }
    if q == 0.0 {
        return Ok(Corrupted::clean(u));
    }
    let scale = 1.0 / (1.0 - q);
    let mut indices = Vec::with_capacity(u.nnz());
    let mut values = Vec::with_capacity(u.nnz());
    let mut dropped = Vec::new();
    for (j, v) in u.iter() {
        if rng.gen::<f64>() < q {
            dropped.push(j);
        } else {
            indices.push(j);
            values.push(v * scale);
        }
    }
    Ok(Corrupted {
        input: SparseVector::from_parts_unchecked(u.dim(), indices, values),
        dropped,
    })
}

/// Which output units to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputSet {
    All,
    /// Increasing item indices.
    Indices(Vec<usize>),
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub input: SparseVector,
    pub dropped: Vec<usize>,
    /// Hidden activations `z^1 .. z^{L-1}`.
    pub hidden: Vec<Vec<f64>>,
    /// `None` when every output unit was evaluated.
    pub output_indices: Option<Vec<usize>>,
    /// Output activations `z^L` at the evaluated units.
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output_item(&self, pos: usize) -> usize {
        match &self.output_indices {
            Some(idx) => idx[pos],
            None => pos,
        }
    }

    /// Raw output activation for item `j`, if it was evaluated.
    pub fn output_at(&self, j: usize) -> Option<f64> {
        match &self.output_indices {
            Some(idx) => idx.binary_search(&j).ok().map(|p| self.output[p]),
            None => self.output.get(j).copied(),
        }
    }

    /// Mode-scaled prediction for item `j`, if it was evaluated.
    pub fn prediction_at(&self, j: usize) -> Option<f64> {
        self.output_at(j).map(|z| to_prediction(self.mode, z))
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.output.iter().map(|&z| to_prediction(self.mode, z)).collect()
    }

    pub fn covers_all(&self) -> bool {
        self.output_indices.is_none()
    }
}

/// Forward pass that touches only the non-zero input columns of the first
/// layer and only the requested output rows of the last one.
pub fn sparse_forward(
    params: &ModelParams,
    corrupted: &Corrupted,
    outputs: OutputSet,
    mode: Mode,
) -> Result<ForwardTrace> {
    let n = params.num_items();
    let input = &corrupted.input;
    if input.dim() != n {
        return Err(Error::Dimension(format!(
            "input has dimension {} but the model expects {}",
            input.dim(),
            n
        )));
    }
    let layers = params.layers();
    let first = &layers[0];
    let k1 = first.out_dim();

    // z^1 = tanh(b^1 + sum_j W^1[:, j] * u_j)
    let mut pre = first.bias.clone();
    for (j, v) in input.iter() {
        for (k, p) in pre.iter_mut().enumerate().take(k1) {
            *p += first.weights.get(k, j) * v;
        }
    }
    let mut hidden = Vec::with_capacity(layers.len() - 1);
    hidden.push(pre.into_iter().map(f64::tanh).collect::<Vec<_>>());

    for layer in &layers[1..layers.len() - 1] {
        let below = hidden.last().unwrap();
        let z = layer.affine_tanh(below);
        hidden.push(z);
    }

    let top = layers.last().unwrap();
    let h = hidden.last().unwrap();
    let act = params.output_activation();
    let (output_indices, output) = match outputs {
        OutputSet::All => {
            let z = (0..n)
                .map(|j| act.apply(top.bias[j] + crate::linalg::dot(top.weights.row(j), h)))
                .collect();
            (None, z)
        }
        OutputSet::Indices(idx) => {
            if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
                return Err(Error::Dimension(format!("output index {} >= {}", bad, n)));
            }
            let z = idx
                .iter()
                .map(|&j| act.apply(top.bias[j] + crate::linalg::dot(top.weights.row(j), h)))
                .collect();
            (Some(idx), z)
        }
    };

    Ok(ForwardTrace {
        mode,
        input: input.clone(),
        dropped: corrupted.dropped.clone(),
        hidden,
        output_indices,
        output,
    })
}

/// Training-time forward: explicit mode evaluates outputs at the observed
/// items of `target` only, implicit mode evaluates all of them.
pub fn training_forward(
    params: &ModelParams,
    corrupted: &Corrupted,
    target: &SparseVector,
    mode: Mode,
) -> Result<ForwardTrace> {
    let outputs = match mode {
        Mode::Explicit => OutputSet::Indices(target.indices().to_vec()),
        Mode::Implicit => OutputSet::All,
    };
    sparse_forward(params, corrupted, outputs, mode)
}

/// Dense prediction for every item from the uncorrupted row.
pub fn predict_dense(params: &ModelParams, u: &SparseVector, mode: Mode) -> Result<Vec<f64>> {
    Ok(sparse_forward(params, &Corrupted::clean(u), OutputSet::All, mode)?.predictions())
}

impl super::params::Layer {
    /// `tanh(W x + b)`
    pub fn affine_tanh(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .affine(x, &self.bias)
            .into_iter()
            .map(f64::tanh)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::params::{Activation, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_forward(params: &ModelParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = params.num_layers() - 1;
        for (l, layer) in params.layers().iter().enumerate() {
            let pre = layer.weights.affine(&h, &layer.bias);
            h = if l == last {
                pre.into_iter().map(|v| params.output_activation().apply(v)).collect()
            } else {
                pre.into_iter().map(f64::tanh).collect()
            };
        }
        h
    }

    #[test]
    fn q_zero_is_identity() {
        let u = SparseVector::new(5, vec![1, 3], vec![4.0, 2.0]).unwrap();
        let c = corrupt(&u, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.input, u);
        assert!(c.dropped.is_empty());
    }

    #[test]
    fn survivors_are_rescaled() {
        let u = SparseVector::new(8, (0..8).collect(), vec![3.0; 8]).unwrap();
        let c = corrupt(&u, 0.5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(c.input.values().iter().all(|v| *v == 6.0));
        assert_eq!(c.input.nnz() + c.dropped.len(), 8);
        for j in &c.dropped {
            assert!(c.input.get(*j).is_none());
        }
    }

    #[test]
    fn corruption_is_unbiased() {
        let u = SparseVector::new(4, vec![0, 2, 3], vec![1.0, 3.0, 5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 10_000;
        let mut sums = vec![0.0; 4];
        for _ in 0..trials {
            let c = corrupt(&u, 0.5, &mut rng).unwrap();
            for (j, v) in c.input.iter() {
                sums[j] += v;
            }
        }
        for (j, v) in u.iter() {
            let mean = sums[j] / trials as f64;
            assert!((mean - v).abs() / v < 0.02, "item {} mean {}", j, mean);
        }
    }

    #[test]
    fn rejects_q_of_one() {
        let u = SparseVector::empty(3);
        assert!(matches!(
            corrupt(&u, 1.0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_row_gives_tanh_of_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::new(4, &[3], &mut rng).unwrap();
        p.layer_mut(0).bias = vec![0.2, -0.4, 1.0];
        let t = sparse_forward(
            &p,
            &Corrupted::clean(&SparseVector::empty(4)),
            OutputSet::All,
            Mode::Implicit,
        )
        .unwrap();
        assert_eq!(t.hidden[0], vec![0.2f64.tanh(), (-0.4f64).tanh(), 1.0f64.tanh()]);
    }

    #[test]
    fn reshape_bounds() {
        assert_eq!(to_prediction(Mode::Explicit, 1.0), 5.0);
        assert_eq!(to_prediction(Mode::Explicit, -1.0), 0.5);
        assert_eq!(to_prediction(Mode::Implicit, 0.3), 0.3);
    }

    #[test]
    fn sparse_matches_dense_forward() {
        // 5 users, 6 items, three-layer network
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut p = ModelParams::new(6, &[4, 3], &mut rng).unwrap();
        for layer in p.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        for _ in 0..5 {
            let idx: Vec<usize> = (0..6).filter(|_| rng.gen_bool(0.5)).collect();
            let vals: Vec<f64> = idx.iter().map(|_| rng.gen_range(0.5..5.0)).collect();
            let u = SparseVector::new(6, idx, vals).unwrap();
            let sparse = sparse_forward(&p, &Corrupted::clean(&u), OutputSet::All, Mode::Implicit)
                .unwrap()
                .output;
            let dense = dense_forward(&p, &u.to_dense());
            for (a, b) in sparse.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_outputs_match_full_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::new(6, &[3], &mut rng).unwrap();
        let u = SparseVector::new(6, vec![1, 4], vec![2.0, 4.5]).unwrap();
        let c = Corrupted::clean(&u);
        let all = sparse_forward(&p, &c, OutputSet::All, Mode::Explicit).unwrap();
        let part = training_forward(&p, &c, &u, Mode::Explicit).unwrap();
        assert_eq!(part.output_indices.as_deref(), Some(&[1usize, 4][..]));
        for j in [1, 4] {
            assert_eq!(part.prediction_at(j), all.prediction_at(j));
        }
        assert!(part.prediction_at(0).is_none());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::new(6, &[3], &mut rng).unwrap();
        let u = SparseVector::empty(5);
        assert!(matches!(
            predict_dense(&p, &u, Mode::Explicit),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn identity_output_is_linear() {
        let w1 = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let w2 = Matrix::from_vec(2, 1, vec![10.0, -10.0]).unwrap();
        let p = ModelParams::from_layers(
            vec![
                Layer { weights: w1, bias: vec![0.0] },
                Layer { weights: w2, bias: vec![0.0, 0.0] },
            ],
            Activation::Identity,
        )
        .unwrap();
        let u = SparseVector::new(2, vec![0], vec![1.0]).unwrap();
        let out = predict_dense(&p, &u, Mode::Implicit).unwrap();
        assert!((out[0] - 10.0 * 1f64.tanh()).abs() < 1e-15);
    }
}
