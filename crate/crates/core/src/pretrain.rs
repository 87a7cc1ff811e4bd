//! Greedy layer-wise pre-training in three stages followed by fine-tuning.
//!
//! 1. `sr`: the first layer plus a temporary decoder back to `N` items is
//!    trained against the uncorrupted row with the masked rating loss.
//! 2. `dr`: every middle layer, bottom-up, is trained with its own temporary
//!    decoder to reconstruct the (frozen) activation of the layer below.
//! 3. `v`: only the output layer is trained, through the frozen network.
//!
//! Decoders live only inside their stage and never reach the returned
//! parameters.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{ConfidenceVector, InteractionMatrix, SparseVector};
use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::model::{corrupt, train_epoch, train_epoch_from, Activation, Layer, ModelParams};
use crate::optim::AdamState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainPlan {
    pub sr: bool,
    pub dr: bool,
    pub v: bool,
    pub sr_epochs: usize,
    pub dr_epochs: usize,
    pub v_epochs: usize,
}

impl Default for PretrainPlan {
    fn default() -> Self {
        PretrainPlan {
            sr: true,
            dr: true,
            v: true,
            sr_epochs: 10,
            dr_epochs: 10,
            v_epochs: 10,
        }
    }
}

impl PretrainPlan {
    /// No pre-training: fine-tuning starts from the random initialization.
    pub fn disabled() -> Self {
        PretrainPlan {
            sr: false,
            dr: false,
            v: false,
            ..Self::default()
        }
    }

    pub fn is_disabled(&self) -> bool {
        !(self.sr && self.sr_epochs > 0)
            && !(self.dr && self.dr_epochs > 0)
            && !(self.v && self.v_epochs > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sr,
    Dr,
    V,
    FineTune,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Sr => "sr",
            Stage::Dr => "dr",
            Stage::V => "v",
            Stage::FineTune => "fine_tune",
        })
    }
}

/// Progress of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    /// Layer being trained by a `dr` stage.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    pub epoch: usize,
    /// Mean per-user training loss; absent for the fine-tuning epoch-0 snapshot.
    pub loss: Option<f64>,
}

/// Called after every epoch with the current parameters.
pub type Observer<'a> = dyn FnMut(&EpochRecord, &ModelParams) -> Result<()> + 'a;

/// Stage 1: train `W^1, b^1` with a temporary `N x K_1` decoder.
pub fn pretrain_sr<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    plan: &PretrainPlan,
    confidence: Option<&ConfidenceVector>,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    if !plan.sr || plan.sr_epochs == 0 {
        return Ok(());
    }
    let n = params.num_items();
    let k1 = params.layer(0).out_dim();
    let decoder = Layer::xavier(n, k1, rng)?;
    let mut stack = ModelParams::from_layers(vec![params.layer(0).clone(), decoder], Activation::Tanh)?;
    let mut optimizer = AdamState::new(config.optimizer);
    for epoch in 1..=plan.sr_epochs {
        let loss = train_epoch(&mut stack, &mut optimizer, train, config, confidence, rng)?;
        observer(
            &EpochRecord {
                stage: Stage::Sr,
                layer: Some(0),
                epoch,
                loss: Some(loss),
            },
            &stack,
        )?;
    }
    *params.layer_mut(0) = stack.layer(0).clone();
    Ok(())
}

/// Activation `z^depth` of a row through the first `depth` layers.
pub fn encode(params: &ModelParams, input: &SparseVector, depth: usize) -> Vec<f64> {
    let first = params.layer(0);
    let mut pre = first.bias.clone();
    for (j, v) in input.iter() {
        for (k, p) in pre.iter_mut().enumerate() {
            *p += first.weights.get(k, j) * v;
        }
    }
    let mut h: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
    for layer in &params.layers()[1..depth] {
        h = layer.affine_tanh(&h);
    }
    h
}

/// Mean squared reconstruction error over all users and elements:
/// `sum_i sum_k (decoder(encoder(h_i))_k - h_ik)^2 / (B * K)`.
pub fn reconstruction_loss(encoder: &Layer, decoder: &Layer, inputs: &[Vec<f64>]) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    let k = encoder.in_dim();
    let total: f64 = inputs
        .iter()
        .map(|h| {
            let r = decoder.affine_tanh(&encoder.affine_tanh(h));
            r.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    total / (inputs.len() * k) as f64
}

/// Loss and gradients (including `lambda * theta`) of the reconstruction
/// objective for one batch, for the encoder and the decoder.
pub fn reconstruction_gradients(
    encoder: &Layer,
    decoder: &Layer,
    inputs: &[Vec<f64>],
    lambda: f64,
) -> (f64, Layer, Layer) {
    let mut g_enc = encoder.zeros_like();
    let mut g_dec = decoder.zeros_like();
    let k = encoder.in_dim();
    let norm = (inputs.len().max(1) * k) as f64;
    let mut total = 0.0;
    for h in inputs {
        let e = encoder.affine_tanh(h);
        let r = decoder.affine_tanh(&e);
        let delta_dec: Vec<f64> = r
            .iter()
            .zip(h)
            .map(|(ri, hi)| {
                total += (ri - hi) * (ri - hi);
                2.0 * (ri - hi) / norm * (1.0 - ri * ri)
            })
            .collect();
        for (row, d) in delta_dec.iter().enumerate() {
            axpy(*d, &e, g_dec.weights.row_mut(row));
        }
        axpy(1.0, &delta_dec, &mut g_dec.bias);
        let mut de = vec![0.0; e.len()];
        decoder.weights.add_transpose_product(&delta_dec, &mut de);
        let delta_enc: Vec<f64> = de.iter().zip(&e).map(|(g, z)| g * (1.0 - z * z)).collect();
        for (row, d) in delta_enc.iter().enumerate() {
            axpy(*d, h, g_enc.weights.row_mut(row));
        }
        axpy(1.0, &delta_enc, &mut g_enc.bias);
    }
    if lambda != 0.0 {
        g_enc.add_scaled(lambda, encoder);
        g_dec.add_scaled(lambda, decoder);
    }
    (total / norm, g_enc, g_dec)
}

/// Stage 2: middle layers `1..L-1`, one at a time, as reconstruction autoencoders
/// of the activation below. The encoder input (and target) is computed from the
/// corrupted row through the frozen lower layers. No-op for two-layer models.
pub fn pretrain_dr<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    plan: &PretrainPlan,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    if !plan.dr || plan.dr_epochs == 0 {
        return Ok(());
    }
    let users: Vec<usize> = (0..train.num_users())
        .filter(|&u| !train.row(u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::Config("training set has no observations".into()));
    }
    for layer in 1..params.num_layers() - 1 {
        let in_dim = params.layer(layer).in_dim();
        let out_dim = params.layer(layer).out_dim();
        let mut decoder = Layer::xavier(in_dim, out_dim, rng)?;
        let mut encoder = params.layer(layer).clone();
        let mut optimizer = AdamState::new(config.optimizer);
        for epoch in 1..=plan.dr_epochs {
            let mut order = users.clone();
            order.shuffle(rng);
            let mut epoch_total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let inputs = chunk
                    .iter()
                    .map(|&u| {
                        let c = corrupt(&train.row_vector(u), config.dropout, rng)?;
                        Ok(encode(params, &c.input, layer))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (loss, g_enc, g_dec) =
                    reconstruction_gradients(&encoder, &decoder, &inputs, config.weight_decay);
                epoch_total += loss * chunk.len() as f64;
                let grads: Vec<&[f64]> = g_enc.buffers().into_iter().chain(g_dec.buffers()).collect();
                let mut bufs: Vec<&mut [f64]> = encoder
                    .buffers_mut()
                    .into_iter()
                    .chain(decoder.buffers_mut())
                    .collect();
                optimizer.step(&mut bufs, &grads)?;
            }
            *params.layer_mut(layer) = encoder.clone();
            observer(
                &EpochRecord {
                    stage: Stage::Dr,
                    layer: Some(layer),
                    epoch,
                    loss: Some(epoch_total / users.len() as f64),
                },
                params,
            )?;
        }
    }
    Ok(())
}

/// Stage 3: only the output layer, with everything below frozen.
pub fn pretrain_v<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    plan: &PretrainPlan,
    confidence: Option<&ConfidenceVector>,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    if !plan.v || plan.v_epochs == 0 {
        return Ok(());
    }
    let top = params.num_layers() - 1;
    let mut optimizer = AdamState::new(config.optimizer);
    for epoch in 1..=plan.v_epochs {
        let loss = train_epoch_from(params, &mut optimizer, train, config, confidence, top, rng)?;
        observer(
            &EpochRecord {
                stage: Stage::V,
                layer: Some(top),
                epoch,
                loss: Some(loss),
            },
            params,
        )?;
    }
    Ok(())
}

/// Supervised training of all layers for `config.epochs` epochs. The observer
/// first sees an epoch-0 record carrying the starting parameters.
pub fn fine_tune<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    confidence: Option<&ConfidenceVector>,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    observer(
        &EpochRecord {
            stage: Stage::FineTune,
            layer: None,
            epoch: 0,
            loss: None,
        },
        params,
    )?;
    let mut optimizer = AdamState::new(config.optimizer);
    for epoch in 1..=config.epochs {
        let loss = train_epoch(params, &mut optimizer, train, config, confidence, rng)?;
        observer(
            &EpochRecord {
                stage: Stage::FineTune,
                layer: None,
                epoch,
                loss: Some(loss),
            },
            params,
        )?;
    }
    Ok(())
}

/// Runs the enabled pre-training stages in order.
pub fn pretrain<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    plan: &PretrainPlan,
    confidence: Option<&ConfidenceVector>,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    pretrain_sr(params, train, config, plan, confidence, rng, observer)?;
    pretrain_dr(params, train, config, plan, rng, observer)?;
    pretrain_v(params, train, config, plan, confidence, rng, observer)?;
    Ok(())
}

/// Pre-training per `plan`, then fine-tuning.
pub fn fit<R: Rng + ?Sized>(
    params: &mut ModelParams,
    train: &InteractionMatrix,
    config: &TrainConfig,
    plan: &PretrainPlan,
    confidence: Option<&ConfidenceVector>,
    rng: &mut R,
    observer: &mut Observer<'_>,
) -> Result<()> {
    config.validate()?;
    pretrain(params, train, config, plan, confidence, rng, observer)?;
    fine_tune(params, train, config, confidence, rng, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use crate::model::predict_dense;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> impl FnMut(&EpochRecord, &ModelParams) -> Result<()> {
        |_, _| Ok(())
    }

    fn fixture() -> InteractionMatrix {
        synthetic::low_rank_explicit(20, 15, 2, 0.5, 3)
    }

    #[test]
    fn zero_epoch_stages_are_identity() {
        let train = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
        let before = params.clone();
        let plan = PretrainPlan {
            sr_epochs: 0,
            dr_epochs: 0,
            v_epochs: 0,
            ..PretrainPlan::default()
        };
        pretrain(&mut params, &train, &TrainConfig::explicit(), &plan, None, &mut rng, &mut quiet())
            .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn sr_touches_only_first_layer_and_records_full_width_decoder() {
        let train = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
        let before = params.clone();
        let plan = PretrainPlan {
            sr_epochs: 3,
            ..PretrainPlan::default()
        };
        let mut widths = Vec::new();
        let mut obs = |_: &EpochRecord, p: &ModelParams| {
            widths.push(p.dims());
            Ok(())
        };
        pretrain_sr(&mut params, &train, &TrainConfig::explicit(), &plan, None, &mut rng, &mut obs)
            .unwrap();
        assert!(widths.iter().all(|d| d == &vec![15, 6, 15]));
        assert_ne!(params.layer(0), before.layer(0));
        assert_eq!(params.layer(1), before.layer(1));
        assert_eq!(params.layer(2), before.layer(2));
        assert_eq!(params.dims(), vec![15, 6, 4, 15]);
    }

    #[test]
    fn dr_is_noop_for_two_layers() {
        let train = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ModelParams::new(15, &[6], &mut rng).unwrap();
        let before = params.clone();
        pretrain_dr(
            &mut params,
            &train,
            &TrainConfig::explicit(),
            &PretrainPlan::default(),
            &mut rng,
            &mut quiet(),
        )
        .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn dr_freezes_first_and_last_layers() {
        let train = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
        let before = params.clone();
        pretrain_dr(
            &mut params,
            &train,
            &TrainConfig::explicit(),
            &PretrainPlan::default(),
            &mut rng,
            &mut quiet(),
        )
        .unwrap();
        assert_eq!(params.layer(0), before.layer(0));
        assert_eq!(params.layer(2), before.layer(2));
        assert_ne!(params.layer(1), before.layer(1));
    }

    #[test]
    fn reconstruction_loss_matches_brute_force() {
        // 3 users, K_1 = 4
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = Layer::xavier(2, 4, &mut rng).unwrap();
        let dec = Layer::xavier(4, 2, &mut rng).unwrap();
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .collect();
        let mut total = 0.0;
        for h in &inputs {
            for k in 0..4 {
                let mut e = [0.0; 2];
                for (r, e_r) in e.iter_mut().enumerate() {
                    let mut a = enc.bias[r];
                    for c in 0..4 {
                        a += enc.weights.get(r, c) * h[c];
                    }
                    *e_r = a.tanh();
                }
                let mut a = dec.bias[k];
                for (c, e_c) in e.iter().enumerate() {
                    a += dec.weights.get(k, c) * e_c;
                }
                total += (a.tanh() - h[k]).powi(2);
            }
        }
        let expected = total / 12.0;
        assert!((reconstruction_loss(&enc, &dec, &inputs) - expected).abs() < 1e-12);
        let (loss, _, _) = reconstruction_gradients(&enc, &dec, &inputs, 0.0);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_leaves_regularizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = vec![0.3, -0.2, 0.5];
        let enc = Layer::xavier(2, 3, &mut rng).unwrap();
        let mut dec = Layer::zeros(3, 2);
        dec.bias = h.iter().map(|v: &f64| v.atanh()).collect();
        let inputs = vec![h];
        assert!(reconstruction_loss(&enc, &dec, &inputs) < 1e-30);
        let lambda = 0.1;
        let (_, g_enc, g_dec) = reconstruction_gradients(&enc, &dec, &inputs, lambda);
        let mut expected_enc = enc.zeros_like();
        expected_enc.add_scaled(lambda, &enc);
        let mut expected_dec = dec.zeros_like();
        expected_dec.add_scaled(lambda, &dec);
        for (a, b) in g_enc.weights.as_slice().iter().zip(expected_enc.weights.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g_dec.bias.iter().zip(&expected_dec.bias) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Layer::xavier(3, 4, &mut rng).unwrap();
        let dec = Layer::xavier(4, 3, &mut rng).unwrap();
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .collect();
        let lambda = 0.02;
        let objective = |e: &Layer, d: &Layer| {
            let reg: f64 = e
                .weights
                .as_slice()
                .iter()
                .chain(&e.bias)
                .chain(d.weights.as_slice())
                .chain(&d.bias)
                .map(|v| v * v)
                .sum();
            reconstruction_loss(e, d, &inputs) + lambda / 2.0 * reg
        };
        let (_, g_enc, _) = reconstruction_gradients(&enc, &dec, &inputs, lambda);
        let h = 1e-5;
        for i in 0..enc.weights.as_slice().len() {
            let mut plus = enc.clone();
            plus.weights.as_mut_slice()[i] += h;
            let mut minus = enc.clone();
            minus.weights.as_mut_slice()[i] -= h;
            let numeric = (objective(&plus, &dec) - objective(&minus, &dec)) / (2.0 * h);
            let analytic = g_enc.weights.as_slice()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{} vs {}", analytic, numeric);
        }
    }

    #[test]
    fn v_stage_freezes_lower_layers() {
        let train = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
        let before = params.clone();
        pretrain_v(
            &mut params,
            &train,
            &TrainConfig::explicit(),
            &PretrainPlan::default(),
            None,
            &mut rng,
            &mut quiet(),
        )
        .unwrap();
        assert_eq!(params.layer(0), before.layer(0));
        assert_eq!(params.layer(1), before.layer(1));
        assert_ne!(params.layer(2), before.layer(2));
    }

    #[test]
    fn zero_output_layer_predicts_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
        params.layer_mut(2).fill(0.0);
        let u = fixture().row_vector(0);
        let preds = predict_dense(&params, &u, Mode::Explicit).unwrap();
        assert!(preds.iter().all(|p| *p == 2.75));
    }

    #[test]
    fn fine_tune_without_pretraining_equals_plain_training() {
        let train = fixture();
        let config = TrainConfig {
            epochs: 4,
            ..TrainConfig::explicit()
        };
        let mut rng_a = ChaCha8Rng::seed_from_u64(10);
        let mut a = ModelParams::new(15, &[5], &mut rng_a).unwrap();
        fit(&mut a, &train, &config, &PretrainPlan::disabled(), None, &mut rng_a, &mut quiet())
            .unwrap();

        let mut rng_b = ChaCha8Rng::seed_from_u64(10);
        let mut b = ModelParams::new(15, &[5], &mut rng_b).unwrap();
        let mut opt = AdamState::new(config.optimizer);
        for _ in 0..4 {
            train_epoch(&mut b, &mut opt, &train, &config, None, &mut rng_b).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn fit_is_deterministic() {
        let train = fixture();
        let config = TrainConfig {
            epochs: 3,
            ..TrainConfig::explicit()
        };
        let plan = PretrainPlan {
            sr_epochs: 2,
            dr_epochs: 2,
            v_epochs: 2,
            ..PretrainPlan::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut p = ModelParams::new(15, &[6, 4], &mut rng).unwrap();
            fit(&mut p, &train, &config, &plan, None, &mut rng, &mut quiet()).unwrap();
            p
        };
        assert_eq!(run(), run());
    }
}
