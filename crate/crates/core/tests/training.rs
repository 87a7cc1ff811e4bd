use ncae::data::{InteractionMatrix, SparseVector};
use ncae::eval::evaluate_rmse;
use ncae::model::{backward, corrupt, train_epoch, training_forward, Checkpoint};
use ncae::optim::{AdamConfig, AdamState};
use ncae::pretrain::{pretrain_sr, pretrain_v, EpochRecord, PretrainPlan};
use ncae::{synthetic, Mode, ModelParams, Orientation, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn low_rank_matrix_is_fit_within_200_epochs() {
    let config = TrainConfig {
        dropout: 0.0,
        batch_size: 1,
        weight_decay: 0.0,
        optimizer: AdamConfig {
            learning_rate: 0.003,
            ..AdamConfig::default()
        },
        ..TrainConfig::explicit()
    };
    for seed in 0..3 {
        let data = synthetic::low_rank_explicit(20, 15, 2, 0.5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new(15, &[8], &mut rng).unwrap();
        let mut opt = AdamState::new(config.optimizer);
        for _ in 0..200 {
            train_epoch(&mut params, &mut opt, &data, &config, None, &mut rng).unwrap();
        }
        let rmse = evaluate_rmse(&params, &data, &data).unwrap().value;
        assert!(rmse < 0.1, "seed {}: training RMSE {}", seed, rmse);
    }
}

#[test]
fn never_observed_columns_are_masked() {
    // items 4 and 5 never appear in training
    let train = InteractionMatrix::from_triples(
        3,
        6,
        vec![(0, 0, 4.0), (0, 1, 2.0), (1, 2, 3.0), (2, 3, 5.0), (2, 0, 1.0)],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = ModelParams::new(6, &[4], &mut rng).unwrap();
    let mut perturbed = params.clone();
    for k in 0..4 {
        for j in [4, 5] {
            let w = perturbed.layer(0).weights.get(k, j);
            perturbed.layer_mut(0).weights.set(k, j, w + 0.7);
        }
    }
    let lambda = 0.02;
    let config = TrainConfig {
        weight_decay: lambda,
        ..TrainConfig::explicit()
    };
    for u in 0..3 {
        let row = train.row_vector(u);
        let c = corrupt(&row, 0.5, &mut rng).unwrap();
        let a = training_forward(&params, &c, &row, Mode::Explicit).unwrap();
        let b = training_forward(&perturbed, &c, &row, Mode::Explicit).unwrap();
        assert_eq!(a.output, b.output);
        let g = backward(&params, &a, &row, &config, None).unwrap();
        for k in 0..4 {
            for j in [4, 5] {
                assert_eq!(g.layers[0].weights.get(k, j), lambda * params.layer(0).weights.get(k, j));
            }
        }
    }
}

#[test]
fn explicit_trace_contains_only_observed_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::new(6, &[3], &mut rng).unwrap();
    // two observed ratings and one dropped, as in a masked-loss walkthrough
    let u = SparseVector::new(6, vec![0, 2, 4], vec![4.0, 2.0, 5.0]).unwrap();
    let c = corrupt(&u, 0.5, &mut rng).unwrap();
    let trace = training_forward(&params, &c, &u, Mode::Explicit).unwrap();
    assert_eq!(trace.output_indices.as_deref(), Some(&[0, 2, 4][..]));
    assert!(c.dropped.iter().all(|j| u.get(*j).is_some()));
}

fn losses(records: &[EpochRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.loss).collect()
}

#[test]
fn first_stage_loss_trends_down() {
    let data = synthetic::low_rank_explicit(20, 15, 2, 0.5, 1);
    // without dropout noise the epoch losses reflect the optimization alone
    let config = TrainConfig {
        dropout: 0.0,
        batch_size: 4,
        ..TrainConfig::explicit()
    };
    let plan = PretrainPlan {
        sr_epochs: 10,
        ..PretrainPlan::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ModelParams::new(15, &[8, 6], &mut rng).unwrap();
    let mut records = Vec::new();
    pretrain_sr(&mut params, &data, &config, &plan, None, &mut rng, &mut |r, _| {
        records.push(*r);
        Ok(())
    })
    .unwrap();
    let l = losses(&records);
    let averages: Vec<f64> = l.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    assert!(averages.windows(2).all(|w| w[1] <= w[0]), "{:?}", averages);
}

#[test]
fn output_stage_reduces_training_loss() {
    let data = synthetic::low_rank_explicit(20, 15, 2, 0.5, 2);
    let config = TrainConfig {
        batch_size: 4,
        ..TrainConfig::explicit()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = ModelParams::new(15, &[8, 6], &mut rng).unwrap();
    let initial = evaluate_rmse(&params, &data, &data).unwrap().value;
    pretrain_v(&mut params, &data, &config, &PretrainPlan::default(), None, &mut rng, &mut |_, _| Ok(()))
        .unwrap();
    let after = evaluate_rmse(&params, &data, &data).unwrap().value;
    assert!(after <= initial, "{} -> {}", initial, after);
}

#[test]
fn item_checkpoint_keeps_user_ids_as_inputs() {
    let data = synthetic::low_rank_explicit(6, 4, 2, 0.7, 0);
    let config = TrainConfig {
        orientation: Orientation::Item,
        ..TrainConfig::explicit()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::new(6, &[3], &mut rng).unwrap();
    let ckpt = Checkpoint::new(params, config, None, data.user_ids().to_vec(), data.item_ids().to_vec());
    let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
    assert_eq!(back, ckpt);
}
