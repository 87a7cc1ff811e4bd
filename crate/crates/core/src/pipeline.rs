//! End-to-end data preparation, training and evaluation shared by the CLI
//! and the tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, Orientation, TrainConfig};
use crate::data::{augment, compute_confidence, split, ConfidenceVector, InteractionMatrix, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_leave_one_out, evaluate_rmse, EvalReport};
use crate::model::ModelParams;
use crate::pretrain::{fit, EpochRecord, PretrainPlan};

/// Data ready for training: oriented, binarized in implicit mode, split, and
/// (implicit only) with confidence and augmented rows derived from the
/// training part.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    /// `split.train` followed by any synthetic rows.
    pub training: InteractionMatrix,
    pub confidence: Option<ConfidenceVector>,
    pub synthetic_users: usize,
}

impl Prepared {
    pub fn num_items(&self) -> usize {
        self.split.train.num_items()
    }
}

/// Matrix as seen by the model: rows are users, or items when item-based.
pub fn orient(raw: &InteractionMatrix, config: &TrainConfig) -> InteractionMatrix {
    let oriented = match config.orientation {
        Orientation::User => raw.clone(),
        Orientation::Item => raw.transpose(),
    };
    match config.mode {
        Mode::Explicit => oriented,
        Mode::Implicit => oriented.binarize(),
    }
}

pub fn prepare(raw: &InteractionMatrix, config: &TrainConfig, spec: &SplitSpec) -> Result<Prepared> {
    config.validate()?;
    if config.mode == Mode::Implicit && !matches!(spec, SplitSpec::LeaveOneOut { .. }) {
        return Err(Error::Config(
            "implicit mode is evaluated with the leave-one-out protocol".into(),
        ));
    }
    let data = orient(raw, config);
    let split = split(&data, spec)?;
    let (training, confidence, synthetic_users) = match config.mode {
        Mode::Explicit => (split.train.clone(), None, 0),
        Mode::Implicit => {
            let confidence = compute_confidence(&split.train, config.c0, config.omega)?;
            match &config.augment {
                Some(aug) => {
                    let out = augment(&split.train, aug, &confidence)?;
                    let added = out.added();
                    (out.matrix, Some(confidence), added)
                }
                None => (split.train.clone(), Some(confidence), 0),
            }
        }
    };
    Ok(Prepared {
        split,
        training,
        confidence,
        synthetic_users,
    })
}

/// Fresh parameters from `config.seed`, pre-trained per `plan` and fine-tuned.
pub fn train(
    prepared: &Prepared,
    hidden: &[usize],
    config: &TrainConfig,
    plan: &PretrainPlan,
    observer: &mut dyn FnMut(&EpochRecord, &ModelParams) -> Result<()>,
) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::new(prepared.num_items(), hidden, &mut rng)?;
    fit(
        &mut params,
        &prepared.training,
        config,
        plan,
        prepared.confidence.as_ref(),
        &mut rng,
        observer,
    )?;
    Ok(params)
}

/// RMSE in explicit mode, HR and NDCG at `cutoffs` in implicit mode, on `target`.
pub fn evaluate(
    params: &ModelParams,
    mode: Mode,
    train: &InteractionMatrix,
    target: &InteractionMatrix,
    cutoffs: &[usize],
) -> Result<Vec<EvalReport>> {
    match mode {
        Mode::Explicit => Ok(vec![evaluate_rmse(params, train, target)?]),
        Mode::Implicit => evaluate_leave_one_out(params, train, target, cutoffs),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (parallel evaluation).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    Ok(pool.install(f))
}
