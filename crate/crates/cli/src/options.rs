//! Command-line flags, the optional TOML run file, and how they combine.
//! Flags win over the file; the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use ncae::data::{AugmentConfig, Delimiter, SplitSpec};
use ncae::optim::AdamConfig;
use ncae::pretrain::PretrainPlan;
use ncae::{Mode, Orientation, TrainConfig};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationArg {
    User,
    Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Ratio,
    LeaveOneOut,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Ratings file with `user item rating [timestamp]` lines.
    #[arg(long)]
    pub data: PathBuf,
    /// Field separator: tab, `::` or `,`.
    #[arg(long, default_value = "tab", value_parser = parse_delimiter)]
    pub delimiter: Delimiter,
}

fn parse_delimiter(s: &str) -> std::result::Result<Delimiter, String> {
    s.parse().map_err(|e: ncae::Error| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct SplitArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
    /// Train, validation and test fractions for the ratio protocol.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// TOML file with any of the training options below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub orientation: Option<OrientationArg>,
    /// Hidden layer sizes, e.g. `500` or `500,300`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Total confidence for unobserved items (implicit only).
    #[arg(long)]
    pub c0: Option<f64>,
    /// Popularity exponent (implicit only).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Density threshold below which users are augmented (implicit only).
    #[arg(long)]
    pub augment_epsilon: Option<f64>,
    /// Share of a sparse user's most popular items dropped (implicit only).
    #[arg(long)]
    pub augment_ratio: Option<f64>,
    #[arg(long)]
    pub no_augment: bool,
    /// Epochs for every pre-training stage; 0 disables pre-training.
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub sr_epochs: Option<usize>,
    #[arg(long)]
    pub dr_epochs: Option<usize>,
    #[arg(long)]
    pub v_epochs: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Ranking cutoffs logged for implicit validation.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Keys accepted in the `--config` file; names match the long flags with `_`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    mode: Option<ModeArg>,
    orientation: Option<OrientationArg>,
    hidden: Option<Vec<usize>>,
    dropout: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    c0: Option<f64>,
    omega: Option<f64>,
    augment_epsilon: Option<f64>,
    augment_ratio: Option<f64>,
    augment: Option<bool>,
    pretrain_epochs: Option<usize>,
    sr_epochs: Option<usize>,
    dr_epochs: Option<usize>,
    v_epochs: Option<usize>,
    protocol: Option<Protocol>,
    ratios: Option<Vec<f64>>,
    split_seed: Option<u64>,
    cutoffs: Option<Vec<usize>>,
    seed: Option<u64>,
    threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {}", path.display(), e)).into())
    }
}

/// Everything a training run needs, resolved and checked.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub plan: PretrainPlan,
    pub split: SplitSpec,
    pub cutoffs: Vec<usize>,
}

pub const DEFAULT_HIDDEN: usize = 500;
pub const DEFAULT_CUTOFFS: [usize; 2] = [10, 100];

impl TrainArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        macro_rules! pick {
            ($field:ident) => {
                self.$field.clone().or(file.$field.clone())
            };
        }

        let mode = pick!(mode).unwrap_or(ModeArg::Explicit);
        let mut train = match mode {
            ModeArg::Explicit => TrainConfig::explicit(),
            ModeArg::Implicit => TrainConfig::implicit(),
        };

        let implicit_only = [
            ("c0", pick!(c0).is_some()),
            ("omega", pick!(omega).is_some()),
            ("augment-epsilon", pick!(augment_epsilon).is_some()),
            ("augment-ratio", pick!(augment_ratio).is_some()),
            ("no-augment", self.no_augment || file.augment.is_some()),
        ];
        if mode == ModeArg::Explicit {
            if let Some((name, _)) = implicit_only.iter().find(|(_, set)| *set) {
                return Err(UsageError(format!("--{} applies to implicit mode only", name)).into());
            }
        }

        train.orientation = match pick!(orientation).unwrap_or(OrientationArg::User) {
            OrientationArg::User => Orientation::User,
            OrientationArg::Item => Orientation::Item,
        };
        if let Some(v) = pick!(dropout) {
            train.dropout = v;
        }
        if let Some(v) = pick!(alpha) {
            train.alpha = v;
        }
        if let Some(v) = pick!(beta) {
            train.beta = v;
        }
        if let Some(v) = pick!(weight_decay) {
            train.weight_decay = v;
        }
        if let Some(v) = pick!(batch_size) {
            train.batch_size = v;
        }
        if let Some(v) = pick!(epochs) {
            train.epochs = v;
        }
        if let Some(v) = pick!(learning_rate) {
            train.optimizer = AdamConfig {
                learning_rate: v,
                ..train.optimizer
            };
        }
        if let Some(v) = pick!(c0) {
            train.c0 = v;
        }
        if let Some(v) = pick!(omega) {
            train.omega = v;
        }
        if train.mode == Mode::Implicit {
            let enabled = !self.no_augment && file.augment.unwrap_or(true);
            train.augment = if enabled {
                let mut aug = AugmentConfig::default();
                if let Some(v) = pick!(augment_epsilon) {
                    aug.epsilon = v;
                }
                if let Some(v) = pick!(augment_ratio) {
                    aug.drop_ratio = v;
                }
                Some(aug)
            } else {
                None
            };
        }
        if let Some(v) = pick!(seed) {
            train.seed = v;
        }
        if let Some(v) = pick!(threads) {
            train.threads = v;
        }
        train.validate().map_err(|e| UsageError(e.to_string()))?;

        let hidden = pick!(hidden).unwrap_or_else(|| vec![DEFAULT_HIDDEN]);
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(UsageError("--hidden needs positive layer sizes".into()).into());
        }

        let mut plan = PretrainPlan::default();
        if let Some(n) = pick!(pretrain_epochs) {
            plan.sr_epochs = n;
            plan.dr_epochs = n;
            plan.v_epochs = n;
        }
        if let Some(n) = pick!(sr_epochs) {
            plan.sr_epochs = n;
        }
        if let Some(n) = pick!(dr_epochs) {
            plan.dr_epochs = n;
        }
        if let Some(n) = pick!(v_epochs) {
            plan.v_epochs = n;
        }

        let split_args = SplitArgs {
            protocol: self.split.protocol.or(file.protocol),
            ratios: self.split.ratios.clone().or(file.ratios.clone()),
            split_seed: self.split.split_seed.or(file.split_seed),
        };
        let split = split_args.resolve(train.mode, train.seed)?;
        if train.mode == Mode::Implicit && !matches!(split, SplitSpec::LeaveOneOut { .. }) {
            return Err(UsageError("implicit mode uses the leave-one-out protocol".into()).into());
        }

        let cutoffs = pick!(cutoffs);
        if train.mode == Mode::Explicit && cutoffs.is_some() {
            return Err(UsageError("--cutoffs apply to implicit (ranking) runs only".into()).into());
        }
        let cutoffs = cutoffs.unwrap_or_else(|| DEFAULT_CUTOFFS.to_vec());
        if cutoffs.is_empty() || cutoffs.contains(&0) {
            return Err(UsageError("--cutoffs must be positive".into()).into());
        }

        Ok(RunConfig {
            train,
            hidden,
            plan,
            split,
            cutoffs,
        })
    }
}

impl SplitArgs {
    /// Ratio 0.8/0.1/0.1 for explicit data, leave-one-out for implicit.
    pub fn resolve(&self, mode: Mode, default_seed: u64) -> Result<SplitSpec> {
        let seed = self.split_seed.unwrap_or(default_seed);
        let protocol = self.protocol.unwrap_or(match mode {
            Mode::Explicit => Protocol::Ratio,
            Mode::Implicit => Protocol::LeaveOneOut,
        });
        let spec = match protocol {
            Protocol::Ratio => {
                let r = self.ratios.clone().unwrap_or_else(|| vec![0.8, 0.1, 0.1]);
                if r.len() != 3 {
                    return Err(UsageError("--ratios takes train,valid,test".into()).into());
                }
                SplitSpec::Ratio {
                    train: r[0],
                    valid: r[1],
                    test: r[2],
                    seed,
                }
            }
            Protocol::LeaveOneOut => {
                if self.ratios.is_some() {
                    return Err(UsageError("--ratios conflicts with leave-one-out".into()).into());
                }
                SplitSpec::LeaveOneOut { seed }
            }
        };
        spec.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(spec)
    }
}
