use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InteractionMatrix, Observation};
use crate::error::{Error, Result};

/// How observations are partitioned into train / validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Uniformly random split of all observations.
    Ratio {
        train: f64,
        valid: f64,
        test: f64,
        seed: u64,
    },
    /// Latest interaction per user to test, one random remaining one to validation.
    LeaveOneOut { seed: u64 },
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if let SplitSpec::Ratio {
            train, valid, test, ..
        } = *self
        {
            let fractions = [train, valid, test];
            if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || train <= 0.0 {
                return Err(Error::Config(format!(
                    "split fractions {:?} must be non-negative with a positive training share",
                    fractions
                )));
            }
            if ((train + valid + test) - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "split fractions {:?} must sum to 1",
                    fractions
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: InteractionMatrix,
    pub valid: InteractionMatrix,
    pub test: InteractionMatrix,
    /// Users kept out of validation/test because they had fewer than three observations.
    pub excluded_users: usize,
}

pub fn split(matrix: &InteractionMatrix, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    match *spec {
        SplitSpec::Ratio {
            valid, test, seed, ..
        } => ratio_split(matrix, valid, test, seed),
        SplitSpec::LeaveOneOut { seed } => Ok(leave_one_out(matrix, seed)),
    }
}

fn ratio_split(matrix: &InteractionMatrix, valid: f64, test: f64, seed: u64) -> Result<Split> {
    let total = matrix.nnz();
    if total == 0 {
        return Err(Error::Data("cannot split an empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<(usize, Observation)> = matrix.iter().map(|(u, o)| (u, *o)).collect();
    all.shuffle(&mut rng);

    let n_valid = (valid * total as f64).round() as usize;
    let n_test = ((test * total as f64).round() as usize).min(total - n_valid);

    let mut parts = [matrix.empty_like(), matrix.empty_like(), matrix.empty_like()];
    for (pos, (user, obs)) in all.into_iter().enumerate() {
        let part = if pos < n_test {
            2
        } else if pos < n_test + n_valid {
            1
        } else {
            0
        };
        parts[part].insert_unchecked(user, obs);
    }
    let [train, valid, test] = parts;
    Ok(Split {
        train,
        valid,
        test,
        excluded_users: 0,
    })
}

fn leave_one_out(matrix: &InteractionMatrix, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = matrix.empty_like();
    let mut valid = matrix.empty_like();
    let mut test = matrix.empty_like();
    let mut excluded = 0;

    for (user, row) in matrix.rows().iter().enumerate() {
        if row.len() < 3 {
            excluded += 1;
            for obs in row {
                train.insert_unchecked(user, *obs);
            }
            continue;
        }
        // Latest by timestamp, file order breaks ties and stands in when timestamps are missing.
        let latest = row
            .iter()
            .enumerate()
            .max_by_key(|(_, o)| (o.timestamp.unwrap_or(i64::MIN), o.seq))
            .map(|(i, _)| i)
            .expect("non-empty row");
        let remaining: Vec<usize> = (0..row.len()).filter(|&i| i != latest).collect();
        let held_valid = remaining[rng.gen_range(0..remaining.len())];
        for (i, obs) in row.iter().enumerate() {
            if i == latest {
                test.insert_unchecked(user, *obs);
            } else if i == held_valid {
                valid.insert_unchecked(user, *obs);
            } else {
                train.insert_unchecked(user, *obs);
            }
        }
    }
    Split {
        train,
        valid,
        test,
        excluded_users: excluded,
    }
}
