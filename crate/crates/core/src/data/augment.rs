use serde::{Deserialize, Serialize};

use super::{ConfidenceVector, InteractionMatrix, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Density threshold: rows with `|R_i| / N < epsilon` are augmented.
    pub epsilon: f64,
    /// Fraction of a row's most popular items to drop.
    pub drop_ratio: f64,
    /// Synthetic rows keeping fewer items than this are not emitted.
    pub min_remaining: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            epsilon: 0.001,
            drop_ratio: 0.8,
            min_remaining: 1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "augmentation threshold must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.drop_ratio > 0.0 && self.drop_ratio < 1.0) {
            return Err(Error::Config(format!(
                "drop ratio must lie in (0, 1), got {}",
                self.drop_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    /// Original rows followed by the synthetic ones.
    pub matrix: InteractionMatrix,
    /// Source user of each synthetic row, in append order.
    pub sources: Vec<usize>,
}

impl Augmented {
    pub fn added(&self) -> usize {
        self.sources.len()
    }
}

/// Number of items dropped from a row of `len` items: `floor(len * p)`.
pub(crate) fn drop_count(len: usize, drop_ratio: f64) -> usize {
    // the small slack keeps products like 100 * 0.29 from flooring one short
    ((len as f64 * drop_ratio) + 1e-9).floor() as usize
}

/// Appends one synthetic row per sparse user, made of the user's items minus
/// their `floor(|R_i| * p)` most popular ones (ties: lower item index counts as
/// more popular). Rows where nothing would be dropped, or fewer than
/// `min_remaining` items would remain, are skipped.
pub fn augment(
    matrix: &InteractionMatrix,
    config: &AugmentConfig,
    popularity: &ConfidenceVector,
) -> Result<Augmented> {
    config.validate()?;
    let n = matrix.num_items();
    if popularity.len() != n {
        return Err(Error::Dimension(format!(
            "popularity has {} items, matrix has {}",
            popularity.len(),
            n
        )));
    }
    let mut rank = vec![0usize; n];
    for (r, item) in popularity.popularity_order().into_iter().enumerate() {
        rank[item] = r;
    }

    let original_users = matrix.num_users();
    let mut out = matrix.clone();
    let mut sources = Vec::new();
    for user in 0..original_users {
        let row = matrix.row(user);
        if row.is_empty() || (row.len() as f64) / (n as f64) >= config.epsilon {
            continue;
        }
        let dropped = drop_count(row.len(), config.drop_ratio);
        let keep = row.len() - dropped;
        if dropped == 0 || keep < config.min_remaining {
            continue;
        }
        let mut by_popularity: Vec<&Observation> = row.iter().collect();
        by_popularity.sort_by_key(|o| rank[o.item]);
        let mut kept: Vec<Observation> = by_popularity[dropped..].iter().map(|o| **o).collect();
        kept.sort_by_key(|o| o.item);
        let id = format!("{}#aug", matrix.user_ids()[user]);
        out.push_row(id, kept);
        sources.push(user);
    }
    Ok(Augmented {
        matrix: out,
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::compute_confidence;

    #[test]
    fn floor_rule_on_four_items() {
        assert_eq!(drop_count(4, 0.8), 3);
        assert_eq!(drop_count(100, 0.29), 29);
        assert_eq!(drop_count(1, 0.8), 0);
    }

    #[test]
    fn four_item_row_keeps_least_popular() {
        // item popularity counts: 0 -> 4, 1 -> 3, 2 -> 2, 3 -> 1 (other users fill them in)
        let mut triples = vec![(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)];
        for u in 1..4 {
            triples.push((u, 0, 1.0));
        }
        for u in 1..3 {
            triples.push((u, 1, 1.0));
        }
        triples.push((1, 2, 1.0));
        let m = InteractionMatrix::from_triples(4, 10, triples).unwrap();
        let pop = compute_confidence(&m, 1.0, 1.0).unwrap();
        let cfg = AugmentConfig {
            epsilon: 0.5,
            drop_ratio: 0.8,
            min_remaining: 1,
        };
        let aug = augment(&m, &cfg, &pop).unwrap();
        assert_eq!(aug.sources[0], 0);
        let synthetic = aug.matrix.row(4);
        assert_eq!(synthetic.len(), 1);
        assert_eq!(synthetic[0].item, 3);
    }

    #[test]
    fn small_epsilon_is_identity() {
        let m = InteractionMatrix::from_triples(2, 4, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 2, 1.0)])
            .unwrap();
        let pop = compute_confidence(&m, 1.0, 1.0).unwrap();
        let cfg = AugmentConfig {
            epsilon: 0.1,
            drop_ratio: 0.5,
            min_remaining: 1,
        };
        let aug = augment(&m, &cfg, &pop).unwrap();
        assert_eq!(aug.added(), 0);
        assert_eq!(aug.matrix, m);
    }

    #[test]
    fn min_remaining_skips_rows() {
        let m = InteractionMatrix::from_triples(1, 10, vec![(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)])
            .unwrap();
        let pop = compute_confidence(&m, 1.0, 1.0).unwrap();
        let cfg = AugmentConfig {
            epsilon: 1.0,
            drop_ratio: 0.5,
            min_remaining: 3,
        };
        assert_eq!(augment(&m, &cfg, &pop).unwrap().added(), 0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = InteractionMatrix::from_triples(1, 2, vec![(0, 0, 1.0)]).unwrap();
        let pop = compute_confidence(&m, 1.0, 1.0).unwrap();
        let bad = AugmentConfig {
            epsilon: 0.5,
            drop_ratio: 1.0,
            min_remaining: 1,
        };
        assert!(augment(&m, &bad, &pop).is_err());
    }
}
