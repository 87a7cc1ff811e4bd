//! Sparse interaction data: per-user observation lists, loading, splitting,
//! item popularity and sparsity-aware augmentation.

mod augment;
mod load;
mod popularity;
mod split;

pub use augment::{augment, AugmentConfig, Augmented};
pub use load::{load_ratings, parse_ratings, Delimiter};
pub use popularity::{compute_confidence, ConfidenceVector};
pub use split::{split, Split, SplitSpec};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sparse `N`-dimensional vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("sparse indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::Dimension(format!(
                    "index {} out of range for dimension {}",
                    last, dim
                )));
            }
        }
        if values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::Data("sparse values must be finite and non-zero".into()));
        }
        Ok(SparseVector {
            dim,
            indices,
            values,
        })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.indices
            .binary_search(&index)
            .ok()
            .map(|pos| self.values[pos])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (j, v) in self.iter() {
            dense[j] = v;
        }
        dense
    }

    // Callers guarantee the sparse invariants.
    pub(crate) fn from_parts_unchecked(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        SparseVector {
            dim,
            indices,
            values,
        }
    }
}

/// One observed user-item interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub item: usize,
    pub value: f64,
    pub timestamp: Option<i64>,
    /// Position in the source (file order), used when timestamps are absent or tied.
    pub seq: u64,
}

/// Partially observed `M x N` matrix stored as per-user lists sorted by item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    num_items: usize,
    rows: Vec<Vec<Observation>>,
    item_counts: Vec<usize>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionMatrix {
    /// An `M x N` matrix with no observations and index-valued ids.
    pub fn empty(num_users: usize, num_items: usize) -> Self {
        InteractionMatrix {
            num_items,
            rows: vec![Vec::new(); num_users],
            item_counts: vec![0; num_items],
            user_ids: (0..num_users).map(|i| i.to_string()).collect(),
            item_ids: (0..num_items).map(|j| j.to_string()).collect(),
        }
    }

    /// Builds a matrix from `(user, item, value)` triples; file order is the triple order.
    pub fn from_triples<I>(num_users: usize, num_items: usize, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let observations = triples
            .into_iter()
            .enumerate()
            .map(|(seq, (user, item, value))| {
                (
                    user,
                    Observation {
                        item,
                        value,
                        timestamp: None,
                        seq: seq as u64,
                    },
                )
            });
        Self::from_observations(num_users, num_items, observations)
    }

    pub fn from_observations<I>(num_users: usize, num_items: usize, observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Observation)>,
    {
        let mut matrix = Self::empty(num_users, num_items);
        for (user, obs) in observations {
            if user >= num_users || obs.item >= num_items {
                return Err(Error::Dimension(format!(
                    "({}, {}) outside a {}x{} matrix",
                    user, obs.item, num_users, num_items
                )));
            }
            if !obs.value.is_finite() || obs.value == 0.0 {
                return Err(Error::Data(format!(
                    "value {} for ({}, {}) must be finite and non-zero",
                    obs.value, user, obs.item
                )));
            }
            matrix.rows[user].push(obs);
        }
        for (user, row) in matrix.rows.iter_mut().enumerate() {
            row.sort_by_key(|o| o.item);
            if let Some(w) = row.windows(2).find(|w| w[0].item == w[1].item) {
                return Err(Error::Data(format!(
                    "duplicate observation for user {} item {}",
                    user, w[0].item
                )));
            }
        }
        matrix.recount();
        Ok(matrix)
    }

    pub fn with_ids(mut self, user_ids: Vec<String>, item_ids: Vec<String>) -> Result<Self> {
        if user_ids.len() != self.rows.len() || item_ids.len() != self.num_items {
            return Err(Error::Dimension(format!(
                "{} user ids / {} item ids for a {}x{} matrix",
                user_ids.len(),
                item_ids.len(),
                self.rows.len(),
                self.num_items
            )));
        }
        self.user_ids = user_ids;
        self.item_ids = item_ids;
        Ok(self)
    }

    fn recount(&mut self) {
        self.item_counts = vec![0; self.num_items];
        for row in &self.rows {
            for obs in row {
                self.item_counts[obs.item] += 1;
            }
        }
    }

    /// A matrix with the same shape and id maps but no observations.
    pub(crate) fn empty_like(&self) -> Self {
        InteractionMatrix {
            num_items: self.num_items,
            rows: vec![Vec::new(); self.rows.len()],
            item_counts: vec![0; self.num_items],
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    // Appends without duplicate checks; callers keep rows sorted and unique.
    pub(crate) fn insert_unchecked(&mut self, user: usize, obs: Observation) {
        let row = &mut self.rows[user];
        let pos = row.partition_point(|o| o.item < obs.item);
        row.insert(pos, obs);
        self.item_counts[obs.item] += 1;
    }

    pub(crate) fn push_row(&mut self, id: String, row: Vec<Observation>) {
        for obs in &row {
            self.item_counts[obs.item] += 1;
        }
        self.rows.push(row);
        self.user_ids.push(id);
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Total number of observations.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn row(&self, user: usize) -> &[Observation] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<Observation>] {
        &self.rows
    }

    pub fn row_vector(&self, user: usize) -> SparseVector {
        let row = &self.rows[user];
        SparseVector::from_parts_unchecked(
            self.num_items,
            row.iter().map(|o| o.item).collect(),
            row.iter().map(|o| o.value).collect(),
        )
    }

    /// `|R_j|` for every item.
    pub fn item_counts(&self) -> &[usize] {
        &self.item_counts
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == id)
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |o| o.item)
            .ok()
            .map(|pos| row[pos].value)
    }

    /// Iterates `(user, observation)` in user order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Observation)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |o| (u, o)))
    }

    /// Sets every observed value to 1.
    pub fn binarize(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            for obs in row.iter_mut() {
                obs.value = 1.0;
            }
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        self.iter().all(|(_, o)| o.value == 1.0)
    }

    /// Swaps the roles of users and items (item-based orientation).
    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.num_items];
        for (user, obs) in self.iter() {
            rows[obs.item].push(Observation { item: user, ..*obs });
        }
        let mut out = InteractionMatrix {
            num_items: self.rows.len(),
            rows,
            item_counts: Vec::new(),
            user_ids: self.item_ids.clone(),
            item_ids: self.user_ids.clone(),
        };
        out.recount();
        out
    }

    /// Set of `(user, item)` pairs, handy for partition checks.
    pub fn pairs(&self) -> HashSet<(usize, usize)> {
        self.iter().map(|(u, o)| (u, o.item)).collect()
    }

    /// Writes `user<sep>item<sep>value[<sep>timestamp]` lines using the original ids.
    pub fn write_delimited(&self, path: &Path, delimiter: Delimiter) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let sep = delimiter.as_str();
        let mut lines: Vec<(u64, usize, &Observation)> =
            self.iter().map(|(u, o)| (o.seq, u, o)).collect();
        lines.sort_by_key(|(seq, u, o)| (*seq, *u, o.item));
        for (_, user, obs) in lines {
            write!(
                out,
                "{}{}{}{}{}",
                self.user_ids[user], sep, self.item_ids[obs.item], sep, obs.value
            )?;
            if let Some(ts) = obs.timestamp {
                write!(out, "{}{}", sep, ts)?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(4, vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(SparseVector::new(4, vec![2, 2], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(4, vec![4], vec![1.0]).is_err());
        assert!(SparseVector::new(4, vec![1], vec![0.0]).is_err());
        assert!(SparseVector::new(4, vec![1], vec![]).is_err());
    }

    #[test]
    fn duplicate_pairs_rejected() {
        let err = InteractionMatrix::from_triples(2, 2, vec![(0, 1, 3.0), (0, 1, 4.0)]);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn binarize_sets_ones_and_is_idempotent() {
        let m = InteractionMatrix::from_triples(2, 3, vec![(0, 0, 0.5), (0, 2, 3.0), (1, 1, 5.0)])
            .unwrap();
        let b = m.binarize();
        assert!(b.is_binary());
        assert_eq!(b.pairs(), m.pairs());
        assert_eq!(b.binarize(), b);
        let empty = InteractionMatrix::empty(0, 0);
        assert_eq!(empty.binarize(), empty);
    }

    #[test]
    fn transpose_round_trips() {
        let m = InteractionMatrix::from_triples(2, 3, vec![(0, 0, 1.5), (0, 2, 3.0), (1, 1, 5.0)])
            .unwrap();
        let t = m.transpose();
        assert_eq!(t.num_users(), 3);
        assert_eq!(t.get(2, 0), Some(3.0));
        assert_eq!(t.item_counts(), &[2, 1]);
        assert_eq!(t.transpose(), m);
    }
}
