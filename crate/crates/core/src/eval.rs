//! Rating and ranking metrics.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::model::{predict_dense, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Hr,
    Ndcg,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Rmse => "rmse",
            Metric::Hr => "hr",
            Metric::Ndcg => "ndcg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub metric: Metric,
    pub cutoff: Option<usize>,
    pub value: f64,
    /// `(user, value)`; for RMSE the value is that user's squared-error sum.
    pub per_user: Vec<(usize, f64)>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
}

/// `sqrt(sum (r - r_hat)^2 / n)` over `(rating, prediction)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Eval("RMSE over an empty test set".into()));
    }
    let sse: f64 = pairs.iter().map(|(r, p)| (r - p) * (r - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

fn check_shapes(params: &ModelParams, train: &InteractionMatrix, test: &InteractionMatrix) -> Result<()> {
    if train.num_items() != params.num_items() || test.num_items() != params.num_items() {
        return Err(Error::Dimension(format!(
            "model has {} items, train {}, test {}",
            params.num_items(),
            train.num_items(),
            test.num_items()
        )));
    }
    if train.num_users() != test.num_users() {
        return Err(Error::Dimension(format!(
            "train has {} users, test {}",
            train.num_users(),
            test.num_users()
        )));
    }
    Ok(())
}

/// Global RMSE over all test observations, each user's predictions computed
/// from their training row.
pub fn evaluate_rmse(
    params: &ModelParams,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
) -> Result<EvalReport> {
    check_shapes(params, train, test)?;
    let users: Vec<usize> = (0..test.num_users()).filter(|&u| !test.row(u).is_empty()).collect();
    let per_user = users
        .par_iter()
        .map(|&u| {
            let preds = predict_dense(params, &train.row_vector(u), Mode::Explicit)?;
            let sse: f64 = test
                .row(u)
                .iter()
                .map(|o| (o.value - preds[o.item]).powi(2))
                .sum();
            Ok((u, sse))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = test.nnz();
    if n == 0 {
        return Err(Error::Eval("RMSE over an empty test set".into()));
    }
    let sse: f64 = per_user.iter().map(|(_, s)| s).sum();
    Ok(EvalReport {
        mode: Mode::Explicit,
        metric: Metric::Rmse,
        cutoff: None,
        value: (sse / n as f64).sqrt(),
        users_evaluated: per_user.len(),
        users_skipped: test.num_users() - per_user.len(),
        per_user,
    })
}

/// Items outside `exclude`, by descending score, ties by ascending index.
/// `exclude` must be sorted.
pub fn rank_items(scores: &[f64], exclude: &[usize]) -> Vec<usize> {
    let mut items: Vec<usize> = (0..scores.len())
        .filter(|j| exclude.binary_search(j).is_err())
        .collect();
    items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    items
}

/// 1-based rank of `target` among the non-excluded items under the
/// [`rank_items`] order, without sorting. `None` if `target` is excluded.
pub fn rank_of(scores: &[f64], exclude: &[usize], target: usize) -> Option<usize> {
    if exclude.binary_search(&target).is_ok() {
        return None;
    }
    let s = scores[target];
    let ahead = (0..scores.len())
        .filter(|&j| j != target && exclude.binary_search(&j).is_err())
        .filter(|&j| match scores[j].total_cmp(&s) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => j < target,
            std::cmp::Ordering::Less => false,
        })
        .count();
    Some(ahead + 1)
}

/// `(hit, ndcg)` for a single held-out item at 1-based `rank`.
pub fn hr_ndcg_from_rank(rank: usize, cutoff: usize) -> (f64, f64) {
    if rank >= 1 && rank <= cutoff {
        (1.0, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (0.0, 0.0)
    }
}

/// `(hit, ndcg)` of `held_out` within the first `cutoff` entries of `ranked`.
pub fn hr_ndcg_at(ranked: &[usize], held_out: usize, cutoff: usize) -> (f64, f64) {
    match ranked.iter().position(|&j| j == held_out) {
        Some(pos) => hr_ndcg_from_rank(pos + 1, cutoff),
        None => (0.0, 0.0),
    }
}

/// Item popularity `|R_j|` as a score vector.
pub fn popularity_baseline(train: &InteractionMatrix) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::Eval("popularity baseline needs training data".into()));
    }
    Ok(train.item_counts().iter().map(|&c| c as f64).collect())
}

/// HR and NDCG at every cutoff for an arbitrary scorer; returns reports in
/// the order `hr@m1, ndcg@m1, hr@m2, ...`. Each user holds out at most one
/// item; users with none are skipped and counted.
pub fn evaluate_ranking<F>(
    mode: Mode,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    cutoffs: &[usize],
    scorer: F,
) -> Result<Vec<EvalReport>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::Eval("cutoffs must be a non-empty list of positive integers".into()));
    }
    if train.num_users() != test.num_users() || train.num_items() != test.num_items() {
        return Err(Error::Dimension("train and test shapes differ".into()));
    }
    let users: Vec<usize> = (0..test.num_users()).filter(|&u| !test.row(u).is_empty()).collect();
    if users.is_empty() {
        return Err(Error::Eval("no users with a held-out item".into()));
    }
    if let Some(&u) = users.iter().find(|&&u| test.row(u).len() > 1) {
        return Err(Error::Eval(format!(
            "user {} has {} held-out items; ranking evaluation expects one",
            u,
            test.row(u).len()
        )));
    }
    let ranks = users
        .par_iter()
        .map(|&u| {
            let scores = scorer(u)?;
            if scores.len() != train.num_items() {
                return Err(Error::Dimension(format!(
                    "scorer returned {} scores for {} items",
                    scores.len(),
                    train.num_items()
                )));
            }
            let exclude: Vec<usize> = train.row(u).iter().map(|o| o.item).collect();
            let held_out = test.row(u)[0].item;
            let rank = rank_of(&scores, &exclude, held_out).ok_or_else(|| {
                Error::Eval(format!("held-out item {} of user {} is in training", held_out, u))
            })?;
            Ok((u, rank))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = test.num_users() - users.len();
    let mut reports = Vec::with_capacity(cutoffs.len() * 2);
    for &m in cutoffs {
        let (hr, ndcg): (Vec<_>, Vec<_>) = ranks
            .iter()
            .map(|&(u, r)| {
                let (h, n) = hr_ndcg_from_rank(r, m);
                ((u, h), (u, n))
            })
            .unzip();
        for (metric, per_user) in [(Metric::Hr, hr), (Metric::Ndcg, ndcg)] {
            let value = per_user.iter().map(|(_, v)| v).sum::<f64>() / per_user.len() as f64;
            reports.push(EvalReport {
                mode,
                metric,
                cutoff: Some(m),
                value,
                users_evaluated: per_user.len(),
                users_skipped: skipped,
                per_user,
            });
        }
    }
    Ok(reports)
}

/// Leave-one-out HR/NDCG of the model, scoring each user from their training row.
pub fn evaluate_leave_one_out(
    params: &ModelParams,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    cutoffs: &[usize],
) -> Result<Vec<EvalReport>> {
    check_shapes(params, train, test)?;
    evaluate_ranking(Mode::Implicit, train, test, cutoffs, |u| {
        predict_dense(params, &train.row_vector(u), Mode::Implicit)
    })
}

/// Leave-one-out HR/NDCG of the popularity ranker.
pub fn evaluate_popularity(
    train: &InteractionMatrix,
    test: &InteractionMatrix,
    cutoffs: &[usize],
) -> Result<Vec<EvalReport>> {
    let scores = popularity_baseline(train)?;
    evaluate_ranking(Mode::Implicit, train, test, cutoffs, |_| Ok(scores.clone()))
}

/// Tab-separated summary: `metric  cutoff  value  users`.
pub fn write_reports<W: Write>(mut out: W, reports: &[EvalReport]) -> Result<()> {
    writeln!(out, "metric\tcutoff\tvalue\tusers")?;
    for r in reports {
        let cutoff = r.cutoff.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
        writeln!(out, "{}\t{}\t{}\t{}", r.metric, cutoff, r.value, r.users_evaluated)?;
    }
    Ok(())
}

/// Tab-separated per-user values: `metric  cutoff  user  value`.
pub fn write_per_user<W: Write>(mut out: W, reports: &[EvalReport], user_ids: &[String]) -> Result<()> {
    writeln!(out, "metric\tcutoff\tuser\tvalue")?;
    for r in reports {
        let cutoff = r.cutoff.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
        for &(u, v) in &r.per_user {
            let id = user_ids.get(u).map(String::as_str).unwrap_or("?");
            writeln!(out, "{}\t{}\t{}\t{}", r.metric, cutoff, id, v)?;
        }
    }
    Ok(())
}
