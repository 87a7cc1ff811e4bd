//! Deterministic synthetic datasets for tests, benchmarks and the CLI fixture.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{InteractionMatrix, Observation};

/// Noiseless low-rank ratings: `P Q^T` with entries uniform on `[-1, 1]`,
/// min-max mapped onto `[0.5, 5]`, observed on exactly
/// `round(density * users * items)` uniformly chosen cells.
pub fn low_rank_explicit(users: usize, items: usize, rank: usize, density: f64, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..users * rank).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q: Vec<f64> = (0..items * rank).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let full: Vec<f64> = (0..users * items)
        .map(|cell| {
            let (u, j) = (cell / items, cell % items);
            (0..rank).map(|r| p[u * rank + r] * q[j * rank + r]).sum()
        })
        .collect();
    let lo = full.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut cells: Vec<usize> = (0..users * items).collect();
    cells.shuffle(&mut rng);
    let keep = ((density.clamp(0.0, 1.0) * (users * items) as f64).round() as usize).min(cells.len());
    let triples = cells[..keep]
        .iter()
        .map(|&cell| (cell / items, cell % items, 0.5 + 4.5 * (full[cell] - lo) / span));
    InteractionMatrix::from_triples(users, items, triples).expect("generated cells are unique")
}

/// Binary interactions with planted item clusters. Items are split into
/// `clusters` contiguous blocks and every user belongs to one cluster. A user
/// draws 8 to 20 distinct items; each slot is, with probability 0.9, filled from
/// the user's own cluster and otherwise from anywhere,
/// both with Zipf-skewed preference over item position. File order is random,
/// so the leave-one-out test item is a random interaction.
pub fn clustered_implicit(users: usize, items: usize, clusters: usize, seed: u64) -> InteractionMatrix {
    assert!(clusters > 0 && items >= clusters, "need at least one item per cluster");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = items / clusters;
    let zipf = |n: usize| -> Vec<f64> { (1..=n).map(|r| 1.0 / r as f64).collect() };
    let draw = |weights: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = rng.gen_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    };
    let global = zipf(items);

    let mut observations = Vec::new();
    for u in 0..users {
        let cluster = u % clusters;
        let start = cluster * block;
        let len = if cluster + 1 == clusters { items - start } else { block };
        let local = zipf(len);
        let target = rng.gen_range(8..=20).min(items);
        let noise = (0..target).filter(|_| rng.gen_bool(0.1)).count();
        let own = (target - noise).min(len);
        let mut chosen: Vec<usize> = Vec::with_capacity(target);
        while chosen.len() < own {
            let j = start + draw(&local, &mut rng);
            if !chosen.contains(&j) {
                chosen.push(j);
            }
        }
        while chosen.len() < target {
            let j = draw(&global, &mut rng);
            if !chosen.contains(&j) {
                chosen.push(j);
            }
        }
        for j in chosen {
            observations.push((u, j));
        }
    }
    observations.shuffle(&mut rng);
    let obs = observations.into_iter().enumerate().map(|(seq, (u, item))| {
        (
            u,
            Observation {
                item,
                value: 1.0,
                timestamp: None,
                seq: seq as u64,
            },
        )
    });
    InteractionMatrix::from_observations(users, items, obs).expect("generated pairs are unique")
}

/// `per_user` uniformly random items per user with ratings uniform on
/// `[0.5, 5]`; used to measure how epoch time scales with observations.
pub fn uniform_explicit(users: usize, items: usize, per_user: usize, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_user = per_user.min(items);
    let mut triples = Vec::with_capacity(users * per_user);
    for u in 0..users {
        for j in rand::seq::index::sample(&mut rng, items, per_user) {
            triples.push((u, j, rng.gen_range(0.5..=5.0)));
        }
    }
    InteractionMatrix::from_triples(users, items, triples).expect("sampled items are unique")
}
