//! Shared fixtures for the integration suites: synthetic preference worlds
//! with a known latent score, plus small statistics helpers.

#![allow(dead_code)] // each integration binary uses a different subset

use gppl::data::ItemSet;
use gppl::likelihood::{preference_probability, PreferenceLabel, PreferencePair};
use nalgebra::DMatrix;
use rand::prelude::IndexedRandom;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A synthetic world: items with features and a smooth latent score.
pub struct World {
    pub items: ItemSet,
    pub f: Vec<f64>,
}

/// Random items in `[-2, 2]^d` with latent score w·x for an irrational,
/// decaying weight vector — smooth in the features and free of exact ties.
pub fn linear_world(n: usize, d: usize, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let weight = |k: usize| 1.618f64.powi(-(k as i32));
    let f: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|k| weight(k) * x[(i, k)]).sum())
        .collect();
    let ids = (0..n).map(|i| format!("item{i}")).collect();
    World {
        items: ItemSet::new(ids, x).unwrap(),
        f,
    }
}

/// Random 2-D items with a nonmonotone smooth latent: several oscillations
/// interact across both features, so ordering the items takes broad coverage
/// rather than a single direction estimate.
pub fn smooth_world(n: usize, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (x[(i, 0)], x[(i, 1)]);
            (4.5 * a).sin() * (1.0 + 0.8 * b) + (2.9 * b).cos() + 0.6 * a * b
        })
        .collect();
    let ids = (0..n).map(|i| format!("item{i}")).collect();
    World {
        items: ItemSet::new(ids, x).unwrap(),
        f,
    }
}

/// Draw `count` labeled pairs over distinct random items. With `noisy` the
/// label is a Bernoulli draw from the latent preference probability;
/// otherwise it follows the latent ordering deterministically.
pub fn draw_pairs<R: Rng>(
    world: &World,
    count: usize,
    noisy: bool,
    rng: &mut R,
) -> Vec<PreferencePair> {
    let n = world.items.len();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let p = preference_probability(world.f[i], world.f[j]).unwrap();
        let first_wins = if noisy {
            rng.random::<f64>() < p
        } else {
            world.f[i] > world.f[j]
        };
        let label = if first_wins {
            PreferenceLabel::FirstPreferred
        } else {
            PreferenceLabel::SecondPreferred
        };
        pairs.push(PreferencePair::new(i, j, label).unwrap());
    }
    pairs
}

/// All unordered index pairs, shuffled; handy for building disjoint
/// pool/evaluation splits.
pub fn shuffled_index_pairs(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut all = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            all.push((i, j));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all
}

/// Label index pairs with Bernoulli draws from the latent preference
/// probability (a noisy oracle over a fixed pair list).
pub fn label_noisy<R: Rng>(
    world: &World,
    idx: &[(usize, usize)],
    rng: &mut R,
) -> Vec<PreferencePair> {
    idx.iter()
        .map(|&(i, j)| {
            let p = preference_probability(world.f[i], world.f[j]).unwrap();
            let label = if rng.random::<f64>() < p {
                PreferenceLabel::FirstPreferred
            } else {
                PreferenceLabel::SecondPreferred
            };
            PreferencePair::new(i, j, label).unwrap()
        })
        .collect()
}

/// Label index pairs by the world's latent ordering (noise-free).
pub fn label_by_latent(world: &World, idx: &[(usize, usize)]) -> Vec<PreferencePair> {
    idx.iter()
        .map(|&(i, j)| {
            let label = if world.f[i] > world.f[j] {
                PreferenceLabel::FirstPreferred
            } else {
                PreferenceLabel::SecondPreferred
            };
            PreferencePair::new(i, j, label).unwrap()
        })
        .collect()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut m = k;
        while m + 1 < n && v[order[m + 1]] == v[order[k]] {
            m += 1;
        }
        // Tied block [k, m] shares the average of its positions (1-based).
        let avg = (k + m) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=m] {
            ranks[idx] = avg;
        }
        k = m + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for k in 0..ra.len() {
        let xa = ra[k] - mean;
        let xb = rb[k] - mean;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    num / (da * db).sqrt()
}

/// Fraction of pairs whose predicted direction (p > 0.5 strictly) matches the
/// latent ordering.
pub fn direction_accuracy(world: &World, idx: &[(usize, usize)], probs: &[f64]) -> f64 {
    assert_eq!(idx.len(), probs.len());
    let mut correct = 0usize;
    for (&(i, j), &p) in idx.iter().zip(probs) {
        let truth_first = world.f[i] > world.f[j];
        let predicted_first = p > 0.5;
        if truth_first == predicted_first && p != 0.5 {
            correct += 1;
        }
    }
    correct as f64 / idx.len() as f64
}

/// Pick `count` distinct entries from a slice.
pub fn sample_distinct<'a, T, R: Rng>(pool: &'a [T], count: usize, rng: &mut R) -> Vec<&'a T> {
    pool.choose_multiple(rng, count).collect()
}
