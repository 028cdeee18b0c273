//! Seeded k-means++ used to place inducing points.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Cluster `x` (rows are points) into `m` centers with k-means++
/// initialization followed by at most `lloyd_iters` Lloyd refinement passes.
/// Deterministic given the rng state.
///
/// Initialization picks the first center uniformly at random, then each
/// subsequent one with probability proportional to the squared distance to
/// the nearest already-chosen center (an inverse-CDF scan, so equal inputs
/// and rng state reproduce bit-identical centers). A Lloyd cluster that
/// loses all its points keeps its previous center.
pub fn kmeans_plus_plus<R: Rng>(
    x: &DMatrix<f64>,
    m: usize,
    rng: &mut R,
    lloyd_iters: usize,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "cluster count must be positive".into(),
        ));
    }
    if n < m {
        return Err(Error::InvalidArgument(format!(
            "cannot place {m} centers among {n} points"
        )));
    }

    let sq_dist = |a: usize, c: &[f64]| -> f64 {
        let mut s = 0.0;
        for (dd, cv) in c.iter().enumerate() {
            let diff = x[(a, dd)] - cv;
            s += diff * diff;
        }
        s
    };

    // --- k-means++ seeding ---
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let first = rng.random_range(0..n);
    chosen.push(first);
    // Squared distance from each point to its nearest chosen center.
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(i, x.row(first).transpose().as_slice()))
        .collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points): fall back to a
            // uniform choice among the not-yet-chosen indices.
            let remaining: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        chosen.push(next);
        for (i, best) in d2.iter_mut().enumerate() {
            let s = sq_dist(i, x.row(next).transpose().as_slice());
            if s < *best {
                *best = s;
            }
        }
    }

    let mut centers = DMatrix::zeros(m, d);
    for (c, &i) in chosen.iter().enumerate() {
        centers.row_mut(c).copy_from(&x.row(i));
    }

    // --- Lloyd refinement ---
    let mut assign = vec![0usize; n];
    for _ in 0..lloyd_iters {
        let mut moved = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..m {
                let s = sq_dist(i, centers.row(c).transpose().as_slice());
                // Strict < keeps ties at the lowest center index.
                if s < best_d {
                    best_d = s;
                    best = c;
                }
            }
            if *slot != best {
                *slot = best;
                moved = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(m, d);
        let mut counts = vec![0usize; m];
        for i in 0..n {
            counts[assign[i]] += 1;
            for dd in 0..d {
                sums[(assign[i], dd)] += x[(i, dd)];
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                for dd in 0..d {
                    centers[(c, dd)] = sums[(c, dd)] / counts[c] as f64;
                }
            }
            // Empty cluster: keep the previous center.
        }
        if !moved {
            break;
        }
    }
    Ok(centers)
}
