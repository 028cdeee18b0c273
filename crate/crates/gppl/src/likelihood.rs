//! Pairwise preference likelihood and its Gaussian working approximation.
//!
//! A comparison of items i and j is modeled as p(i ≻ j) = Φ(z) with
//! z = (f_i − f_j)/√2 — the probability that i's latent score beats j's
//! under unit Gaussian judgment noise. Inference replaces this likelihood
//! with a Gaussian N(y; G·f, Q) linearized at the current estimate of f.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{std_normal_cdf, std_normal_pdf};

/// Smallest allowed diagonal entry of Q; keeps saturated pairs from
/// producing an infinite weight.
pub const Q_FLOOR: f64 = 1e-10;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Annotator judgment for an (i, j) comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreferenceLabel {
    FirstPreferred,
    SecondPreferred,
    Undecided,
}

impl PreferenceLabel {
    /// Decode the on-disk coding: 2 = first preferred, 0 = second, 1 = undecided.
    pub fn from_raw(raw: u8) -> Result<Self> {
        match raw {
            2 => Ok(PreferenceLabel::FirstPreferred),
            0 => Ok(PreferenceLabel::SecondPreferred),
            1 => Ok(PreferenceLabel::Undecided),
            other => Err(Error::InvalidArgument(format!(
                "invalid label {other}: expected 0, 1, or 2"
            ))),
        }
    }

    pub fn to_raw(self) -> u8 {
        match self {
            PreferenceLabel::FirstPreferred => 2,
            PreferenceLabel::SecondPreferred => 0,
            PreferenceLabel::Undecided => 1,
        }
    }
}

/// A single labeled comparison between two distinct items.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreferencePair {
    pub i: usize,
    pub j: usize,
    pub label: PreferenceLabel,
}

impl PreferencePair {
    pub fn new(i: usize, j: usize, label: PreferenceLabel) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "a preference pair must compare two distinct items (got {i} vs {j})"
            )));
        }
        Ok(PreferencePair { i, j, label })
    }
}

/// Φ((f_i − f_j)/√2): the probability that item i beats item j.
pub fn preference_probability(f_i: f64, f_j: f64) -> Result<f64> {
    if !f_i.is_finite() || !f_j.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "preference_probability needs finite scores, got ({f_i}, {f_j})"
        )));
    }
    Ok(std_normal_cdf((f_i - f_j) / SQRT_2))
}

/// Soft regression target for a label: 1 for first-preferred, 0 for
/// second-preferred, and 0.5 for undecided (neither item favored, so the
/// label pulls the pair's predicted probability toward even odds).
pub fn soft_label(label: PreferenceLabel) -> f64 {
    match label {
        PreferenceLabel::FirstPreferred => 1.0,
        PreferenceLabel::SecondPreferred => 0.0,
        PreferenceLabel::Undecided => 0.5,
    }
}

/// Gaussian approximation N(y; G·f, Q) of the preference likelihood at a
/// linearization point f̂.
///
/// G has one row per pair with exactly two nonzero entries (±φ(ẑ)/√2 at the
/// pair's items); it is stored by row structure rather than as a dense P×N
/// matrix so large fits never materialize it. Q is diagonal with entries
/// Φ(ẑ)(1−Φ(ẑ)) — the Bernoulli variance of the predicted probability —
/// floored at [`Q_FLOOR`].
#[derive(Clone, Debug)]
pub struct LikelihoodApprox {
    /// Per-row structure (i, j, c): G[k, i] = c, G[k, j] = −c.
    rows: Vec<(usize, usize, f64)>,
    pub zhat: DVector<f64>,
    pub q: DVector<f64>,
    pub y: DVector<f64>,
    n: usize,
}

/// Linearize the preference likelihood for `pairs` at the point `fhat`.
pub fn linearize(fhat: &DVector<f64>, pairs: &[PreferencePair]) -> Result<LikelihoodApprox> {
    let n = fhat.len();
    let p = pairs.len();
    let mut rows = Vec::with_capacity(p);
    let mut zhat = DVector::zeros(p);
    let mut q = DVector::zeros(p);
    let mut y = DVector::zeros(p);
    for (k, pair) in pairs.iter().enumerate() {
        if pair.i >= n || pair.j >= n {
            return Err(Error::InvalidArgument(format!(
                "pair {k} references item {} but only {n} items exist",
                pair.i.max(pair.j)
            )));
        }
        let z = (fhat[pair.i] - fhat[pair.j]) / SQRT_2;
        let c = std_normal_pdf(z) / SQRT_2;
        let phi = std_normal_cdf(z);
        rows.push((pair.i, pair.j, c));
        zhat[k] = z;
        q[k] = (phi * (1.0 - phi)).max(Q_FLOOR);
        y[k] = soft_label(pair.label);
    }
    Ok(LikelihoodApprox {
        rows,
        zhat,
        q,
        y,
        n,
    })
}

impl LikelihoodApprox {
    /// Number of pairs P.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of items N the linearization was taken over.
    pub fn n_items(&self) -> usize {
        self.n
    }

    /// Row structure (i, j, c) for row k.
    pub fn row(&self, k: usize) -> (usize, usize, f64) {
        self.rows[k]
    }

    /// Materialize G as a dense P×N matrix (tests and small instances only).
    pub fn dense_g(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.rows.len(), self.n);
        for (k, &(i, j, c)) in self.rows.iter().enumerate() {
            g[(k, i)] = c;
            g[(k, j)] = -c;
        }
        g
    }

    /// GᵀQ⁻¹G, accumulated from the sparse row structure in O(P).
    pub fn weighted_gram(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j, c)) in self.rows.iter().enumerate() {
            let w = c * c / self.q[k];
            m[(i, i)] += w;
            m[(j, j)] += w;
            m[(i, j)] -= w;
            m[(j, i)] -= w;
        }
        m
    }

    /// Gᵀ·Q⁻¹·r for a per-pair vector r.
    pub fn gt_qinv_mul(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (k, &(i, j, c)) in self.rows.iter().enumerate() {
            let v = c * r[k] / self.q[k];
            out[i] += v;
            out[j] -= v;
        }
        out
    }

    /// G·v for an N-vector v.
    pub fn g_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows.len());
        for (k, &(i, j, c)) in self.rows.iter().enumerate() {
            out[k] = c * (v[i] - v[j]);
        }
        out
    }

    /// The working residual y − Φ(ẑ) + G·(f̂ − μ), where f̂ is the
    /// linearization point. G·f̂ is recovered from ẑ itself:
    /// c·(f̂_i − f̂_j) = φ(ẑ)·ẑ, so no copy of f̂ needs to be kept.
    pub fn residual(&self, mu: Option<&DVector<f64>>) -> DVector<f64> {
        let mut r = DVector::zeros(self.rows.len());
        for (k, &(i, j, c)) in self.rows.iter().enumerate() {
            let z = self.zhat[k];
            let g_f = std_normal_pdf(z) * z;
            let g_mu = mu.map_or(0.0, |m| c * (m[i] - m[j]));
            r[k] = self.y[k] - std_normal_cdf(z) + g_f - g_mu;
        }
        r
    }
}
