//! Posterior prediction at new items, ranking, covariance-aware pair
//! classification, and entropy-based confidence.
//!
//! All predictions flow through the inducing-point posterior: with
//! A = K_*m K_mm⁻¹,
//!
//! - f̂*  = A·f̂_m
//! - cov* = K_** − A·(K_mm − C_m)·Aᵀ
//!
//! and a pair (i, j) is classified as Φ(ẑ) with
//! ẑ = (f̂_i − f̂_j) / √(2 + C_ii + C_jj − 2C_ij), so posterior uncertainty
//! about the scores widens the denominator and pulls the probability toward
//! one half.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, kernel_value};
use crate::linalg::{jittered_cholesky, symmetrize};
use crate::math::std_normal_cdf;
use crate::model::ModelState;

/// Posterior summary at a set of requested items.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Item identifiers, when the caller supplied them.
    pub ids: Option<Vec<String>>,
    pub fmean: DVector<f64>,
    /// Marginal variances, clamped at 0 from below.
    pub fvar: DVector<f64>,
    /// Full T×T predictive covariance, when requested.
    pub pairwise_cov: Option<DMatrix<f64>>,
}

impl Prediction {
    /// Reported standard deviation: √max(var, 0).
    pub fn stdev(&self, k: usize) -> f64 {
        self.fvar[k].max(0.0).sqrt()
    }
}

/// Cross-covariances and projections shared by every prediction entry point:
/// B = K_mm⁻¹·K_m* (M×T) and V = (K_mm − C_m)·B (M×T). Each test item is a
/// column, so means, variances, and pair covariances are all O(M) or O(M²)
/// per item afterwards — never O(N·…) in the training-set size.
struct Projection {
    b: DMatrix<f64>,
    v: DMatrix<f64>,
}

fn project(model: &ModelState, xstar: &DMatrix<f64>) -> Result<Projection> {
    if xstar.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "test features vs model",
            expected: model.dim(),
            got: xstar.ncols(),
        });
    }
    let kms = kernel_matrix(&model.inducing, xstar, &model.kernel)?;
    let chol = jittered_cholesky(&model.kmm, "inducing prior matrix")?;
    let b = chol.solve(&kms);
    let v = (&model.kmm - &model.c_m) * &b;
    Ok(Projection { b, v })
}

/// Posterior mean and marginal variance at each row of `xstar`.
pub fn predict_f(model: &ModelState, xstar: &DMatrix<f64>) -> Result<Prediction> {
    let p = project(model, xstar)?;
    let t = xstar.nrows();
    let fmean = p.b.transpose() * &model.fhat_m;
    let mut fvar = DVector::zeros(t);
    for i in 0..t {
        let prior = kernel_value(
            xstar.row(i).transpose().as_slice(),
            xstar.row(i).transpose().as_slice(),
            &model.kernel,
        )?;
        let reduction = p.b.column(i).dot(&p.v.column(i));
        fvar[i] = (prior - reduction).max(0.0);
    }
    Ok(Prediction {
        ids: None,
        fmean,
        fvar,
        pairwise_cov: None,
    })
}

/// Posterior mean and full predictive covariance (T×T — small T only).
pub fn predict_with_cov(model: &ModelState, xstar: &DMatrix<f64>) -> Result<Prediction> {
    let p = project(model, xstar)?;
    let kss = kernel_matrix(xstar, xstar, &model.kernel)?;
    let fmean = p.b.transpose() * &model.fhat_m;
    let mut cov = kss - p.b.transpose() * &p.v;
    symmetrize(&mut cov);
    let mut fvar = cov.diagonal();
    for v in fvar.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(Prediction {
        ids: None,
        fmean,
        fvar,
        pairwise_cov: Some(cov),
    })
}

/// Rank rows of `xstar` by posterior mean, descending; ties broken by
/// ascending identifier. Returns (id, score, stdev) rows.
pub fn rank(
    model: &ModelState,
    ids: &[String],
    xstar: &DMatrix<f64>,
) -> Result<Vec<(String, f64, f64)>> {
    if ids.len() != xstar.nrows() {
        return Err(Error::DimensionMismatch {
            context: "rank ids vs feature rows",
            expected: xstar.nrows(),
            got: ids.len(),
        });
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("rank needs at least one item".into()));
    }
    let pred = predict_f(model, xstar)?;
    let mut rows: Vec<(String, f64, f64)> = ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.clone(), pred.fmean[k], pred.stdev(k)))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

/// Probability that the item with mean `f_i`, variance `c_ii` beats the item
/// with mean `f_j`, variance `c_jj`, given their covariance `c_ij`.
pub fn classify_from_moments(f_i: f64, f_j: f64, c_ii: f64, c_jj: f64, c_ij: f64) -> f64 {
    let denom = (2.0 + c_ii + c_jj - 2.0 * c_ij).max(f64::MIN_POSITIVE);
    std_normal_cdf((f_i - f_j) / denom.sqrt())
}

/// Classify one pair of feature rows through the full predictive block.
pub fn classify_pair(model: &ModelState, xi: &[f64], xj: &[f64]) -> Result<f64> {
    let d = model.dim();
    if xi.len() != d || xj.len() != d {
        return Err(Error::DimensionMismatch {
            context: "classify_pair features",
            expected: d,
            got: xi.len().min(xj.len()),
        });
    }
    let mut xs = DMatrix::zeros(2, d);
    for k in 0..d {
        xs[(0, k)] = xi[k];
        xs[(1, k)] = xj[k];
    }
    let pred = predict_with_cov(model, &xs)?;
    let cov = pred.pairwise_cov.as_ref().expect("cov requested");
    Ok(classify_from_moments(
        pred.fmean[0],
        pred.fmean[1],
        cov[(0, 0)],
        cov[(1, 1)],
        cov[(0, 1)],
    ))
}

/// Classification probabilities for many (i, j) index pairs over one shared
/// test set. The projection is computed once; each pair then costs O(M).
pub fn pair_probabilities(
    model: &ModelState,
    xstar: &DMatrix<f64>,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let t = xstar.nrows();
    for &(i, j) in pairs {
        if i >= t || j >= t {
            return Err(Error::InvalidArgument(format!(
                "pair index {} out of range for {t} items",
                i.max(j)
            )));
        }
    }
    let p = project(model, xstar)?;
    let fmean = p.b.transpose() * &model.fhat_m;
    let mut var = vec![0.0; t];
    for (i, v) in var.iter_mut().enumerate() {
        let prior = kernel_value(
            xstar.row(i).transpose().as_slice(),
            xstar.row(i).transpose().as_slice(),
            &model.kernel,
        )?;
        *v = prior - p.b.column(i).dot(&p.v.column(i));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let prior_ij = kernel_value(
            xstar.row(i).transpose().as_slice(),
            xstar.row(j).transpose().as_slice(),
            &model.kernel,
        )?;
        let c_ij = prior_ij - p.b.column(i).dot(&p.v.column(j));
        out.push(classify_from_moments(
            fmean[i], fmean[j], var[i], var[j], c_ij,
        ));
    }
    Ok(out)
}

/// Shannon entropy of a Bernoulli(p) prediction, in bits, with 0·log 0 = 0.
pub fn pair_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    let term = |q: f64| if q == 0.0 { 0.0 } else { -q * q.log2() };
    Ok(term(p) + term(1.0 - p))
}
