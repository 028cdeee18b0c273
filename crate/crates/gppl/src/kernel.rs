//! ARD product kernel over item features.
//!
//! The kernel is a product of one-dimensional Matérn-3/2 factors, one per
//! feature, each with its own length-scale:
//!
//! ```text
//! k(x, x') = ∏_d (1 + √3·r_d)·exp(−√3·r_d),   r_d = |x_d − x'_d| / l_d
//! ```
//!
//! Per-feature length-scales give automatic relevance determination: a large
//! l_d flattens the kernel along feature d, making it irrelevant to the fit.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Seed for the fixed subsample drawn when the median heuristic runs on more
/// than [`MEDIAN_SUBSAMPLE`] items. A constant keeps the heuristic a pure
/// function of its input.
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e; // "median"
const MEDIAN_SUBSAMPLE: usize = 1000;

/// Supported kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Matern32,
}

/// Kernel family plus per-feature length-scales.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
}

impl KernelConfig {
    /// Matérn-3/2 product kernel with the given length-scales, which must
    /// all be positive and finite.
    pub fn matern32(lengthscales: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel config needs at least one length-scale".into(),
            ));
        }
        for (d, &l) in lengthscales.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "length-scale {d} must be positive and finite, got {l}"
                )));
            }
        }
        Ok(KernelConfig {
            family: KernelFamily::Matern32,
            lengthscales,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "kernel config vs features",
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// One-dimensional Matérn-3/2 correlation at scaled distance `r ≥ 0`:
/// (1 + √3·r)·exp(−√3·r). Equals 1 only at r = 0 and decreases strictly.
pub fn matern32(r: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "matern32: scaled distance must be finite and nonnegative, got {r}"
        )));
    }
    let sr = SQRT_3 * r;
    Ok((1.0 + sr) * (-sr).exp())
}

fn matern32_unchecked(r: f64) -> f64 {
    let sr = SQRT_3 * r;
    (1.0 + sr) * (-sr).exp()
}

/// Matérn-3/2 factor differentiated with respect to its length-scale:
/// d/dl (1 + √3·t/l)·exp(−√3·t/l) = 3t²/l³ · exp(−√3·t/l), t = |x_d − x'_d|.
fn matern32_dl(t: f64, l: f64) -> f64 {
    3.0 * t * t / (l * l * l) * (-SQRT_3 * t / l).exp()
}

/// Kernel between two feature vectors.
pub fn kernel_value(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    cfg.check_dim(x.len())?;
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel_value inputs",
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut k = 1.0;
    for d in 0..x.len() {
        k *= matern32((x[d] - y[d]).abs() / cfg.lengthscales[d])?;
    }
    Ok(k)
}

/// Cross-kernel matrix between the rows of `x` (N×D) and `y` (N'×D).
pub fn kernel_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    cfg.check_dim(x.ncols())?;
    cfg.check_dim(y.ncols())?;
    let (n, m, d) = (x.nrows(), y.nrows(), x.ncols());
    let mut k = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut v = 1.0;
            for dd in 0..d {
                v *= matern32_unchecked((x[(i, dd)] - y[(j, dd)]).abs() / cfg.lengthscales[dd]);
            }
            k[(i, j)] = v;
        }
    }
    Ok(k)
}

/// Symmetric kernel matrix over one item set: unit diagonal, upper triangle
/// computed once and mirrored so the result is bit-symmetric.
pub fn kernel_matrix_sym(x: &DMatrix<f64>, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    cfg.check_dim(x.ncols())?;
    let (n, d) = (x.nrows(), x.ncols());
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = 1.0;
            for dd in 0..d {
                v *= matern32_unchecked((x[(i, dd)] - x[(j, dd)]).abs() / cfg.lengthscales[dd]);
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Median-heuristic length-scales: for each feature, the median absolute
/// difference over all ordered item pairs (i = j included, so N² values),
/// divided by the feature count D.
///
/// Degenerate features fall back instead of producing a singular scale: a
/// zero median is replaced by the mean nonzero distance / D, and an
/// all-constant column by 1.0. Above 1000 items the pair enumeration runs on
/// a fixed-seed uniform subsample; the heuristic only needs a robust
/// statistic, not the exact median.
pub fn median_heuristic(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "median heuristic needs at least two items, got {n}"
        )));
    }
    let idx: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        let mut v = rand::seq::index::sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let m = idx.len();
    let mut scales = Vec::with_capacity(d);
    let mut dists = vec![0.0f64; m * m];
    for dd in 0..d {
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                dists[a * m + b] = (x[(i, dd)] - x[(j, dd)]).abs();
            }
        }
        dists.sort_unstable_by(f64::total_cmp);
        let mid = dists.len() / 2;
        // Even counts take the conventional average of the two middle values.
        let median = if dists.len() % 2 == 1 {
            dists[mid]
        } else {
            0.5 * (dists[mid - 1] + dists[mid])
        };
        let scale = if median > 0.0 {
            median / d as f64
        } else {
            let (sum, cnt) = dists
                .iter()
                .filter(|&&v| v > 0.0)
                .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
            if cnt > 0 {
                sum / cnt as f64 / d as f64
            } else {
                1.0
            }
        };
        scales.push(scale);
    }
    Ok(scales)
}

/// ∂K/∂l_d over one item set: the product of the other features' kernel
/// factors times the Matérn-3/2 length-scale derivative of feature `d`.
/// Diagonal entries are exactly zero (the derivative factor vanishes at zero
/// distance).
pub fn kernel_gradient_lengthscale(
    x: &DMatrix<f64>,
    d: usize,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    cfg.check_dim(x.ncols())?;
    if d >= cfg.dim() {
        return Err(Error::InvalidArgument(format!(
            "feature index {d} out of range for D = {}",
            cfg.dim()
        )));
    }
    let n = x.nrows();
    let dim = x.ncols();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = matern32_dl((x[(i, d)] - x[(j, d)]).abs(), cfg.lengthscales[d]);
            for dd in 0..dim {
                if dd != d {
                    v *= matern32_unchecked(
                        (x[(i, dd)] - x[(j, dd)]).abs() / cfg.lengthscales[dd],
                    );
                }
            }
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
