//! Full (dense) variational inference over the latent scores.
//!
//! The posterior over f is approximated by N(f̂, C) under the prior
//! N(μ, K/ŝ), where the function scale s carries a Gamma(a, b) posterior
//! (rate convention, so ŝ = E[s] = a/b). Fitting alternates three closed
//! steps until f̂ stops moving:
//!
//! 1. linearize the preference likelihood at the current f̂ (G, Q, y);
//! 2. update the Gaussian posterior:
//!    C = (ŝK⁻¹ + GᵀQ⁻¹G)⁻¹,
//!    f̂ = μ + C·Gᵀ·Q⁻¹·(y − Φ(ẑ) + G·(f̂_prev − μ));
//! 3. update the scale posterior:
//!    a = a0 + N/2,
//!    b = b0 + ½·[tr(K⁻¹C) + (f̂−μ)ᵀK⁻¹(f̂−μ)].

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix_sym, KernelConfig};
use crate::likelihood::{linearize, LikelihoodApprox, PreferencePair};
use crate::linalg::{spd_inverse, symmetrize};

/// Gamma posterior (shape `a`, rate `b`) over the function scale s, kept
/// alongside its prior parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalePosterior {
    pub a: f64,
    pub b: f64,
    pub prior_a0: f64,
    pub prior_b0: f64,
}

impl ScalePosterior {
    pub fn from_prior(a0: f64, b0: f64) -> Result<Self> {
        if !(a0.is_finite() && a0 > 0.0 && b0.is_finite() && b0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale prior parameters must be positive and finite, got a0 = {a0}, b0 = {b0}"
            )));
        }
        Ok(ScalePosterior {
            a: a0,
            b: b0,
            prior_a0: a0,
            prior_b0: b0,
        })
    }

    /// Posterior expectation ŝ = a/b.
    pub fn shat(&self) -> f64 {
        self.a / self.b
    }
}

/// E[log s] = Ψ(a) − log b under the Gamma posterior.
pub fn expected_log_scale(sp: &ScalePosterior) -> Result<f64> {
    if !(sp.a > 0.0 && sp.b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "expected_log_scale needs positive parameters, got a = {}, b = {}",
            sp.a, sp.b
        )));
    }
    Ok(digamma(sp.a) - sp.b.ln())
}

/// Gaussian posterior N(f̂, C) over the latent scores at the training items,
/// together with the prior pieces (μ, K) it was fitted against.
#[derive(Clone, Debug)]
pub struct DensePosterior {
    pub fhat: DVector<f64>,
    pub c: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub k: DMatrix<f64>,
}

/// Scale-prior hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct VbHyper {
    pub a0: f64,
    pub b0: f64,
}

impl Default for VbHyper {
    fn default() -> Self {
        VbHyper { a0: 2.0, b0: 200.0 }
    }
}

/// Stopping rule and optional prior mean / warm start for the fit loop.
#[derive(Clone, Debug)]
pub struct VbControl {
    /// Maximum outer iterations.
    pub max_iter: usize,
    /// Convergence threshold on the max-abs change of f̂.
    pub tol: f64,
    /// Prior mean μ; zeros when absent.
    pub mu: Option<DVector<f64>>,
    /// Starting point for f̂; defaults to μ.
    pub init_fhat: Option<DVector<f64>>,
}

impl Default for VbControl {
    fn default() -> Self {
        VbControl {
            max_iter: 200,
            tol: 1e-3,
            mu: None,
            init_fhat: None,
        }
    }
}

/// Converged fit: Gaussian posterior, scale posterior, and loop diagnostics.
#[derive(Clone, Debug)]
pub struct FullVbFit {
    pub posterior: DensePosterior,
    pub scale: ScalePosterior,
    pub iterations: usize,
    pub converged: bool,
}

/// One Gaussian-posterior update. With no pairs this recovers the prior
/// (f̂ = μ, C = K/ŝ) exactly.
pub fn update_f(
    approx: &LikelihoodApprox,
    k: &DMatrix<f64>,
    shat: f64,
    mu: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(shat.is_finite() && shat > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "update_f needs a positive scale estimate, got {shat}"
        )));
    }
    if approx.is_empty() {
        return Ok((mu.clone(), k / shat));
    }
    let kinv = spd_inverse(k, "prior kernel matrix")?;
    update_f_with(approx, &kinv, shat, mu)
}

/// Same update with the prior inverse already factored out, so the fit loop
/// pays the K inversion once instead of every iteration.
fn update_f_with(
    approx: &LikelihoodApprox,
    kinv: &DMatrix<f64>,
    shat: f64,
    mu: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut precision = approx.weighted_gram();
    precision += kinv * shat;
    symmetrize(&mut precision);
    let c = spd_inverse(&precision, "posterior precision")?;
    let rhs = approx.gt_qinv_mul(&approx.residual(Some(mu)));
    let fhat = mu + &c * rhs;
    Ok((fhat, c))
}

/// Conjugate Gamma update for the scale posterior.
pub fn update_scale(
    fhat: &DVector<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    mu: &DVector<f64>,
    prior: &ScalePosterior,
) -> Result<ScalePosterior> {
    let n = fhat.len();
    if c.nrows() != n || k.nrows() != n || mu.len() != n {
        return Err(Error::DimensionMismatch {
            context: "update_scale inputs",
            expected: n,
            got: c.nrows().max(k.nrows()).max(mu.len()),
        });
    }
    if n == 0 {
        return ScalePosterior::from_prior(prior.prior_a0, prior.prior_b0);
    }
    let kinv = spd_inverse(k, "prior kernel matrix")?;
    Ok(update_scale_with(fhat, c, &kinv, mu, prior))
}

fn update_scale_with(
    fhat: &DVector<f64>,
    c: &DMatrix<f64>,
    kinv: &DMatrix<f64>,
    mu: &DVector<f64>,
    prior: &ScalePosterior,
) -> ScalePosterior {
    let n = fhat.len();
    // tr(K⁻¹C) as an elementwise dot: both matrices are symmetric.
    let tr = kinv.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
    let resid = fhat - mu;
    let quad = (kinv * &resid).dot(&resid);
    ScalePosterior {
        a: prior.prior_a0 + n as f64 / 2.0,
        b: prior.prior_b0 + 0.5 * (tr + quad),
        prior_a0: prior.prior_a0,
        prior_b0: prior.prior_b0,
    }
}

/// Fit the dense variational posterior by alternating linearization, the
/// Gaussian update, and the scale update.
pub fn fit_full_vb(
    x: &DMatrix<f64>,
    pairs: &[PreferencePair],
    kcfg: &KernelConfig,
    hyper: &VbHyper,
    ctrl: &VbControl,
) -> Result<FullVbFit> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "fitting needs at least two items, got {n}"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "fitting needs at least one preference pair".into(),
        ));
    }
    let k = kernel_matrix_sym(x, kcfg)?;
    let mu = match &ctrl.mu {
        Some(m) => {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "prior mean",
                    expected: n,
                    got: m.len(),
                });
            }
            m.clone()
        }
        None => DVector::zeros(n),
    };
    let kinv = spd_inverse(&k, "prior kernel matrix")?;
    let mut scale = ScalePosterior::from_prior(hyper.a0, hyper.b0)?;
    let mut fhat = match &ctrl.init_fhat {
        Some(f) if f.len() == n => f.clone(),
        Some(f) => {
            return Err(Error::DimensionMismatch {
                context: "warm-start mean",
                expected: n,
                got: f.len(),
            })
        }
        None => mu.clone(),
    };
    let mut c = &k / scale.shat();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..ctrl.max_iter {
        iterations += 1;
        let approx = linearize(&fhat, pairs)?;
        let (fhat_new, c_new) = update_f_with(&approx, &kinv, scale.shat(), &mu)?;
        scale = update_scale_with(&fhat_new, &c_new, &kinv, &mu, &scale);
        let delta = (&fhat_new - &fhat).abs().max();
        fhat = fhat_new;
        c = c_new;
        if delta < ctrl.tol {
            converged = true;
            break;
        }
    }
    Ok(FullVbFit {
        posterior: DensePosterior { fhat, c, mu, k },
        scale,
        iterations,
        converged,
    })
}
