//! Stochastic variational inference with inducing points.
//!
//! Instead of the dense N-item posterior, training maintains a posterior
//! N(f̂_m, C_m) over M inducing points chosen by k-means++. Each step draws
//! a minibatch of pairs, projects the linearized likelihood onto inducing
//! space through A = K_nm·K_mm⁻¹, forms the minibatch's local estimate of
//! the posterior (with the likelihood statistics scaled by P/|batch| so the
//! minibatch stands in for the full pair set), and blends it into the
//! running estimate with step size ρ_t = t^{−u}:
//!
//!   f̂_m ← (1 − ρ_t)·f̂_m + ρ_t·f̂_t,    C_m ← (1 − ρ_t)·C_m + ρ_t·Ĉ_t.
//!
//! Per-step cost is O(M³ + M·P_n) — nothing scales with the item count N
//! once the projection is prepared.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ItemSet;
use crate::error::{Error, Result};
use crate::inference::{ScalePosterior, VbHyper};
use crate::kernel::{kernel_matrix, kernel_matrix_sym, KernelConfig};
use crate::kmeans::kmeans_plus_plus;
use crate::likelihood::{linearize, PreferencePair};
use crate::linalg::{jittered_cholesky, spd_inverse, symmetrize};
use crate::model::ModelState;

/// Decouples the minibatch scheduler's rng stream from the k-means seeding
/// stream derived from the same user seed.
const SCHEDULER_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Training hyperparameters for the stochastic fit.
#[derive(Clone, Copy, Debug)]
pub struct SviConfig {
    /// Inducing-point count M.
    pub m: usize,
    /// Minibatch size in pairs.
    pub pn: usize,
    /// Forgetting-rate exponent in ρ_t = t^{−u}.
    pub u: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SviConfig {
    fn default() -> Self {
        SviConfig {
            m: 500,
            pn: 200,
            u: 0.9,
            max_steps: 200,
            seed: 0,
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("inducing count must be ≥ 1".into()));
        }
        if self.pn == 0 {
            return Err(Error::InvalidArgument("minibatch size must be ≥ 1".into()));
        }
        if !(self.u > 0.5 && self.u <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting rate must satisfy 0.5 < u ≤ 1, got {}",
                self.u
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Step size ρ_t = t^{−u}; strictly decreasing in t for u > 0, with ρ_1 = 1
/// exactly, so the first step fully replaces the initial state.
pub fn step_size(t: usize, u: f64) -> f64 {
    (t as f64).powf(-u)
}

/// Place M inducing points by seeded k-means++ over the feature rows
/// (≤ 20 Lloyd refinement passes).
pub fn select_inducing(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeans_plus_plus(x, m, &mut rng, 20)
}

/// Mutable training state: the inducing set (Z, K_mm and its cached inverse,
/// f̂_m, C_m), the projection A = K_nm·K_mm⁻¹ of training items onto it, and
/// the scale posterior.
#[derive(Clone, Debug)]
pub struct SviState {
    pub z: DMatrix<f64>,
    pub kmm: DMatrix<f64>,
    kmm_inv: DMatrix<f64>,
    /// A = K_nm·K_mm⁻¹, one row per training item. Built once at setup; the
    /// per-step path only gathers the rows its minibatch touches.
    proj: DMatrix<f64>,
    pub fhat_m: DVector<f64>,
    pub c_m: DMatrix<f64>,
    pub scale: ScalePosterior,
    /// Largest rows×cols allocated during setup (the N×M projection).
    pub setup_alloc: usize,
}

/// Per-step diagnostics fed into [`TrainStats`].
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    /// Max-abs change of f̂_m this step.
    pub delta: f64,
    /// Largest rows×cols allocated on the step path.
    pub largest_alloc: usize,
}

/// Wall-time and allocation record of a stochastic fit, kept so callers can
/// check the no-N-dependence-per-step property empirically.
#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    pub step_seconds: Vec<f64>,
    pub step_deltas: Vec<f64>,
    /// Largest rows×cols allocated inside any single step.
    pub largest_step_matrix: usize,
    /// Largest rows×cols allocated during setup (projection: N×M).
    pub largest_setup_matrix: usize,
}

impl TrainStats {
    pub fn mean_step_seconds(&self) -> f64 {
        if self.step_seconds.is_empty() {
            return 0.0;
        }
        self.step_seconds.iter().sum::<f64>() / self.step_seconds.len() as f64
    }
}

impl SviState {
    /// Prepare the state for a given inducing set: factor K_mm, project the
    /// training items, and start from the prior (f̂_m = 0, C_m = K_mm/ŝ).
    pub fn init(
        x: &DMatrix<f64>,
        z: DMatrix<f64>,
        kcfg: &KernelConfig,
        hyper: &VbHyper,
    ) -> Result<Self> {
        let m = z.nrows();
        let kmm = kernel_matrix_sym(&z, kcfg)?;
        let chol = jittered_cholesky(&kmm, "inducing prior matrix")?;
        let kmm_inv = {
            let mut inv = chol.inverse();
            symmetrize(&mut inv);
            inv
        };
        let kmn = kernel_matrix(&z, x, kcfg)?;
        let proj = chol.solve(&kmn).transpose();
        let scale = ScalePosterior::from_prior(hyper.a0, hyper.b0)?;
        let c_m = &kmm / scale.shat();
        let setup_alloc = (x.nrows() * m).max(m * m);
        Ok(SviState {
            z,
            kmm,
            kmm_inv,
            proj,
            fhat_m: DVector::zeros(m),
            c_m,
            scale,
            setup_alloc,
        })
    }

    /// Posterior-mean estimate of f at training item `i` (= A_i·f̂_m).
    pub fn item_mean(&self, i: usize) -> f64 {
        self.proj.row(i).transpose().dot(&self.fhat_m)
    }

    /// One stochastic update from `minibatch`, drawn from a full set of
    /// `p_total` pairs, at step index `t ≥ 1` with forgetting rate `u`.
    pub fn step(
        &mut self,
        minibatch: &[PreferencePair],
        p_total: usize,
        t: usize,
        u: f64,
    ) -> Result<StepInfo> {
        if minibatch.is_empty() {
            return Err(Error::InvalidArgument(
                "svi step needs a nonempty minibatch".into(),
            ));
        }
        if t == 0 {
            return Err(Error::InvalidArgument("step index starts at 1".into()));
        }
        if p_total < minibatch.len() {
            return Err(Error::InvalidArgument(format!(
                "minibatch of {} pairs cannot come from a set of {p_total}",
                minibatch.len()
            )));
        }
        let m = self.z.nrows();
        let n = self.proj.nrows();
        let rho = step_size(t, u);
        let w = p_total as f64 / minibatch.len() as f64;

        // Re-index the items this minibatch touches; everything below works
        // in that local space, so cost never depends on N.
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut touched: Vec<usize> = Vec::new();
        for pair in minibatch {
            for idx in [pair.i, pair.j] {
                if idx >= n {
                    return Err(Error::InvalidArgument(format!(
                        "pair references item {idx} but only {n} items were projected"
                    )));
                }
                local.entry(idx).or_insert_with(|| {
                    touched.push(idx);
                    touched.len() - 1
                });
            }
        }
        let nb = touched.len();
        let mut a_b = DMatrix::zeros(nb, m);
        for (row, &item) in touched.iter().enumerate() {
            a_b.row_mut(row).copy_from(&self.proj.row(item));
        }
        let fhat_b = &a_b * &self.fhat_m;
        let local_pairs: Vec<PreferencePair> = minibatch
            .iter()
            .map(|p| PreferencePair::new(local[&p.i], local[&p.j], p.label))
            .collect::<Result<_>>()?;
        let approx = linearize(&fhat_b, &local_pairs)?;

        // Likelihood statistics projected onto inducing space:
        // HᵀQ⁻¹H = A_bᵀ·(GᵀQ⁻¹G)·A_b and HᵀQ⁻¹r = A_bᵀ·GᵀQ⁻¹r, where the
        // residual r = y − Φ(ẑ) + H·f̂_m falls out of the linearization
        // point itself (f̂_b = A_b·f̂_m).
        let gram = approx.weighted_gram();
        let resid = approx.residual(None);
        let lik_mean = a_b.transpose() * approx.gt_qinv_mul(&resid);
        let lik_prec = a_b.transpose() * gram * &a_b;

        // Minibatch-local posterior estimate.
        let mut precision = &self.kmm_inv * self.scale.shat();
        precision += lik_prec * w;
        symmetrize(&mut precision);
        let c_hat = spd_inverse(&precision, "inducing posterior precision")?;
        let f_hat = &c_hat * (lik_mean * w);

        // Weighted-mean moment update.
        let prev = std::mem::replace(&mut self.fhat_m, DVector::zeros(0));
        self.fhat_m = &prev * (1.0 - rho) + f_hat * rho;
        self.c_m = &self.c_m * (1.0 - rho) + c_hat * rho;
        symmetrize(&mut self.c_m);

        // Conjugate scale update from the current inducing posterior, with M
        // observations' worth of latent values.
        let tr = self
            .kmm_inv
            .iter()
            .zip(self.c_m.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let quad = (&self.kmm_inv * &self.fhat_m).dot(&self.fhat_m);
        self.scale.a = self.scale.prior_a0 + m as f64 / 2.0;
        self.scale.b = self.scale.prior_b0 + 0.5 * (tr + quad);

        let delta = (&self.fhat_m - prev).abs().max();
        Ok(StepInfo {
            delta,
            largest_alloc: (m * m).max(nb * m).max(nb * nb),
        })
    }
}

/// Fit the inducing-point posterior by `cfg.max_steps` stochastic updates.
/// Minibatches are drawn without replacement within an epoch, reshuffled at
/// each epoch boundary, all from the seeded scheduler stream.
pub fn fit_svi(
    items: &ItemSet,
    pairs: &[PreferencePair],
    kcfg: &KernelConfig,
    hyper: &VbHyper,
    cfg: &SviConfig,
) -> Result<(ModelState, TrainStats)> {
    cfg.validate()?;
    let x = items.features();
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
    for (k, p) in pairs.iter().enumerate() {
        if p.i >= n || p.j >= n {
            return Err(Error::InvalidArgument(format!(
                "pair {k} references item {} but only {n} items exist",
                p.i.max(p.j)
            )));
        }
    }
    let z = select_inducing(x, cfg.m, cfg.seed)?;
    let mut state = SviState::init(x, z, kcfg, hyper)?;

    let mut stats = TrainStats {
        largest_setup_matrix: state.setup_alloc,
        ..TrainStats::default()
    };
    let mut scheduler = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SCHEDULER_SEED_OFFSET));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = order.len(); // trigger a shuffle on first use

    for t in 1..=cfg.max_steps {
        let started = Instant::now();
        let mut batch = Vec::with_capacity(cfg.pn.min(pairs.len()));
        while batch.len() < cfg.pn {
            if cursor == order.len() {
                if !batch.is_empty() {
                    break; // epoch boundary: never mix two epochs in a batch
                }
                order.shuffle(&mut scheduler);
                cursor = 0;
            }
            batch.push(pairs[order[cursor]]);
            cursor += 1;
        }
        let info = state.step(&batch, pairs.len(), t, cfg.u)?;
        stats.step_seconds.push(started.elapsed().as_secs_f64());
        stats.step_deltas.push(info.delta);
        stats.largest_step_matrix = stats.largest_step_matrix.max(info.largest_alloc);
    }

    let model = ModelState::new(
        kcfg.clone(),
        cfg.u,
        cfg.m,
        cfg.pn,
        state.z,
        state.fhat_m,
        state.c_m,
        state.scale,
        items.vocab_hash(),
    )?;
    Ok((model, stats))
}
