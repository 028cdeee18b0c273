//! Active preference learning simulation.
//!
//! Repeatedly queries an oracle for pair labels — either the pairs the
//! current model is least sure about, or uniformly at random — refits after
//! every batch, and records a learning curve of held-out pairwise accuracy
//! against labels spent. The oracle is a pre-labeled pool: querying a pool
//! entry reveals its label, and no entry is ever queried twice.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ItemSet;
use crate::error::{Error, Result};
use crate::inference::{fit_full_vb, VbControl, VbHyper};
use crate::kernel::{median_heuristic, KernelConfig};
use crate::likelihood::{PreferenceLabel, PreferencePair};
use crate::model::ModelState;
use crate::predict::{pair_entropy, pair_probabilities};
use crate::svi::{fit_svi, SviConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionStrategy {
    /// Query the pairs whose predicted outcome has the highest entropy.
    Uncertainty,
    /// Query uniformly at random (the baseline).
    Random,
}

impl SelectionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SelectionStrategy::Uncertainty => "uncertainty",
            SelectionStrategy::Random => "random",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(SelectionStrategy::Uncertainty),
            "random" => Ok(SelectionStrategy::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}; expected uncertainty or random"
            ))),
        }
    }
}

/// How each round's model is refit from the labels gathered so far.
#[derive(Clone, Debug)]
pub enum RefitStrategy {
    /// Dense variational fit over all items (the default: exact and
    /// reproducible at simulation scale).
    FullVb,
    /// Sparse stochastic fit; `m` is clamped to the item count and `pn` to
    /// the current label count.
    Svi {
        m: usize,
        pn: usize,
        u: f64,
        steps: usize,
    },
}

#[derive(Clone, Debug)]
pub struct ActiveConfig {
    /// Random labels revealed before the first fit.
    pub init_labels: usize,
    /// Labels queried per round.
    pub batch: usize,
    /// Total label budget.
    pub budget: usize,
    pub strategy: SelectionStrategy,
    pub seed: u64,
    /// Labeled pairs held out for the accuracy curve; never queried.
    pub eval_pairs: Vec<PreferencePair>,
    pub hyper: VbHyper,
    /// Start each dense refit from the previous round's posterior mean
    /// instead of from scratch.
    pub warm_start: bool,
    /// Stop as soon as the recorded accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    pub fitter: RefitStrategy,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            init_labels: 2,
            batch: 2,
            budget: 400,
            strategy: SelectionStrategy::Uncertainty,
            seed: 0,
            eval_pairs: Vec::new(),
            hyper: VbHyper::default(),
            warm_start: false,
            stop_at_accuracy: None,
            fitter: RefitStrategy::FullVb,
        }
    }
}

/// One point of the learning curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub labels_used: usize,
    pub accuracy: f64,
}

/// Indices of the `n` pool pairs the model is least confident about,
/// most-uncertain first; ties keep pool order. Asking for more than the pool
/// holds returns the whole pool in entropy order.
pub fn uncertainty_select(
    model: &ModelState,
    x: &DMatrix<f64>,
    pool: &[(usize, usize)],
    n: usize,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument(
            "uncertainty selection needs a nonempty pool".into(),
        ));
    }
    let probs = pair_probabilities(model, x, pool)?;
    let mut entropies = Vec::with_capacity(pool.len());
    for p in probs {
        entropies.push(pair_entropy(p)?);
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Stable sort: equal entropies stay in pool order.
    order.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a]));
    order.truncate(n.min(pool.len()));
    Ok(order)
}

/// Fraction of the decided held-out pairs the model classifies correctly. A
/// predicted probability of exactly 0.5 counts as incorrect.
fn held_out_accuracy(model: &ModelState, items: &ItemSet, eval: &[PreferencePair]) -> Result<f64> {
    let decided: Vec<&PreferencePair> = eval
        .iter()
        .filter(|p| p.label != PreferenceLabel::Undecided)
        .collect();
    let index_pairs: Vec<(usize, usize)> = decided.iter().map(|p| (p.i, p.j)).collect();
    let probs = pair_probabilities(model, items.features(), &index_pairs)?;
    let mut correct = 0usize;
    for (p, pair) in probs.iter().zip(&decided) {
        let right = match pair.label {
            PreferenceLabel::FirstPreferred => *p > 0.5,
            PreferenceLabel::SecondPreferred => *p < 0.5,
            PreferenceLabel::Undecided => unreachable!("filtered above"),
        };
        if right {
            correct += 1;
        }
    }
    Ok(correct as f64 / decided.len() as f64)
}

fn refit(
    items: &ItemSet,
    labeled: &[PreferencePair],
    kcfg: &KernelConfig,
    cfg: &ActiveConfig,
    round: usize,
    prev_fhat: Option<&DVector<f64>>,
) -> Result<(ModelState, Option<DVector<f64>>)> {
    match &cfg.fitter {
        RefitStrategy::FullVb => {
            let ctrl = VbControl {
                init_fhat: if cfg.warm_start {
                    prev_fhat.cloned()
                } else {
                    None
                },
                ..VbControl::default()
            };
            let fit = fit_full_vb(items.features(), labeled, kcfg, &cfg.hyper, &ctrl)?;
            let state = ModelState::from_full_vb(
                &fit,
                kcfg.clone(),
                items.features(),
                0.9,
                labeled.len(),
                items.vocab_hash(),
            )?;
            let fhat = fit.posterior.fhat;
            Ok((state, Some(fhat)))
        }
        RefitStrategy::Svi { m, pn, u, steps } => {
            let scfg = SviConfig {
                m: (*m).min(items.len()),
                pn: (*pn).min(labeled.len()).max(1),
                u: *u,
                max_steps: *steps,
                // Each round reshuffles independently but reproducibly.
                seed: cfg
                    .seed
                    .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            };
            let (state, _) = fit_svi(items, labeled, kcfg, &cfg.hyper, &scfg)?;
            Ok((state, None))
        }
    }
}

/// Run the simulated annotation loop and return the learning curve.
///
/// The pool is `oracle` (labels hidden until queried); held-out accuracy is
/// measured on `cfg.eval_pairs` after every refit, with undecided entries
/// excluded from the denominator. The loop stops at the label budget, when
/// the pool runs dry (truncated curve, still a success), or when an optional
/// accuracy target is reached. All randomness flows from `cfg.seed`.
pub fn simulate(
    items: &ItemSet,
    oracle: &[PreferencePair],
    cfg: &ActiveConfig,
) -> Result<Vec<CurvePoint>> {
    let n = items.len();
    if oracle.is_empty() {
        return Err(Error::InvalidArgument("the oracle pool is empty".into()));
    }
    for (what, pairs) in [("oracle", oracle), ("held-out", cfg.eval_pairs.as_slice())] {
        for p in pairs {
            if p.i >= n || p.j >= n {
                return Err(Error::InvalidArgument(format!(
                    "{what} pair ({}, {}) references a missing item (N = {n})",
                    p.i, p.j
                )));
            }
        }
    }
    if cfg.init_labels == 0 {
        return Err(Error::InvalidArgument("init_labels must be at least 1".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    if cfg.budget < cfg.init_labels {
        return Err(Error::InvalidArgument(format!(
            "budget {} is below init_labels {}",
            cfg.budget, cfg.init_labels
        )));
    }
    if !cfg
        .eval_pairs
        .iter()
        .any(|p| p.label != PreferenceLabel::Undecided)
    {
        return Err(Error::InvalidArgument(
            "held-out evaluation needs at least one decided pair".into(),
        ));
    }

    let kcfg = KernelConfig::matern32(median_heuristic(items.features())?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut queried = vec![false; oracle.len()];
    let mut labeled: Vec<PreferencePair> = Vec::new();

    let first_draw = cfg.init_labels.min(oracle.len()).min(cfg.budget);
    for idx in rand::seq::index::sample(&mut rng, oracle.len(), first_draw) {
        queried[idx] = true;
        labeled.push(oracle[idx]);
    }

    let mut curve = Vec::new();
    let mut prev_fhat: Option<DVector<f64>> = None;
    loop {
        let (state, fhat) = refit(items, &labeled, &kcfg, cfg, curve.len(), prev_fhat.as_ref())?;
        prev_fhat = fhat;
        let accuracy = held_out_accuracy(&state, items, &cfg.eval_pairs)?;
        curve.push(CurvePoint {
            labels_used: labeled.len(),
            accuracy,
        });

        if labeled.len() >= cfg.budget {
            break;
        }
        if let Some(target) = cfg.stop_at_accuracy {
            if accuracy >= target {
                break;
            }
        }
        let pool_idx: Vec<usize> = (0..oracle.len()).filter(|&k| !queried[k]).collect();
        if pool_idx.is_empty() {
            break; // pool exhausted: truncated curve, still a success
        }
        let want = cfg.batch.min(pool_idx.len()).min(cfg.budget - labeled.len());
        let chosen: Vec<usize> = match cfg.strategy {
            SelectionStrategy::Uncertainty => {
                let pool_pairs: Vec<(usize, usize)> =
                    pool_idx.iter().map(|&k| (oracle[k].i, oracle[k].j)).collect();
                uncertainty_select(&state, items.features(), &pool_pairs, want)?
                    .into_iter()
                    .map(|sel| pool_idx[sel])
                    .collect()
            }
            SelectionStrategy::Random => rand::seq::index::sample(&mut rng, pool_idx.len(), want)
                .into_iter()
                .map(|sel| pool_idx[sel])
                .collect(),
        };
        for idx in chosen {
            debug_assert!(!queried[idx]);
            queried[idx] = true;
            labeled.push(oracle[idx]);
        }
    }
    Ok(curve)
}
