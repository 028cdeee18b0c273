//! Command-line surface: train, rank, classify, active-sim, toy.
//!
//! Every subcommand reads and writes delimited text (comma separator, `.`
//! decimal point, round-trip-exact reals) and exits with 0 on success, 1 on
//! a usage error, 2 on a data error, and 3 on a numerical failure. All
//! diagnostics go to stderr; output files are written atomically
//! (temp-then-rename) so a crash never leaves a half-written table behind.
//! Randomness flows exclusively from `--seed`: identical invocations produce
//! bit-identical outputs.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::active::{simulate, ActiveConfig, RefitStrategy, SelectionStrategy};
use crate::data::{csv_row, load_items, load_pair_ids, load_pairs};
use crate::error::{Error, Result};
use crate::inference::{fit_full_vb, VbControl, VbHyper};
use crate::kernel::{median_heuristic, KernelConfig};
use crate::mlii::{optimize_lengthscales, MliiControl, MliiOutcome};
use crate::model::{write_atomic, ModelState};
use crate::predict::{pair_entropy, pair_probabilities, rank};
use crate::svi::{fit_svi, SviConfig};
use crate::toy::{toy_features, toy_pairs, ToyScenario, TOY_ITEM_IDS};

#[derive(Parser, Debug)]
#[command(
    name = "gppl",
    version,
    about = "Bayesian preference learning from pairwise comparisons"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a preference model from items and labeled pairs.
    Train(TrainArgs),
    /// Score and order items under a trained model.
    Rank(RankArgs),
    /// Predict pairwise outcomes with confidence.
    Classify(ClassifyArgs),
    /// Simulate an active-learning annotation loop.
    ActiveSim(ActiveSimArgs),
    /// Emit a built-in five-item demonstration scenario.
    Toy(ToyArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Items file: id, then feature columns.
    #[arg(long)]
    items: PathBuf,
    /// Pairs file: id_first, id_second, raw label (2/0/1).
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    /// Inducing-point budget (clamped to the item count).
    #[arg(long, default_value_t = 500)]
    m_inducing: usize,
    /// Minibatch size in pairs (clamped to the pair count).
    #[arg(long, default_value_t = 200)]
    batch_pairs: usize,
    /// Forgetting-rate exponent u in the step size t^(-u).
    #[arg(long, default_value_t = 0.9)]
    forgetting: f64,
    /// Scale prior shape.
    #[arg(long, default_value_t = 2.0)]
    a0: f64,
    /// Scale prior rate.
    #[arg(long, default_value_t = 200.0)]
    b0: f64,
    /// Fit the dense posterior over all items instead of the sparse one.
    #[arg(long)]
    full_vb: bool,
    /// Tune kernel length-scales by evidence-bound ascent before fitting.
    #[arg(long)]
    optimize_lengthscales: bool,
    #[arg(long, default_value_t = 25)]
    max_mlii_iters: usize,
    /// Where to write the length-scale search history table.
    #[arg(long)]
    out_history: Option<PathBuf>,
    /// Stochastic-fit step budget.
    #[arg(long, default_value_t = 200)]
    svi_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    /// Items to score (may differ from the training items).
    #[arg(long)]
    items: PathBuf,
    /// Output table: id, score, stdev — best first.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    items: PathBuf,
    /// Pairs to classify: id_first, id_second (a third label column is
    /// ignored).
    #[arg(long)]
    pairs: PathBuf,
    /// Output table: id_i, id_j, p(i beats j), entropy in bits.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ActiveSimArgs {
    #[arg(long)]
    items: PathBuf,
    /// Fully labeled pool acting as the annotation oracle.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_parser = SelectionStrategy::from_str)]
    strategy: SelectionStrategy,
    #[arg(long, default_value_t = 400)]
    budget: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 2)]
    init_labels: usize,
    /// Fraction of the labeled pool held out for the accuracy curve.
    #[arg(long, default_value_t = 0.2)]
    eval_fraction: f64,
    /// Refit engine: full-vb or svi.
    #[arg(long, default_value = "full-vb")]
    fitter: String,
    /// Warm-start each dense refit from the previous posterior mean.
    #[arg(long)]
    warm_start: bool,
    /// Stop as soon as held-out accuracy reaches this value.
    #[arg(long)]
    stop_at_accuracy: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    a0: f64,
    #[arg(long, default_value_t = 200.0)]
    b0: f64,
    #[arg(long, default_value_t = 500)]
    m_inducing: usize,
    #[arg(long, default_value_t = 200)]
    batch_pairs: usize,
    #[arg(long, default_value_t = 0.9)]
    forgetting: f64,
    #[arg(long, default_value_t = 100)]
    svi_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output table: labels, accuracy.
    #[arg(long)]
    out_curve: PathBuf,
}

#[derive(Args, Debug)]
struct ToyArgs {
    /// no-cycle, single-cycle, double-cycle, or undecided.
    #[arg(long, value_parser = ToyScenario::from_str)]
    scenario: ToyScenario,
    #[arg(long)]
    out_pairs: PathBuf,
    /// Also write an items file with random Gaussian feature vectors.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Feature dimensionality for --features.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse and dispatch; returns the process exit code instead of exiting so
/// the whole surface stays testable in-process.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    let outcome = match cli.cmd {
        Command::Train(a) => cmd_train(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Classify(a) => cmd_classify(a),
        Command::ActiveSim(a) => cmd_active_sim(a),
        Command::Toy(a) => cmd_toy(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_table(path: &Path, table: String) -> Result<()> {
    write_atomic(path, table.as_bytes())
}

fn history_table(outcome: &MliiOutcome) -> String {
    let d = outcome.config.dim();
    let mut header = String::from("iteration,bound");
    for k in 0..d {
        header.push_str(&format!(",lengthscale_{k}"));
    }
    for k in 0..d {
        header.push_str(&format!(",normalized_{k}"));
    }
    let mut out = header;
    out.push('\n');
    for (i, it) in outcome.history.iter().enumerate() {
        let mut values = vec![i as f64, it.bound];
        values.extend_from_slice(&it.lengthscales);
        values.extend_from_slice(&it.normalized);
        out.push_str(&csv_row(&[], &values));
        out.push('\n');
    }
    out
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let items = load_items(&a.items)?;
    let pairs = load_pairs(&a.pairs, &items)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "pairs file {} contains no pairs",
            a.pairs.display()
        )));
    }
    let hyper = VbHyper { a0: a.a0, b0: a.b0 };
    let mut kcfg = KernelConfig::matern32(median_heuristic(items.features())?)?;

    if a.optimize_lengthscales {
        let ctrl = MliiControl {
            max_iters: a.max_mlii_iters,
            ..MliiControl::default()
        };
        let outcome = optimize_lengthscales(items.features(), &pairs, &kcfg, &hyper, &ctrl)?;
        if outcome.fell_back {
            eprintln!(
                "warning: length-scale search found no improving step; keeping the starting \
                 configuration"
            );
        }
        if let Some(path) = &a.out_history {
            write_table(path, history_table(&outcome))?;
        }
        kcfg = outcome.config;
    } else if let Some(path) = &a.out_history {
        eprintln!(
            "note: --out-history {} ignored without --optimize-lengthscales",
            path.display()
        );
    }

    let state = if a.full_vb {
        let fit = fit_full_vb(
            items.features(),
            &pairs,
            &kcfg,
            &hyper,
            &VbControl::default(),
        )?;
        if !fit.converged {
            eprintln!(
                "warning: dense fit hit the iteration cap after {} rounds",
                fit.iterations
            );
        }
        ModelState::from_full_vb(
            &fit,
            kcfg,
            items.features(),
            a.forgetting,
            pairs.len(),
            items.vocab_hash(),
        )?
    } else {
        let scfg = SviConfig {
            m: a.m_inducing.min(items.len()),
            pn: a.batch_pairs.min(pairs.len()),
            u: a.forgetting,
            max_steps: a.svi_steps,
            seed: a.seed,
        };
        let (state, _stats) = fit_svi(&items, &pairs, &kcfg, &hyper, &scfg)?;
        state
    };
    state.save(&a.out_model)
}

fn cmd_rank(a: RankArgs) -> Result<()> {
    let model = ModelState::load(&a.model)?;
    let items = load_items(&a.items)?;
    let ranked = rank(&model, items.ids(), items.features())?;
    let mut out = String::from("id,score,stdev\n");
    for (id, score, stdev) in ranked {
        out.push_str(&csv_row(&[&id], &[score, stdev]));
        out.push('\n');
    }
    write_table(&a.out, out)
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let model = ModelState::load(&a.model)?;
    let items = load_items(&a.items)?;
    let index_pairs = load_pair_ids(&a.pairs, &items)?;
    let probs = pair_probabilities(&model, items.features(), &index_pairs)?;
    let mut out = String::from("id_i,id_j,p_first,entropy_bits\n");
    for (&(i, j), p) in index_pairs.iter().zip(&probs) {
        out.push_str(&csv_row(
            &[&items.ids()[i], &items.ids()[j]],
            &[*p, pair_entropy(*p)?],
        ));
        out.push('\n');
    }
    write_table(&a.out, out)
}

fn cmd_active_sim(a: ActiveSimArgs) -> Result<()> {
    let items = load_items(&a.items)?;
    let all = load_pairs(&a.pairs, &items)?;
    if all.len() < 2 {
        return Err(Error::InvalidArgument(
            "active simulation needs at least two labeled pairs (pool plus held-out)".into(),
        ));
    }
    if !(a.eval_fraction > 0.0 && a.eval_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--eval-fraction must lie strictly between 0 and 1, got {}",
            a.eval_fraction
        )));
    }
    let fitter = match a.fitter.as_str() {
        "full-vb" => RefitStrategy::FullVb,
        "svi" => RefitStrategy::Svi {
            m: a.m_inducing,
            pn: a.batch_pairs,
            u: a.forgetting,
            steps: a.svi_steps,
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown fitter {other:?}; expected full-vb or svi"
            )))
        }
    };

    // Seeded split: a held-out slice for the curve, the rest as the pool.
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    order.shuffle(&mut rng);
    let eval_n = ((all.len() as f64 * a.eval_fraction).floor() as usize).clamp(1, all.len() - 1);
    let eval_pairs = order[..eval_n].iter().map(|&k| all[k]).collect();
    let pool: Vec<_> = order[eval_n..].iter().map(|&k| all[k]).collect();

    let cfg = ActiveConfig {
        init_labels: a.init_labels,
        batch: a.batch,
        budget: a.budget,
        strategy: a.strategy,
        seed: a.seed,
        eval_pairs,
        hyper: VbHyper { a0: a.a0, b0: a.b0 },
        warm_start: a.warm_start,
        stop_at_accuracy: a.stop_at_accuracy,
        fitter,
    };
    let curve = simulate(&items, &pool, &cfg)?;
    let mut out = String::from("labels,accuracy\n");
    for pt in curve {
        out.push_str(&csv_row(&[], &[pt.labels_used as f64, pt.accuracy]));
        out.push('\n');
    }
    write_table(&a.out_curve, out)
}

fn cmd_toy(a: ToyArgs) -> Result<()> {
    let mut out = String::new();
    for p in toy_pairs(a.scenario) {
        out.push_str(&csv_row(
            &[TOY_ITEM_IDS[p.i], TOY_ITEM_IDS[p.j]],
            &[f64::from(p.label.to_raw())],
        ));
        out.push('\n');
    }
    write_table(&a.out_pairs, out)?;

    if let Some(path) = &a.features {
        if a.dim == 0 {
            return Err(Error::InvalidArgument(
                "--dim must be at least 1 when writing features".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let x = toy_features(a.dim, &mut rng);
        let mut table = String::new();
        for (i, id) in TOY_ITEM_IDS.iter().enumerate() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            table.push_str(&csv_row(&[id], &row));
            table.push('\n');
        }
        write_table(path, table)?;
    }
    Ok(())
}
