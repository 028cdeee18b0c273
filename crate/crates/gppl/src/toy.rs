//! Five-argument demonstration scenarios.
//!
//! Tiny preference graphs over items `arg0`..`arg4` used to sanity-check the
//! model's qualitative behavior: transitive orderings should separate scores,
//! cycles should flatten them, and undecided labels should soften both scores
//! and classifications. Feature vectors are synthetic Gaussian draws so the
//! scenarios run anywhere.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::likelihood::{PreferenceLabel, PreferencePair};

/// Item identifiers shared by every scenario.
pub const TOY_ITEM_IDS: [&str; 5] = ["arg0", "arg1", "arg2", "arg3", "arg4"];

/// How many undecided labels the `undecided` scenario adds. They all attach
/// to the (arg0, arg2) pair; this multiset is the documented convention.
pub const UNDECIDED_LABEL_COUNT: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyScenario {
    /// arg0 ≻ arg1, arg0 ≻ arg2; arg3 ≻ arg4 in its own component.
    NoCycle,
    /// A directed 3-cycle over {arg0, arg1, arg2}; arg3 ≻ arg4 apart.
    SingleCycle,
    /// Two preference paths from arg2 up to arg0 (via arg1 and via arg3)
    /// opposed by a single conflicting arg2 ≻ arg0; arg4 isolated.
    DoubleCycle,
    /// The no-cycle graph plus [`UNDECIDED_LABEL_COUNT`] undecided labels.
    Undecided,
}

impl ToyScenario {
    pub const ALL: [ToyScenario; 4] = [
        ToyScenario::NoCycle,
        ToyScenario::SingleCycle,
        ToyScenario::DoubleCycle,
        ToyScenario::Undecided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyScenario::NoCycle => "no-cycle",
            ToyScenario::SingleCycle => "single-cycle",
            ToyScenario::DoubleCycle => "double-cycle",
            ToyScenario::Undecided => "undecided",
        }
    }
}

impl fmt::Display for ToyScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ToyScenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown scenario {s:?}; expected one of no-cycle, single-cycle, \
                     double-cycle, undecided"
                ))
            })
    }
}

fn beats(i: usize, j: usize) -> PreferencePair {
    PreferencePair::new(i, j, PreferenceLabel::FirstPreferred)
        .expect("toy edges never pair an item with itself")
}

/// The preference edges of the named scenario, as indices into
/// [`TOY_ITEM_IDS`]. `(i, j, FirstPreferred)` means item i beats item j.
pub fn toy_pairs(scenario: ToyScenario) -> Vec<PreferencePair> {
    match scenario {
        ToyScenario::NoCycle => vec![beats(0, 1), beats(0, 2), beats(3, 4)],
        ToyScenario::SingleCycle => vec![beats(0, 1), beats(1, 2), beats(2, 0), beats(3, 4)],
        ToyScenario::DoubleCycle => vec![
            // Path arg2 → arg1 → arg0 ...
            beats(1, 2),
            beats(0, 1),
            // ... path arg2 → arg3 → arg0 ...
            beats(3, 2),
            beats(0, 3),
            // ... and the single conflicting edge.
            beats(2, 0),
        ],
        ToyScenario::Undecided => {
            let mut pairs = toy_pairs(ToyScenario::NoCycle);
            for _ in 0..UNDECIDED_LABEL_COUNT {
                pairs.push(
                    PreferencePair::new(0, 2, PreferenceLabel::Undecided)
                        .expect("distinct items"),
                );
            }
            pairs
        }
    }
}

/// Standard-normal feature vectors for the five items.
pub fn toy_features<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(TOY_ITEM_IDS.len(), dim, |_, _| rng.sample(StandardNormal))
}
