//! Seeded generators for randomized instance suites.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{PriceAtom, ProblemInstance, SellerSpec};

#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub sellers: RangeInclusive<usize>,
    pub horizon: RangeInclusive<u32>,
    /// Capacity supports are drawn from `0..=max_capacity`.
    pub max_capacity: u32,
    pub atoms: RangeInclusive<usize>,
    /// Point-mass priors (complete information).
    pub degenerate_priors: bool,
    /// Force `pi = 1` for single-seller instances.
    pub full_selection: bool,
}

impl SuiteSpec {
    /// N in 1..=3, T in 2..=6, supports within 0..=4, 2-3 price atoms.
    pub fn default_suite() -> Self {
        Self {
            sellers: 1..=3,
            horizon: 2..=6,
            max_capacity: 4,
            atoms: 2..=3,
            degenerate_priors: false,
            full_selection: false,
        }
    }

    /// Small enough for the history-tree oracle.
    pub fn tiny() -> Self {
        Self {
            sellers: 1..=3,
            horizon: 1..=5,
            max_capacity: 2,
            atoms: 2..=3,
            degenerate_priors: false,
            full_selection: false,
        }
    }

    pub fn complete_information() -> Self {
        Self {
            degenerate_priors: true,
            horizon: 2..=5,
            max_capacity: 3,
            ..Self::default_suite()
        }
    }

    /// N = 1, pi = 1, T up to 10, C up to 8.
    pub fn single_seller() -> Self {
        Self {
            sellers: 1..=1,
            horizon: 1..=10,
            max_capacity: 8,
            atoms: 1..=4,
            degenerate_priors: false,
            full_selection: true,
        }
    }
}

fn normalized(weights: Vec<f64>, total: f64) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum * total).collect()
}

pub fn random_instance<R: Rng>(rng: &mut R, spec: &SuiteSpec) -> ProblemInstance {
    let n = rng.random_range(spec.sellers.clone());
    let horizon = rng.random_range(spec.horizon.clone());
    let atoms = rng.random_range(spec.atoms.clone());

    // distinct prices on a 0.25 grid in [0.25, 20]
    let grid = sample(rng, 80, atoms);
    let prices: Vec<f64> = grid.iter().map(|k| (k + 1) as f64 * 0.25).collect();
    let probs = normalized(
        (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect(),
        1.0,
    );

    let pi_total = if spec.full_selection || rng.random_bool(0.5) {
        1.0
    } else {
        rng.random_range(0.5..1.0)
    };
    let pis = normalized(
        (0..n).map(|_| rng.random_range(0.2..1.0)).collect(),
        pi_total,
    );

    let sellers = (0..n)
        .map(|i| {
            let span = spec.max_capacity as usize + 1;
            let size = if spec.degenerate_priors {
                1
            } else {
                rng.random_range(1..=span.min(3))
            };
            let mut support: Vec<u32> = sample(rng, span, size).iter().map(|c| c as u32).collect();
            support.sort_unstable();
            let mass = normalized((0..size).map(|_| rng.random_range(0.1..1.0)).collect(), 1.0);
            let actual = support[rng.random_range(0..size)];
            SellerSpec {
                name: format!("seller-{}", i + 1),
                pi: pis[i],
                capacity_prior: support.into_iter().zip(mass).collect::<BTreeMap<_, _>>(),
                actual_capacity: Some(actual),
            }
        })
        .collect();

    ProblemInstance {
        horizon,
        prices: prices
            .into_iter()
            .zip(probs)
            .map(|(price, prob)| PriceAtom { price, prob })
            .collect(),
        sellers,
    }
}

/// `count` instances from `spec`, reproducible from `seed`.
pub fn generate(spec: &SuiteSpec, count: usize, seed: u64) -> Vec<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_instance(&mut rng, spec))
        .collect()
}
