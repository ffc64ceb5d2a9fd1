//! Monte Carlo replay of the equilibrium policy.
//!
//! Replication `r` draws from a ChaCha8 generator seeded with the run seed
//! and switched to stream `r`, so a path depends only on `(seed, r)`.
//! Replications are grouped in fixed blocks of [`BLOCK`]; each block is
//! accumulated in order and the block accumulators are combined by a fixed
//! pairwise tree, which keeps reports bit-identical across thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::solver::ValueTables;

const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("fixed-actual mode needs an actual capacity for seller {0}")]
    MissingActualCapacity(usize),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMode {
    /// Capacities drawn from the priors (focal seller pinned to its actual capacity).
    Sampled,
    /// Every seller uses its actual capacity.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub replications: usize,
    pub seed: u64,
    pub mode: CapacityMode,
    /// 0-based focal seller.
    pub focal: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `v_n(1, C_n, 0)` for the focal seller's pinned capacity.
    TableEntry,
    /// Prior-weighted average of `v_n(1, c, 0)` over sampled capacities.
    PriorMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SellerStats {
    pub name: String,
    pub mean_revenue: f64,
    pub std_error: f64,
    /// Per price atom: accepted / offered while holding stock; `None` if never offered.
    pub acceptance_rate: Vec<Option<f64>>,
    pub sellout_frequency: f64,
    pub target: Option<f64>,
    pub target_kind: Option<TargetKind>,
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub instance_hash: String,
    pub replications: usize,
    pub seed: u64,
    pub mode: CapacityMode,
    /// 1-based focal seller.
    pub focal: Option<usize>,
    /// Fraction of periods with no sale.
    pub no_sale_frequency: f64,
    pub note: Option<String>,
    pub sellers: Vec<SellerStats>,
}

/// One period of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub replication: usize,
    pub t: u32,
    pub price: f64,
    /// 1-based accepting sellers.
    pub accepters: Vec<usize>,
    /// 1-based selected seller.
    pub selected: Option<usize>,
    pub revenue: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Accumulator {
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    offered: Vec<Vec<u64>>,
    accepted: Vec<Vec<u64>>,
    sellouts: Vec<u64>,
    periods: u64,
    no_sale: u64,
}

impl Accumulator {
    fn new(sellers: usize, atoms: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; sellers],
            sum_sq: vec![0.0; sellers],
            offered: vec![vec![0; atoms]; sellers],
            accepted: vec![vec![0; atoms]; sellers],
            sellouts: vec![0; sellers],
            periods: 0,
            no_sale: 0,
        }
    }

    fn merge(mut self, other: &Accumulator) -> Self {
        self.count += other.count;
        for n in 0..self.sum.len() {
            self.sum[n] += other.sum[n];
            self.sum_sq[n] += other.sum_sq[n];
            self.sellouts[n] += other.sellouts[n];
            for i in 0..self.offered[n].len() {
                self.offered[n][i] += other.offered[n][i];
                self.accepted[n][i] += other.accepted[n][i];
            }
        }
        self.periods += other.periods;
        self.no_sale += other.no_sale;
        self
    }
}

fn pairwise(parts: &[Accumulator]) -> Accumulator {
    match parts {
        [one] => one.clone(),
        _ => {
            let mid = parts.len() / 2;
            pairwise(&parts[..mid]).merge(&pairwise(&parts[mid..]))
        }
    }
}

/// Picks an index from cumulative weights `probs` using a uniform draw.
fn pick(u: f64, probs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    None
}

struct Runner<'a> {
    tables: &'a ValueTables,
    config: &'a SimulationConfig,
    fixed: Vec<Option<u32>>,
}

impl Runner<'_> {
    fn replicate(&self, r: usize, acc: &mut Accumulator, trace: Option<&mut Vec<TraceRow>>) {
        let instance = self.tables.instance();
        let space = self.tables.space();
        let prices = instance.prices();
        let pi = instance.selection().all();
        let n_sellers = instance.num_sellers();

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(r as u64);

        let capacities: Vec<u32> = (0..n_sellers)
            .map(|n| match self.fixed[n] {
                Some(c) => c,
                None => {
                    let u: f64 = rng.random();
                    let pmf = instance.prior(n).pmf();
                    let i = pick(u, pmf.values().copied()).unwrap_or(pmf.len() - 1);
                    *pmf.keys().nth(i).expect("index within support")
                }
            })
            .collect();

        let mut trace = trace;
        let mut remaining = capacities.clone();
        let mut revenue = vec![0.0; n_sellers];
        let mut idx = 0usize; // sales vector (0, .., 0) comes first
        for t in 1..=instance.horizon() {
            let u_price: f64 = rng.random();
            let i =
                pick(u_price, prices.atoms().iter().map(|a| a.prob)).unwrap_or(prices.len() - 1);
            let price = prices.price(i);

            let mut accepting = vec![false; n_sellers];
            for n in 0..n_sellers {
                if remaining[n] >= 1 {
                    acc.offered[n][i] += 1;
                    if self.tables.policy_at(n, t, idx, remaining[n], i) {
                        accepting[n] = true;
                        acc.accepted[n][i] += 1;
                    }
                }
            }
            let u_buyer: f64 = rng.random();
            let selected = pick(u_buyer, pi.iter().copied()).filter(|&n| accepting[n]);

            acc.periods += 1;
            match selected {
                Some(n) => {
                    remaining[n] -= 1;
                    revenue[n] += price;
                    idx = space
                        .successor(idx, n)
                        .expect("sale keeps the state feasible");
                }
                None => acc.no_sale += 1,
            }
            if let Some(rows) = trace.as_deref_mut() {
                rows.push(TraceRow {
                    replication: r,
                    t,
                    price,
                    accepters: (0..n_sellers)
                        .filter(|&n| accepting[n])
                        .map(|n| n + 1)
                        .collect(),
                    selected: selected.map(|n| n + 1),
                    revenue: selected.map_or(0.0, |_| price),
                });
            }
        }

        acc.count += 1;
        for n in 0..n_sellers {
            acc.sum[n] += revenue[n];
            acc.sum_sq[n] += revenue[n] * revenue[n];
            if remaining[n] == 0 {
                acc.sellouts[n] += 1;
            }
        }
    }
}

/// Simulates the equilibrium policy and compares mean revenue with the tables.
pub fn simulate(
    tables: &ValueTables,
    config: &SimulationConfig,
) -> Result<SimulationReport, SimulationError> {
    simulate_with_trace(tables, config, 0).map(|(report, _)| report)
}

/// As [`simulate`], also returning the per-period trace of the first
/// `trace_replications` replications.
pub fn simulate_with_trace(
    tables: &ValueTables,
    config: &SimulationConfig,
    trace_replications: usize,
) -> Result<(SimulationReport, Vec<TraceRow>), SimulationError> {
    let instance = tables.instance();
    let n_sellers = instance.num_sellers();
    let atoms = instance.prices().len();
    if config.replications == 0 {
        return Err(SimulationError::InvalidConfig(
            "replications must be at least 1".into(),
        ));
    }
    if let Some(f) = config.focal {
        if f >= n_sellers {
            return Err(SimulationError::InvalidConfig(format!(
                "focal seller {} out of range",
                f + 1
            )));
        }
    }

    let fixed: Vec<Option<u32>> = (0..n_sellers)
        .map(|n| {
            let pinned = config.mode == CapacityMode::Fixed || config.focal == Some(n);
            if pinned {
                instance
                    .seller(n)
                    .actual_capacity
                    .map(Some)
                    .ok_or(SimulationError::MissingActualCapacity(n))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_, _>>()?;

    let runner = Runner {
        tables,
        config,
        fixed,
    };
    let blocks = config.replications.div_ceil(BLOCK);
    let parts: Vec<Accumulator> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::new(n_sellers, atoms);
            for r in b * BLOCK..((b + 1) * BLOCK).min(config.replications) {
                runner.replicate(r, &mut acc, None);
            }
            acc
        })
        .collect();
    let total = pairwise(&parts);

    let mut trace = Vec::new();
    let mut scratch = Accumulator::new(n_sellers, atoms);
    for r in 0..trace_replications.min(config.replications) {
        runner.replicate(r, &mut scratch, Some(&mut trace));
    }

    let space = tables.space();
    let start = space
        .sales_index(&crate::model::SalesVector::zeros(n_sellers))
        .expect("empty sales vector is always feasible");
    let r = total.count as f64;
    let sellers = (0..n_sellers)
        .map(|n| {
            let mean = total.sum[n] / r;
            let var = if total.count > 1 {
                ((total.sum_sq[n] - r * mean * mean) / (r - 1.0)).max(0.0)
            } else {
                0.0
            };
            let std_error = (var / r).sqrt();
            let (target, target_kind) = match (config.mode, runner.fixed[n]) {
                (CapacityMode::Fixed, _) => (None, None),
                (CapacityMode::Sampled, Some(c)) => (
                    Some(tables.value_at(n, 1, start, c)),
                    Some(TargetKind::TableEntry),
                ),
                (CapacityMode::Sampled, None) => {
                    let mix = instance
                        .prior(n)
                        .pmf()
                        .iter()
                        .map(|(&c, &p)| p * tables.value_at(n, 1, start, c))
                        .sum();
                    (Some(mix), Some(TargetKind::PriorMixture))
                }
            };
            let z_score = target.map(|tv| {
                let diff = mean - tv;
                if std_error > 0.0 {
                    diff / std_error
                } else if diff.abs() <= 1e-9 {
                    0.0
                } else {
                    diff.signum() * f64::INFINITY
                }
            });
            SellerStats {
                name: instance.seller(n).name.clone(),
                mean_revenue: mean,
                std_error,
                acceptance_rate: (0..atoms)
                    .map(|i| {
                        let offered = total.offered[n][i];
                        (offered > 0).then(|| total.accepted[n][i] as f64 / offered as f64)
                    })
                    .collect(),
                sellout_frequency: total.sellouts[n] as f64 / r,
                target,
                target_kind,
                z_score,
            }
        })
        .collect();

    let report = SimulationReport {
        instance_hash: instance.content_hash().to_string(),
        replications: config.replications,
        seed: config.seed,
        mode: config.mode,
        focal: config.focal.map(|f| f + 1),
        no_sale_frequency: total.no_sale as f64 / total.periods as f64,
        note: (config.mode == CapacityMode::Fixed)
            .then(|| "scenario analysis, no DP target".to_string()),
        sellers,
    };
    Ok((report, trace))
}
