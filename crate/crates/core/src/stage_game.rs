//! Per-period accept/reject game in normal form.
//!
//! Capacities are public here (complete information), so the active
//! sellers, their remaining inventories and every payoff are known. A
//! profile is a bitmask over the active sellers; bit `j` set means
//! `active[j]` accepts.

use serde::Serialize;

use crate::model::SalesVector;
use crate::solver::{self, Result, SolverError, ValueTables, POLICY_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    pub period: u32,
    pub sales: SalesVector,
    pub price: f64,
    /// Remaining inventory of every seller (inactive sellers included).
    pub remaining: Vec<u32>,
    /// Sellers with positive remaining inventory.
    pub active: Vec<usize>,
    /// Marginal value of each active seller, aligned with `active`.
    pub marginals: Vec<f64>,
    /// `utilities[profile][j]`: payoff of `active[j]` under `profile`.
    pub utilities: Vec<Vec<f64>>,
}

impl StageGame {
    pub fn num_profiles(&self) -> usize {
        self.utilities.len()
    }

    /// Profile where every active seller follows the balance rule.
    pub fn balance_profile(&self) -> usize {
        self.marginals
            .iter()
            .enumerate()
            .filter(|&(_, &m)| solver::accepts(self.price, m))
            .fold(0, |mask, (j, _)| mask | (1 << j))
    }

    /// Expands a profile mask to one accept flag per seller.
    pub fn profile_flags(&self, profile: usize) -> Vec<bool> {
        let mut flags = vec![false; self.remaining.len()];
        for (j, &n) in self.active.iter().enumerate() {
            flags[n] = profile & (1 << j) != 0;
        }
        flags
    }
}

/// Builds the stage game at `(t, s)` for the given remaining inventories and price.
pub fn build_stage_game(
    tables: &ValueTables,
    t: u32,
    sales: &SalesVector,
    remaining: &[u32],
    price: f64,
) -> Result<StageGame> {
    let n_sellers = tables.instance().num_sellers();
    if remaining.len() != n_sellers || sales.len() != n_sellers || t == 0 || t > tables.horizon() {
        return Err(SolverError::Malformed(format!(
            "stage game needs t in 1..={} and {n_sellers} sellers",
            tables.horizon()
        )));
    }
    let pi = tables.instance().selection().all();
    let active: Vec<usize> = (0..n_sellers).filter(|&n| remaining[n] >= 1).collect();

    // Continuation values for each active seller.
    struct Cont {
        stay: f64,
        own_sale: f64,
        other_sale: Vec<Option<f64>>,
    }
    let mut conts = Vec::with_capacity(active.len());
    let mut marginals = Vec::with_capacity(active.len());
    for &n in &active {
        let d = remaining[n];
        // the period-t state must exist even though only t+1 values are read
        tables.value(n, t, d, sales)?;
        let stay = tables.value(n, t + 1, d, sales)?;
        let own_sale = tables.value(n, t + 1, d - 1, &sales.incremented(n))?;
        let other_sale = (0..n_sellers)
            .map(|m| {
                if m == n || remaining[m] == 0 {
                    Ok(None)
                } else {
                    tables.value(n, t + 1, d, &sales.incremented(m)).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        marginals.push(stay - own_sale);
        conts.push(Cont {
            stay,
            own_sale,
            other_sale,
        });
    }

    let profiles = 1usize << active.len();
    let utilities = (0..profiles)
        .map(|profile| {
            let accepting: Vec<usize> = (0..active.len())
                .filter(|&j| profile & (1 << j) != 0)
                .map(|j| active[j])
                .collect();
            let residual = 1.0 - accepting.iter().map(|&m| pi[m]).sum::<f64>();
            active
                .iter()
                .zip(&conts)
                .map(|(&n, c)| {
                    let mut u = residual * c.stay;
                    for &m in &accepting {
                        if m == n {
                            u += pi[n] * (price + c.own_sale);
                        } else {
                            u += pi[m] * c.other_sale[m].expect("accepting seller is active");
                        }
                    }
                    u
                })
                .collect()
        })
        .collect();

    Ok(StageGame {
        period: t,
        sales: sales.clone(),
        price,
        remaining: remaining.to_vec(),
        active,
        marginals,
        utilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageState {
    pub t: u32,
    pub s: Vec<u32>,
    pub d: Vec<u32>,
    pub price: f64,
}

/// A seller indifferent between accepting and rejecting against a profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffTie {
    /// 1-based seller number.
    pub seller: usize,
    /// Accept flags of the other sellers' profile (the tying seller's own flag is false).
    pub against: Vec<bool>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    pub state: StageState,
    /// Every pure equilibrium as per-seller accept flags.
    pub equilibria: Vec<Vec<bool>>,
    pub unique: bool,
    /// Exactly one equilibrium and it is the balance-rule profile.
    pub matches_balance_rule: bool,
    pub balance_rule_is_equilibrium: bool,
    pub balance_profile: Vec<bool>,
    pub ties: Vec<PayoffTie>,
}

impl NashReport {
    /// The balance profile is an equilibrium, and the only one unless payoff
    /// ties occurred.
    pub fn consistent(&self) -> bool {
        self.balance_rule_is_equilibrium && (self.matches_balance_rule || !self.ties.is_empty())
    }
}

/// Enumerates all profiles and reports the pure Nash equilibria.
pub fn verify_unique_nash(game: &StageGame) -> NashReport {
    let k = game.active.len();
    let mut equilibria = Vec::new();
    let mut ties = Vec::new();
    for profile in 0..game.num_profiles() {
        let mut stable = true;
        for j in 0..k {
            let flipped = profile ^ (1 << j);
            let gain = game.utilities[flipped][j] - game.utilities[profile][j];
            if gain > POLICY_EPS {
                stable = false;
            }
            if profile & (1 << j) == 0 && gain.abs() <= POLICY_EPS {
                ties.push(PayoffTie {
                    seller: game.active[j] + 1,
                    against: game.profile_flags(profile),
                    gap: gain,
                });
            }
        }
        if stable {
            equilibria.push(profile);
        }
    }
    let balance = game.balance_profile();
    let unique = equilibria.len() == 1;
    NashReport {
        state: StageState {
            t: game.period,
            s: game.sales.as_slice().to_vec(),
            d: game.remaining.clone(),
            price: game.price,
        },
        unique,
        matches_balance_rule: unique && equilibria[0] == balance,
        balance_rule_is_equilibrium: equilibria.contains(&balance),
        balance_profile: game.profile_flags(balance),
        equilibria: equilibria.iter().map(|&p| game.profile_flags(p)).collect(),
        ties,
    }
}

/// Aggregate of Nash checks over many stage games.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NashSummary {
    pub instance_hash: String,
    pub games: usize,
    pub balance_is_equilibrium: usize,
    pub unique_and_matching: usize,
    pub games_with_ties: usize,
    pub failures: usize,
    pub reports: Vec<NashReport>,
}

impl NashSummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Runs [`verify_unique_nash`] at every stage state of a solved instance.
///
/// Capacity profiles are the instance's actual capacities when every seller
/// has one, otherwise every profile drawn from the prior supports. Profiles
/// that cannot have produced the sales vector (capacity below sales) are skipped.
pub fn verify_all_stages(tables: &ValueTables) -> Result<NashSummary> {
    let instance = tables.instance();
    let n = instance.num_sellers();
    let profiles: Vec<Vec<u32>> = match instance.actual_capacities() {
        Some(actual) => vec![actual],
        None => {
            let mut out = vec![Vec::new()];
            for k in 0..n {
                let support: Vec<u32> = instance.prior(k).support().collect();
                out = out
                    .into_iter()
                    .flat_map(|p: Vec<u32>| {
                        support.iter().map(move |&c| {
                            let mut p = p.clone();
                            p.push(c);
                            p
                        })
                    })
                    .collect();
            }
            out
        }
    };

    let mut summary = NashSummary {
        instance_hash: instance.content_hash().to_string(),
        ..Default::default()
    };
    let space = tables.space();
    for t in 1..=tables.horizon() {
        for idx in space.lex_indices(t) {
            let sales = space.sales(idx);
            for caps in &profiles {
                if (0..n).any(|k| caps[k] < sales.get(k)) {
                    continue;
                }
                let remaining: Vec<u32> = (0..n).map(|k| caps[k] - sales.get(k)).collect();
                for atom in instance.prices().atoms() {
                    let game = build_stage_game(tables, t, sales, &remaining, atom.price)?;
                    let report = verify_unique_nash(&game);
                    summary.games += 1;
                    summary.balance_is_equilibrium += report.balance_rule_is_equilibrium as usize;
                    summary.unique_and_matching += report.matches_balance_rule as usize;
                    summary.games_with_ties += (!report.ties.is_empty()) as usize;
                    summary.failures += (!report.consistent()) as usize;
                    summary.reports.push(report);
                }
            }
        }
    }
    Ok(summary)
}
