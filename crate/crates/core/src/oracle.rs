//! Independent correctness oracles.
//!
//! Neither oracle touches [`crate::solver`]. `single_seller_dp` is the
//! textbook stochastic knapsack recursion. The history-tree evaluator walks
//! every sequence of (price draw, selection outcome) explicitly, recomputing
//! continuation values at each node with no state aggregation, and measures
//! a seller's revenue against explicitly enumerated competitor capacities.

use serde::Serialize;
use thiserror::Error;

use crate::model::{Instance, PriceAtom};

pub const MAX_SELLERS: usize = 3;
pub const MAX_HORIZON: u32 = 5;
pub const MAX_CAPACITY: u32 = 2;
pub const MAX_ATOMS: usize = 3;

const TIE_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance exceeds the history-tree budget: {0}")]
    BudgetExceeded(String),

    #[error("capacity {capacity} is outside the prior support of seller {seller}")]
    CapacityOutsideSupport { seller: usize, capacity: u32 },

    #[error("seller index {0} out of range")]
    NoSuchSeller(usize),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Classic single-seller table `v(t, d)`, periods 1..=T+1.
#[derive(Debug, Clone)]
pub struct SingleSellerTable {
    horizon: u32,
    values: Vec<Vec<f64>>,
}

impl SingleSellerTable {
    pub fn value(&self, t: u32, d: u32) -> f64 {
        self.values[(t - 1) as usize][d as usize]
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn capacity(&self) -> u32 {
        (self.values[0].len() - 1) as u32
    }
}

/// `v(t, d) = sum_i theta_i [pi max(p_i + v(t+1, d-1), v(t+1, d)) + (1 - pi) v(t+1, d)]`
/// with `v(T+1, .) = 0` and `v(t, 0) = 0`.
pub fn single_seller_dp(
    horizon: u32,
    capacity: u32,
    prices: &[PriceAtom],
    pi: f64,
) -> SingleSellerTable {
    let width = capacity as usize + 1;
    let mut values = vec![vec![0.0; width]; horizon as usize + 1];
    for t in (0..horizon as usize).rev() {
        for d in 1..width {
            let hold = values[t + 1][d];
            let sell_base = values[t + 1][d - 1];
            values[t][d] = prices
                .iter()
                .map(|a| a.prob * (pi * (a.price + sell_base).max(hold) + (1.0 - pi) * hold))
                .sum();
        }
    }
    SingleSellerTable { horizon, values }
}

/// Result of a full history-tree walk for one seller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryTreeEvaluation {
    /// Revenue averaged over competitor capacity draws from their priors.
    pub expected_revenue: f64,
    /// The seller's own belief-based valuation at the root.
    pub subjective_value: f64,
    pub nodes: usize,
}

struct Tree {
    horizon: u32,
    prices: Vec<(f64, f64)>,
    pi: Vec<f64>,
    priors: Vec<Vec<(u32, f64)>>,
    max_cap: Vec<u32>,
    focal: usize,
    draws: Vec<Vec<u32>>,
    nodes: usize,
}

struct Node {
    /// `[k][c]`: seller k's valuation with initial capacity c.
    subjective: Vec<Vec<f64>>,
    /// Focal seller's expected revenue per competitor draw.
    objective: Vec<f64>,
}

impl Tree {
    fn zero(&self) -> Node {
        Node {
            subjective: self
                .max_cap
                .iter()
                .map(|&m| vec![0.0; m as usize + 1])
                .collect(),
            objective: vec![0.0; self.draws.len()],
        }
    }

    fn eval(&mut self, t: u32, sales: &mut [u32]) -> Node {
        self.nodes += 1;
        let mut out = self.zero();
        if t > self.horizon {
            return out;
        }
        let n = self.pi.len();
        for pi_idx in 0..self.prices.len() {
            let (price, theta) = self.prices[pi_idx];
            let none = self.eval(t + 1, sales);
            let mut sold: Vec<Option<Node>> = Vec::with_capacity(n);
            for k in 0..n {
                if sales[k] < self.max_cap[k] {
                    sales[k] += 1;
                    sold.push(Some(self.eval(t + 1, sales)));
                    sales[k] -= 1;
                } else {
                    sold.push(None);
                }
            }

            // accept[k][c]: does seller k with initial capacity c take this price here?
            let mut accept: Vec<Vec<bool>> = Vec::with_capacity(n);
            let mut alpha = vec![0.0; n];
            for k in 0..n {
                let mut row = vec![false; self.max_cap[k] as usize + 1];
                let mut kept = 0.0;
                let mut taking = 0.0;
                for &(c, w) in &self.priors[k] {
                    if c < sales[k] {
                        continue;
                    }
                    kept += w;
                    if c > sales[k] {
                        let after = sold[k].as_ref().expect("stock left").subjective[k][c as usize];
                        let marginal = none.subjective[k][c as usize] - after;
                        if price >= marginal - TIE_BAND {
                            row[c as usize] = true;
                            taking += w;
                        }
                    }
                }
                alpha[k] = taking / kept;
                accept.push(row);
            }

            for k in 0..n {
                for &(c, _) in &self.priors[k] {
                    if c < sales[k] {
                        continue;
                    }
                    let ci = c as usize;
                    let mut v = 0.0;
                    let mut mass = 0.0;
                    if accept[k][ci] {
                        v += self.pi[k] * (price + sold[k].as_ref().unwrap().subjective[k][ci]);
                        mass += self.pi[k];
                    }
                    for m in 0..n {
                        if m != k && alpha[m] > 0.0 {
                            let w = self.pi[m] * alpha[m];
                            v += w * sold[m].as_ref().unwrap().subjective[k][ci];
                            mass += w;
                        }
                    }
                    v += (1.0 - mass) * none.subjective[k][ci];
                    out.subjective[k][ci] += theta * v;
                }
            }

            for (j, draw) in self.draws.iter().enumerate() {
                let mut v = 0.0;
                let mut mass = 0.0;
                for k in 0..n {
                    let c = draw[k];
                    if c > sales[k] && accept[k][c as usize] {
                        let gain = if k == self.focal { price } else { 0.0 };
                        v += self.pi[k] * (gain + sold[k].as_ref().unwrap().objective[j]);
                        mass += self.pi[k];
                    }
                }
                v += (1.0 - mass) * none.objective[j];
                out.objective[j] += theta * v;
            }
        }
        out
    }
}

fn check_budget(instance: &Instance) -> Result<()> {
    if instance.num_sellers() > MAX_SELLERS {
        return Err(OracleError::BudgetExceeded(format!(
            "{} sellers > {MAX_SELLERS}",
            instance.num_sellers()
        )));
    }
    if instance.horizon() > MAX_HORIZON {
        return Err(OracleError::BudgetExceeded(format!(
            "horizon {} > {MAX_HORIZON}",
            instance.horizon()
        )));
    }
    if instance.prices().len() > MAX_ATOMS {
        return Err(OracleError::BudgetExceeded(format!(
            "{} price atoms > {MAX_ATOMS}",
            instance.prices().len()
        )));
    }
    for n in 0..instance.num_sellers() {
        if instance.prior(n).max_support() > MAX_CAPACITY {
            return Err(OracleError::BudgetExceeded(format!(
                "seller {} capacity support reaches {} > {MAX_CAPACITY}",
                n + 1,
                instance.prior(n).max_support()
            )));
        }
    }
    Ok(())
}

/// Walks the full history tree for seller `n` holding `own_capacity` units.
pub fn history_tree_evaluate(
    instance: &Instance,
    own_capacity: u32,
    n: usize,
) -> Result<HistoryTreeEvaluation> {
    check_budget(instance)?;
    if n >= instance.num_sellers() {
        return Err(OracleError::NoSuchSeller(n));
    }
    if !instance.prior(n).contains(own_capacity) {
        return Err(OracleError::CapacityOutsideSupport {
            seller: n,
            capacity: own_capacity,
        });
    }
    let priors: Vec<Vec<(u32, f64)>> = instance
        .sellers()
        .iter()
        .map(|s| s.prior.pmf().iter().map(|(&c, &p)| (c, p)).collect())
        .collect();

    // joint competitor capacity draws, focal seller pinned
    let mut draws: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
    for (k, prior) in priors.iter().enumerate() {
        let options: Vec<(u32, f64)> = if k == n {
            vec![(own_capacity, 1.0)]
        } else {
            prior.clone()
        };
        draws = draws
            .into_iter()
            .flat_map(|(caps, w)| {
                options.iter().map(move |&(c, p)| {
                    let mut caps = caps.clone();
                    caps.push(c);
                    (caps, w * p)
                })
            })
            .collect();
    }

    let mut tree = Tree {
        horizon: instance.horizon(),
        prices: instance
            .prices()
            .atoms()
            .iter()
            .map(|a| (a.price, a.prob))
            .collect(),
        pi: instance.selection().all().to_vec(),
        max_cap: priors.iter().map(|p| p.last().unwrap().0).collect(),
        priors,
        focal: n,
        draws: draws.iter().map(|(c, _)| c.clone()).collect(),
        nodes: 0,
    };
    let mut sales = vec![0u32; instance.num_sellers()];
    let root = tree.eval(1, &mut sales);
    let expected_revenue = draws
        .iter()
        .zip(&root.objective)
        .map(|((_, w), v)| w * v)
        .sum();
    Ok(HistoryTreeEvaluation {
        expected_revenue,
        subjective_value: root.subjective[n][own_capacity as usize],
        nodes: tree.nodes,
    })
}

/// Expected revenue of seller `n` with `own_capacity` units, by exhaustive
/// history enumeration.
pub fn history_tree_value(instance: &Instance, own_capacity: u32, n: usize) -> Result<f64> {
    Ok(history_tree_evaluate(instance, own_capacity, n)?.expected_revenue)
}

/// One row of an oracle comparison run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDiff {
    pub state: OracleState,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleState {
    /// 1-based seller number.
    pub seller: usize,
    pub t: u32,
    pub d: u32,
    pub s: Vec<u32>,
}
