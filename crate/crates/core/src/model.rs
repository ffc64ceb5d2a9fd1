//! Problem instances for the N-seller stochastic knapsack game.
//!
//! A [`ProblemInstance`] is the raw, serde-facing description read from an
//! instance file. [`Instance`] is the validated form every other module
//! consumes; it can only be obtained through [`Instance::new`], which runs
//! [`validate`] and refuses instances with violations.
//!
//! Beliefs about a competitor's capacity are a deterministic function of the
//! public sales vector: the common prior truncated at the observed sales
//! count ([`CapacityPrior::truncated`]).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tolerance on probability sums in distributions.
pub const DIST_TOL: f64 = 1e-12;

/// Default upper bound on any capacity support value.
pub const DEFAULT_CAPACITY_BOUND: u32 = 64;

/// Default budget on the number of enumerated states.
pub const DEFAULT_MAX_STATES: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("infeasible history: P[D >= {observed}] = 0 under the prior")]
    InfeasibleHistory { observed: u32 },

    #[error("state space exceeds budget of {budget} states")]
    CapacityBoundExceeded { budget: usize },

    #[error("invalid capacity prior: {0}")]
    InvalidPrior(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// One price atom of the demand distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceAtom {
    pub price: f64,
    pub prob: f64,
}

/// Seller record as it appears in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerSpec {
    pub name: String,
    pub pi: f64,
    pub capacity_prior: BTreeMap<u32, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_capacity: Option<u32>,
}

/// Raw instance file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance {
    pub horizon: u32,
    pub prices: Vec<PriceAtom>,
    pub sellers: Vec<SellerSpec>,
}

impl ProblemInstance {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Canonical JSON encoding; the content hash is computed over these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Outcome of [`validate`]: empty means the instance is usable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Short decimal rendering for messages ("1.1" rather than "1.0999999999999999").
fn short(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Checks every instance invariant, collecting all violations.
pub fn validate(instance: &ProblemInstance) -> ValidationReport {
    validate_with_bound(instance, DEFAULT_CAPACITY_BOUND)
}

pub fn validate_with_bound(instance: &ProblemInstance, capacity_bound: u32) -> ValidationReport {
    let mut v = Vec::new();

    if instance.horizon < 1 {
        v.push("horizon must be at least 1".to_string());
    }

    // prices
    if instance.prices.is_empty() {
        v.push("price distribution has no atoms".to_string());
    }
    let mut prob_sum = 0.0;
    for (i, atom) in instance.prices.iter().enumerate() {
        if !atom.price.is_finite() || atom.price <= 0.0 {
            v.push(format!(
                "price atom {} has non-positive price {}",
                i + 1,
                short(atom.price)
            ));
        }
        if !atom.prob.is_finite() || atom.prob <= 0.0 || atom.prob > 1.0 {
            v.push(format!(
                "price atom {} has probability {} outside (0, 1]",
                i + 1,
                short(atom.prob)
            ));
        }
        prob_sum += atom.prob;
    }
    if !instance.prices.is_empty() && (prob_sum - 1.0).abs() > DIST_TOL {
        v.push(format!(
            "price probabilities sum to {} != 1",
            short(prob_sum)
        ));
    }
    for i in 0..instance.prices.len() {
        for j in (i + 1)..instance.prices.len() {
            if instance.prices[i].price == instance.prices[j].price {
                v.push(format!(
                    "price atoms {} and {} share price {}",
                    i + 1,
                    j + 1,
                    short(instance.prices[i].price)
                ));
            }
        }
    }

    // sellers
    if instance.sellers.is_empty() {
        v.push("instance has no sellers".to_string());
    }
    let mut pi_sum = 0.0;
    for (n, seller) in instance.sellers.iter().enumerate() {
        let label = format!("seller {} ({})", n + 1, seller.name);
        if !seller.pi.is_finite() || seller.pi <= 0.0 || seller.pi > 1.0 {
            v.push(format!(
                "{label}: selection probability {} outside (0, 1]",
                short(seller.pi)
            ));
        }
        pi_sum += seller.pi;

        if seller.capacity_prior.is_empty() {
            v.push(format!("{label}: capacity prior is empty"));
        }
        let mut mass = 0.0;
        for (&c, &p) in &seller.capacity_prior {
            if !p.is_finite() || p <= 0.0 || p > 1.0 {
                v.push(format!(
                    "{label}: capacity prior mass {} at {c} outside (0, 1]",
                    short(p)
                ));
            }
            if c > capacity_bound {
                v.push(format!(
                    "{label}: capacity support value {c} exceeds bound {capacity_bound}"
                ));
            }
            mass += p;
        }
        if !seller.capacity_prior.is_empty() && (mass - 1.0).abs() > DIST_TOL {
            v.push(format!(
                "{label}: capacity prior sums to {} != 1",
                short(mass)
            ));
        }
        if let Some(actual) = seller.actual_capacity {
            if !seller.capacity_prior.contains_key(&actual) {
                v.push(format!(
                    "{label}: actual capacity {actual} is outside the prior support"
                ));
            }
        }
    }
    if pi_sum > 1.0 + DIST_TOL {
        v.push(format!(
            "selection probabilities sum to {} > 1",
            short(pi_sum)
        ));
    }

    ValidationReport { violations: v }
}

/// Discrete demand price distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceDistribution {
    atoms: Vec<PriceAtom>,
}

impl PriceDistribution {
    pub fn atoms(&self) -> &[PriceAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn price(&self, i: usize) -> f64 {
        self.atoms[i].price
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.atoms[i].prob
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.price * a.prob).sum()
    }

    pub fn max_price(&self) -> f64 {
        self.atoms.iter().map(|a| a.price).fold(0.0, f64::max)
    }

    pub fn index_of(&self, price: f64) -> Option<usize> {
        self.atoms.iter().position(|a| a.price == price)
    }
}

/// Static random selection rule: an accepting seller n is chosen with
/// probability `pi[n]`; the residual mass is the no-selection event.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRule {
    pi: Vec<f64>,
}

impl SelectionRule {
    pub fn pi(&self, n: usize) -> f64 {
        self.pi[n]
    }

    pub fn all(&self) -> &[f64] {
        &self.pi
    }

    /// Probability that nobody is selected even if every seller accepts.
    pub fn residual(&self) -> f64 {
        1.0 - self.pi.iter().sum::<f64>()
    }
}

/// Discrete distribution over a seller's initial capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPrior {
    pmf: BTreeMap<u32, f64>,
}

impl CapacityPrior {
    pub fn new(pmf: BTreeMap<u32, f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(ModelError::InvalidPrior("empty support".into()));
        }
        if pmf.values().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(ModelError::InvalidPrior("non-positive mass".into()));
        }
        let total: f64 = pmf.values().sum();
        if (total - 1.0).abs() > DIST_TOL {
            return Err(ModelError::InvalidPrior(format!("mass sums to {total}")));
        }
        Ok(Self { pmf })
    }

    /// Point mass at `capacity`.
    pub fn degenerate(capacity: u32) -> Self {
        Self {
            pmf: BTreeMap::from([(capacity, 1.0)]),
        }
    }

    pub fn pmf(&self) -> &BTreeMap<u32, f64> {
        &self.pmf
    }

    pub fn prob(&self, capacity: u32) -> f64 {
        self.pmf.get(&capacity).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, capacity: u32) -> bool {
        self.pmf.contains_key(&capacity)
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.pmf.keys().copied()
    }

    pub fn max_support(&self) -> u32 {
        *self
            .pmf
            .keys()
            .next_back()
            .expect("prior support is non-empty")
    }

    /// Conditions the prior on `D >= observed_sales`.
    pub fn truncated(&self, observed_sales: u32) -> Result<CapacityPrior> {
        let kept: Vec<(u32, f64)> = self
            .pmf
            .range(observed_sales..)
            .map(|(&c, &p)| (c, p))
            .collect();
        let mass: f64 = kept.iter().map(|&(_, p)| p).sum();
        if kept.is_empty() || mass <= 0.0 {
            return Err(ModelError::InfeasibleHistory {
                observed: observed_sales,
            });
        }
        Ok(CapacityPrior {
            pmf: kept.into_iter().map(|(c, p)| (c, p / mass)).collect(),
        })
    }
}

/// Free-function form of [`CapacityPrior::truncated`].
pub fn truncated_belief(prior: &CapacityPrior, observed_sales: u32) -> Result<CapacityPrior> {
    prior.truncated(observed_sales)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seller {
    pub name: String,
    pub prior: CapacityPrior,
    pub actual_capacity: Option<u32>,
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    raw: ProblemInstance,
    hash: String,
    prices: PriceDistribution,
    selection: SelectionRule,
    sellers: Vec<Seller>,
}

impl Instance {
    pub fn new(raw: ProblemInstance) -> std::result::Result<Self, ValidationReport> {
        Self::with_capacity_bound(raw, DEFAULT_CAPACITY_BOUND)
    }

    pub fn with_capacity_bound(
        raw: ProblemInstance,
        capacity_bound: u32,
    ) -> std::result::Result<Self, ValidationReport> {
        let report = validate_with_bound(&raw, capacity_bound);
        if !report.is_ok() {
            return Err(report);
        }
        let prices = PriceDistribution {
            atoms: raw.prices.clone(),
        };
        let selection = SelectionRule {
            pi: raw.sellers.iter().map(|s| s.pi).collect(),
        };
        let sellers = raw
            .sellers
            .iter()
            .map(|s| Seller {
                name: s.name.clone(),
                prior: CapacityPrior {
                    pmf: s.capacity_prior.clone(),
                },
                actual_capacity: s.actual_capacity,
            })
            .collect();
        let hash = raw.content_hash();
        Ok(Self {
            raw,
            hash,
            prices,
            selection,
            sellers,
        })
    }

    pub fn raw(&self) -> &ProblemInstance {
        &self.raw
    }

    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn horizon(&self) -> u32 {
        self.raw.horizon
    }

    pub fn num_sellers(&self) -> usize {
        self.sellers.len()
    }

    pub fn prices(&self) -> &PriceDistribution {
        &self.prices
    }

    pub fn selection(&self) -> &SelectionRule {
        &self.selection
    }

    pub fn sellers(&self) -> &[Seller] {
        &self.sellers
    }

    pub fn seller(&self, n: usize) -> &Seller {
        &self.sellers[n]
    }

    pub fn prior(&self, n: usize) -> &CapacityPrior {
        &self.sellers[n].prior
    }

    pub fn actual_capacities(&self) -> Option<Vec<u32>> {
        self.sellers.iter().map(|s| s.actual_capacity).collect()
    }
}

/// Cumulative units sold per seller; public common knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SalesVector(Vec<u32>);

impl SalesVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, n: usize) -> u32 {
        self.0[n]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `s + e_n`.
    pub fn incremented(&self, n: usize) -> Self {
        let mut s = self.0.clone();
        s[n] += 1;
        Self(s)
    }

    /// `s - e_n`, or `None` when `s_n = 0`.
    pub fn decremented(&self, n: usize) -> Option<Self> {
        let mut s = self.0.clone();
        s[n] = s[n].checked_sub(1)?;
        Some(Self(s))
    }
}

impl From<Vec<u32>> for SalesVector {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl fmt::Display for SalesVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Argument of `v_n(t, d, s)`: seller, period, own remaining inventory, sales.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    pub seller: usize,
    pub period: u32,
    pub remaining: u32,
    pub sales: SalesVector,
}

/// Index over every feasible (period, sales vector, seller, remaining)
/// combination, used as the storage layout of the value tables.
///
/// Sales vectors are kept sorted by (total, lexicographic), so the vectors
/// feasible at period `t` (total `<= t - 1`) form a prefix of the list.
#[derive(Debug, Clone)]
pub struct StateSpace {
    horizon: u32,
    max_support: Vec<u32>,
    sales: Vec<SalesVector>,
    index: HashMap<SalesVector, usize>,
    /// `prefix[t - 1]` = number of sales vectors feasible at period t.
    prefix: Vec<usize>,
    /// `successor[idx][m]` = index of `sales[idx] + e_m` when it exists.
    successor: Vec<Vec<Option<usize>>>,
    /// `offsets[n][idx]` = start of seller n's remaining-inventory slots for `sales[idx]`.
    offsets: Vec<Vec<usize>>,
    /// `support[n][c]` = whether capacity c lies in seller n's prior support.
    support: Vec<Vec<bool>>,
    lex_order: Vec<usize>,
    state_count: usize,
}

impl StateSpace {
    pub fn build(instance: &Instance, max_states: usize) -> Result<Self> {
        let n_sellers = instance.num_sellers();
        let horizon = instance.horizon();
        let max_support: Vec<u32> = (0..n_sellers)
            .map(|n| instance.prior(n).max_support())
            .collect();
        let support: Vec<Vec<bool>> = (0..n_sellers)
            .map(|n| {
                let prior = instance.prior(n);
                (0..=max_support[n]).map(|c| prior.contains(c)).collect()
            })
            .collect();

        // Enumerate sales vectors with total <= T and s_m <= max support.
        let mut sales = Vec::new();
        let mut cur = vec![0u32; n_sellers];
        fn rec(
            m: usize,
            left: u32,
            cur: &mut Vec<u32>,
            caps: &[u32],
            out: &mut Vec<SalesVector>,
            budget: usize,
        ) -> Result<()> {
            if m == cur.len() {
                if out.len() >= budget {
                    return Err(ModelError::CapacityBoundExceeded { budget });
                }
                out.push(SalesVector(cur.clone()));
                return Ok(());
            }
            for x in 0..=left.min(caps[m]) {
                cur[m] = x;
                rec(m + 1, left - x, cur, caps, out, budget)?;
            }
            cur[m] = 0;
            Ok(())
        }
        rec(0, horizon, &mut cur, &max_support, &mut sales, max_states)?;
        sales.sort_by(|a, b| (a.total(), &a.0).cmp(&(b.total(), &b.0)));

        let index: HashMap<SalesVector, usize> = sales
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();

        let prefix: Vec<usize> = (1..=horizon + 1)
            .map(|t| sales.partition_point(|s| s.total() < t))
            .collect();

        let successor = sales
            .iter()
            .map(|s| {
                (0..n_sellers)
                    .map(|m| index.get(&s.incremented(m)).copied())
                    .collect()
            })
            .collect();

        let mut offsets = Vec::with_capacity(n_sellers);
        for (n, &cap) in max_support.iter().enumerate() {
            let mut off = Vec::with_capacity(sales.len() + 1);
            let mut acc = 0usize;
            for s in &sales {
                off.push(acc);
                acc += (cap - s.0[n]) as usize + 1;
            }
            off.push(acc);
            offsets.push(off);
        }

        let mut lex_order: Vec<usize> = (0..sales.len()).collect();
        lex_order.sort_by(|&a, &b| sales[a].0.cmp(&sales[b].0));

        let mut space = Self {
            horizon,
            max_support,
            sales,
            index,
            prefix,
            successor,
            offsets,
            support,
            lex_order,
            state_count: 0,
        };

        let mut count = 0usize;
        for t in 1..=horizon + 1 {
            for idx in 0..space.period_len(t) {
                for n in 0..n_sellers {
                    let s_n = space.sales[idx].0[n];
                    count += (s_n..=space.max_support[n])
                        .filter(|&c| space.support[n][c as usize])
                        .count();
                }
            }
            if count > max_states {
                return Err(ModelError::CapacityBoundExceeded { budget: max_states });
            }
        }
        space.state_count = count;
        Ok(space)
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn num_sellers(&self) -> usize {
        self.max_support.len()
    }

    pub fn max_support(&self, n: usize) -> u32 {
        self.max_support[n]
    }

    /// Number of feasible states (all sellers, periods 1..=T+1).
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn sales(&self, idx: usize) -> &SalesVector {
        &self.sales[idx]
    }

    pub fn sales_index(&self, s: &SalesVector) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Number of sales vectors feasible at period `t`.
    pub fn period_len(&self, t: u32) -> usize {
        self.prefix[(t - 1) as usize]
    }

    pub fn sales_feasible_at(&self, t: u32, s: &SalesVector) -> bool {
        t >= 1
            && t <= self.horizon + 1
            && self
                .sales_index(s)
                .is_some_and(|idx| idx < self.period_len(t))
    }

    pub fn successor(&self, idx: usize, m: usize) -> Option<usize> {
        self.successor[idx][m]
    }

    /// Slots per period for seller n (dense over remaining inventory).
    pub fn period_slots(&self, n: usize, t: u32) -> usize {
        self.offsets[n][self.period_len(t)]
    }

    /// Number of remaining-inventory slots of seller n at `sales[idx]`.
    pub fn remaining_slots(&self, n: usize, idx: usize) -> usize {
        self.offsets[n][idx + 1] - self.offsets[n][idx]
    }

    pub fn slot(&self, n: usize, idx: usize, d: u32) -> usize {
        self.offsets[n][idx] + d as usize
    }

    /// Whether `d + s_n` lies in seller n's prior support.
    pub fn remaining_feasible(&self, n: usize, idx: usize, d: u32) -> bool {
        let c = d + self.sales[idx].0[n];
        c <= self.max_support[n] && self.support[n][c as usize]
    }

    pub fn contains(&self, key: &StateKey) -> bool {
        key.seller < self.num_sellers()
            && self.sales_feasible_at(key.period, &key.sales)
            && self.remaining_feasible(key.seller, self.index[&key.sales], key.remaining)
    }

    /// Every feasible state, grouped by period in decreasing order; within a
    /// period ordered by seller, lexicographic sales vector, remaining inventory.
    pub fn states(&self) -> impl Iterator<Item = StateKey> + '_ {
        (1..=self.horizon + 1).rev().flat_map(move |t| {
            let len = self.period_len(t);
            (0..self.num_sellers()).flat_map(move |n| {
                self.lex_order
                    .iter()
                    .copied()
                    .filter(move |&idx| idx < len)
                    .flat_map(move |idx| {
                        let s_n = self.sales[idx].0[n];
                        (0..=self.max_support[n] - s_n)
                            .filter(move |&d| self.remaining_feasible(n, idx, d))
                            .map(move |d| StateKey {
                                seller: n,
                                period: t,
                                remaining: d,
                                sales: self.sales[idx].clone(),
                            })
                    })
            })
        })
    }

    /// Sales indices feasible at period t in lexicographic order.
    pub fn lex_indices(&self, t: u32) -> impl Iterator<Item = usize> + '_ {
        let len = self.period_len(t);
        self.lex_order.iter().copied().filter(move |&idx| idx < len)
    }
}

/// Collects every feasible state of a validated instance.
pub fn enumerate_states(instance: &Instance, max_states: usize) -> Result<Vec<StateKey>> {
    Ok(StateSpace::build(instance, max_states)?.states().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn prior(pairs: &[(u32, f64)]) -> BTreeMap<u32, f64> {
        pairs.iter().copied().collect()
    }

    fn instance(horizon: u32, pis: &[f64], priors: &[&[(u32, f64)]]) -> ProblemInstance {
        ProblemInstance {
            horizon,
            prices: vec![
                PriceAtom {
                    price: 10.0,
                    prob: 0.5,
                },
                PriceAtom {
                    price: 4.0,
                    prob: 0.5,
                },
            ],
            sellers: pis
                .iter()
                .zip(priors)
                .enumerate()
                .map(|(i, (&pi, pr))| SellerSpec {
                    name: format!("s{}", i + 1),
                    pi,
                    capacity_prior: prior(pr),
                    actual_capacity: None,
                })
                .collect(),
        }
    }

    #[test]
    fn valid_two_seller_instance() {
        let inst = instance(2, &[0.5, 0.5], &[&[(1, 0.5), (2, 0.5)], &[(1, 1.0)]]);
        assert!(validate(&inst).is_ok());
        assert!(Instance::new(inst).is_ok());
    }

    #[test]
    fn selection_sum_violation_message() {
        let inst = instance(2, &[0.7, 0.4], &[&[(1, 1.0)], &[(1, 1.0)]]);
        let report = validate(&inst);
        assert_eq!(
            report.violations,
            vec!["selection probabilities sum to 1.1 > 1".to_string()]
        );
    }

    #[test]
    fn zero_probability_price_atom() {
        let mut inst = instance(2, &[0.5, 0.5], &[&[(1, 1.0)], &[(1, 1.0)]]);
        inst.prices = vec![
            PriceAtom {
                price: 10.0,
                prob: 1.0,
            },
            PriceAtom {
                price: 4.0,
                prob: 0.0,
            },
        ];
        let report = validate(&inst);
        assert!(!report.is_ok());
        assert!(report.violations[0].contains("price atom 2"));
    }

    #[test]
    fn collects_multiple_violations() {
        let mut inst = instance(0, &[0.0, 0.5], &[&[(1, 0.5)], &[(3, 1.0)]]);
        inst.sellers[1].actual_capacity = Some(2);
        inst.prices.push(PriceAtom {
            price: 10.0,
            prob: 0.0,
        });
        let report = validate(&inst);
        let all = report.violations.join("\n");
        assert!(all.contains("horizon"));
        assert!(all.contains("share price"));
        assert!(all.contains("selection probability 0"));
        assert!(all.contains("capacity prior sums to 0.5"));
        assert!(all.contains("actual capacity 2"));
    }

    #[test]
    fn capacity_bound_enforced() {
        let inst = instance(2, &[1.0], &[&[(70, 1.0)]]);
        assert!(!validate(&inst).is_ok());
        assert!(validate_with_bound(&inst, 100).is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"horizon":1,"prices":[{"price":1,"prob":1}],"sellers":[],"extra":1}"#;
        assert!(ProblemInstance::from_json(text).is_err());
        let text = r#"{"horizon":1,"prices":[{"price":1,"prob":1,"x":0}],"sellers":[]}"#;
        assert!(ProblemInstance::from_json(text).is_err());
    }

    #[test]
    fn parses_string_keyed_prior() {
        let text = r#"{"horizon":2,"prices":[{"price":3,"prob":1}],
            "sellers":[{"name":"a","pi":1,"capacity_prior":{"0":0.25,"2":0.75},"actual_capacity":2}]}"#;
        let inst = ProblemInstance::from_json(text).unwrap();
        assert_eq!(inst.sellers[0].capacity_prior[&2], 0.75);
        assert!(Instance::new(inst).is_ok());
    }

    #[test]
    fn truncation_examples() {
        let uniform =
            CapacityPrior::new(prior(&[(1, 1.0 / 3.0), (2, 1.0 / 3.0), (3, 1.0 / 3.0)])).unwrap();
        let t = truncated_belief(&uniform, 2).unwrap();
        assert_eq!(t.pmf().len(), 2);
        assert!((t.prob(2) - 0.5).abs() < 1e-15);
        assert!((t.prob(3) - 0.5).abs() < 1e-15);
        assert_eq!(t.prob(1), 0.0);

        let same = truncated_belief(&uniform, 0).unwrap();
        for c in 1..=3 {
            assert!((same.prob(c) - uniform.prob(c)).abs() < 1e-15);
        }

        let point = CapacityPrior::degenerate(1);
        assert_eq!(
            truncated_belief(&point, 2),
            Err(ModelError::InfeasibleHistory { observed: 2 })
        );
    }

    #[test]
    fn single_seller_single_period_states() {
        let inst = Instance::new(instance(1, &[1.0], &[&[(1, 1.0)]])).unwrap();
        let states = enumerate_states(&inst, DEFAULT_MAX_STATES).unwrap();
        let key = |t, d, s: u32| StateKey {
            seller: 0,
            period: t,
            remaining: d,
            sales: SalesVector::from(vec![s]),
        };
        // t = 2 is the sentinel period; t = 1 admits only s = (0)
        assert_eq!(states, vec![key(2, 1, 0), key(2, 0, 1), key(1, 1, 0)]);
    }

    #[test]
    fn sales_total_bounded_by_elapsed_periods() {
        let inst = Instance::new(instance(2, &[0.5, 0.5], &[&[(1, 1.0)], &[(1, 1.0)]])).unwrap();
        let states = enumerate_states(&inst, DEFAULT_MAX_STATES).unwrap();
        let s11 = SalesVector::from(vec![1, 1]);
        assert!(states.iter().all(|k| k.sales.total() < k.period));
        assert!(!states.iter().any(|k| k.period == 2 && k.sales == s11));
        assert!(states.iter().any(|k| k.period == 3 && k.sales == s11));
        // periods arrive in decreasing order
        assert!(states.windows(2).all(|w| w[0].period >= w[1].period));
    }

    #[test]
    fn budget_exceeded() {
        let inst = Instance::new(instance(
            6,
            &[0.3, 0.3, 0.3],
            &[&[(4, 1.0)], &[(4, 1.0)], &[(4, 1.0)]],
        ))
        .unwrap();
        assert_eq!(
            StateSpace::build(&inst, 50).unwrap_err(),
            ModelError::CapacityBoundExceeded { budget: 50 }
        );
    }

    fn arb_prior() -> impl Strategy<Value = BTreeMap<u32, f64>> {
        proptest::collection::btree_map(0u32..6, 0.05f64..1.0, 1..5).prop_map(|m| {
            let total: f64 = m.values().sum();
            m.into_iter().map(|(c, p)| (c, p / total)).collect()
        })
    }

    proptest! {
        #[test]
        fn truncation_idempotent(pmf in arb_prior(), s in 0u32..6) {
            let prior = CapacityPrior::new(pmf).unwrap();
            if let Ok(once) = prior.truncated(s) {
                let twice = once.truncated(s).unwrap();
                for c in 0..6 {
                    prop_assert!((once.prob(c) - twice.prob(c)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn truncation_composes(pmf in arb_prior(), s in 0u32..5) {
            let prior = CapacityPrior::new(pmf).unwrap();
            if let Ok(direct) = prior.truncated(s + 1) {
                let stepwise = prior.truncated(s).unwrap().truncated(s + 1).unwrap();
                for c in 0..6 {
                    prop_assert!((direct.prob(c) - stepwise.prob(c)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn enumeration_has_no_duplicates_and_is_closed(
            horizon in 1u32..4,
            priors in proptest::collection::vec(arb_prior(), 1..4),
        ) {
            let n = priors.len();
            let raw = ProblemInstance {
                horizon,
                prices: vec![PriceAtom { price: 1.0, prob: 1.0 }],
                sellers: priors.into_iter().enumerate().map(|(i, p)| SellerSpec {
                    name: format!("s{i}"),
                    pi: 1.0 / n as f64,
                    capacity_prior: p,
                    actual_capacity: None,
                }).collect(),
            };
            let inst = Instance::new(raw).unwrap();
            let space = StateSpace::build(&inst, DEFAULT_MAX_STATES).unwrap();
            let states: Vec<StateKey> = space.states().collect();
            let set: HashSet<&StateKey> = states.iter().collect();
            prop_assert_eq!(set.len(), states.len());
            prop_assert_eq!(states.len(), space.state_count());

            for k in &states {
                if k.period > horizon {
                    continue;
                }
                // own sale
                if k.remaining >= 1 {
                    let next = StateKey {
                        seller: k.seller,
                        period: k.period + 1,
                        remaining: k.remaining - 1,
                        sales: k.sales.incremented(k.seller),
                    };
                    prop_assert!(set.contains(&next));
                }
                // no sale
                let stay = StateKey { period: k.period + 1, ..k.clone() };
                prop_assert!(set.contains(&stay));
                // competitor sale, whenever the competitor can still have stock
                for m in 0..n {
                    if m != k.seller && k.sales.get(m) < inst.prior(m).max_support() {
                        let next = StateKey {
                            period: k.period + 1,
                            sales: k.sales.incremented(m),
                            ..k.clone()
                        };
                        prop_assert!(set.contains(&next));
                    }
                }
            }
        }
    }
}
