//! Backward-induction engine.
//!
//! Values `v_n(t, d, s)` are computed for every seller jointly, descending
//! from a zero-valued sentinel period `T + 1`. At each state and price atom
//! the stage resolves as follows:
//!
//! * seller n accepts iff it has stock and the price covers its marginal
//!   value `v_n(t+1, d, s) - v_n(t+1, d-1, s+e_n)` (ties accept);
//! * competitor m accepts with probability `alpha_m`, the mass of its
//!   truncated capacity belief whose types accept under the same rule;
//! * the buyer picks seller n with probability `pi_n`, competitor m with
//!   `pi_m * alpha_m`, and nobody with the remaining mass.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Instance, ModelError, SalesVector, StateKey, StateSpace, DEFAULT_MAX_STATES};

/// Tolerance used in accept/reject comparisons.
pub const POLICY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("state not computed: seller {seller}, t={period}, d={remaining}, s={sales}")]
    StateNotComputed {
        seller: usize,
        period: u32,
        remaining: u32,
        sales: SalesVector,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("malformed tables: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Balance rule: accept iff `price >= marginal`, with ties accepting.
pub fn accepts(price: f64, marginal: f64) -> bool {
    price >= marginal - POLICY_EPS
}

/// Whether the accept decision was decided by the tie band.
pub fn is_tie(price: f64, marginal: f64) -> bool {
    (price - marginal).abs() <= POLICY_EPS
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_states: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

/// Solved value functions and equilibrium policy.
#[derive(Debug, Clone)]
pub struct ValueTables {
    instance: Instance,
    space: StateSpace,
    /// `[seller][t - 1][slot]`, periods 1..=T+1; NaN marks infeasible slots.
    values: Vec<Vec<Vec<f64>>>,
    /// `[seller][t - 1][slot * atoms + i]`, periods 1..=T.
    policy: Vec<Vec<Vec<bool>>>,
    /// `[m][s_m]` truncated belief of seller m's capacity as (capacity, prob).
    beliefs: Beliefs,
    ties: usize,
}

/// Per-remaining-inventory resolution of one seller in a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainingStage {
    pub remaining: u32,
    pub accept: bool,
    pub tie: bool,
    /// Stage value `w_n(t+1, d, s, p)`.
    pub continuation: f64,
    pub self_mass: f64,
    pub competitor_mass: f64,
    pub residual_mass: f64,
}

impl RemainingStage {
    pub fn total_mass(&self) -> f64 {
        self.self_mass + self.competitor_mass + self.residual_mass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SellerStage {
    /// Probability that this seller accepts, seen from its competitors.
    pub alpha: f64,
    pub by_remaining: Vec<RemainingStage>,
}

/// Resolution of one (period, sales vector, price) stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub period: u32,
    pub sales: SalesVector,
    pub price: f64,
    pub sellers: Vec<SellerStage>,
}

/// Read-only view used both while solving and after.
struct Ctx<'a> {
    instance: &'a Instance,
    space: &'a StateSpace,
    values: &'a [Vec<Vec<f64>>],
    beliefs: &'a [Vec<Vec<(u32, f64)>>],
}

struct StageResult {
    value: f64,
    accept: bool,
    tie: bool,
    self_mass: f64,
    competitor_mass: f64,
}

impl Ctx<'_> {
    fn v(&self, n: usize, t: u32, idx: usize, d: u32) -> f64 {
        self.values[n][(t - 1) as usize][self.space.slot(n, idx, d)]
    }

    /// `v_n(t+1, d, s) - v_n(t+1, d-1, s+e_n)`, for d >= 1.
    fn marginal(&self, n: usize, t: u32, idx: usize, d: u32) -> f64 {
        let up = self
            .space
            .successor(idx, n)
            .expect("d >= 1 implies s + e_n is feasible");
        self.v(n, t + 1, idx, d) - self.v(n, t + 1, up, d - 1)
    }

    fn alpha(&self, m: usize, t: u32, idx: usize, price: f64) -> f64 {
        let s_m = self.space.sales(idx).get(m);
        self.beliefs[m][s_m as usize]
            .iter()
            .filter(|&&(c, _)| c > s_m && accepts(price, self.marginal(m, t, idx, c - s_m)))
            .map(|&(_, w)| w)
            .sum()
    }

    fn alphas(&self, t: u32, idx: usize, price: f64) -> Vec<f64> {
        (0..self.instance.num_sellers())
            .map(|m| self.alpha(m, t, idx, price))
            .collect()
    }

    fn stage(
        &self,
        n: usize,
        t: u32,
        idx: usize,
        d: u32,
        price: f64,
        alphas: &[f64],
    ) -> StageResult {
        let pi = self.instance.selection().all();
        let stay = self.v(n, t + 1, idx, d);

        let (accept, tie) = if d >= 1 {
            let marginal = self.marginal(n, t, idx, d);
            (accepts(price, marginal), is_tie(price, marginal))
        } else {
            (false, false)
        };
        let self_mass = if accept { pi[n] } else { 0.0 };

        let mut value = 0.0;
        if accept {
            let up = self
                .space
                .successor(idx, n)
                .expect("accepting seller has stock");
            value += self_mass * (price + self.v(n, t + 1, up, d - 1));
        }
        let mut competitor_mass = 0.0;
        for (m, &alpha) in alphas.iter().enumerate() {
            if m == n || alpha == 0.0 {
                continue;
            }
            let mass = pi[m] * alpha;
            let up = self
                .space
                .successor(idx, m)
                .expect("positive acceptance implies s + e_m is feasible");
            value += mass * self.v(n, t + 1, up, d);
            competitor_mass += mass;
        }
        value += (1.0 - self_mass - competitor_mass) * stay;
        StageResult {
            value,
            accept,
            tie,
            self_mass,
            competitor_mass,
        }
    }
}

struct SalesRow {
    values: Vec<Vec<f64>>,
    policy: Vec<Vec<bool>>,
    ties: usize,
}

/// Belief pmf as (capacity, prob) pairs, per seller and observed sales count.
type Beliefs = Vec<Vec<Vec<(u32, f64)>>>;

fn truncated_beliefs(instance: &Instance) -> Result<Beliefs> {
    (0..instance.num_sellers())
        .map(|m| {
            let prior = instance.prior(m);
            (0..=prior.max_support())
                .map(|s| {
                    Ok(prior
                        .truncated(s)?
                        .pmf()
                        .iter()
                        .map(|(&c, &p)| (c, p))
                        .collect())
                })
                .collect()
        })
        .collect()
}

/// Solves the game by backward induction from the sentinel period.
pub fn solve(instance: &Instance, options: &SolveOptions) -> Result<ValueTables> {
    let space = StateSpace::build(instance, options.max_states)?;
    let beliefs = truncated_beliefs(instance)?;
    let horizon = instance.horizon();
    let n_sellers = instance.num_sellers();
    let atoms = instance.prices().len();

    let mut values: Vec<Vec<Vec<f64>>> = (0..n_sellers)
        .map(|n| {
            (1..=horizon + 1)
                .map(|t| {
                    let mut slots = vec![f64::NAN; space.period_slots(n, t)];
                    if t == horizon + 1 {
                        for idx in 0..space.period_len(t) {
                            for d in 0..space.remaining_slots(n, idx) as u32 {
                                if space.remaining_feasible(n, idx, d) {
                                    slots[space.slot(n, idx, d)] = 0.0;
                                }
                            }
                        }
                    }
                    slots
                })
                .collect()
        })
        .collect();
    let mut policy: Vec<Vec<Vec<bool>>> = (0..n_sellers)
        .map(|n| {
            (1..=horizon)
                .map(|t| vec![false; space.period_slots(n, t) * atoms])
                .collect()
        })
        .collect();
    let mut ties = 0usize;

    for t in (1..=horizon).rev() {
        let rows: Vec<SalesRow> = {
            let ctx = Ctx {
                instance,
                space: &space,
                values: &values,
                beliefs: &beliefs,
            };
            (0..space.period_len(t))
                .into_par_iter()
                .map(|idx| solve_sales_row(&ctx, t, idx))
                .collect()
        };
        let ti = (t - 1) as usize;
        for (idx, row) in rows.into_iter().enumerate() {
            ties += row.ties;
            for n in 0..n_sellers {
                let base = space.slot(n, idx, 0);
                values[n][ti][base..base + row.values[n].len()].copy_from_slice(&row.values[n]);
                policy[n][ti][base * atoms..(base * atoms + row.policy[n].len())]
                    .copy_from_slice(&row.policy[n]);
            }
        }
    }

    Ok(ValueTables {
        instance: instance.clone(),
        space,
        values,
        policy,
        beliefs,
        ties,
    })
}

fn solve_sales_row(ctx: &Ctx<'_>, t: u32, idx: usize) -> SalesRow {
    let prices = ctx.instance.prices();
    let n_sellers = ctx.instance.num_sellers();
    let alphas: Vec<Vec<f64>> = (0..prices.len())
        .map(|i| ctx.alphas(t, idx, prices.price(i)))
        .collect();

    let mut row = SalesRow {
        values: Vec::with_capacity(n_sellers),
        policy: Vec::with_capacity(n_sellers),
        ties: 0,
    };
    for n in 0..n_sellers {
        let slots = ctx.space.remaining_slots(n, idx);
        let mut vals = vec![f64::NAN; slots];
        let mut flags = vec![false; slots * prices.len()];
        for d in 0..slots as u32 {
            if !ctx.space.remaining_feasible(n, idx, d) {
                continue;
            }
            let mut v = 0.0;
            for (i, a) in alphas.iter().enumerate() {
                let r = ctx.stage(n, t, idx, d, prices.price(i), a);
                v += prices.prob(i) * r.value;
                flags[d as usize * prices.len() + i] = r.accept;
                if r.tie {
                    row.ties += 1;
                }
            }
            vals[d as usize] = v;
        }
        row.values.push(vals);
        row.policy.push(flags);
    }
    row
}

impl ValueTables {
    fn ctx(&self) -> Ctx<'_> {
        Ctx {
            instance: &self.instance,
            space: &self.space,
            values: &self.values,
            beliefs: &self.beliefs,
        }
    }

    /// Rebuilds tables from stored entries, e.g. when loading a tables file.
    /// `accept` must be present for every entry with `period <= T`.
    pub fn assemble<I>(instance: &Instance, max_states: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (StateKey, f64, Option<Vec<bool>>)>,
    {
        let space = StateSpace::build(instance, max_states)?;
        let beliefs = truncated_beliefs(instance)?;
        let horizon = instance.horizon();
        let atoms = instance.prices().len();
        let mut values: Vec<Vec<Vec<f64>>> = (0..instance.num_sellers())
            .map(|n| {
                (1..=horizon + 1)
                    .map(|t| vec![f64::NAN; space.period_slots(n, t)])
                    .collect()
            })
            .collect();
        let mut policy: Vec<Vec<Vec<bool>>> = (0..instance.num_sellers())
            .map(|n| {
                (1..=horizon)
                    .map(|t| vec![false; space.period_slots(n, t) * atoms])
                    .collect()
            })
            .collect();
        let mut seen = 0usize;
        for (key, value, accept) in entries {
            if !space.contains(&key) {
                return Err(SolverError::Malformed(format!(
                    "entry outside the state space: seller {}, t={}, d={}, s={}",
                    key.seller, key.period, key.remaining, key.sales
                )));
            }
            let idx = space.sales_index(&key.sales).expect("contained");
            let slot = space.slot(key.seller, idx, key.remaining);
            let ti = (key.period - 1) as usize;
            if !values[key.seller][ti][slot].is_nan() {
                return Err(SolverError::Malformed(format!(
                    "duplicate entry: seller {}, t={}, d={}, s={}",
                    key.seller, key.period, key.remaining, key.sales
                )));
            }
            if !value.is_finite() {
                return Err(SolverError::Malformed("non-finite value".into()));
            }
            values[key.seller][ti][slot] = value;
            seen += 1;
            if key.period <= horizon {
                let flags = accept.ok_or_else(|| {
                    SolverError::Malformed(format!("missing accept flags at t={}", key.period))
                })?;
                if flags.len() != atoms {
                    return Err(SolverError::Malformed("accept flag count mismatch".into()));
                }
                policy[key.seller][ti][slot * atoms..(slot + 1) * atoms].copy_from_slice(&flags);
            }
        }
        if seen != space.state_count() {
            return Err(SolverError::Malformed(format!(
                "expected {} entries, found {seen}",
                space.state_count()
            )));
        }
        let mut tables = Self {
            instance: instance.clone(),
            space,
            values,
            policy,
            beliefs,
            ties: 0,
        };
        tables.ties = tables.count_ties();
        Ok(tables)
    }

    fn count_ties(&self) -> usize {
        let ctx = self.ctx();
        let prices = self.instance.prices();
        let mut ties = 0;
        for t in 1..=self.horizon() {
            for idx in 0..self.space.period_len(t) {
                for n in 0..self.instance.num_sellers() {
                    for d in 1..self.space.remaining_slots(n, idx) as u32 {
                        if self.space.remaining_feasible(n, idx, d) {
                            let m = ctx.marginal(n, t, idx, d);
                            ties += (0..prices.len())
                                .filter(|&i| is_tie(prices.price(i), m))
                                .count();
                        }
                    }
                }
            }
        }
        ties
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> u32 {
        self.instance.horizon()
    }

    /// Number of (state, price atom) decisions that fell in the tie band.
    pub fn ties(&self) -> usize {
        self.ties
    }

    fn locate(&self, n: usize, t: u32, d: u32, s: &SalesVector) -> Result<usize> {
        let missing = || SolverError::StateNotComputed {
            seller: n,
            period: t,
            remaining: d,
            sales: s.clone(),
        };
        if n >= self.instance.num_sellers() || s.len() != self.instance.num_sellers() {
            return Err(missing());
        }
        if !self.space.sales_feasible_at(t, s) {
            return Err(missing());
        }
        let idx = self.space.sales_index(s).ok_or_else(missing)?;
        if !self.space.remaining_feasible(n, idx, d) {
            return Err(missing());
        }
        Ok(idx)
    }

    /// `v_n(t, d, s)`.
    pub fn value(&self, n: usize, t: u32, d: u32, s: &SalesVector) -> Result<f64> {
        let idx = self.locate(n, t, d, s)?;
        Ok(self.value_at(n, t, idx, d))
    }

    /// Unchecked lookup by sales index; the state must be feasible.
    pub fn value_at(&self, n: usize, t: u32, idx: usize, d: u32) -> f64 {
        self.ctx().v(n, t, idx, d)
    }

    /// Equilibrium decision of seller n at `(t, d, s)` for price atom `i`.
    pub fn policy_accepts(
        &self,
        n: usize,
        t: u32,
        d: u32,
        s: &SalesVector,
        i: usize,
    ) -> Result<bool> {
        if t > self.horizon() || i >= self.instance.prices().len() {
            return Err(SolverError::StateNotComputed {
                seller: n,
                period: t,
                remaining: d,
                sales: s.clone(),
            });
        }
        let idx = self.locate(n, t, d, s)?;
        Ok(self.policy_at(n, t, idx, d, i))
    }

    pub fn policy_at(&self, n: usize, t: u32, idx: usize, d: u32, i: usize) -> bool {
        let atoms = self.instance.prices().len();
        self.policy[n][(t - 1) as usize][self.space.slot(n, idx, d) * atoms + i]
    }

    /// `v_n(t+1, d, s) - v_n(t+1, d-1, s+e_n)`.
    pub fn marginal_value(&self, n: usize, t: u32, d: u32, s: &SalesVector) -> Result<f64> {
        let bad = || SolverError::StateNotComputed {
            seller: n,
            period: t + 1,
            remaining: d,
            sales: s.clone(),
        };
        if d == 0 || t > self.horizon() {
            return Err(bad());
        }
        let idx = self.locate(n, t + 1, d, s)?;
        let up = self.space.successor(idx, n).ok_or_else(bad)?;
        if !self.space.sales_feasible_at(t + 1, self.space.sales(up)) {
            return Err(bad());
        }
        Ok(self.ctx().marginal(n, t, idx, d))
    }

    /// Probability that competitor m accepts `price` at `(t, s)`, averaged
    /// over m's truncated capacity belief.
    pub fn competitor_accept_prob(
        &self,
        m: usize,
        t: u32,
        s: &SalesVector,
        price: f64,
    ) -> Result<f64> {
        let idx = self.stage_index(m, t, s)?;
        Ok(self.ctx().alpha(m, t, idx, price))
    }

    fn stage_index(&self, n: usize, t: u32, s: &SalesVector) -> Result<usize> {
        let bad = || SolverError::StateNotComputed {
            seller: n,
            period: t,
            remaining: 0,
            sales: s.clone(),
        };
        if t == 0 || t > self.horizon() || n >= self.instance.num_sellers() {
            return Err(bad());
        }
        if !self.space.sales_feasible_at(t, s) {
            return Err(bad());
        }
        self.space.sales_index(s).ok_or_else(bad)
    }

    /// `w_n(t+1, d, s, price)`: the seller's value after this period's
    /// demand at `price` has been resolved.
    pub fn stage_value(
        &self,
        n: usize,
        t: u32,
        d: u32,
        s: &SalesVector,
        price: f64,
    ) -> Result<f64> {
        let idx = self.stage_index(n, t, s)?;
        self.locate(n, t, d, s)?;
        let ctx = self.ctx();
        let alphas = ctx.alphas(t, idx, price);
        Ok(ctx.stage(n, t, idx, d, price, &alphas).value)
    }

    /// Full per-seller resolution of one stage.
    pub fn stage_outcome(&self, t: u32, s: &SalesVector, price: f64) -> Result<StageOutcome> {
        let idx = self.stage_index(0, t, s)?;
        let ctx = self.ctx();
        let alphas = ctx.alphas(t, idx, price);
        let sellers = (0..self.instance.num_sellers())
            .map(|n| {
                let by_remaining = (0..self.space.remaining_slots(n, idx) as u32)
                    .filter(|&d| self.space.remaining_feasible(n, idx, d))
                    .map(|d| {
                        let r = ctx.stage(n, t, idx, d, price, &alphas);
                        RemainingStage {
                            remaining: d,
                            accept: r.accept,
                            tie: r.tie,
                            continuation: r.value,
                            self_mass: r.self_mass,
                            competitor_mass: r.competitor_mass,
                            residual_mass: 1.0 - r.self_mass - r.competitor_mass,
                        }
                    })
                    .collect();
                SellerStage {
                    alpha: alphas[n],
                    by_remaining,
                }
            })
            .collect();
        Ok(StageOutcome {
            period: t,
            sales: s.clone(),
            price,
            sellers,
        })
    }

    /// Every stored entry in output order: seller, t descending, sales
    /// vector lexicographic, remaining inventory ascending.
    pub fn entries(&self) -> impl Iterator<Item = (StateKey, f64, Option<Vec<bool>>)> + '_ {
        let atoms = self.instance.prices().len();
        (0..self.instance.num_sellers()).flat_map(move |n| {
            (1..=self.horizon() + 1).rev().flat_map(move |t| {
                self.space.lex_indices(t).flat_map(move |idx| {
                    (0..self.space.remaining_slots(n, idx) as u32)
                        .filter(move |&d| self.space.remaining_feasible(n, idx, d))
                        .map(move |d| {
                            let accept = (t <= self.horizon()).then(|| {
                                (0..atoms)
                                    .map(|i| self.policy_at(n, t, idx, d, i))
                                    .collect()
                            });
                            (
                                StateKey {
                                    seller: n,
                                    period: t,
                                    remaining: d,
                                    sales: self.space.sales(idx).clone(),
                                },
                                self.value_at(n, t, idx, d),
                                accept,
                            )
                        })
                })
            })
        })
    }
}
