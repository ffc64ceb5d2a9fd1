//! Equilibrium solver, verifier and simulator for the N-seller stochastic
//! knapsack game under the static random selection rule.

pub mod cli;
pub mod io;
pub mod model;
pub mod oracle;
pub mod properties;
pub mod simulator;
pub mod solver;
pub mod stage_game;
pub mod suite;

pub use model::{
    enumerate_states, truncated_belief, validate, CapacityPrior, Instance, ModelError, PriceAtom,
    PriceDistribution, ProblemInstance, SalesVector, SelectionRule, SellerSpec, StateKey,
    StateSpace, ValidationReport,
};
pub use solver::{accepts, solve, SolveOptions, SolverError, StageOutcome, ValueTables};
