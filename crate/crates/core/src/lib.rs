//! Index policies for restless bandits with several heterogeneous workers.
//!
//! Each arm is a small MDP acted on by at most one worker per round; every
//! worker has its own per-round budget and the planner also tries to keep
//! the workers' costs close to each other. The crate computes decoupled and
//! adjusted Whittle-style indices, turns them into per-round allocations,
//! and simulates them against Lagrangian, exact and random baselines.

pub mod adjusted;
pub mod allocation;
pub mod baselines;
pub mod decoupled;
pub mod domains;
pub mod dp;
pub mod error;
pub mod model;
pub mod report;
pub mod simulation;

pub use adjusted::{adjusted_index, adjusted_index_table, relaxation_probe, AdjustedIndex};
pub use allocation::{balanced_allocation, greedy_allocation, AllocationOptions, RoundInput};
pub use decoupled::{decoupled_index_table, whittle_index, IndexKind, IndexOptions, IndexTable};
pub use domains::{DomainKind, DomainOverrides, DomainSpec};
pub use dp::{solve_expanded, solve_restricted, ChargeVector, DpOptions, ValueTable};
pub use error::{Error, Result};
pub use model::{fairness_gap, load_instance, save_instance, Allocation, ArmMdp, Instance};
pub use simulation::{
    run_episode, run_experiment, AggregateReport, Algorithm, ExperimentConfig, SimOptions,
    SimulationRecord,
};
