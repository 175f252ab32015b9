//! Episode runner and aggregation over epochs.
//!
//! Randomness comes from ChaCha8 streams. Episode `e` of an experiment uses
//! seed `base_seed + e`; within an episode stream 0 drives the allocation
//! (only the random baseline draws from it) and stream `i + 1` drives the
//! transitions of arm `i`. Epochs run in parallel and are merged by index, so
//! results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjusted::adjusted_index_table;
use crate::allocation::{balanced_allocation, greedy_allocation, AllocationOptions, RoundInput};
use crate::baselines::{
    charged_tables, hawkins_lambda, knapsack_allocate, q_gains, random_allocation, solve_joint,
    HawkinsOptions, JointOptions, JointPolicy,
};
use crate::decoupled::{decoupled_index_table, IndexOptions, IndexTable};
use crate::domains::DomainSpec;
use crate::dp::{DpOptions, ValueTable};
use crate::error::{Error, Result};
use crate::model::{fairness_gap, Allocation, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Adjusted indices with balanced allocation.
    #[serde(rename = "CWI_BA")]
    CwiBa,
    /// Decoupled indices with balanced allocation.
    #[serde(rename = "PWI_BA")]
    PwiBa,
    /// Adjusted indices with greedy allocation.
    #[serde(rename = "CWI_GA")]
    CwiGa,
    #[serde(rename = "HAWKINS")]
    Hawkins,
    #[serde(rename = "OPT")]
    Opt,
    #[serde(rename = "OPT_FAIR")]
    OptFair,
    #[serde(rename = "RANDOM")]
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::CwiBa,
        Algorithm::PwiBa,
        Algorithm::CwiGa,
        Algorithm::Hawkins,
        Algorithm::Opt,
        Algorithm::OptFair,
        Algorithm::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::CwiBa => "CWI_BA",
            Algorithm::PwiBa => "PWI_BA",
            Algorithm::CwiGa => "CWI_GA",
            Algorithm::Hawkins => "HAWKINS",
            Algorithm::Opt => "OPT",
            Algorithm::OptFair => "OPT_FAIR",
            Algorithm::Random => "RANDOM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Solver settings shared by every episode of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub index_tol: f64,
    pub dp_tol: f64,
    pub skip_negative_indices: bool,
    /// Recompute the Lagrange multipliers from the current states every
    /// round instead of once per episode.
    pub hawkins_replan_each_step: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            index_tol: IndexOptions::DEFAULT_TOL,
            dp_tol: DpOptions::DEFAULT_TOL,
            skip_negative_indices: true,
            hawkins_replan_each_step: false,
        }
    }
}

impl SimOptions {
    pub fn dp(&self, discount: f64) -> DpOptions {
        DpOptions::new(discount).with_tol(self.dp_tol)
    }

    pub fn index(&self, discount: f64) -> IndexOptions {
        IndexOptions::new(discount)
            .with_tol(self.index_tol)
            .with_dp(self.dp(discount))
    }

    fn allocation(&self) -> AllocationOptions {
        AllocationOptions {
            skip_negative_indices: self.skip_negative_indices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub epochs: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub options: SimOptions,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.options.index_tol > 0.0) || !(self.options.dp_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        self.domain.check()
    }

    /// The instance used in epoch `epoch`.
    pub fn instance_for_epoch(&self, epoch: usize) -> Result<Instance> {
        let spec = if self.domain.regenerate_per_epoch() {
            self.domain.reseeded(epoch as u64)
        } else {
            self.domain.clone()
        };
        let inst = spec.generate()?;
        let violations = inst.validate();
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(inst)
    }

    pub fn episode_seed(&self, epoch: usize) -> u64 {
        self.base_seed.wrapping_add(epoch as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Arm states at the start of the step.
    pub states: Vec<usize>,
    /// Action per arm (`0` passive, `k + 1` worker `k`).
    pub actions: Vec<usize>,
    pub total_reward: f64,
    pub per_worker_cost: Vec<f64>,
    pub gap: f64,
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub num_arms: usize,
    pub steps: Vec<StepRecord>,
    pub mean_reward_per_arm: f64,
    pub fair_fraction: f64,
    pub mean_gap: f64,
    /// Planning plus simulation time.
    pub wall_time_ms: f64,
}

/// A policy ready to allocate rounds of one instance.
pub enum Planner {
    Index {
        table: IndexTable,
        balanced: bool,
        allocation: AllocationOptions,
    },
    Hawkins {
        tables: Vec<ValueTable>,
        costs: Vec<Vec<u64>>,
        options: HawkinsOptions,
        replan: bool,
    },
    Joint(JointPolicy),
    Random,
}

impl Planner {
    /// Precomputes whatever the algorithm needs before the first round:
    /// index tables over all states, the Lagrange multipliers at the initial
    /// states, or the joint policy.
    pub fn new(inst: &Instance, algorithm: Algorithm, opts: &SimOptions) -> Result<Self> {
        let discount = inst.discount;
        let index_opts = opts.index(discount);
        Ok(match algorithm {
            Algorithm::CwiBa | Algorithm::CwiGa | Algorithm::PwiBa => {
                let decoupled = decoupled_index_table(inst, &index_opts);
                let table = if algorithm == Algorithm::PwiBa {
                    decoupled
                } else {
                    adjusted_index_table(inst, &decoupled, &index_opts)?
                };
                Planner::Index {
                    table,
                    balanced: algorithm != Algorithm::CwiGa,
                    allocation: opts.allocation(),
                }
            }
            Algorithm::Hawkins => {
                let mut options = HawkinsOptions::new(discount);
                options.dp = opts.dp(discount);
                let costs = inst.integer_costs()?;
                let start = vec![0; inst.num_arms()];
                let lambda = hawkins_lambda(inst, &start, &options).lambda;
                Planner::Hawkins {
                    tables: charged_tables(inst, &lambda, &options.dp),
                    costs,
                    options,
                    replan: opts.hawkins_replan_each_step,
                }
            }
            Algorithm::Opt | Algorithm::OptFair => {
                let mut joint = JointOptions::new(discount);
                joint.dp = opts.dp(discount);
                Planner::Joint(solve_joint(inst, algorithm == Algorithm::OptFair, &joint)?)
            }
            Algorithm::Random => Planner::Random,
        })
    }

    pub fn allocate<R: Rng + ?Sized>(
        &mut self,
        inst: &Instance,
        states: &[usize],
        rng: &mut R,
    ) -> Result<Allocation> {
        match self {
            Planner::Index {
                table,
                balanced,
                allocation,
            } => {
                let input = RoundInput::from_table(inst, table, states)?;
                Ok(if *balanced {
                    balanced_allocation(&input, allocation)
                } else {
                    greedy_allocation(&input, allocation)
                })
            }
            Planner::Hawkins {
                tables,
                costs,
                options,
                replan,
            } => {
                if *replan {
                    let lambda = hawkins_lambda(inst, states, options).lambda;
                    *tables = charged_tables(inst, &lambda, &options.dp);
                }
                let mut alloc = knapsack_allocate(
                    &q_gains(tables, states),
                    costs,
                    inst.budget.floor() as u64,
                    options.cell_cap,
                )?;
                // Integer bookkeeping in the knapsack; report the real costs.
                alloc = Allocation::from_actions(
                    &alloc.actions(inst.num_arms()),
                    &inst.costs,
                    inst.num_workers,
                );
                Ok(alloc)
            }
            Planner::Joint(policy) => Ok(policy.allocation(inst, states)),
            Planner::Random => Ok(random_allocation(inst, rng)),
        }
    }
}

fn sample_next<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (t, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    // Rounding left `u` past the last cumulative sum.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Simulates `horizon` rounds from all arms in state 0 with a prepared
/// planner. Timing is left at zero.
pub fn simulate(
    inst: &Instance,
    algorithm: Algorithm,
    planner: &mut Planner,
    horizon: usize,
    seed: u64,
) -> Result<SimulationRecord> {
    let n = inst.num_arms();
    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    };
    let mut alloc_rng = stream(0);
    let mut arm_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(i as u64 + 1)).collect();

    let mut states = vec![0usize; n];
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let alloc = planner.allocate(inst, &states, &mut alloc_rng)?;
        let actions = alloc.actions(n);
        let total_reward = states
            .iter()
            .zip(&inst.arms)
            .map(|(&s, arm)| arm.rewards[s])
            .sum();
        let gap = fairness_gap(&alloc);
        let next: Vec<usize> = (0..n)
            .map(|i| sample_next(&inst.arms[i].transition(actions[i])[states[i]], &mut arm_rngs[i]))
            .collect();
        steps.push(StepRecord {
            states: std::mem::replace(&mut states, next),
            actions,
            total_reward,
            per_worker_cost: alloc.per_worker_cost,
            gap,
            fair: gap <= inst.fairness_eps,
        });
    }

    let t = horizon as f64;
    Ok(SimulationRecord {
        algorithm,
        seed,
        num_arms: n,
        mean_reward_per_arm: steps.iter().map(|s| s.total_reward).sum::<f64>() / (n as f64 * t),
        fair_fraction: steps.iter().filter(|s| s.fair).count() as f64 / t,
        mean_gap: steps.iter().map(|s| s.gap).sum::<f64>() / t,
        steps,
        wall_time_ms: 0.0,
    })
}

/// Plans and simulates one episode, timing both.
pub fn run_episode(
    inst: &Instance,
    algorithm: Algorithm,
    horizon: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimulationRecord> {
    let start = Instant::now();
    let mut planner = Planner::new(inst, algorithm, opts)?;
    let mut record = simulate(inst, algorithm, &mut planner, horizon, seed)?;
    record.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub budget: f64,
    pub fairness_eps: f64,
    pub mean_reward_per_arm: f64,
    pub std_reward: f64,
    pub fair_fraction: f64,
    pub std_fair_fraction: f64,
    pub mean_gap: f64,
    /// Mean wall time per epoch.
    pub wall_time_ms: f64,
    pub std_wall_time_ms: f64,
    pub records: Vec<SimulationRecord>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.check()?;
    let records = (0..config.epochs)
        .into_par_iter()
        .map(|epoch| {
            let inst = config.instance_for_epoch(epoch)?;
            run_episode(
                &inst,
                config.algorithm,
                config.horizon,
                config.episode_seed(epoch),
                &config.options,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, records))
}

pub fn aggregate(config: &ExperimentConfig, records: Vec<SimulationRecord>) -> AggregateReport {
    let pick = |f: fn(&SimulationRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let (mean_reward_per_arm, std_reward) = mean_std(&pick(|r| r.mean_reward_per_arm));
    let (fair_fraction, std_fair_fraction) = mean_std(&pick(|r| r.fair_fraction));
    let (mean_gap, _) = mean_std(&pick(|r| r.mean_gap));
    let (wall_time_ms, std_wall_time_ms) = mean_std(&pick(|r| r.wall_time_ms));
    AggregateReport {
        config: config.clone(),
        budget: config.domain.budget(),
        fairness_eps: config.domain.fairness_eps(),
        mean_reward_per_arm,
        std_reward,
        fair_fraction,
        std_fair_fraction,
        mean_gap,
        wall_time_ms,
        std_wall_time_ms,
        records,
    }
}
