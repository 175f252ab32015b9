//! Seeded generators for the three benchmark domains.
//!
//! Each generator is a pure function of its [`DomainSpec`]: the seed feeds a
//! ChaCha8 stream and draws happen in a fixed order (arm by arm, transition
//! parameters before costs), so identical specs yield identical instances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmMdp, Instance, Matrix};

pub const DEFAULT_DISCOUNT: f64 = 0.95;

/// Passive probability of reaching the good state is drawn from this range.
const PASSIVE_RANGE: (f64, f64) = (0.05, 0.5);
/// Upper end for active good-state probabilities.
const ACTIVE_MAX: f64 = 0.95;
const COST_RANGE: (u32, u32) = (1, 10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    ConstantCosts,
    OrderedWorkers,
    Specialist,
}

impl DomainKind {
    pub fn default_workers(self) -> usize {
        match self {
            DomainKind::ConstantCosts | DomainKind::Specialist => 2,
            DomainKind::OrderedWorkers => 3,
        }
    }

    pub fn default_budget(self) -> f64 {
        match self {
            DomainKind::ConstantCosts | DomainKind::Specialist => 4.0,
            DomainKind::OrderedWorkers => 18.0,
        }
    }

    /// Smallest threshold that is feasible for every instance the domain can
    /// produce: the largest possible cost.
    pub fn default_fairness_eps(self) -> f64 {
        match self {
            DomainKind::ConstantCosts | DomainKind::Specialist => 1.0,
            DomainKind::OrderedWorkers => COST_RANGE.1 as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::ConstantCosts => "constant_costs",
            DomainKind::OrderedWorkers => "ordered_workers",
            DomainKind::Specialist => "specialist",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant_costs" => Ok(DomainKind::ConstantCosts),
            "ordered_workers" => Ok(DomainKind::OrderedWorkers),
            "specialist" => Ok(DomainKind::Specialist),
            other => Err(Error::Domain(format!("unknown domain `{other}`"))),
        }
    }
}

/// Optional parameter overrides. Unset fields take the domain defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairness_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    /// Constant costs only: every worker copies worker 1's dynamics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homogeneous: Option<bool>,
    /// Specialist only: half-width of the uniform noise on each free
    /// probability (default 0.05; 0 gives the noise-free arms).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Specialist only: probability that the right specialist advances the arm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advance_prob: Option<f64>,
    /// Specialist only: probability that a passive arm slips back a state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regress_prob: Option<f64>,
    /// Draw a fresh instance for every epoch (seed + epoch). Default true.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regenerate_per_epoch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub num_arms: usize,
    pub num_workers: usize,
    pub seed: u64,
    #[serde(default)]
    pub overrides: DomainOverrides,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, num_arms: usize, seed: u64) -> Self {
        Self {
            kind,
            num_arms,
            num_workers: kind.default_workers(),
            seed,
            overrides: DomainOverrides::default(),
        }
    }

    pub fn with_workers(mut self, m: usize) -> Self {
        self.num_workers = m;
        self
    }

    pub fn with_overrides(mut self, overrides: DomainOverrides) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn budget(&self) -> f64 {
        self.overrides.budget.unwrap_or(self.kind.default_budget())
    }

    pub fn fairness_eps(&self) -> f64 {
        self.overrides
            .fairness_eps
            .unwrap_or(self.kind.default_fairness_eps())
    }

    pub fn discount(&self) -> f64 {
        self.overrides.discount.unwrap_or(DEFAULT_DISCOUNT)
    }

    pub fn regenerate_per_epoch(&self) -> bool {
        self.overrides.regenerate_per_epoch.unwrap_or(true)
    }

    pub fn check(&self) -> Result<()> {
        if self.num_arms == 0 {
            return Err(Error::Domain("at least one arm is required".into()));
        }
        if self.num_workers == 0 {
            return Err(Error::Domain("at least one worker is required".into()));
        }
        if self.kind == DomainKind::Specialist && self.num_workers != 2 {
            return Err(Error::Domain(format!(
                "specialist domain requires exactly 2 workers (M must be 2), got {}",
                self.num_workers
            )));
        }
        Ok(())
    }

    /// Generates the instance for this spec.
    pub fn generate(&self) -> Result<Instance> {
        match self.kind {
            DomainKind::ConstantCosts => gen_constant_costs(self),
            DomainKind::OrderedWorkers => gen_ordered_workers(self),
            DomainKind::Specialist => gen_specialist(self),
        }
    }

    /// The same spec with its seed shifted, for per-epoch regeneration.
    pub fn reseeded(&self, offset: u64) -> Self {
        let mut out = self.clone();
        out.seed = self.seed.wrapping_add(offset);
        out
    }
}

fn expect_kind(spec: &DomainSpec, kind: DomainKind) -> Result<()> {
    spec.check()?;
    if spec.kind != kind {
        return Err(Error::Domain(format!(
            "spec is for `{}`, not `{kind}`",
            spec.kind
        )));
    }
    Ok(())
}

fn two_state(p_good: [f64; 2]) -> Matrix {
    p_good.iter().map(|&p| vec![1.0 - p, p]).collect()
}

fn assemble(spec: &DomainSpec, arms: Vec<ArmMdp>, costs: Vec<Vec<f64>>) -> Instance {
    Instance {
        arms,
        num_workers: spec.num_workers,
        costs,
        budget: spec.budget(),
        fairness_eps: spec.fairness_eps(),
        discount: spec.discount(),
    }
}

fn draw_passive(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [
        rng.gen_range(PASSIVE_RANGE.0..PASSIVE_RANGE.1),
        rng.gen_range(PASSIVE_RANGE.0..PASSIVE_RANGE.1),
    ]
}

/// Unit costs; every worker reaches the good state at least as often as the
/// passive action from either state.
pub fn gen_constant_costs(spec: &DomainSpec) -> Result<Instance> {
    expect_kind(spec, DomainKind::ConstantCosts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let homogeneous = spec.overrides.homogeneous.unwrap_or(false);
    let m = spec.num_workers;
    let mut arms = Vec::with_capacity(spec.num_arms);
    for _ in 0..spec.num_arms {
        let p0 = draw_passive(&mut rng);
        let mut transitions = vec![two_state(p0)];
        for k in 0..m {
            if homogeneous && k > 0 {
                transitions.push(transitions[1].clone());
                continue;
            }
            let pk = [
                rng.gen_range(p0[0]..=ACTIVE_MAX),
                rng.gen_range(p0[1]..=ACTIVE_MAX),
            ];
            transitions.push(two_state(pk));
        }
        arms.push(ArmMdp::new(vec![0.0, 1.0], transitions));
    }
    let costs = vec![vec![1.0; m]; spec.num_arms];
    Ok(assemble(spec, arms, costs))
}

/// Worker 1 is the most effective on every arm, then worker 2, and so on,
/// all above passive; costs are integers drawn uniformly from 1..=10.
pub fn gen_ordered_workers(spec: &DomainSpec) -> Result<Instance> {
    expect_kind(spec, DomainKind::OrderedWorkers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.num_workers;
    let mut arms = Vec::with_capacity(spec.num_arms);
    let mut costs = Vec::with_capacity(spec.num_arms);
    for _ in 0..spec.num_arms {
        let p0 = draw_passive(&mut rng);
        let mut per_state: Vec<Vec<f64>> = p0
            .iter()
            .map(|&lo| (0..m).map(|_| rng.gen_range(lo..=ACTIVE_MAX)).collect())
            .collect();
        for draws in &mut per_state {
            draws.sort_by(|a, b| b.total_cmp(a));
        }
        let mut transitions = vec![two_state(p0)];
        for k in 0..m {
            transitions.push(two_state([per_state[0][k], per_state[1][k]]));
        }
        arms.push(ArmMdp::new(vec![0.0, 1.0], transitions));
        costs.push(
            (0..m)
                .map(|_| rng.gen_range(COST_RANGE.0..=COST_RANGE.1) as f64)
                .collect(),
        );
    }
    Ok(assemble(spec, arms, costs))
}

/// Three states (0 overgrown and snared, 1 clear and snared, 2 clear and
/// clean) with reward only in state 2. Worker 1 can only clear brush
/// (0 -> 1), worker 2 can only remove snares (1 -> 2); nothing moves an arm
/// from 0 straight to 2. Passive arms slip back 2 -> 1 -> 0 and state 0 is
/// absorbing without worker 1. Rows a worker cannot change are self-loops.
pub fn gen_specialist(spec: &DomainSpec) -> Result<Instance> {
    expect_kind(spec, DomainKind::Specialist)?;
    let o = &spec.overrides;
    let noise = o.noise.unwrap_or(0.05);
    let advance = o.advance_prob.unwrap_or(0.8);
    let regress = o.regress_prob.unwrap_or(0.2);
    if !(0.0..=1.0).contains(&advance) || !(0.0..=1.0).contains(&regress) || noise < 0.0 {
        return Err(Error::Domain(
            "specialist probabilities must lie in [0, 1] and noise must be non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jitter = |base: f64| {
        if noise > 0.0 {
            (base + rng.gen_range(-noise..=noise)).clamp(0.05, 0.95)
        } else {
            base
        }
    };
    let mut arms = Vec::with_capacity(spec.num_arms);
    for _ in 0..spec.num_arms {
        let clear = jitter(advance);
        let unsnare = jitter(advance);
        let slip_to_snared = jitter(regress);
        let slip_to_overgrown = jitter(regress);
        let passive = vec![
            vec![1.0, 0.0, 0.0],
            vec![slip_to_overgrown, 1.0 - slip_to_overgrown, 0.0],
            vec![0.0, slip_to_snared, 1.0 - slip_to_snared],
        ];
        let brush = vec![
            vec![1.0 - clear, clear, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let snares = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0 - unsnare, unsnare],
            vec![0.0, 0.0, 1.0],
        ];
        arms.push(ArmMdp::new(vec![0.0, 0.0, 1.0], vec![passive, brush, snares]));
    }
    let costs = vec![vec![1.0; 2]; spec.num_arms];
    Ok(assemble(spec, arms, costs))
}
