//! Exact solution of the joint MDP over all arms, with and without the
//! per-round fairness constraint. Only feasible for a handful of arms.

use serde::{Deserialize, Serialize};

use crate::dp::DpOptions;
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOptions {
    /// Largest number of joint states.
    pub state_cap: u128,
    /// Largest number of admissible action profiles.
    pub profile_cap: u128,
    /// Largest (joint states x admissible profiles) product, the work of one
    /// Bellman sweep in expectation evaluations.
    pub work_cap: u128,
    pub dp: DpOptions,
}

impl JointOptions {
    pub fn new(discount: f64) -> Self {
        Self {
            state_cap: 4096,
            profile_cap: 1_000_000,
            work_cap: 1 << 20,
            dp: DpOptions::new(discount),
        }
    }
}

/// Mixed-radix indexing of joint states; arm 0 is the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointSpace {
    pub dims: Vec<usize>,
}

impl JointSpace {
    pub fn new(inst: &Instance) -> Self {
        Self {
            dims: inst.arms.iter().map(|a| a.num_states()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn encode(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&s, &d)| acc * d + s)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }
}

/// Optimal stationary policy over the joint state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub space: JointSpace,
    /// Per joint state, one action index per arm.
    pub action_profiles: Vec<Vec<usize>>,
    pub values: Vec<f64>,
    pub fairness_constrained: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl JointPolicy {
    pub fn profile(&self, states: &[usize]) -> &[usize] {
        &self.action_profiles[self.space.encode(states)]
    }

    pub fn value(&self, states: &[usize]) -> f64 {
        self.values[self.space.encode(states)]
    }

    pub fn allocation(&self, inst: &Instance, states: &[usize]) -> Allocation {
        Allocation::from_actions(self.profile(states), &inst.costs, inst.num_workers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("joint policies always serialize")
    }
}

/// Admissible profiles in lexicographic order (all-passive first): one
/// action per arm, every worker within budget and, if requested, the cost
/// gap within `fairness_eps`.
pub fn admissible_profiles(
    inst: &Instance,
    fairness_constrained: bool,
    cap: u128,
) -> Result<Vec<Vec<usize>>> {
    let n = inst.num_arms();
    let m = inst.num_workers;
    let mut out = Vec::new();
    let mut profile = vec![0usize; n];
    let mut spent = vec![0.0f64; m];

    fn walk(
        i: usize,
        inst: &Instance,
        fair: bool,
        cap: u128,
        profile: &mut Vec<usize>,
        spent: &mut Vec<f64>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        if i == profile.len() {
            if fair {
                let max = spent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = spent.iter().copied().fold(f64::INFINITY, f64::min);
                if max - min > inst.fairness_eps {
                    return Ok(());
                }
            }
            if out.len() as u128 >= cap {
                return Err(Error::Size {
                    what: "admissible action profiles",
                    size: cap + 1,
                    cap,
                });
            }
            out.push(profile.clone());
            return Ok(());
        }
        for a in 0..=inst.num_workers {
            if a > 0 {
                let c = inst.costs[i][a - 1];
                if spent[a - 1] + c > inst.budget {
                    continue;
                }
                spent[a - 1] += c;
            }
            profile[i] = a;
            let r = walk(i + 1, inst, fair, cap, profile, spent, out);
            if a > 0 {
                spent[a - 1] -= inst.costs[i][a - 1];
            }
            r?;
        }
        profile[i] = 0;
        Ok(())
    }

    walk(0, inst, fairness_constrained, cap, &mut profile, &mut spent, &mut out)?;
    Ok(out)
}

/// Expected value of `v` after one joint step from `states` under `profile`,
/// contracting one arm at a time.
fn expectation(
    inst: &Instance,
    space: &JointSpace,
    states: &[usize],
    profile: &[usize],
    v: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(v);
    let mut len = v.len();
    for i in (0..space.dims.len()).rev() {
        let d = space.dims[i];
        let row = &inst.arms[i].transition(profile[i])[states[i]];
        let outer = len / d;
        for o in 0..outer {
            let base = o * d;
            let mut acc = 0.0;
            for (t, p) in row.iter().enumerate() {
                acc += p * scratch[base + t];
            }
            scratch[o] = acc;
        }
        len = outer;
    }
    scratch[0]
}

fn check_size(inst: &Instance, cap: u128) -> Result<JointSpace> {
    let space = JointSpace::new(inst);
    let size = space
        .dims
        .iter()
        .fold(1u128, |acc, &d| acc.saturating_mul(d as u128));
    if size > cap {
        return Err(Error::Size {
            what: "joint state space",
            size,
            cap,
        });
    }
    Ok(space)
}

/// Value iteration over the joint MDP. The joint reward is the sum of the
/// arms' state rewards; ties between profiles go to the earliest profile.
pub fn solve_joint(
    inst: &Instance,
    fairness_constrained: bool,
    opts: &JointOptions,
) -> Result<JointPolicy> {
    let space = check_size(inst, opts.state_cap)?;
    let size = space.size();
    let per_state = (opts.work_cap / size as u128).min(opts.profile_cap);
    let profiles =
        admissible_profiles(inst, fairness_constrained, per_state).map_err(|e| match e {
            Error::Size { .. } => Error::Size {
                what: "joint state-action pairs",
                size: size as u128 * (per_state + 1),
                cap: opts.work_cap,
            },
            other => other,
        })?;
    let decoded: Vec<Vec<usize>> = (0..size).map(|x| space.decode(x)).collect();
    let reward: Vec<f64> = decoded
        .iter()
        .map(|st| st.iter().zip(&inst.arms).map(|(&s, a)| a.rewards[s]).sum())
        .collect();

    let stop = opts.dp.stopping_residual();
    let beta = opts.dp.discount;
    let mut v = vec![0.0; size];
    let mut next = vec![0.0; size];
    let mut choice = vec![0usize; size];
    let mut scratch = Vec::with_capacity(size);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.dp.max_iter {
        iterations += 1;
        for x in 0..size {
            let mut best = f64::NEG_INFINITY;
            for (p, profile) in profiles.iter().enumerate() {
                let e = expectation(inst, &space, &decoded[x], profile, &v, &mut scratch);
                if e > best {
                    best = e;
                    choice[x] = p;
                }
            }
            next[x] = reward[x] + beta * best;
        }
        let residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual <= stop {
            converged = true;
            break;
        }
    }
    Ok(JointPolicy {
        action_profiles: choice.iter().map(|&p| profiles[p].clone()).collect(),
        space,
        values: v,
        fairness_constrained,
        iterations,
        converged,
    })
}

/// Discounted value of a fixed joint policy, `profiles[x]` being the action
/// profile used in joint state `x`.
pub fn evaluate_joint_policy(
    inst: &Instance,
    profiles: &[Vec<usize>],
    dp: &DpOptions,
) -> Result<Vec<f64>> {
    let space = JointSpace::new(inst);
    let size = space.size();
    if profiles.len() != size {
        return Err(Error::Config(format!(
            "{} profiles for {size} joint states",
            profiles.len()
        )));
    }
    let decoded: Vec<Vec<usize>> = (0..size).map(|x| space.decode(x)).collect();
    let reward: Vec<f64> = decoded
        .iter()
        .map(|st| st.iter().zip(&inst.arms).map(|(&s, a)| a.rewards[s]).sum())
        .collect();
    let stop = dp.stopping_residual();
    let mut v = vec![0.0; size];
    let mut scratch = Vec::with_capacity(size);
    for _ in 0..dp.max_iter {
        let next: Vec<f64> = (0..size)
            .map(|x| {
                reward[x]
                    + dp.discount
                        * expectation(inst, &space, &decoded[x], &profiles[x], &v, &mut scratch)
            })
            .collect();
        let residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= stop {
            break;
        }
    }
    Ok(v)
}
