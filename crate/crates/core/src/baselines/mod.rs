//! Reference policies: Lagrangian multipliers with a knapsack, exact joint
//! value iteration with and without fairness, and uniform random actions.

pub mod hawkins;
pub mod joint;
pub mod random;

pub use hawkins::{
    charged_tables, hawkins_allocate, hawkins_dual, hawkins_lambda, knapsack_allocate, q_gains,
    HawkinsLambda, HawkinsOptions,
};
pub use joint::{
    admissible_profiles, evaluate_joint_policy, solve_joint, JointOptions, JointPolicy, JointSpace,
};
pub use random::random_allocation;
