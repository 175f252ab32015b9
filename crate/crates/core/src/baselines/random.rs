use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{Allocation, Instance};

/// Random budget-feasible allocation: arms are visited in random order and
/// each picks uniformly among the passive action and the workers that can
/// still afford it.
pub fn random_allocation<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Allocation {
    let mut order: Vec<usize> = (0..inst.num_arms()).collect();
    order.shuffle(rng);
    let mut alloc = Allocation::empty(inst.num_workers);
    let mut options = Vec::with_capacity(inst.num_workers + 1);
    for i in order {
        options.clear();
        options.push(0);
        for k in 0..inst.num_workers {
            if alloc.per_worker_cost[k] + inst.costs[i][k] <= inst.budget {
                options.push(k + 1);
            }
        }
        let a = options[rng.gen_range(0..options.len())];
        if a > 0 {
            alloc.assign(i, a - 1, inst.costs[i][a - 1]);
        }
    }
    alloc
}
