#![allow(dead_code)]

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use rand::Rng;
use sysintel::model::{
    ActionSetSpec, CostModel, DemandChain, ResourceModel, RewardModel, Scenario,
};

/// Random scenario with `m` apps and `k` resource states. Labels are the
/// state index; costs, rates and rewards are drawn independently.
pub fn random_scenario<R: Rng>(rng: &mut R, m: usize, k: usize, capped: bool) -> Scenario {
    let chains = (0..m)
        .map(|_| DemandChain::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)).unwrap())
        .collect();
    let mut probs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let fix: f64 = 1.0 - probs[..k - 1].iter().sum::<f64>();
    probs[k - 1] = fix;
    let resources = ResourceModel::new(
        (0..k).map(|i| vec![i as u32; m]).collect(),
        probs,
    )
    .unwrap();
    let costs = CostModel::new(
        (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect(),
    )
    .unwrap();
    let r_cur: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
    let r_pre = r_cur.iter().map(|c| c + rng.gen_range(0.0..3.0)).collect();
    let actions = if capped {
        ActionSetSpec::CardinalityLimited((0..k).map(|_| rng.gen_range(0..=m)).collect())
    } else {
        ActionSetSpec::Unconstrained
    };
    let s = Scenario::new(
        chains,
        resources,
        costs,
        RewardModel::new(r_pre, r_cur).unwrap(),
        actions,
        1.0,
    )
    .unwrap();
    let rho = rng.gen_range(0.0..1.2) * s.rho_max().max(0.1);
    s.with_rho(rho)
}

/// Expected reward and two-slot cost of `action` in joint state
/// `(demand, k)`, computed directly from the scenario.
pub fn state_reward_cost(s: &Scenario, demand: u64, k: usize, action: u64) -> (f64, f64) {
    let mut reward = 0.0;
    let mut cost = 0.0;
    for m in 0..s.num_apps() {
        let on = demand >> m & 1 == 1;
        let a = if on { 1.0 - s.chain(m).delta() } else { s.chain(m).epsilon() };
        if action >> m & 1 == 1 {
            reward += a * s.rewards().pre(m);
            cost += s.costs().unit(m, k);
        } else {
            reward += a * s.rewards().cur(m);
            cost += a * s.mean_unit_cost(m);
        }
    }
    (reward, cost)
}

/// Stationary probability of the joint state `(demand, k)`.
pub fn state_prob(s: &Scenario, demand: u64, k: usize) -> f64 {
    let mut p = s.resources().prob(k);
    for m in 0..s.num_apps() {
        let c = s.chain(m);
        let on = c.epsilon() / (c.epsilon() + c.delta());
        p *= if demand >> m & 1 == 1 { on } else { 1.0 - on };
    }
    p
}

pub fn feasible(s: &Scenario, k: usize, action: u64) -> bool {
    match s.actions() {
        ActionSetSpec::Unconstrained => true,
        ActionSetSpec::CardinalityLimited(caps) => (action.count_ones() as usize) <= caps[k],
    }
}

/// Mean and batch-means standard error (20 batches) of a stationary series.
pub fn batch_mean_se(xs: &[f64]) -> (f64, f64) {
    let batches = 20;
    let len = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    mean_se(&means)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Best average reward over randomised stationary policies, or `None` when
/// no policy meets the budget.
pub fn lp_bound(s: &Scenario) -> Option<f64> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let mut budget = Vec::new();
    for demand in 0..1u64 << s.num_apps() {
        for k in 0..s.resources().len() {
            let p = state_prob(s, demand, k);
            let mut simplex = Vec::new();
            for action in 0..1u64 << s.num_apps() {
                if !feasible(s, k, action) {
                    continue;
                }
                let (r, c) = state_reward_cost(s, demand, k, action);
                let x = lp.add_var(p * r, (0.0, 1.0));
                simplex.push((x, 1.0));
                budget.push((x, p * c));
            }
            lp.add_constraint(simplex.as_slice(), ComparisonOp::Eq, 1.0);
        }
    }
    lp.add_constraint(budget.as_slice(), ComparisonOp::Le, s.rho());
    match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => Some(sol.objective()),
        Ok(SolveOutcome::Interrupted(_)) => panic!("LP interrupted"),
        Err(microlp::Error::Infeasible) => None,
        Err(e) => panic!("LP failed: {e:?}"),
    }
}
