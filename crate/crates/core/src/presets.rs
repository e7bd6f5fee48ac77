//! Built-in scenarios.
//!
//! `setting_a` and `setting_b` are the three-application systems used for
//! the budget-curve, intelligence/deficit and convergence experiments: each
//! application sees resource label `S_m ∈ {1, 2}` with cost `C_m(1, S) = S_m`.
//! `single_app` is the one-application system used for the predictability
//! sweep.

use crate::model::{
    ActionSetSpec, CostModel, DemandChain, ModelError, ResourceModel, RewardModel, Scenario,
};

pub const SETTING_A: &str = "paper-setting-A";
pub const SETTING_B: &str = "paper-setting-B";
pub const SINGLE_APP: &str = "single-app";

/// Budget rate shared by both three-application settings.
pub const DEFAULT_RHO: f64 = 3.5;

fn three_app(
    eps: [f64; 3],
    delta: [f64; 3],
    r_pre: [f64; 3],
    p_good: [f64; 3],
    rho: f64,
) -> Scenario {
    let chains = eps
        .iter()
        .zip(&delta)
        .map(|(&e, &d)| DemandChain::new(e, d).expect("preset rates are valid"))
        .collect();
    let per_app: Vec<Vec<(u32, f64)>> = p_good
        .iter()
        .map(|&p| vec![(1, p), (2, 1.0 - p)])
        .collect();
    let resources = ResourceModel::product(&per_app).expect("preset resources are valid");
    let costs = CostModel::from_labels(&resources, |_, label| f64::from(label))
        .expect("preset costs are valid");
    let rewards = RewardModel::new(r_pre.to_vec(), vec![1.0; 3]).expect("preset rewards");
    Scenario::new(
        chains,
        resources,
        costs,
        rewards,
        ActionSetSpec::Unconstrained,
        rho,
    )
    .expect("preset scenario is consistent")
}

/// `ε = (0.6, 0.5, 0.3)`, `δ = (0.2, 0.6, 0.5)`, `r_p = (3, 5, 8)`,
/// `r_c = 1`, `P(S_m = 1) = (0.5, 0.3, 0.3)`, `ρ = 3.5`.
pub fn setting_a() -> Scenario {
    three_app(
        [0.6, 0.5, 0.3],
        [0.2, 0.6, 0.5],
        [3.0, 5.0, 8.0],
        [0.5, 0.3, 0.3],
        DEFAULT_RHO,
    )
}

/// `ε = (0.8, 0.4, 0.3)`, `δ = (0.2, 0.9, 0.5)`, `r_p = (4, 5, 3)`,
/// `P(S_2 = 1) = 0.8`, otherwise as setting A.
pub fn setting_b() -> Scenario {
    three_app(
        [0.8, 0.4, 0.3],
        [0.2, 0.9, 0.5],
        [4.0, 5.0, 3.0],
        [0.5, 0.8, 0.3],
        DEFAULT_RHO,
    )
}

/// Resource outcomes of the single-application system: a cheap state
/// (cost 0.5, probability 0.9) and a rare expensive one (cost 4).
pub const SINGLE_APP_RESOURCES: [(f64, f64); 2] = [(0.5, 0.9), (4.0, 0.1)];

/// One application with rates `(epsilon, delta)`, `r_p = 3`, `r_c = 1` and
/// budget `ρ = ρ_max / 2`.
pub fn single_app(epsilon: f64, delta: f64) -> Result<Scenario, ModelError> {
    let chain = DemandChain::new(epsilon, delta)?;
    let resources = ResourceModel::new(
        vec![vec![1], vec![2]],
        SINGLE_APP_RESOURCES.iter().map(|r| r.1).collect(),
    )?;
    let costs = CostModel::new(SINGLE_APP_RESOURCES.iter().map(|r| vec![r.0]).collect())?;
    let rewards = RewardModel::new(vec![3.0], vec![1.0])?;
    let rho_max: f64 = SINGLE_APP_RESOURCES.iter().map(|(c, p)| c * p).sum();
    Scenario::new(
        vec![chain],
        resources,
        costs,
        rewards,
        ActionSetSpec::Unconstrained,
        rho_max / 2.0,
    )
}

/// Looks up a three-application preset by name.
pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        SETTING_A => Some(setting_a()),
        SETTING_B => Some(setting_b()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_a_budget_quantities() {
        let s = setting_a();
        assert!((s.rho_max() - 4.9).abs() < 1e-12);
        assert!((s.mean_unit_cost(0) - 1.5).abs() < 1e-12);
        assert!((s.mean_unit_cost(1) - 1.7).abs() < 1e-12);
        let sum: f64 = (0..3).map(|m| s.mean_unit_cost(m)).sum();
        assert!((sum - s.rho_max()).abs() < 1e-12);
        assert_eq!(s.resources().len(), 8);
    }

    #[test]
    fn setting_b_differs() {
        let s = setting_b();
        assert!((s.mean_unit_cost(1) - 1.2).abs() < 1e-12);
        assert_eq!(s.rewards().pre(0), 4.0);
    }

    #[test]
    fn single_app_budget_is_half_max() {
        let s = single_app(0.3, 0.6).unwrap();
        assert!((s.rho() - s.rho_max() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn lookup() {
        assert!(by_name(SETTING_A).is_some());
        assert!(by_name("nope").is_none());
    }
}
