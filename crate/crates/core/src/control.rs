//! Per-slot drift-plus-penalty decisions and deficit-queue dynamics.
//!
//! Each slot the controller pre-serves application `m` when
//! `V â_m (r_mp - r_mc) - d̃(t) D_m(t)` is positive, where
//! `D_m(t) = C_m(1, S(t)) - â_m C̄_m` is the expected cost saved by waiting
//! and `d̃(t) = d(t) + offset` is the effective queue. The deficit queue is
//! driven by the effective cost of the chosen action.

use crate::model::{AppMask, DemandChain, Scenario};

/// `a r_mp` when pre-serving, `a r_mc` otherwise.
pub fn effective_reward(on: bool, pre: bool, chain: &DemandChain, r_pre: f64, r_cur: f64) -> f64 {
    chain.transition_prob(on) * if pre { r_pre } else { r_cur }
}

/// Realised `C_m(1, S(t))` when pre-serving, `a C̄_m` otherwise.
pub fn effective_cost(
    on: bool,
    pre: bool,
    chain: &DemandChain,
    unit_cost_now: f64,
    mean_cost: f64,
) -> f64 {
    if pre {
        unit_cost_now
    } else {
        chain.transition_prob(on) * mean_cost
    }
}

/// `D_m = C_m(1, s_k) - â^{(i)}_m C̄_m` under the given rate estimates.
pub fn cost_differential(
    scenario: &Scenario,
    estimates: &[DemandChain],
    m: usize,
    on: bool,
    k: usize,
) -> f64 {
    scenario.costs().unit(m, k) - estimates[m].transition_prob(on) * scenario.mean_unit_cost(m)
}

/// `d' = max(d + C̃ - ρ, 0)`.
#[inline]
pub fn deficit_update(d: f64, effective_cost_total: f64, rho: f64) -> f64 {
    (d + effective_cost_total - rho).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Estimation,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub deficit: f64,
    /// `(γ*_T - θ)⁺`; zero for plain BISC.
    pub offset: f64,
    pub v: f64,
    /// Transition rates used for decisions and effective costs.
    pub estimates: Vec<DemandChain>,
    pub phase: Phase,
}

impl ControllerState {
    /// Plain BISC with the true demand rates.
    pub fn bisc(scenario: &Scenario, v: f64) -> Self {
        Self {
            deficit: 0.0,
            offset: 0.0,
            v,
            estimates: scenario.chains().to_vec(),
            phase: Phase::Control,
        }
    }

    pub fn effective_queue(&self) -> f64 {
        self.deficit + self.offset
    }

    /// Pre-service decision for the observed demand `A(t)` and resource
    /// state `k`. In the estimation phase this is the maximal pre-service
    /// set; see [`estimation_action`].
    pub fn decide(&self, demand: AppMask, k: usize, scenario: &Scenario) -> AppMask {
        if self.phase == Phase::Estimation {
            return estimation_action(scenario, &self.estimates, demand, k);
        }
        let q = self.effective_queue();
        let diffs: Vec<f64> = (0..scenario.num_apps())
            .map(|m| cost_differential(scenario, &self.estimates, m, demand.get(m), k))
            .collect();
        let weights: Vec<f64> = (0..scenario.num_apps())
            .map(|m| {
                let a = self.estimates[m].transition_prob(demand.get(m));
                self.v * a * scenario.rewards().diff(m) - q * diffs[m]
            })
            .collect();
        scenario
            .actions()
            .max_weight_action(k, &weights, |m| diffs[m] <= 0.0)
    }

    /// `C̃(t) = Σ_m C̃_m` for the given action under the current estimates.
    pub fn effective_cost_total(
        &self,
        demand: AppMask,
        action: AppMask,
        k: usize,
        scenario: &Scenario,
    ) -> f64 {
        (0..scenario.num_apps())
            .map(|m| {
                effective_cost(
                    demand.get(m),
                    action.get(m),
                    &self.estimates[m],
                    scenario.costs().unit(m, k),
                    scenario.mean_unit_cost(m),
                )
            })
            .sum()
    }

    pub fn update(&mut self, effective_cost_total: f64, rho: f64) {
        self.deficit = deficit_update(self.deficit, effective_cost_total, rho);
    }
}

/// Largest feasible pre-service set, prioritised by `â (r_mp - r_mc)`.
pub fn estimation_action(
    scenario: &Scenario,
    estimates: &[DemandChain],
    demand: AppMask,
    k: usize,
) -> AppMask {
    let weights: Vec<f64> = (0..scenario.num_apps())
        .map(|m| estimates[m].transition_prob(demand.get(m)) * scenario.rewards().diff(m))
        .collect();
    scenario.actions().max_weight_action(k, &weights, |_| true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Smallest positive cost differential, `+∞` when none is positive.
    pub d_min_hat: f64,
    /// `V r_d / D̂_min + M C_max`.
    pub d_max_bound: f64,
}

/// Deterministic ceiling on the effective queue for the rates in `state`.
pub fn diagnostics(state: &ControllerState, scenario: &Scenario) -> Diagnostics {
    let mut d_min_hat = f64::INFINITY;
    for m in 0..scenario.num_apps() {
        for k in 0..scenario.resources().len() {
            for on in [false, true] {
                let d = cost_differential(scenario, &state.estimates, m, on, k);
                if d > 0.0 {
                    d_min_hat = d_min_hat.min(d);
                }
            }
        }
    }
    let base = scenario.num_apps() as f64 * scenario.costs().c_max();
    let r_d = scenario.rewards().max_diff();
    let d_max_bound = if d_min_hat.is_finite() && r_d > 0.0 {
        state.v * r_d / d_min_hat + base
    } else {
        base
    };
    Diagnostics {
        d_min_hat,
        d_max_bound,
    }
}
