//! Exact intelligence bound and the piecewise-linear dual.
//!
//! The bound is a linear program over per-state action distributions with a
//! single coupling constraint (the average cost budget). Its Lagrangian dual
//!
//! ```text
//! g(γ) = Σ_h π_h max_{μ ∈ U_h} Σ_m { V a_m [μ_m r_mp + (1-μ_m) r_mc]
//!                                    - γ [μ_m C_m(1,k) + (1-μ_m) a_m C̄_m] } + γ ρ
//! ```
//!
//! is convex and piecewise linear in `γ`. Its breakpoints are the values of
//! `γ` where some state's maximising action changes. Between consecutive
//! breakpoints the maximisers are constant, so the slope `ρ - cost(γ)` is
//! read off exactly at interval midpoints. The primal optimum mixes the two
//! maximisers on either side of the minimising breakpoint, in one state only.

use thiserror::Error;

use crate::model::{
    enumerate_joint_states_with, ActionSetSpec, AppMask, DemandChain, JointState, ModelError,
    Scenario, DEFAULT_STATE_CAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("budget rho = {rho} is below the minimum achievable average cost {min_cost}")]
    InfeasibleBudget { rho: f64, min_cost: f64 },
}

/// Per-application coefficients of one joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppTerm {
    /// Probability that the next slot is ON, `a^{(i_h)}_m`.
    pub a: f64,
    /// `C_m(1, s_k)` paid now when pre-serving.
    pub unit_cost: f64,
    /// `a C̄_m`, expected passive cost next slot when not pre-serving.
    pub passive_cost: f64,
    /// `a r_mp`.
    pub pre_reward: f64,
    /// `a r_mc`.
    pub cur_reward: f64,
}

impl AppTerm {
    /// Cost differential `C_m(1, s_k) - a C̄_m`.
    pub fn differential(&self) -> f64 {
        self.unit_cost - self.passive_cost
    }

    /// Expected reward gained by pre-serving, `a (r_mp - r_mc)`.
    pub fn gain(&self) -> f64 {
        self.pre_reward - self.cur_reward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTerms {
    pub state: JointState,
    pub apps: Vec<AppTerm>,
}

impl StateTerms {
    pub fn reward(&self, action: AppMask) -> f64 {
        self.apps
            .iter()
            .enumerate()
            .map(|(m, t)| if action.get(m) { t.pre_reward } else { t.cur_reward })
            .sum()
    }

    pub fn cost(&self, action: AppMask) -> f64 {
        self.apps
            .iter()
            .enumerate()
            .map(|(m, t)| if action.get(m) { t.unit_cost } else { t.passive_cost })
            .sum()
    }
}

/// Everything the dual needs: per-state transition probabilities and costs,
/// the state distribution, the budget and the scale `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualParams {
    v: f64,
    rho: f64,
    actions: ActionSetSpec,
    states: Vec<StateTerms>,
}

impl DualParams {
    /// Dual built from the scenario's true demand rates.
    pub fn new(scenario: &Scenario, v: f64) -> Result<Self, ModelError> {
        Self::with_chains(scenario, scenario.chains(), v, DEFAULT_STATE_CAP)
    }

    /// Dual built from the given demand rates (true or estimated). Both the
    /// transition probabilities and the implied demand distribution use
    /// `chains`; resource probabilities and costs come from `scenario`.
    pub fn with_chains(
        scenario: &Scenario,
        chains: &[DemandChain],
        v: f64,
        cap: usize,
    ) -> Result<Self, ModelError> {
        if chains.len() != scenario.num_apps() {
            return Err(ModelError::Dimension(format!(
                "{} rate pairs for {} applications",
                chains.len(),
                scenario.num_apps()
            )));
        }
        let rewards = scenario.rewards();
        let costs = scenario.costs();
        let states = enumerate_joint_states_with(chains, scenario.resources(), cap)?
            .into_iter()
            .map(|state| {
                let apps = chains
                    .iter()
                    .enumerate()
                    .map(|(m, chain)| {
                        let a = chain.transition_prob(state.demand.get(m));
                        AppTerm {
                            a,
                            unit_cost: costs.unit(m, state.resource_index),
                            passive_cost: a * scenario.mean_unit_cost(m),
                            pre_reward: a * rewards.pre(m),
                            cur_reward: a * rewards.cur(m),
                        }
                    })
                    .collect();
                StateTerms { state, apps }
            })
            .collect();
        Ok(Self {
            v,
            rho: scenario.rho(),
            actions: scenario.actions().clone(),
            states,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn states(&self) -> &[StateTerms] {
        &self.states
    }

    fn maximiser(&self, h: usize, gamma: f64) -> AppMask {
        let terms = &self.states[h];
        let weights: Vec<f64> = terms
            .apps
            .iter()
            .map(|t| self.v * t.gain() - gamma * t.differential())
            .collect();
        self.actions
            .max_weight_action(terms.state.resource_index, &weights, |m| {
                terms.apps[m].differential() <= 0.0
            })
    }

    fn lagrangian(&self, h: usize, action: AppMask, gamma: f64) -> f64 {
        let terms = &self.states[h];
        self.v * terms.reward(action) - gamma * terms.cost(action) + gamma * self.rho
    }

    /// Average cost when every state plays its maximiser at `gamma`.
    fn cost_at(&self, gamma: f64) -> f64 {
        (0..self.states.len())
            .map(|h| self.states[h].state.prob * self.states[h].cost(self.maximiser(h, gamma)))
            .sum()
    }

    /// Sorted, de-duplicated positive values of `γ` at which some state's
    /// maximiser can change.
    fn breakpoints(&self) -> Vec<f64> {
        let mut points = Vec::new();
        for terms in &self.states {
            let capped = self
                .actions
                .cap(terms.state.resource_index)
                .is_some_and(|c| c < terms.apps.len());
            for (m, t) in terms.apps.iter().enumerate() {
                let d = t.differential();
                if d != 0.0 {
                    points.push(self.v * t.gain() / d);
                }
                if capped {
                    for u in &terms.apps[m + 1..] {
                        let dd = d - u.differential();
                        if dd != 0.0 {
                            points.push(self.v * (t.gain() - u.gain()) / dd);
                        }
                    }
                }
            }
        }
        points.retain(|g| g.is_finite() && *g > 0.0);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));
        points
    }

    fn locate(&self) -> Location {
        let bps = self.breakpoints();
        // Interval i spans (bps[i-1], bps[i]) with bps[-1] = 0, bps[n] = ∞.
        let interior = |i: usize| -> f64 {
            let lo = if i == 0 { 0.0 } else { bps[i - 1] };
            if i < bps.len() {
                0.5 * (lo + bps[i])
            } else {
                2.0 * lo + 1.0
            }
        };
        let slope = |i: usize| self.rho - self.cost_at(interior(i));
        if slope(0) >= 0.0 {
            return Location::Bounded {
                gamma: 0.0,
                left: None,
                right: interior(0),
            };
        }
        let n = bps.len();
        if slope(n) < 0.0 {
            return Location::Unbounded {
                min_cost: self.cost_at(interior(n)),
            };
        }
        // Smallest i in 1..=n with nonnegative slope; slopes are nondecreasing.
        let (mut lo, mut hi) = (0usize, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if slope(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Location::Bounded {
            gamma: bps[hi - 1],
            left: Some(interior(hi - 1)),
            right: interior(hi),
        }
    }
}

enum Location {
    /// Minimiser `gamma`, with probe points just left/right of it.
    Bounded {
        gamma: f64,
        left: Option<f64>,
        right: f64,
    },
    /// The slope stays negative: the budget is infeasible.
    Unbounded { min_cost: f64 },
}

/// Per-state dual `g_h(γ)` and the maximising action.
///
/// Ties at zero weight pre-serve only when the cost differential is
/// nonpositive, matching the online controller.
pub fn dual_state(gamma: f64, h: usize, p: &DualParams) -> (f64, AppMask) {
    let action = p.maximiser(h, gamma);
    (p.lagrangian(h, action, gamma), action)
}

/// `g_π(γ) = Σ_h π_h g_h(γ)`.
pub fn dual(gamma: f64, p: &DualParams) -> f64 {
    (0..p.states.len())
        .map(|h| p.states[h].state.prob * dual_state(gamma, h, p).0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualMinimum {
    pub gamma: f64,
    pub value: f64,
    /// The dual decreases without bound; `gamma` was set to the cap.
    pub capped: bool,
}

/// Exact minimiser of the dual over `γ >= 0`.
///
/// If the dual decreases forever (the budget is infeasible for these
/// statistics) the cap is returned with `capped = true`. A finite minimiser
/// is returned as-is even when it lies above the cap.
pub fn minimize_dual(p: &DualParams, gamma_cap: f64) -> DualMinimum {
    match p.locate() {
        Location::Bounded { gamma, .. } => DualMinimum {
            gamma,
            value: dual(gamma, p),
            capped: false,
        },
        Location::Unbounded { .. } => DualMinimum {
            gamma: gamma_cap,
            value: dual(gamma_cap, p),
            capped: true,
        },
    }
}

/// Randomised stationary policy for one joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePolicy {
    pub state: JointState,
    /// `(action, weight)` pairs; one entry, or two in the single mixing state.
    pub choices: Vec<(AppMask, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolution {
    /// The intelligence bound `I(ρ)`.
    pub value: f64,
    pub policy: Vec<StatePolicy>,
    /// Optimal multiplier at `V = 1`; scales linearly with `V`.
    pub multiplier: f64,
    /// Average cost of `policy`.
    pub cost: f64,
}

impl BoundSolution {
    /// Index of the state that randomises, if any.
    pub fn mixing_state(&self) -> Option<usize> {
        self.policy.iter().position(|p| p.choices.len() > 1)
    }
}

/// Solves the intelligence-bound linear program exactly.
pub fn intelligence_bound(s: &Scenario) -> Result<BoundSolution, OracleError> {
    intelligence_bound_with_cap(s, DEFAULT_STATE_CAP)
}

pub fn intelligence_bound_with_cap(s: &Scenario, cap: usize) -> Result<BoundSolution, OracleError> {
    let p = DualParams::with_chains(s, s.chains(), 1.0, cap)?;
    let (gamma, left, right) = match p.locate() {
        Location::Bounded { gamma, left, right } => (gamma, left, right),
        Location::Unbounded { min_cost } => {
            return Err(OracleError::InfeasibleBudget {
                rho: s.rho(),
                min_cost,
            })
        }
    };
    let n = p.states.len();
    let right_actions: Vec<AppMask> = (0..n).map(|h| p.maximiser(h, right)).collect();
    let mut choices: Vec<Vec<(AppMask, f64)>> =
        right_actions.iter().map(|&a| vec![(a, 1.0)]).collect();
    if let Some(left) = left {
        // Start from the cheaper right-hand maximisers and move states to the
        // left-hand ones, in index order, until the budget is met exactly.
        let mut cost: f64 = (0..n)
            .map(|h| p.states[h].state.prob * p.states[h].cost(right_actions[h]))
            .sum();
        for h in 0..n {
            let l = p.maximiser(h, left);
            let r = right_actions[h];
            if l == r {
                continue;
            }
            let terms = &p.states[h];
            let extra = terms.state.prob * (terms.cost(l) - terms.cost(r));
            if extra <= 0.0 {
                continue;
            }
            if cost + extra <= s.rho() {
                choices[h] = vec![(l, 1.0)];
                cost += extra;
            } else {
                let w = ((s.rho() - cost) / extra).clamp(0.0, 1.0);
                if w > 0.0 {
                    choices[h] = vec![(r, 1.0 - w), (l, w)];
                }
                break;
            }
        }
    }
    let mut value = 0.0;
    let mut cost = 0.0;
    let policy = p
        .states
        .iter()
        .zip(choices)
        .map(|(terms, choices)| {
            for &(a, w) in &choices {
                value += terms.state.prob * w * terms.reward(a);
                cost += terms.state.prob * w * terms.cost(a);
            }
            StatePolicy {
                state: terms.state,
                choices,
            }
        })
        .collect();
    Ok(BoundSolution {
        value,
        policy,
        multiplier: gamma,
        cost,
    })
}

/// `I(ρ_max) = Σ_m ε_m r_mp / (ε_m + δ_m)`.
pub fn intelligence_at_max_budget(s: &Scenario) -> Result<f64, ModelError> {
    s.chains()
        .iter()
        .enumerate()
        .map(|(m, c)| Ok(c.steady_state()?.1 * s.rewards().pre(m)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn closed_form_at_max_budget() {
        let s = presets::setting_a().with_rho(4.9);
        let closed = intelligence_at_max_budget(&s).unwrap();
        assert!((closed - (2.25 + 25.0 / 11.0 + 3.0)).abs() < 1e-12);
        let sol = intelligence_bound(&s).unwrap();
        assert!((sol.value - closed).abs() < 1e-9, "{}", sol.value);
        assert_eq!(sol.multiplier, 0.0);
    }

    #[test]
    fn symmetric_single_app_full_budget() {
        let s = presets::single_app(0.5, 0.5).unwrap();
        let s = s.with_rho(s.rho_max());
        let scenario = s
            .with_chains(vec![DemandChain::new(0.5, 0.5).unwrap()])
            .unwrap();
        let sol = intelligence_bound(&scenario).unwrap();
        assert!((sol.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_pre_rewards_give_zero() {
        let s = presets::setting_a();
        let zero = crate::model::RewardModel::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let s = Scenario::new(
            s.chains().to_vec(),
            s.resources().clone(),
            s.costs().clone(),
            zero,
            s.actions().clone(),
            s.rho(),
        )
        .unwrap();
        assert_eq!(intelligence_at_max_budget(&s).unwrap(), 0.0);
    }

    #[test]
    fn single_app_closed_form() {
        let s = presets::single_app(0.6, 0.2).unwrap();
        assert!((intelligence_at_max_budget(&s).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn dual_state_matches_enumeration() {
        let s = presets::setting_a();
        let p = DualParams::new(&s, 10.0).unwrap();
        // A = (1,1,1), S = (1,1,1): demand mask 7, resource index 0.
        let h = p
            .states()
            .iter()
            .position(|t| t.state.demand == AppMask(7) && t.state.resource_index == 0)
            .unwrap();
        let (value, _) = dual_state(1.0, h, &p);
        let brute = (0..8u64)
            .map(|a| {
                let t = &p.states()[h];
                10.0 * t.reward(AppMask(a)) - t.cost(AppMask(a)) + s.rho()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((value - brute).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_maximises_reward() {
        let s = presets::setting_a();
        let p = DualParams::new(&s, 10.0).unwrap();
        for h in 0..p.states().len() {
            assert_eq!(dual_state(0.0, h, &p).1, AppMask(7));
        }
        let capped = Scenario::new(
            s.chains().to_vec(),
            s.resources().clone(),
            s.costs().clone(),
            s.rewards().clone(),
            ActionSetSpec::CardinalityLimited(vec![2; 8]),
            s.rho(),
        )
        .unwrap();
        let p = DualParams::new(&capped, 10.0).unwrap();
        for h in 0..p.states().len() {
            assert_eq!(dual_state(0.0, h, &p).1.count(), 2);
        }
    }

    #[test]
    fn huge_gamma_stops_costly_preservice() {
        let s = presets::single_app(0.6, 0.2).unwrap();
        let p = DualParams::new(&s, 10.0).unwrap();
        for (h, t) in p.states().iter().enumerate() {
            let a = dual_state(1e9, h, &p).1;
            if t.apps[0].differential() > 0.0 {
                assert_eq!(a, AppMask::EMPTY);
            }
        }
    }

    #[test]
    fn gamma_zero_dual_value() {
        let s = presets::setting_a();
        let p = DualParams::new(&s, 7.0).unwrap();
        let best: f64 = p
            .states()
            .iter()
            .map(|t| t.state.prob * t.reward(AppMask(7)))
            .sum();
        assert!((dual(0.0, &p) - 7.0 * best).abs() < 1e-9);
    }

    #[test]
    fn slack_budget_gives_zero_multiplier() {
        let s = presets::setting_a().with_rho(5.0);
        let p = DualParams::new(&s, 100.0).unwrap();
        let min = minimize_dual(&p, 100.0 * 100f64.log10());
        assert_eq!(min.gamma, 0.0);
        assert!(!min.capped);
    }

    #[test]
    fn infeasible_budget_is_capped() {
        let s = presets::setting_a().with_rho(0.01);
        let p = DualParams::new(&s, 100.0).unwrap();
        let cap = 100.0 * 100f64.log10();
        let min = minimize_dual(&p, cap);
        assert!(min.capped);
        assert_eq!(min.gamma, cap);
        assert!(matches!(
            intelligence_bound(&s),
            Err(OracleError::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn minimiser_matches_grid_scan() {
        let s = presets::setting_a();
        let p = DualParams::new(&s, 100.0).unwrap();
        let min = minimize_dual(&p, 1e9);
        // Independent route: dense scan of the dual on a 1e-4 grid.
        let (mut best_g, mut best_v) = (0.0, f64::INFINITY);
        let mut g = 0.0;
        while g <= 400.0 {
            let v = dual(g, &p);
            if v < best_v {
                best_v = v;
                best_g = g;
            }
            g += 1e-4;
        }
        assert!((min.gamma - best_g).abs() < 1e-3, "{} vs {best_g}", min.gamma);
        assert!(min.value <= best_v + 1e-9);
    }

    #[test]
    fn one_mixing_state_and_budget_met() {
        let s = presets::setting_a();
        let sol = intelligence_bound(&s).unwrap();
        let mixing = sol.policy.iter().filter(|p| p.choices.len() > 1).count();
        assert!(mixing <= 1);
        assert!(sol.cost <= s.rho() + 1e-9);
        for sp in &sol.policy {
            let total: f64 = sp.choices.iter().map(|c| c.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(sp.choices.iter().all(|c| c.1 >= 0.0));
        }
    }

    #[test]
    fn strong_duality_on_preset() {
        let s = presets::setting_a();
        for v in [1.0, 10.0, 300.0] {
            let sol = intelligence_bound(&s).unwrap();
            let p = DualParams::new(&s, v).unwrap();
            let g = dual(minimize_dual(&p, f64::INFINITY).gamma, &p);
            assert!(v * sol.value <= g + 1e-6);
            assert!((v * sol.value - g).abs() < 1e-6 * v.max(1.0));
        }
    }
}
