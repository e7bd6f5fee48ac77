//! System primitives: two-state demand chains, resource states, costs,
//! rewards and feasible pre-service action sets.
//!
//! Every type here is immutable once built. Sampling takes a caller-owned
//! RNG so runs stay reproducible.

use rand::Rng;
use thiserror::Error;

/// Default cap on the number of enumerated joint states `2^M * K`.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// Largest number of applications an [`AppMask`] can hold.
pub const MAX_APPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("degenerate demand chain: epsilon + delta = 0 has no unique stationary split")]
    DegenerateChain,
    #[error("joint state space has {size} states, above the cap of {cap}")]
    StateSpaceTooLarge { size: u128, cap: usize },
    #[error("resource probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("reward ordering violated for app {app}: need r_pre >= r_cur >= 0, got ({r_pre}, {r_cur})")]
    RewardOrder { app: usize, r_pre: f64, r_cur: f64 },
    #[error("negative or non-finite unit cost {value} for app {app} in resource state {state}")]
    InvalidCost { app: usize, state: usize, value: f64 },
    #[error("too many applications: {0} (at most {MAX_APPS})")]
    TooManyApps(usize),
}

/// Fixed-width bit set over applications, used both for demand vectors
/// `A(t)` and for pre-service actions `mu(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct AppMask(pub u64);

impl AppMask {
    pub const EMPTY: AppMask = AppMask(0);

    pub fn full(num_apps: usize) -> Self {
        if num_apps >= 64 {
            AppMask(u64::MAX)
        } else {
            AppMask((1u64 << num_apps) - 1)
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut mask = 0u64;
        for (m, &b) in bits.iter().enumerate() {
            if b {
                mask |= 1 << m;
            }
        }
        AppMask(mask)
    }

    #[inline]
    pub fn get(self, m: usize) -> bool {
        self.0 >> m & 1 == 1
    }

    #[inline]
    pub fn with(self, m: usize, on: bool) -> Self {
        if on {
            AppMask(self.0 | 1 << m)
        } else {
            AppMask(self.0 & !(1 << m))
        }
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn to_bits(self, num_apps: usize) -> Vec<bool> {
        (0..num_apps).map(|m| self.get(m)).collect()
    }

    /// Renders app 0 first, e.g. `"101"`.
    pub fn to_bit_string(self, num_apps: usize) -> String {
        (0..num_apps)
            .map(|m| if self.get(m) { '1' } else { '0' })
            .collect()
    }
}

fn check_prob(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::InvalidProbability { name, value })
    }
}

/// Two-state ON/OFF demand chain for one application.
///
/// `epsilon` is the OFF→ON probability and `delta` the ON→OFF probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandChain {
    epsilon: f64,
    delta: f64,
}

impl DemandChain {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, ModelError> {
        Ok(Self {
            epsilon: check_prob("epsilon", epsilon)?,
            delta: check_prob("delta", delta)?,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Probability that the next slot is ON given the current bit.
    #[inline]
    pub fn transition_prob(&self, on: bool) -> f64 {
        if on {
            1.0 - self.delta
        } else {
            self.epsilon
        }
    }

    /// `(P[OFF], P[ON])` under the stationary distribution.
    pub fn steady_state(&self) -> Result<(f64, f64), ModelError> {
        let total = self.epsilon + self.delta;
        if total <= 0.0 {
            return Err(ModelError::DegenerateChain);
        }
        let on = self.epsilon / total;
        Ok((1.0 - on, on))
    }

    /// Entropy rate in bits per slot, with `0 log 0 = 0`.
    pub fn entropy_rate(&self) -> Result<f64, ModelError> {
        let (off, on) = self.steady_state()?;
        Ok(off * binary_entropy(self.epsilon) + on * binary_entropy(self.delta))
    }

    /// Draws the initial bit from the stationary distribution. A degenerate
    /// chain starts OFF.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let on = self.steady_state().map(|(_, on)| on).unwrap_or(0.0);
        rng.gen::<f64>() < on
    }

    pub fn step<R: Rng + ?Sized>(&self, on: bool, rng: &mut R) -> bool {
        rng.gen::<f64>() < self.transition_prob(on)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Joint distribution over `K` resource states, each an `M`-vector of
/// per-application condition labels. Draws are i.i.d. across slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceModel {
    states: Vec<Vec<u32>>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ResourceModel {
    pub fn new(states: Vec<Vec<u32>>, probs: Vec<f64>) -> Result<Self, ModelError> {
        if states.is_empty() || states.len() != probs.len() {
            return Err(ModelError::Dimension(format!(
                "{} resource states but {} probabilities",
                states.len(),
                probs.len()
            )));
        }
        let width = states[0].len();
        if states.iter().any(|s| s.len() != width) {
            return Err(ModelError::Dimension(
                "resource states have differing lengths".into(),
            ));
        }
        for &p in &probs {
            check_prob("resource probability", p)?;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::ProbabilitySum { sum });
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            states,
            probs,
            cumulative,
        })
    }

    /// Product-form model built from independent per-application outcome
    /// lists `(label, probability)`. State index is mixed-radix with app 0
    /// as the most significant digit.
    pub fn product(per_app: &[Vec<(u32, f64)>]) -> Result<Self, ModelError> {
        if per_app.is_empty() || per_app.iter().any(|o| o.is_empty()) {
            return Err(ModelError::Dimension(
                "every application needs at least one resource outcome".into(),
            ));
        }
        for outcomes in per_app {
            let sum: f64 = outcomes.iter().map(|o| o.1).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::ProbabilitySum { sum });
            }
        }
        let mut states = vec![Vec::new()];
        let mut probs = vec![1.0];
        for outcomes in per_app {
            let mut next_states = Vec::with_capacity(states.len() * outcomes.len());
            let mut next_probs = Vec::with_capacity(states.len() * outcomes.len());
            for (s, p) in states.iter().zip(&probs) {
                for &(label, q) in outcomes {
                    let mut s = s.clone();
                    s.push(label);
                    next_states.push(s);
                    next_probs.push(p * q);
                }
            }
            states = next_states;
            probs = next_probs;
        }
        // Renormalise away rounding so the sum check stays tight.
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Self::new(states, probs)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_apps(&self) -> usize {
        self.states[0].len()
    }

    pub fn state(&self, k: usize) -> &[u32] {
        &self.states[k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.states.len() - 1)
    }
}

/// Unit cost table `C_m(1, s_k)`, stored `[k][m]`. `C_m(0, s_k) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    unit_cost: Vec<Vec<f64>>,
    c_max: f64,
}

impl CostModel {
    pub fn new(unit_cost: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let mut c_max = 0.0f64;
        for (k, row) in unit_cost.iter().enumerate() {
            for (m, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(ModelError::InvalidCost {
                        app: m,
                        state: k,
                        value: c,
                    });
                }
                c_max = c_max.max(c);
            }
        }
        Ok(Self { unit_cost, c_max })
    }

    /// Cost table derived from resource labels, e.g. `C_m(1, S) = S_m`.
    pub fn from_labels(
        resources: &ResourceModel,
        mut cost: impl FnMut(usize, u32) -> f64,
    ) -> Result<Self, ModelError> {
        let table = (0..resources.len())
            .map(|k| {
                resources
                    .state(k)
                    .iter()
                    .enumerate()
                    .map(|(m, &label)| cost(m, label))
                    .collect()
            })
            .collect();
        Self::new(table)
    }

    #[inline]
    pub fn unit(&self, m: usize, k: usize) -> f64 {
        self.unit_cost[k][m]
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    fn shape(&self) -> (usize, Option<usize>) {
        (self.unit_cost.len(), self.unit_cost.first().map(Vec::len))
    }
}

/// Rewards for pre-served (`r_pre`) and same-slot (`r_cur`) service.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    r_pre: Vec<f64>,
    r_cur: Vec<f64>,
}

impl RewardModel {
    pub fn new(r_pre: Vec<f64>, r_cur: Vec<f64>) -> Result<Self, ModelError> {
        if r_pre.len() != r_cur.len() {
            return Err(ModelError::Dimension(format!(
                "{} pre-service rewards but {} current rewards",
                r_pre.len(),
                r_cur.len()
            )));
        }
        for (m, (&p, &c)) in r_pre.iter().zip(&r_cur).enumerate() {
            if !(p.is_finite() && c.is_finite() && p >= c && c >= 0.0) {
                return Err(ModelError::RewardOrder {
                    app: m,
                    r_pre: p,
                    r_cur: c,
                });
            }
        }
        Ok(Self { r_pre, r_cur })
    }

    pub fn pre(&self, m: usize) -> f64 {
        self.r_pre[m]
    }

    pub fn cur(&self, m: usize) -> f64 {
        self.r_cur[m]
    }

    /// `r_mp - r_mc`.
    pub fn diff(&self, m: usize) -> f64 {
        self.r_pre[m] - self.r_cur[m]
    }

    /// `r_d = max_m (r_mp - r_mc)`.
    pub fn max_diff(&self) -> f64 {
        (0..self.r_pre.len())
            .map(|m| self.diff(m))
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.r_pre.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_pre.is_empty()
    }
}

/// Feasible pre-service sets `U_{s_k}`. Both variants are down-closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionSetSpec {
    Unconstrained,
    /// At most `caps[k]` applications may be pre-served in resource state `k`.
    CardinalityLimited(Vec<usize>),
}

impl ActionSetSpec {
    pub fn cap(&self, k: usize) -> Option<usize> {
        match self {
            ActionSetSpec::Unconstrained => None,
            ActionSetSpec::CardinalityLimited(caps) => Some(caps[k]),
        }
    }

    pub fn is_feasible(&self, k: usize, action: AppMask) -> bool {
        self.cap(k).is_none_or(|cap| action.count() <= cap)
    }

    /// Maximum-weight feasible action in state `k`: every application with a
    /// positive weight, or a zero weight when `zero_ok(m)`, keeping the
    /// largest weights (lowest index on ties) when a cap applies.
    pub fn max_weight_action(
        &self,
        k: usize,
        weights: &[f64],
        zero_ok: impl Fn(usize) -> bool,
    ) -> AppMask {
        let mut picked: Vec<usize> = (0..weights.len())
            .filter(|&m| weights[m] > 0.0 || (weights[m] == 0.0 && zero_ok(m)))
            .collect();
        if let Some(cap) = self.cap(k) {
            if picked.len() > cap {
                picked.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]).then(x.cmp(&y)));
                picked.truncate(cap);
            }
        }
        picked
            .into_iter()
            .fold(AppMask::EMPTY, |mask, m| mask.with(m, true))
    }

    /// Every feasible action in state `k`, in increasing mask order.
    pub fn feasible_actions(&self, k: usize, num_apps: usize) -> Vec<AppMask> {
        assert!(num_apps < 32, "explicit action enumeration needs M < 32");
        (0..1u64 << num_apps)
            .map(AppMask)
            .filter(|&a| self.is_feasible(k, a))
            .collect()
    }
}

/// One state `z_h = (A, S)` of the joint demand/resource chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub demand: AppMask,
    pub resource_index: usize,
    pub prob: f64,
}

/// A full system instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    chains: Vec<DemandChain>,
    resources: ResourceModel,
    costs: CostModel,
    rewards: RewardModel,
    actions: ActionSetSpec,
    rho: f64,
    mean_costs: Vec<f64>,
}

impl Scenario {
    pub fn new(
        chains: Vec<DemandChain>,
        resources: ResourceModel,
        costs: CostModel,
        rewards: RewardModel,
        actions: ActionSetSpec,
        rho: f64,
    ) -> Result<Self, ModelError> {
        let m = chains.len();
        if m == 0 {
            return Err(ModelError::Dimension("no applications".into()));
        }
        if m > MAX_APPS {
            return Err(ModelError::TooManyApps(m));
        }
        if resources.num_apps() != m {
            return Err(ModelError::Dimension(format!(
                "{m} chains but resource states describe {} apps",
                resources.num_apps()
            )));
        }
        if costs.shape() != (resources.len(), Some(m)) {
            return Err(ModelError::Dimension(format!(
                "cost table must be {} x {m}",
                resources.len()
            )));
        }
        if rewards.len() != m {
            return Err(ModelError::Dimension(format!(
                "{m} chains but {} rewards",
                rewards.len()
            )));
        }
        if let ActionSetSpec::CardinalityLimited(caps) = &actions {
            if caps.len() != resources.len() {
                return Err(ModelError::Dimension(format!(
                    "{} cardinality caps for {} resource states",
                    caps.len(),
                    resources.len()
                )));
            }
        }
        if !rho.is_finite() {
            return Err(ModelError::Dimension(format!("budget rate {rho} is not finite")));
        }
        let mean_costs = (0..m)
            .map(|app| {
                (0..resources.len())
                    .map(|k| resources.prob(k) * costs.unit(app, k))
                    .sum()
            })
            .collect();
        let scenario = Self {
            chains,
            resources,
            costs,
            rewards,
            actions,
            rho,
            mean_costs,
        };
        for warning in scenario.budget_warnings() {
            log::warn!("{warning}");
        }
        Ok(scenario)
    }

    /// Same system with a different budget rate.
    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    /// Same system with different demand rates.
    pub fn with_chains(&self, chains: Vec<DemandChain>) -> Result<Self, ModelError> {
        Self::new(
            chains,
            self.resources.clone(),
            self.costs.clone(),
            self.rewards.clone(),
            self.actions.clone(),
            self.rho,
        )
    }

    /// Human-readable notes when `rho` falls outside `(0, rho_max]`.
    pub fn budget_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rho <= 0.0 {
            out.push(format!("budget rate rho = {} is not positive", self.rho));
        }
        let rho_max = self.rho_max();
        if self.rho > rho_max {
            out.push(format!(
                "budget rate rho = {} exceeds rho_max = {rho_max}; the budget never binds",
                self.rho
            ));
        }
        out
    }

    pub fn num_apps(&self) -> usize {
        self.chains.len()
    }

    pub fn chains(&self) -> &[DemandChain] {
        &self.chains
    }

    pub fn chain(&self, m: usize) -> &DemandChain {
        &self.chains[m]
    }

    pub fn resources(&self) -> &ResourceModel {
        &self.resources
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn rewards(&self) -> &RewardModel {
        &self.rewards
    }

    pub fn actions(&self) -> &ActionSetSpec {
        &self.actions
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `C̄_m = Σ_k π_k C_m(1, s_k)`.
    pub fn mean_unit_cost(&self, m: usize) -> f64 {
        self.mean_costs[m]
    }

    /// Budget needed to pre-serve everything: `Σ_k π_k Σ_m C_m(1, s_k)`.
    pub fn rho_max(&self) -> f64 {
        (0..self.resources.len())
            .map(|k| {
                let row: f64 = (0..self.num_apps()).map(|m| self.costs.unit(m, k)).sum();
                self.resources.prob(k) * row
            })
            .sum()
    }

    pub fn joint_state_count(&self) -> u128 {
        (1u128 << self.num_apps()) * self.resources.len() as u128
    }

    pub fn enumerate_joint_states(&self, cap: usize) -> Result<Vec<JointState>, ModelError> {
        enumerate_joint_states_with(&self.chains, &self.resources, cap)
    }
}

/// Enumerates `(A, S)` with product-form stationary probabilities computed
/// from `chains`. Order: demand mask outer, resource index inner.
pub fn enumerate_joint_states_with(
    chains: &[DemandChain],
    resources: &ResourceModel,
    cap: usize,
) -> Result<Vec<JointState>, ModelError> {
    let m = chains.len();
    let size = if m >= 64 {
        u128::MAX
    } else {
        (1u128 << m) * resources.len() as u128
    };
    if size > cap as u128 {
        return Err(ModelError::StateSpaceTooLarge { size, cap });
    }
    let stationary = chains
        .iter()
        .map(DemandChain::steady_state)
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(size as usize);
    for mask in 0..1u64 << m {
        let demand = AppMask(mask);
        let p_demand: f64 = stationary
            .iter()
            .enumerate()
            .map(|(app, &(off, on))| if demand.get(app) { on } else { off })
            .product();
        for k in 0..resources.len() {
            out.push(JointState {
                demand,
                resource_index: k,
                prob: p_demand * resources.prob(k),
            });
        }
    }
    Ok(out)
}
