//! Slot-by-slot simulation of a policy against a scenario.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::control::{diagnostics, ControllerState, Phase};
use crate::learning::{
    dual_learning, generate_stream, mle_estimate, Estimates, LearnedMultiplier, LearningError,
    StreamMode,
};
use crate::model::{AppMask, DemandChain, Scenario};

/// Rate used for every estimate before the learning window closes, and as
/// the fallback for rates the stream never exercised.
pub const PRIOR_RATE: f64 = 0.5;

/// Width of the window used by [`sliding_convergence_time`].
pub const CONVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("trace of {len} slots is too short: need more than {needed}")]
    InsufficientHorizon { len: usize, needed: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Learning(#[from] LearningError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Drift-plus-penalty control with the true demand rates.
    Bisc,
    /// Pre-serve everything for `learning_slots`, estimate the rates from
    /// `population * learning_slots` samples, then control with the
    /// learned multiplier as a queue offset.
    Lbisc {
        learning_slots: usize,
        population: usize,
        stream: StreamMode,
    },
    AlwaysPreserve,
    NeverPreserve,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Bisc => "BISC",
            Policy::Lbisc { .. } => "LBISC",
            Policy::AlwaysPreserve => "AlwaysPreserve",
            Policy::NeverPreserve => "NeverPreserve",
        }
    }

    pub fn learning_slots(&self) -> usize {
        match self {
            Policy::Lbisc { learning_slots, .. } => *learning_slots,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub demand: AppMask,
    pub resource: usize,
    /// `μ_mp(t)`.
    pub action: AppMask,
    /// `μ_mc(t) = A(t) & !μ_mp(t-1)`.
    pub current: AppMask,
    pub reward: f64,
    pub cost: f64,
    pub eff_cost: f64,
    /// `d(t)` at decision time.
    pub deficit: f64,
    /// `d̃(t)` at decision time.
    pub eff_queue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<SlotRecord>,
    pub seed: u64,
    pub horizon: usize,
    pub num_apps: usize,
    pub policy: Policy,
    pub v: f64,
    /// Set for LBISC once learning finishes inside the horizon.
    pub learned: Option<LearnedMultiplier>,
    /// Rates used by the controller after learning (the true rates for BISC).
    pub estimates: Vec<DemandChain>,
    /// Deterministic ceiling on `d̃(t)` for the control phase.
    pub d_max_bound: f64,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the first control-phase slot.
    pub fn control_start(&self) -> usize {
        self.policy.learning_slots().min(self.records.len())
    }

    pub fn eff_queue(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eff_queue).collect()
    }

    pub fn deficit(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.deficit).collect()
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Resource,
    Learning,
    Demand(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Resource => 0,
            Stream::Learning => 1,
            Stream::Demand(m) => 2 + m as u64,
        }
    }
}

/// Independent random stream `which` derived from the master seed.
fn stream_rng(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

fn prior_chains(n: usize) -> Vec<DemandChain> {
    vec![DemandChain::new(PRIOR_RATE, PRIOR_RATE).expect("prior rate is valid"); n]
}

/// Simulates `horizon` slots. Identical arguments give identical traces.
pub fn run(
    scenario: &Scenario,
    policy: &Policy,
    v: f64,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace, SimError> {
    let m_apps = scenario.num_apps();
    let mut resource_rng = stream_rng(seed, Stream::Resource);
    let mut demand_rngs: Vec<ChaCha8Rng> = (0..m_apps)
        .map(|m| stream_rng(seed, Stream::Demand(m)))
        .collect();

    let mut ctl = ControllerState::bisc(scenario, v);
    let learning_slots = policy.learning_slots();
    if learning_slots > 0 {
        ctl.phase = Phase::Estimation;
        ctl.estimates = prior_chains(m_apps);
    }
    let mut learned = None;
    let mut d_max_bound = diagnostics(&ctl, scenario).d_max_bound;

    let mut demand = (0..m_apps).fold(AppMask::EMPTY, |a, m| {
        a.with(m, scenario.chain(m).sample_initial(&mut demand_rngs[m]))
    });
    let mut prev_action = AppMask::EMPTY;
    let mut records = Vec::with_capacity(horizon);

    for t in 0..horizon {
        if t == learning_slots && learning_slots > 0 {
            let Policy::Lbisc {
                population, stream, ..
            } = policy
            else {
                unreachable!("only LBISC has a learning phase")
            };
            let mut rng = stream_rng(seed, Stream::Learning);
            let samples = generate_stream(scenario, *population, learning_slots, *stream, &mut rng);
            let est: Estimates = mle_estimate(&samples)?.with_fallback(PRIOR_RATE);
            let mult = dual_learning(&est, scenario, v)?;
            ctl.estimates = est.chains()?;
            ctl.offset = mult.offset();
            ctl.deficit = 0.0;
            ctl.phase = Phase::Control;
            d_max_bound = diagnostics(&ctl, scenario).d_max_bound;
            learned = Some(mult);
        }

        let k = scenario.resources().sample(&mut resource_rng);
        let action = match policy {
            Policy::Bisc | Policy::Lbisc { .. } => ctl.decide(demand, k, scenario),
            Policy::AlwaysPreserve => {
                crate::control::estimation_action(scenario, scenario.chains(), demand, k)
            }
            Policy::NeverPreserve => AppMask::EMPTY,
        };
        let current = AppMask(demand.0 & !prev_action.0);

        let mut reward = 0.0;
        let mut cost = 0.0;
        for m in 0..m_apps {
            if demand.get(m) {
                reward += if prev_action.get(m) {
                    scenario.rewards().pre(m)
                } else {
                    scenario.rewards().cur(m)
                };
            }
            let unit = scenario.costs().unit(m, k);
            cost += unit * (current.get(m) as u8 + action.get(m) as u8) as f64;
        }
        let eff_cost = ctl.effective_cost_total(demand, action, k, scenario);

        records.push(SlotRecord {
            demand,
            resource: k,
            action,
            current,
            reward,
            cost,
            eff_cost,
            deficit: ctl.deficit,
            eff_queue: ctl.effective_queue(),
        });

        ctl.update(eff_cost, scenario.rho());
        prev_action = action;
        demand = (0..m_apps).fold(AppMask::EMPTY, |a, m| {
            a.with(m, scenario.chain(m).step(demand.get(m), &mut demand_rngs[m]))
        });
    }

    Ok(RunTrace {
        records,
        seed,
        horizon,
        num_apps: m_apps,
        policy: policy.clone(),
        v,
        learned,
        estimates: ctl.estimates,
        d_max_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub r_av: f64,
    pub c_av: f64,
    pub d_bar: f64,
    /// Filled by [`Metrics::with_convergence`].
    pub t_conv: Option<usize>,
    pub d_tilde_max_observed: f64,
}

impl Metrics {
    /// Adds the sliding-window convergence time against `gamma_star`.
    pub fn with_convergence(mut self, trace: &RunTrace, gamma_star: f64, zeta: f64) -> Self {
        self.t_conv = sliding_convergence_time(&trace.eff_queue(), gamma_star, zeta);
        self
    }
}

/// Time averages over the control phase, or over every slot when
/// `include_learning` is set.
pub fn time_averages(trace: &RunTrace, include_learning: bool) -> Metrics {
    let start = if include_learning {
        0
    } else {
        trace.control_start()
    };
    let slots = &trace.records[start..];
    if slots.is_empty() {
        return Metrics::default();
    }
    let n = slots.len() as f64;
    let mean = |f: fn(&SlotRecord) -> f64| slots.iter().map(f).sum::<f64>() / n;
    Metrics {
        r_av: mean(|r| r.reward),
        c_av: mean(|r| r.cost),
        d_bar: mean(|r| r.deficit),
        t_conv: None,
        d_tilde_max_observed: slots.iter().map(|r| r.eff_queue).fold(0.0, f64::max),
    }
}

/// First slot with `|d̃(t) - γ*| <= ζ`.
pub fn convergence_time(eff_queue: &[f64], gamma_star: f64, zeta: f64) -> Option<usize> {
    eff_queue
        .iter()
        .position(|&q| (q - gamma_star).abs() <= zeta)
}

/// First slot from which [`CONVERGENCE_WINDOW`] consecutive values of `d̃`
/// all lie within `ζ` of `γ*`.
pub fn sliding_convergence_time(eff_queue: &[f64], gamma_star: f64, zeta: f64) -> Option<usize> {
    let mut run = 0;
    for (t, &q) in eff_queue.iter().enumerate() {
        if (q - gamma_star).abs() <= zeta {
            run += 1;
            if run == CONVERGENCE_WINDOW {
                return Some(t + 1 - CONVERGENCE_WINDOW);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Mean of `d(t)` over the final third of the trace. The trace must cover
/// more than twice `t_conv` slots.
pub fn deficit_steady_level(deficit: &[f64], t_conv: usize) -> Result<f64, SimError> {
    if deficit.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    if deficit.len() <= 2 * t_conv {
        return Err(SimError::InsufficientHorizon {
            len: deficit.len(),
            needed: 2 * t_conv,
        });
    }
    let tail = &deficit[deficit.len() - (deficit.len() / 3).max(1)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

pub const TRACE_HEADER: &str = "t,deficit,eff_queue,reward,cost,eff_cost,action_bits";

pub fn write_trace_csv<W: Write>(trace: &RunTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for (t, r) in trace.records.iter().enumerate() {
        writeln!(
            out,
            "{t},{},{},{},{},{},{}",
            r.deficit,
            r.eff_queue,
            r.reward,
            r.cost,
            r.eff_cost,
            r.action.to_bit_string(trace.num_apps)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn trace_with(queue: &[f64]) -> Vec<f64> {
        queue.to_vec()
    }

    #[test]
    fn deterministic() {
        let s = presets::setting_a();
        let p = Policy::Lbisc {
            learning_slots: 10,
            population: 4,
            stream: StreamMode::Single,
        };
        let a = run(&s, &p, 20.0, 2000, 9).unwrap();
        let b = run(&s, &p, 20.0, 2000, 9).unwrap();
        assert_eq!(a, b);
        let c = run(&s, &p, 20.0, 2000, 10).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn common_random_numbers_across_policies() {
        let s = presets::setting_a();
        let a = run(&s, &Policy::Bisc, 10.0, 500, 3).unwrap();
        let b = run(&s, &Policy::NeverPreserve, 10.0, 500, 3).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.demand, y.demand);
            assert_eq!(x.resource, y.resource);
        }
    }

    #[test]
    fn current_service_follows_previous_action() {
        let s = presets::setting_a();
        let tr = run(&s, &Policy::Bisc, 10.0, 3000, 1).unwrap();
        let mut prev = AppMask::EMPTY;
        for r in &tr.records {
            assert_eq!(r.current.0, r.demand.0 & !prev.0);
            prev = r.action;
        }
        let tr = run(&s, &Policy::AlwaysPreserve, 10.0, 100, 1).unwrap();
        assert!(tr.records[1..].iter().all(|r| r.current == AppMask::EMPTY));
        assert_eq!(tr.records[0].current, tr.records[0].demand);
    }

    #[test]
    fn reward_case_split() {
        let s = presets::setting_a();
        let tr = run(&s, &Policy::Bisc, 10.0, 3000, 4).unwrap();
        let mut prev = AppMask::EMPTY;
        for r in &tr.records {
            let expected: f64 = (0..3)
                .filter(|&m| r.demand.get(m))
                .map(|m| {
                    if prev.get(m) {
                        s.rewards().pre(m)
                    } else {
                        s.rewards().cur(m)
                    }
                })
                .sum();
            assert_eq!(r.reward, expected);
            prev = r.action;
        }
    }

    #[test]
    fn lbisc_phases() {
        let s = presets::setting_a();
        let p = Policy::Lbisc {
            learning_slots: 30,
            population: 8,
            stream: StreamMode::Single,
        };
        let tr = run(&s, &p, 100.0, 200, 2).unwrap();
        assert!(tr.records[..30].iter().all(|r| r.action == AppMask(7)));
        assert_eq!(tr.records[30].deficit, 0.0);
        let learned = tr.learned.unwrap();
        assert_eq!(tr.records[30].eff_queue, learned.offset());
        assert_eq!(tr.control_start(), 30);
    }

    #[test]
    fn slack_budget_preserves_everything() {
        let s = presets::setting_a().with_rho(5.0);
        let tr = run(&s, &Policy::Bisc, 50.0, 2000, 5).unwrap();
        assert!(tr.records.iter().all(|r| r.action == AppMask(7)));
    }

    #[test]
    fn never_preserve_reward_rate() {
        let s = presets::setting_a();
        let expected: f64 = s
            .chains()
            .iter()
            .enumerate()
            .map(|(m, c)| c.steady_state().unwrap().1 * s.rewards().cur(m))
            .sum();
        let tr = run(&s, &Policy::NeverPreserve, 1.0, 200_000, 6).unwrap();
        let m = time_averages(&tr, true);
        // Reward per slot is a sum of three bounded indicators; 3 s.e. with
        // a generous autocorrelation allowance.
        assert!((m.r_av - expected).abs() < 0.02, "{} vs {expected}", m.r_av);
    }

    #[test]
    fn averages_of_trivial_traces() {
        let s = presets::setting_a();
        let mut tr = run(&s, &Policy::NeverPreserve, 1.0, 10, 0).unwrap();
        for r in &mut tr.records {
            r.reward = 2.5;
            r.cost = 0.0;
            r.deficit = 0.0;
            r.eff_queue = 0.0;
        }
        let m = time_averages(&tr, true);
        assert_eq!(m.r_av, 2.5);
        assert_eq!(m.c_av, 0.0);
        assert_eq!(m.d_bar, 0.0);
        assert_eq!(m.d_tilde_max_observed, 0.0);
    }

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_time(&[5.0, 9.0], 5.5, 1.0), Some(0));
        let ramp: Vec<f64> = (0..100).map(|t| t as f64).collect();
        assert_eq!(convergence_time(&ramp, 60.0, 5.0), Some(55));
        assert_eq!(convergence_time(&ramp, 500.0, 5.0), None);
        let q = trace_with(&[10.0; 60]);
        assert_eq!(sliding_convergence_time(&q, 10.0, 1.0), Some(0));
        let mut q = vec![0.0; 10];
        q.extend([10.0; 30]);
        q.push(0.0);
        q.extend([10.0; 50]);
        assert_eq!(sliding_convergence_time(&q, 10.0, 1.0), Some(41));
        assert_eq!(sliding_convergence_time(&q[..60], 10.0, 1.0), None);
    }

    #[test]
    fn steady_level() {
        assert_eq!(deficit_steady_level(&[4.0; 30], 5).unwrap(), 4.0);
        let ramp: Vec<f64> = (0..9).map(f64::from).collect();
        assert_eq!(deficit_steady_level(&ramp, 0).unwrap(), 7.0);
        assert!(matches!(
            deficit_steady_level(&[1.0; 10], 5),
            Err(SimError::InsufficientHorizon { .. })
        ));
    }

    #[test]
    fn zero_cost_scenario_has_no_deficit() {
        let s = presets::setting_a();
        let free = crate::model::Scenario::new(
            s.chains().to_vec(),
            s.resources().clone(),
            crate::model::CostModel::new(vec![vec![0.0; 3]; 8]).unwrap(),
            s.rewards().clone(),
            s.actions().clone(),
            1.0,
        )
        .unwrap();
        let tr = run(&free, &Policy::Bisc, 10.0, 600, 1).unwrap();
        assert_eq!(deficit_steady_level(&tr.deficit(), 0).unwrap(), 0.0);
    }

    #[test]
    fn trace_csv_format() {
        let s = presets::setting_a();
        let tr = run(&s, &Policy::AlwaysPreserve, 1.0, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,0,"));
        assert!(lines[1].ends_with(",111"));
        assert!(!text.contains('\r'));
    }
}
