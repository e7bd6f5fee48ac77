//! Learning demand statistics from sample streams and turning them into an
//! empirical Lagrange multiplier.

use rand::Rng;
use thiserror::Error;

use crate::model::{DemandChain, ModelError, Scenario, DEFAULT_STATE_CAP};
use crate::oracle::{minimize_dual, DualParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("no visits to the {state} state of app {app}; its {rate} estimate is undefined")]
    UndefinedEstimate {
        app: usize,
        rate: &'static str,
        state: &'static str,
    },
    #[error("sample stream is empty")]
    EmptyStream,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Logarithm used in the tuning rules `θ` and the multiplier cap `V log V`.
///
/// Base 10. With the natural logarithm `θ` exceeds `γ*` on the
/// three-application presets at `V = 300`, which leaves the effective-queue
/// offset at zero.
pub fn log_v(v: f64) -> f64 {
    v.log10()
}

/// Fallback cap for an unbounded empirical multiplier: `V log V`.
pub fn gamma_cap(v: f64) -> f64 {
    v * log_v(v)
}

/// `θ = max(V log(V)² / √N(T), log(V)²)`.
pub fn theta(v: f64, samples: usize) -> f64 {
    let l2 = log_v(v).powi(2);
    (v * l2 / (samples as f64).sqrt()).max(l2)
}

/// Learning horizon rule `T = ⌈V^{2/3}⌉`.
pub fn default_learning_slots(v: f64) -> usize {
    (v.powf(2.0 / 3.0) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamMode {
    /// One contiguous trajectory of length `f T` per application.
    #[default]
    Single,
    /// `f` independent trajectories of length `T` per application.
    Independent,
}

/// Demand samples collected over a learning window of `horizon` slots from
/// `population` similar users.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    /// `segments[m]` holds the trajectories for app `m`; transitions are
    /// only counted within a segment.
    pub segments: Vec<Vec<Vec<bool>>>,
    pub horizon: usize,
    pub population: usize,
}

impl SampleStream {
    /// `N(T) = f T`.
    pub fn len(&self) -> usize {
        self.population * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `N(T) = f T` samples per application, each trajectory starting from
/// a stationary-sampled state.
pub fn generate_stream<R: Rng + ?Sized>(
    scenario: &Scenario,
    population: usize,
    horizon: usize,
    mode: StreamMode,
    rng: &mut R,
) -> SampleStream {
    let population = population.max(1);
    let horizon = horizon.max(1);
    let (count, len) = match mode {
        StreamMode::Single => (1, population * horizon),
        StreamMode::Independent => (population, horizon),
    };
    let segments = scenario
        .chains()
        .iter()
        .map(|chain| {
            (0..count)
                .map(|_| {
                    let mut on = chain.sample_initial(rng);
                    let mut seq = Vec::with_capacity(len);
                    for _ in 0..len {
                        seq.push(on);
                        on = chain.step(on, rng);
                    }
                    seq
                })
                .collect()
        })
        .collect();
    SampleStream {
        segments,
        horizon,
        population,
    }
}

/// Visit and transition counts over consecutive sample pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TransitionCounts {
    pub off: usize,
    pub off_to_on: usize,
    pub on: usize,
    pub on_to_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// `None` when the OFF state was never left-observed.
    pub eps_hat: Vec<Option<f64>>,
    /// `None` when the ON state was never left-observed.
    pub delta_hat: Vec<Option<f64>>,
    pub counts: Vec<TransitionCounts>,
    /// `N(T)` behind these estimates.
    pub samples: usize,
}

impl Estimates {
    /// Estimates equal to the true rates, as if learned from `samples`.
    pub fn exact(scenario: &Scenario, samples: usize) -> Self {
        Self {
            eps_hat: scenario.chains().iter().map(|c| Some(c.epsilon())).collect(),
            delta_hat: scenario.chains().iter().map(|c| Some(c.delta())).collect(),
            counts: vec![TransitionCounts::default(); scenario.num_apps()],
            samples,
        }
    }

    /// Estimated chains, failing on the first undefined rate.
    pub fn chains(&self) -> Result<Vec<DemandChain>, LearningError> {
        self.eps_hat
            .iter()
            .zip(&self.delta_hat)
            .enumerate()
            .map(|(m, (e, d))| {
                let e = e.ok_or(LearningError::UndefinedEstimate {
                    app: m,
                    rate: "epsilon",
                    state: "OFF",
                })?;
                let d = d.ok_or(LearningError::UndefinedEstimate {
                    app: m,
                    rate: "delta",
                    state: "ON",
                })?;
                Ok(DemandChain::new(e, d)?)
            })
            .collect()
    }

    /// Replaces undefined rates with `prior`, logging a warning for each.
    pub fn with_fallback(&self, prior: f64) -> Self {
        let fill = |v: &[Option<f64>], name: &str| -> Vec<Option<f64>> {
            v.iter()
                .enumerate()
                .map(|(m, x)| {
                    x.or_else(|| {
                        log::warn!("app {m}: {name} estimate undefined, using prior {prior}");
                        Some(prior)
                    })
                })
                .collect()
        };
        Self {
            eps_hat: fill(&self.eps_hat, "epsilon"),
            delta_hat: fill(&self.delta_hat, "delta"),
            counts: self.counts.clone(),
            samples: self.samples,
        }
    }

    /// Implied joint-state distribution `π̂` (estimated demand split times the
    /// known resource probabilities), in the order of
    /// [`Scenario::enumerate_joint_states`].
    pub fn pi_hat(&self, scenario: &Scenario) -> Result<Vec<f64>, LearningError> {
        let chains = self.chains()?;
        Ok(crate::model::enumerate_joint_states_with(
            &chains,
            scenario.resources(),
            DEFAULT_STATE_CAP,
        )?
        .into_iter()
        .map(|s| s.prob)
        .collect())
    }
}

/// Empirical transition frequencies over every consecutive sample pair.
pub fn mle_estimate(stream: &SampleStream) -> Result<Estimates, LearningError> {
    if stream.segments.iter().all(|s| s.iter().all(Vec::is_empty)) {
        return Err(LearningError::EmptyStream);
    }
    let counts: Vec<TransitionCounts> = stream
        .segments
        .iter()
        .map(|segs| {
            let mut c = TransitionCounts::default();
            for seq in segs {
                for pair in seq.windows(2) {
                    match (pair[0], pair[1]) {
                        (false, next) => {
                            c.off += 1;
                            c.off_to_on += next as usize;
                        }
                        (true, next) => {
                            c.on += 1;
                            c.on_to_off += !next as usize;
                        }
                    }
                }
            }
            c
        })
        .collect();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(Estimates {
        eps_hat: counts.iter().map(|c| ratio(c.off_to_on, c.off)).collect(),
        delta_hat: counts.iter().map(|c| ratio(c.on_to_off, c.on)).collect(),
        counts,
        samples: stream.len(),
    })
}

/// `max_m max(|ε̂_m - ε_m|, |δ̂_m - δ_m|)`.
pub fn estimation_error(est: &Estimates, scenario: &Scenario) -> Result<f64, LearningError> {
    let chains = est.chains()?;
    Ok(chains
        .iter()
        .zip(scenario.chains())
        .map(|(h, t)| (h.epsilon() - t.epsilon()).abs().max((h.delta() - t.delta()).abs()))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnedMultiplier {
    pub gamma_t: f64,
    pub capped: bool,
    pub theta: f64,
}

impl LearnedMultiplier {
    /// `(γ*_T - θ)⁺`.
    pub fn offset(&self) -> f64 {
        (self.gamma_t - self.theta).max(0.0)
    }
}

/// Minimises the empirical dual built from the estimates.
pub fn dual_learning(
    est: &Estimates,
    scenario: &Scenario,
    v: f64,
) -> Result<LearnedMultiplier, LearningError> {
    let chains = est.chains()?;
    let params = DualParams::with_chains(scenario, &chains, v, DEFAULT_STATE_CAP)?;
    let min = minimize_dual(&params, gamma_cap(v));
    Ok(LearnedMultiplier {
        gamma_t: min.gamma,
        capped: min.capped,
        theta: theta(v, est.samples.max(1)),
    })
}
