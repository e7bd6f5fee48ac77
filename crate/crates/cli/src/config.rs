//! Experiment configuration files.
//!
//! ```toml
//! [scenario]
//! preset = "paper-setting-A"   # or an inline description, or `file = "..."`
//! rho = 3.5                    # optional budget override
//!
//! [experiment]
//! policies = ["BISC", "LBISC"]
//! v = [5, 10, 20, 50, 100]
//! f = [8]
//! horizon = 100000
//! seeds = 10
//! seed = 1
//! learning_t = "v^(2/3)"       # or a fixed slot count
//! zeta = "d1"                  # or a positive number
//! stream = "single"            # or "independent"
//! include_learning = false
//! rho = [0.5, 1.0, 1.5]        # only used by `bound`
//! ```
//!
//! An inline scenario lists per-application `epsilon`, `delta`, `r_pre`,
//! `r_cur`, a `rho`, and `resources`: for each application a list of
//! `[cost, probability]` outcomes. Resource states are the product of these
//! outcomes with the first application varying slowest. An optional `caps`
//! list bounds how many applications may be pre-served in each joint state.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sysintel::learning::{default_learning_slots, log_v, StreamMode};
use sysintel::model::{
    ActionSetSpec, CostModel, DemandChain, ModelError, ResourceModel, RewardModel, Scenario,
};
use sysintel::presets;

pub const DEFAULT_HORIZON: usize = 100_000;
pub const DEFAULT_SEEDS: usize = 10;
pub const DEFAULT_MASTER_SEED: u64 = 1;

/// Constant `c` in the `ζ = c V log V / √N(T) + M C_max` rule.
pub const D1_CONSTANT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Offending key, dotted from the table root.
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }

    fn at(mut self, text: &str) -> Self {
        if self.line.is_none() {
            if let Some(key) = &self.key {
                self.line = find_key_line(text, key);
            }
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Line (1-based) of `key = ...` inside the table named by the key prefix.
fn find_key_line(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (Some(t), k),
        None => (None, dotted),
    };
    let mut in_table = table.is_none();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            let name = trimmed.trim_matches(|c| c == '[' || c == ']').trim();
            in_table = table == Some(name);
            continue;
        }
        if in_table {
            if let Some((lhs, _)) = trimmed.split_once('=') {
                if lhs.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    table.and_then(|t| {
        text.lines()
            .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']').trim() == t)
            .map(|i| i + 1)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Bisc,
    Lbisc,
    AlwaysPreserve,
    NeverPreserve,
}

impl PolicyKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bisc" => Some(Self::Bisc),
            "lbisc" => Some(Self::Lbisc),
            "alwayspreserve" => Some(Self::AlwaysPreserve),
            "neverpreserve" => Some(Self::NeverPreserve),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bisc => "BISC",
            Self::Lbisc => "LBISC",
            Self::AlwaysPreserve => "AlwaysPreserve",
            Self::NeverPreserve => "NeverPreserve",
        }
    }

    pub fn learns(self) -> bool {
        self == Self::Lbisc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRule {
    Fixed(usize),
    /// `T = ⌈V^{2/3}⌉`.
    TwoThirds,
}

impl LearningRule {
    pub fn slots(self, v: f64) -> usize {
        match self {
            Self::Fixed(t) => t,
            Self::TwoThirds => default_learning_slots(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZetaRule {
    Fixed(f64),
    /// `c V log V / √(f_ref T) + M C_max`, with `f_ref` the largest `f` in
    /// the experiment so every cell at a given `V` shares one tolerance.
    D1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub scenario_name: String,
    pub policies: Vec<PolicyKind>,
    pub v_list: Vec<f64>,
    pub f_list: Vec<usize>,
    pub rho_list: Vec<f64>,
    pub horizon: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub learning: LearningRule,
    pub zeta: ZetaRule,
    pub stream: StreamMode,
    pub include_learning: bool,
}

impl ExperimentConfig {
    /// Defaults around a scenario, for programmatic use.
    pub fn new(scenario: Scenario, name: &str, policies: Vec<PolicyKind>, v_list: Vec<f64>) -> Self {
        Self {
            scenario,
            scenario_name: name.to_string(),
            policies,
            v_list,
            f_list: vec![1],
            rho_list: Vec::new(),
            horizon: DEFAULT_HORIZON,
            seeds: DEFAULT_SEEDS,
            master_seed: DEFAULT_MASTER_SEED,
            learning: LearningRule::TwoThirds,
            zeta: ZetaRule::D1,
            stream: StreamMode::Single,
            include_learning: false,
        }
    }

    /// Convergence tolerance at `v`.
    pub fn zeta(&self, v: f64) -> f64 {
        match self.zeta {
            ZetaRule::Fixed(z) => z,
            ZetaRule::D1 => {
                let f_ref = self.f_list.iter().copied().max().unwrap_or(1);
                d1_tolerance(&self.scenario, v, f_ref * self.learning.slots(v).max(1))
            }
        }
    }
}

/// `c V log V / √N + M C_max`.
pub fn d1_tolerance(scenario: &Scenario, v: f64, samples: usize) -> f64 {
    D1_CONSTANT * v * log_v(v) / (samples as f64).sqrt()
        + scenario.num_apps() as f64 * scenario.costs().c_max()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    file: Option<String>,
    epsilon: Option<Vec<f64>>,
    delta: Option<Vec<f64>>,
    r_pre: Option<Vec<f64>>,
    r_cur: Option<Vec<f64>>,
    resources: Option<Vec<Vec<[f64; 2]>>>,
    caps: Option<Vec<usize>>,
    rho: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NumberOrName<T> {
    Number(T),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    policies: Vec<String>,
    v: Vec<f64>,
    f: Option<Vec<usize>>,
    rho: Option<Vec<f64>>,
    horizon: Option<usize>,
    seeds: Option<usize>,
    seed: Option<u64>,
    learning_t: Option<NumberOrName<usize>>,
    zeta: Option<NumberOrName<f64>>,
    stream: Option<String>,
    include_learning: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: RawScenario,
}

fn syntax_error(text: &str, err: &toml::de::Error) -> ConfigError {
    let line = err
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    let message = err.message().to_string();
    let key = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .map(str::to_string);
    ConfigError {
        key,
        line,
        message,
    }
}

/// Parses and validates a configuration. Relative scenario file references
/// resolve against the current directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_in(text, None)
}

/// Like [`parse_config`], resolving scenario files against `base_dir`.
pub fn parse_config_in(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    build(raw, base_dir).map_err(|e| e.at(text))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_in(&text, path.parent())
}

fn model(key: &str) -> impl Fn(ModelError) -> ConfigError + '_ {
    move |e| ConfigError::new(key, e.to_string())
}

fn build(raw: RawConfig, base_dir: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let (scenario, scenario_name) = build_scenario(raw.scenario, base_dir)?;
    let e = raw.experiment;

    if e.policies.is_empty() {
        return Err(ConfigError::new("experiment.policies", "must list at least one policy"));
    }
    let mut policies = Vec::new();
    for name in &e.policies {
        let p = PolicyKind::parse(name).ok_or_else(|| {
            ConfigError::new(
                "experiment.policies",
                format!("unknown policy {name:?}; expected BISC, LBISC, AlwaysPreserve or NeverPreserve"),
            )
        })?;
        if !policies.contains(&p) {
            policies.push(p);
        }
    }
    if e.v.is_empty() {
        return Err(ConfigError::new("experiment.v", "must list at least one value"));
    }
    if let Some(v) = e.v.iter().find(|v| !(v.is_finite() && **v >= 1.0)) {
        return Err(ConfigError::new("experiment.v", format!("values must be >= 1 (got {v})")));
    }
    let f_list = e.f.unwrap_or_else(|| vec![1]);
    if f_list.is_empty() {
        return Err(ConfigError::new("experiment.f", "must list at least one value"));
    }
    if f_list.contains(&0) {
        return Err(ConfigError::new("experiment.f", "values must be >= 1"));
    }
    let rho_list = e.rho.unwrap_or_default();
    if let Some(r) = rho_list.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(ConfigError::new("experiment.rho", format!("values must be positive (got {r})")));
    }
    let horizon = e.horizon.unwrap_or(DEFAULT_HORIZON);
    if horizon == 0 {
        return Err(ConfigError::new("experiment.horizon", "must be >= 1"));
    }
    let seeds = e.seeds.unwrap_or(DEFAULT_SEEDS);
    if seeds == 0 {
        return Err(ConfigError::new("experiment.seeds", "must be >= 1"));
    }
    let learning = match e.learning_t {
        None => LearningRule::TwoThirds,
        Some(NumberOrName::Number(0)) => {
            return Err(ConfigError::new("experiment.learning_t", "must be >= 1"))
        }
        Some(NumberOrName::Number(t)) => LearningRule::Fixed(t),
        Some(NumberOrName::Name(s)) if s.replace(' ', "") == "v^(2/3)" => LearningRule::TwoThirds,
        Some(NumberOrName::Name(s)) => {
            return Err(ConfigError::new(
                "experiment.learning_t",
                format!("expected a slot count or \"v^(2/3)\" (got {s:?})"),
            ))
        }
    };
    let zeta = match e.zeta {
        None => ZetaRule::D1,
        Some(NumberOrName::Number(z)) if z.is_finite() && z > 0.0 => ZetaRule::Fixed(z),
        Some(NumberOrName::Number(z)) => {
            return Err(ConfigError::new("experiment.zeta", format!("must be positive (got {z})")))
        }
        Some(NumberOrName::Name(s)) if s.eq_ignore_ascii_case("d1") => ZetaRule::D1,
        Some(NumberOrName::Name(s)) => {
            return Err(ConfigError::new(
                "experiment.zeta",
                format!("expected a number or \"d1\" (got {s:?})"),
            ))
        }
    };
    let stream = match e.stream.as_deref() {
        None | Some("single") => StreamMode::Single,
        Some("independent") => StreamMode::Independent,
        Some(other) => {
            return Err(ConfigError::new(
                "experiment.stream",
                format!("expected \"single\" or \"independent\" (got {other:?})"),
            ))
        }
    };
    Ok(ExperimentConfig {
        scenario,
        scenario_name,
        policies,
        v_list: e.v,
        f_list,
        rho_list,
        horizon,
        seeds,
        master_seed: e.seed.unwrap_or(DEFAULT_MASTER_SEED),
        learning,
        zeta,
        stream,
        include_learning: e.include_learning.unwrap_or(false),
    })
}

fn build_scenario(
    raw: RawScenario,
    base_dir: Option<&Path>,
) -> Result<(Scenario, String), ConfigError> {
    if let Some(rho) = raw.rho {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(ConfigError::new("scenario.rho", format!("must be nonnegative (got {rho})")));
        }
    }
    if let Some(file) = &raw.file {
        if raw.preset.is_some() || raw.epsilon.is_some() {
            return Err(ConfigError::new(
                "scenario.file",
                "cannot be combined with a preset or inline parameters",
            ));
        }
        let path: PathBuf = base_dir.map_or_else(|| PathBuf::from(file), |d| d.join(file));
        let text = std::fs::read_to_string(&path).map_err(|e| {
            ConfigError::new("scenario.file", format!("cannot read {}: {e}", path.display()))
        })?;
        let inner: ScenarioFile = toml::from_str(&text).map_err(|e| {
            let mut err = syntax_error(&text, &e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })?;
        let mut inner = inner.scenario;
        if inner.file.is_some() {
            return Err(ConfigError::new("scenario.file", "scenario files cannot nest"));
        }
        if raw.rho.is_some() {
            inner.rho = raw.rho;
        }
        let (s, name) = build_scenario(inner, base_dir)?;
        return Ok((s, if name == "inline" { file.clone() } else { name }));
    }

    if let Some(name) = &raw.preset {
        let s = match name.as_str() {
            presets::SINGLE_APP => {
                let eps = single(&raw.epsilon, "scenario.epsilon")?;
                let delta = single(&raw.delta, "scenario.delta")?;
                presets::single_app(eps, delta).map_err(model("scenario"))?
            }
            _ => {
                if raw.epsilon.is_some() || raw.delta.is_some() {
                    return Err(ConfigError::new(
                        "scenario.epsilon",
                        format!("preset {name:?} fixes the demand rates"),
                    ));
                }
                presets::by_name(name).ok_or_else(|| {
                    ConfigError::new(
                        "scenario.preset",
                        format!(
                            "unknown preset {name:?}; expected {}, {} or {}",
                            presets::SETTING_A,
                            presets::SETTING_B,
                            presets::SINGLE_APP
                        ),
                    )
                })?
            }
        };
        for (present, key) in [
            (raw.r_pre.is_some(), "scenario.r_pre"),
            (raw.r_cur.is_some(), "scenario.r_cur"),
            (raw.resources.is_some(), "scenario.resources"),
            (raw.caps.is_some(), "scenario.caps"),
        ] {
            if present {
                return Err(ConfigError::new(key, format!("cannot be combined with preset {name:?}")));
            }
        }
        let s = match raw.rho {
            Some(rho) => s.with_rho(rho),
            None => s,
        };
        return Ok((s, name.clone()));
    }

    let need = |v: Option<Vec<f64>>, key: &str| {
        v.ok_or_else(|| ConfigError::new(key, "missing required field for an inline scenario"))
    };
    let eps = need(raw.epsilon, "scenario.epsilon")?;
    let delta = need(raw.delta, "scenario.delta")?;
    let r_pre = need(raw.r_pre, "scenario.r_pre")?;
    let r_cur = need(raw.r_cur, "scenario.r_cur")?;
    let resources = raw
        .resources
        .ok_or_else(|| ConfigError::new("scenario.resources", "missing required field for an inline scenario"))?;
    let rho = raw
        .rho
        .ok_or_else(|| ConfigError::new("scenario.rho", "missing required field for an inline scenario"))?;
    if eps.len() != delta.len() {
        return Err(ConfigError::new("scenario.delta", "must have one entry per application"));
    }
    let chains = eps
        .iter()
        .zip(&delta)
        .map(|(&e, &d)| DemandChain::new(e, d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(model("scenario.epsilon"))?;
    if resources.len() != eps.len() {
        return Err(ConfigError::new("scenario.resources", "must have one outcome list per application"));
    }
    // Product of per-app outcomes; the label of an outcome is its index.
    let per_app: Vec<Vec<(u32, f64)>> = resources
        .iter()
        .map(|outcomes| {
            outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| (i as u32, o[1]))
                .collect()
        })
        .collect();
    let res = ResourceModel::product(&per_app).map_err(model("scenario.resources"))?;
    let costs = CostModel::from_labels(&res, |m, label| resources[m][label as usize][0])
        .map_err(model("scenario.resources"))?;
    let rewards = RewardModel::new(r_pre, r_cur).map_err(model("scenario.r_pre"))?;
    let actions = match raw.caps {
        None => ActionSetSpec::Unconstrained,
        Some(caps) => ActionSetSpec::CardinalityLimited(caps),
    };
    let s = Scenario::new(chains, res, costs, rewards, actions, rho).map_err(model("scenario"))?;
    Ok((s, "inline".to_string()))
}

fn single(v: &Option<Vec<f64>>, key: &str) -> Result<f64, ConfigError> {
    match v.as_deref() {
        Some([x]) => Ok(*x),
        Some(_) => Err(ConfigError::new(key, "the single-app preset takes exactly one value")),
        None => Err(ConfigError::new(key, "required by the single-app preset")),
    }
}
