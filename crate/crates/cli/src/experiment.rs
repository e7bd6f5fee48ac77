//! Running policy cells across seeds and summarising them.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sysintel::learning::LearnedMultiplier;
use sysintel::oracle::intelligence_bound;
use sysintel::sim::{
    deficit_steady_level, run, sliding_convergence_time, time_averages, write_trace_csv, Metrics,
    Policy,
};

use crate::config::{ExperimentConfig, PolicyKind};

pub const SUMMARY_HEADER: &str = "policy,V,f,seed_count,r_av_mean,r_av_se,c_av_mean,c_av_se,d_bar_mean,d_bar_se,t_conv_mean,t_conv_se,oracle_I";

/// One `(policy, V, f)` combination. `f` is `None` for policies that do not
/// learn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub policy: PolicyKind,
    pub v: f64,
    pub f: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: Metrics,
    /// Sliding-window convergence time, or the horizon when the run never
    /// converged.
    pub t_conv: Option<f64>,
    pub converged: bool,
    /// Mean deficit over the final third; `None` if the run is shorter
    /// than twice its convergence time.
    pub steady_deficit: Option<f64>,
    pub d_max_bound: f64,
    pub learned: Option<LearnedMultiplier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    /// Oracle multiplier at this `V`; `None` if the budget is infeasible.
    pub gamma_star: Option<f64>,
    pub zeta: f64,
    pub oracle_i: Option<f64>,
    pub outcomes: Vec<SeedOutcome>,
    /// First error hit by any seed of this cell.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: &'static str,
    pub v: f64,
    pub f: Option<usize>,
    pub seed_count: usize,
    pub r_av: Option<MeanSe>,
    pub c_av: Option<MeanSe>,
    pub d_bar: Option<MeanSe>,
    pub t_conv: Option<MeanSe>,
    pub oracle_i: Option<f64>,
}

impl CellResult {
    pub fn summary(&self) -> SummaryRow {
        let col = |f: &dyn Fn(&SeedOutcome) -> f64| {
            MeanSe::of(&self.outcomes.iter().map(f).collect::<Vec<_>>())
        };
        let t: Vec<f64> = self.outcomes.iter().filter_map(|o| o.t_conv).collect();
        SummaryRow {
            policy: self.cell.policy.name(),
            v: self.cell.v,
            f: self.cell.f,
            seed_count: self.outcomes.len(),
            r_av: col(&|o| o.metrics.r_av),
            c_av: col(&|o| o.metrics.c_av),
            d_bar: col(&|o| o.metrics.d_bar),
            t_conv: MeanSe::of(&t),
            oracle_i: self.oracle_i,
        }
    }

    pub fn steady_deficits(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.steady_deficit).collect()
    }
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let pair = |x: Option<MeanSe>| match x {
            Some(m) => format!("{},{}", m.mean, m.se),
            None => ",".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.v,
            self.f.map(|f| f.to_string()).unwrap_or_default(),
            self.seed_count,
            pair(self.r_av),
            pair(self.c_av),
            pair(self.d_bar),
            pair(self.t_conv),
            opt(self.oracle_i)
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Directory for per-run trace CSVs.
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(out, "{}", c.summary().to_csv());
        }
        out
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn find(&self, policy: PolicyKind, v: f64, f: Option<usize>) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.cell.policy == policy && c.cell.v == v && c.cell.f == f)
    }
}

/// Seed of the `i`-th replication. Shared by every cell so policies face the
/// same randomness.
pub fn replication_seed(master: u64, i: usize) -> u64 {
    master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

/// Cells in output order: policies as listed, then `V`, then `f`.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &policy in &cfg.policies {
        for &v in &cfg.v_list {
            if policy.learns() {
                out.extend(cfg.f_list.iter().map(|&f| Cell { policy, v, f: Some(f) }));
            } else {
                out.push(Cell { policy, v, f: None });
            }
        }
    }
    out
}

fn policy_for(cfg: &ExperimentConfig, cell: &Cell) -> Policy {
    match cell.policy {
        PolicyKind::Bisc => Policy::Bisc,
        PolicyKind::Lbisc => Policy::Lbisc {
            learning_slots: cfg.learning.slots(cell.v),
            population: cell.f.unwrap_or(1),
            stream: cfg.stream,
        },
        PolicyKind::AlwaysPreserve => Policy::AlwaysPreserve,
        PolicyKind::NeverPreserve => Policy::NeverPreserve,
    }
}

fn trace_path(dir: &Path, cell: &Cell, i: usize) -> PathBuf {
    let f = cell.f.map(|f| format!("_f{f}")).unwrap_or_default();
    dir.join(format!("{}_V{}{f}_seed{i}.csv", cell.policy.name(), cell.v))
}

fn run_seed(
    cfg: &ExperimentConfig,
    cell: &Cell,
    i: usize,
    gamma_star: Option<f64>,
    zeta: f64,
    traces: Option<&Path>,
) -> Result<SeedOutcome, String> {
    let seed = replication_seed(cfg.master_seed, i);
    let policy = policy_for(cfg, cell);
    let trace = run(&cfg.scenario, &policy, cell.v, cfg.horizon, seed).map_err(|e| e.to_string())?;
    if let Some(dir) = traces {
        let file = fs::File::create(trace_path(dir, cell, i)).map_err(|e| e.to_string())?;
        write_trace_csv(&trace, BufWriter::new(file)).map_err(|e| e.to_string())?;
    }
    let metrics = time_averages(&trace, cfg.include_learning);
    let hit = gamma_star.and_then(|g| sliding_convergence_time(&trace.eff_queue(), g, zeta));
    let t_conv = gamma_star.map(|_| hit.unwrap_or(cfg.horizon) as f64);
    let steady_deficit = hit.and_then(|t| deficit_steady_level(&trace.deficit(), t).ok());
    Ok(SeedOutcome {
        seed,
        metrics: Metrics {
            t_conv: hit,
            ..metrics
        },
        t_conv,
        converged: hit.is_some(),
        steady_deficit,
        d_max_bound: trace.d_max_bound,
        learned: trace.learned,
    })
}

/// Runs every `(cell, seed)` pair, in parallel, and assembles the results in
/// cell order. Failing seeds are dropped from their cell and the first error
/// is recorded on it.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> io::Result<ExperimentResult> {
    if let Some(dir) = &opts.traces {
        fs::create_dir_all(dir)?;
    }
    let bound = intelligence_bound(&cfg.scenario);
    let oracle_i = bound.as_ref().ok().map(|b| b.value);
    let multiplier = bound.as_ref().ok().map(|b| b.multiplier);
    if let Err(e) = &bound {
        log::warn!("oracle: {e}; convergence times are left empty");
    }

    let cells = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.seeds).map(move |i| (c, i)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(c, i)| {
                let cell = &cells[c];
                let gamma = multiplier.map(|g| g * cell.v);
                run_seed(cfg, cell, i, gamma, cfg.zeta(cell.v), opts.traces.as_deref())
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(io::Error::other)?
            .install(work),
        None => work(),
    };

    let mut outcomes = outcomes.into_iter();
    let results = cells
        .iter()
        .map(|&cell| {
            let mut done = Vec::with_capacity(cfg.seeds);
            let mut error = None;
            for r in outcomes.by_ref().take(cfg.seeds) {
                match r {
                    Ok(o) => done.push(o),
                    Err(e) => {
                        log::error!("{} V={} f={:?}: {e}", cell.policy.name(), cell.v, cell.f);
                        error.get_or_insert(e);
                    }
                }
            }
            CellResult {
                cell,
                gamma_star: multiplier.map(|g| g * cell.v),
                zeta: cfg.zeta(cell.v),
                oracle_i,
                outcomes: done,
                error,
            }
        })
        .collect();
    Ok(ExperimentResult { cells: results })
}

pub const COMPARE_HEADER: &str = "V,f,bisc_t_conv_mean,lbisc_t_conv_mean,speedup,bisc_d_steady_mean,lbisc_d_steady_mean,deficit_ratio,zeta";

/// BISC against LBISC at each `(V, f)`, from a result holding both.
pub fn compare_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    let mean = |xs: &[f64]| MeanSe::of(xs).map(|m| m.mean);
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for l in result.cells.iter().filter(|c| c.cell.policy == PolicyKind::Lbisc) {
        let Some(b) = result.find(PolicyKind::Bisc, l.cell.v, None) else {
            continue;
        };
        let tb = b.summary().t_conv.map(|m| m.mean);
        let tl = l.summary().t_conv.map(|m| m.mean);
        let db = mean(&b.steady_deficits());
        let dl = mean(&l.steady_deficits());
        let ratio = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) if y > 0.0 => Some(x / y),
            _ => None,
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            l.cell.v,
            l.cell.f.unwrap_or(1),
            opt(tb),
            opt(tl),
            opt(ratio(tb, tl)),
            opt(db),
            opt(dl),
            opt(ratio(db, dl)),
            l.zeta
        );
    }
    out
}
