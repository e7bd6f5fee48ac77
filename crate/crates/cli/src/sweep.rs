//! Budget and predictability sweeps of the intelligence bound.

use std::fmt::Write as _;

use sysintel::model::{ModelError, Scenario};
use sysintel::oracle::{intelligence_bound, OracleError};
use sysintel::presets;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub rho: f64,
    /// `None` when no policy meets the budget.
    pub value: Option<f64>,
}

/// `I(ρ)` at each budget in `grid`.
pub fn sweep_bound(scenario: &Scenario, grid: &[f64]) -> Result<Vec<BoundPoint>, OracleError> {
    grid.iter()
        .map(|&rho| match intelligence_bound(&scenario.with_rho(rho)) {
            Ok(b) => Ok(BoundPoint {
                rho,
                value: Some(b.value),
            }),
            Err(OracleError::InfeasibleBudget { .. }) => Ok(BoundPoint { rho, value: None }),
            Err(e) => Err(e),
        })
        .collect()
}

pub fn bound_csv(points: &[BoundPoint]) -> String {
    let mut out = String::from("rho,intelligence,feasible\n");
    for p in points {
        let v = p.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{v},{}", p.rho, p.value.is_some());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingleAppMode {
    /// `ε = δ`, moving along the diagonal.
    Symmetric,
    /// `δ` held at the given value while `ε` varies.
    FixedDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleAppPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub intelligence: Option<f64>,
    /// Bits per slot.
    pub entropy_rate: f64,
}

/// Bound and entropy rate of the single-application preset across `grid`.
/// `rho = None` keeps the preset's `ρ_max / 2`.
pub fn sweep_single_app(
    grid: &[f64],
    mode: SingleAppMode,
    rho: Option<f64>,
) -> Result<Vec<SingleAppPoint>, ModelError> {
    grid.iter()
        .map(|&epsilon| {
            let delta = match mode {
                SingleAppMode::Symmetric => epsilon,
                SingleAppMode::FixedDelta(d) => d,
            };
            let s = presets::single_app(epsilon, delta)?;
            let s = rho.map_or(s.clone(), |r| s.with_rho(r));
            let intelligence = match intelligence_bound(&s) {
                Ok(b) => Some(b.value),
                Err(OracleError::InfeasibleBudget { .. }) => None,
                Err(OracleError::Model(e)) => return Err(e),
            };
            Ok(SingleAppPoint {
                epsilon,
                delta,
                rho: s.rho(),
                intelligence,
                entropy_rate: s.chain(0).entropy_rate()?,
            })
        })
        .collect()
}

pub fn single_app_csv(points: &[SingleAppPoint]) -> String {
    let mut out = String::from("epsilon,delta,rho,intelligence,entropy_rate\n");
    for p in points {
        let v = p.intelligence.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{v},{}", p.epsilon, p.delta, p.rho, p.entropy_rate);
    }
    out
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {s:?}"))
    };
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {spec:?}"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(format!("empty or unbounded range {spec:?}"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // Round to the step's precision so 0.1 + 3 * 0.05 prints as 0.25.
        let digits = step.to_string().split('.').nth(1).map_or(0, str::len) as i32 + 1;
        let scale = 10f64.powi(digits);
        (0..=n)
            .map(|i| ((a + i as f64 * step) * scale).round() / scale)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(grid)
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Signs of successive differences with runs of equal sign merged, ignoring
/// steps smaller than `tol`.
pub fn sign_pattern(values: &[f64], tol: f64) -> Vec<i8> {
    let mut out: Vec<i8> = Vec::new();
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= tol {
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}
