//! Bifurcation-diagram data: parameter sweeps of branch-tracked trajectories
//! and period detection on the settled iterates.

use crate::model::ImplicitMap;
use crate::orbit::{implicit_step, OrbitError};
use serde::{Deserialize, Serialize};

/// Sweep configuration: an ascending parameter grid, a common start point,
/// burn-in length, and how many settled iterates to keep per parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub samples: usize,
    pub x0: f64,
    pub burn: usize,
    pub keep: usize,
}

/// Kept iterates at one parameter value; `None` when the trajectory failed
/// (branch escape or divergence).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepColumn {
    pub alpha: f64,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub columns: Vec<SweepColumn>,
    pub failed: usize,
}

/// Run the sweep. Each parameter value iterates independently from `x0` with
/// continuation guesses, so columns are order-independent and deterministic.
pub fn sweep(m: &ImplicitMap, spec: &SweepSpec) -> SweepResult {
    assert!(spec.alpha_lo < spec.alpha_hi, "empty parameter range");
    assert!(spec.samples >= 2);
    let mut columns = Vec::with_capacity(spec.samples);
    let mut failed = 0;
    for i in 0..spec.samples {
        let alpha = spec.alpha_lo
            + (spec.alpha_hi - spec.alpha_lo) * i as f64 / (spec.samples - 1) as f64;
        match run_column(m, alpha, spec) {
            Ok(values) => columns.push(SweepColumn {
                alpha,
                values: Some(values),
            }),
            Err(_) => {
                failed += 1;
                columns.push(SweepColumn {
                    alpha,
                    values: None,
                });
            }
        }
    }
    SweepResult { columns, failed }
}

fn run_column(m: &ImplicitMap, alpha: f64, spec: &SweepSpec) -> Result<Vec<f64>, OrbitError> {
    let mut current = spec.x0;
    let mut kept = Vec::with_capacity(spec.keep);
    for i in 0..spec.burn + spec.keep {
        current = implicit_step(m, current, alpha, current)?;
        if !current.is_finite() || current.abs() > 1e8 {
            return Err(OrbitError::NoConvergence {
                max_iterations: 0,
                residual: f64::INFINITY,
            });
        }
        if i >= spec.burn {
            kept.push(current);
        }
    }
    Ok(kept)
}

/// Smallest period `d <= max_period` under which the settled iterates repeat
/// within `rel_tol`, or `None` if none fits (quasi-periodic or chaotic).
pub fn detect_period(values: &[f64], max_period: usize, rel_tol: f64) -> Option<usize> {
    for d in 1..=max_period.min(values.len().saturating_sub(1)) {
        let ok = (0..values.len() - d)
            .all(|i| (values[i + d] - values[i]).abs() <= rel_tol * values[i].abs().max(1.0));
        if ok {
            return Some(d);
        }
    }
    None
}

/// A detected change of period between adjacent parameter grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodTransition {
    pub alpha_before: f64,
    pub alpha_after: f64,
    pub period_before: usize,
    pub period_after: usize,
}

impl PeriodTransition {
    /// Midpoint estimate of the branch point.
    pub fn branch_point(&self) -> f64 {
        0.5 * (self.alpha_before + self.alpha_after)
    }
}

/// Scan the sweep for period changes between consecutive parameter values.
pub fn period_transitions(
    result: &SweepResult,
    max_period: usize,
    rel_tol: f64,
) -> Vec<PeriodTransition> {
    let periods: Vec<(f64, Option<usize>)> = result
        .columns
        .iter()
        .map(|c| {
            let p = c
                .values
                .as_deref()
                .and_then(|v| detect_period(v, max_period, rel_tol));
            (c.alpha, p)
        })
        .collect();
    let mut out = Vec::new();
    for w in periods.windows(2) {
        if let [(a0, Some(p0)), (a1, Some(p1))] = w {
            if p0 != p1 {
                out.push(PeriodTransition {
                    alpha_before: *a0,
                    alpha_after: *a1,
                    period_before: *p0,
                    period_after: *p1,
                });
            }
        }
    }
    out
}
