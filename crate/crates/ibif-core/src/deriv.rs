//! Closed-form derivatives of the p-fold composition along an implicit orbit.
//!
//! With `nu_j = Fx(x_j, x_{j+1}) / Fy(x_j, x_{j+1})` along the cycle:
//!
//! * first derivative: `d1 f^j = (-1)^j prod_{i<j} nu_i`
//! * parameter derivative: `da f^j = (-1)^j sum_{k<j} (-1)^k (Fa^k/Fy^k) prod_{k<i<j} nu_i`
//! * second derivative: `d2 f^k = d1 f^k sum_{j<k} A_j d1 f^j` with
//!   `A_j = (Fxx^j - 2 Fxy^j nu_j + Fyy^j nu_j^2) / Fx^j`
//! * third derivative: `(d2 f^k)^2 / d1 f^k` plus three more sums (see `d3`)
//! * mixed derivative at a non-hyperbolic orbit (`|d1| = 1`):
//!   `dax f^p = d1 f^p * sum_j [ A_j da f^j + (Fyy^j/Fy^j - Fxy^j/Fx^j) Fa^j/Fy^j
//!              + Fxa^j/Fx^j - Fya^j/Fy^j ]`
//! * Schwarzian: `S f^p = d3/d1 - (3/2)(d2/d1)^2`
//!
//! Sums run left to right in index order with compensated summation. The
//! printed d2/d3 forms divide by `Fx^j`; when some `|Fx^j|` is below 1e-12 the
//! derivative still exists but the algebraic form degenerates, and the bundle
//! falls back to the finite-difference oracle for those entries, flagged
//! `analytic_fallback`.

use crate::expr::EvalError;
use crate::model::{ImplicitMap, PartialKey};
use crate::oracle::{self, Derivative, FdPolicy};
use crate::orbit::Orbit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DerivError {
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("formula singularity: |Fx| = {fx_abs:.3e} at orbit step {index}")]
    FxSingular { index: usize, fx_abs: f64 },
    #[error("mixed derivative requires |d1| = 1 within {tol:.1e}, got d1 = {d1}")]
    NotAtBifurcation { d1: f64, tol: f64 },
    #[error("d1 = 0, Schwarzian undefined")]
    ZeroD1,
    #[error("oracle fallback failed: {0}")]
    Oracle(#[from] crate::oracle::OracleError),
}

/// Kahan compensated summation, accumulating left to right.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum
    }
}

/// Partial-derivative table of one orbit step.
#[derive(Debug, Clone, Copy)]
struct StepTable {
    fx: f64,
    fy: f64,
    fa: f64,
    fxx: f64,
    fxy: f64,
    fyy: f64,
    fxa: f64,
    fya: f64,
    fxxx: f64,
    fxxy: f64,
    fxyy: f64,
    fyyy: f64,
    nu: f64,
}

fn step_tables(m: &ImplicitMap, o: &Orbit) -> Result<Vec<StepTable>, DerivError> {
    let p = o.period();
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let (x, y) = o.step_pair(j);
        let a = o.alpha;
        let fx = m.at(PartialKey::Fx, x, y, a)?;
        let fy = m.at(PartialKey::Fy, x, y, a)?;
        out.push(StepTable {
            fx,
            fy,
            fa: m.at(PartialKey::Falpha, x, y, a)?,
            fxx: m.at(PartialKey::Fxx, x, y, a)?,
            fxy: m.at(PartialKey::Fxy, x, y, a)?,
            fyy: m.at(PartialKey::Fyy, x, y, a)?,
            fxa: m.at(PartialKey::Fxalpha, x, y, a)?,
            fya: m.at(PartialKey::Fyalpha, x, y, a)?,
            fxxx: m.at(PartialKey::Fxxx, x, y, a)?,
            fxxy: m.at(PartialKey::Fxxy, x, y, a)?,
            fxyy: m.at(PartialKey::Fxyy, x, y, a)?,
            fyyy: m.at(PartialKey::Fyyy, x, y, a)?,
            nu: fx / fy,
        })
    }
    Ok(out)
}

// second-derivative kernel A_j; the printed form divides by Fx^j
fn kernel_a(t: &StepTable) -> f64 {
    (t.fxx - 2.0 * t.fxy * t.nu + t.fyy * t.nu * t.nu) / t.fx
}

fn check_fx(tables: &[StepTable]) -> Result<(), DerivError> {
    for (index, t) in tables.iter().enumerate() {
        if t.fx.abs() < 1e-12 {
            return Err(DerivError::FxSingular {
                index,
                fx_abs: t.fx.abs(),
            });
        }
    }
    Ok(())
}

/// `d1 f^p(x_0)` together with the partial list `d1 f^j`, `j = 0..p`.
pub fn d1(m: &ImplicitMap, o: &Orbit) -> Result<(f64, Vec<f64>), DerivError> {
    let tables = step_tables(m, o)?;
    Ok(d1_from_tables(&tables))
}

fn d1_from_tables(tables: &[StepTable]) -> (f64, Vec<f64>) {
    let mut partial = Vec::with_capacity(tables.len() + 1);
    partial.push(1.0);
    let mut acc = 1.0;
    for t in tables {
        acc = -t.nu * acc;
        partial.push(acc);
    }
    (acc, partial)
}

/// `da f^p(x_0)` together with the partial list `da f^j`, `j = 0..p`.
pub fn d_alpha(m: &ImplicitMap, o: &Orbit) -> Result<(f64, Vec<f64>), DerivError> {
    let tables = step_tables(m, o)?;
    Ok(d_alpha_from_tables(&tables))
}

fn d_alpha_from_tables(tables: &[StepTable]) -> (f64, Vec<f64>) {
    let p = tables.len();
    let mut partial = Vec::with_capacity(p + 1);
    partial.push(0.0);
    for j in 1..=p {
        // da f^j = (-1)^j sum_{k<j} (-1)^k (Fa^k / Fy^k) prod_{k<i<j} nu_i
        let mut sum = CompensatedSum::default();
        for k in 0..j {
            let mut term = tables[k].fa / tables[k].fy;
            if k % 2 == 1 {
                term = -term;
            }
            for t in &tables[k + 1..j] {
                term *= t.nu;
            }
            sum.add(term);
        }
        let mut v = sum.value();
        if j % 2 == 1 {
            v = -v;
        }
        partial.push(v);
    }
    (partial[p], partial)
}

/// `d2 f^p(x_0)` together with the partial list `d2 f^j`, `j = 0..p`.
pub fn d2(m: &ImplicitMap, o: &Orbit) -> Result<(f64, Vec<f64>), DerivError> {
    let tables = step_tables(m, o)?;
    check_fx(&tables)?;
    Ok(d2_from_tables(&tables))
}

fn d2_from_tables(tables: &[StepTable]) -> (f64, Vec<f64>) {
    let p = tables.len();
    let (_, d1p) = d1_from_tables(tables);
    let mut partial = Vec::with_capacity(p + 1);
    partial.push(0.0);
    let mut sum = CompensatedSum::default();
    for k in 1..=p {
        sum.add(kernel_a(&tables[k - 1]) * d1p[k - 1]);
        partial.push(d1p[k] * sum.value());
    }
    (partial[p], partial)
}

/// `d3 f^p(x_0)`.
pub fn d3(m: &ImplicitMap, o: &Orbit) -> Result<f64, DerivError> {
    let tables = step_tables(m, o)?;
    check_fx(&tables)?;
    Ok(d3_from_tables(&tables))
}

fn d3_from_tables(tables: &[StepTable]) -> f64 {
    let p = tables.len();
    let (d1_total, d1p) = d1_from_tables(tables);
    let (d2_total, d2p) = d2_from_tables(tables);

    let mut s_a = CompensatedSum::default();
    let mut s_b = CompensatedSum::default();
    let mut s_c = CompensatedSum::default();
    for j in 0..p {
        let t = &tables[j];
        let nu = t.nu;
        s_a.add(kernel_a(t) * d2p[j]);
        let b = (t.fxxx - 3.0 * t.fxxy * nu + 3.0 * t.fxyy * nu * nu - t.fyyy * nu * nu * nu)
            / t.fx;
        s_b.add(b * d1p[j] * d1p[j]);
        let c = -t.fxx * t.fxx
            + t.fxx * t.fxy * nu
            + (t.fxx * t.fyy + 2.0 * t.fxy * t.fxy) * nu * nu
            - 5.0 * t.fxy * t.fyy * nu * nu * nu
            + 2.0 * t.fyy * t.fyy * nu * nu * nu * nu;
        let w = d1p[j] / t.fx;
        s_c.add(c * w * w);
    }
    d2_total * d2_total / d1_total + d1_total * (s_a.value() + s_b.value() + s_c.value())
}

/// Mixed derivative `dax f^p(x_0)`, valid at a non-hyperbolic orbit where
/// `|d1 f^p| = 1` within `tol`.
pub fn d_alpha_x(m: &ImplicitMap, o: &Orbit) -> Result<f64, DerivError> {
    d_alpha_x_tol(m, o, 1e-6)
}

pub fn d_alpha_x_tol(m: &ImplicitMap, o: &Orbit, tol: f64) -> Result<f64, DerivError> {
    let tables = step_tables(m, o)?;
    check_fx(&tables)?;
    let (d1_total, _) = d1_from_tables(&tables);
    if (d1_total.abs() - 1.0).abs() > tol {
        return Err(DerivError::NotAtBifurcation { d1: d1_total, tol });
    }
    let (_, dap) = d_alpha_from_tables(&tables);
    let mut sum = CompensatedSum::default();
    for (j, t) in tables.iter().enumerate() {
        sum.add(
            kernel_a(t) * dap[j]
                + (t.fyy / t.fy - t.fxy / t.fx) * t.fa / t.fy
                + t.fxa / t.fx
                - t.fya / t.fy,
        );
    }
    Ok(d1_total.signum() * sum.value())
}

/// Schwarzian derivative `S f^p(x_0) = d3/d1 - (3/2)(d2/d1)^2`.
pub fn schwarzian(m: &ImplicitMap, o: &Orbit) -> Result<f64, DerivError> {
    let tables = step_tables(m, o)?;
    check_fx(&tables)?;
    let (d1_total, _) = d1_from_tables(&tables);
    if d1_total == 0.0 {
        return Err(DerivError::ZeroD1);
    }
    let (d2_total, _) = d2_from_tables(&tables);
    let d3_total = d3_from_tables(&tables);
    Ok(d3_total / d1_total - 1.5 * (d2_total / d1_total) * (d2_total / d1_total))
}

/// Every derivative the classification needs, at one orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub d1: f64,
    pub d_alpha: f64,
    pub d2: f64,
    /// Mixed derivative; analytic at non-hyperbolic orbits, oracle elsewhere.
    pub d_alpha_x: f64,
    pub d3: f64,
    pub schwarzian: f64,
    /// nu_j = Fx^j / Fy^j along the orbit.
    pub nu: Vec<f64>,
    /// d1 f^j for j = 0..p (index 0 is the identity composition).
    pub partial_d1: Vec<f64>,
    pub partial_d2: Vec<f64>,
    pub partial_d_alpha: Vec<f64>,
    /// True when any entry came from the finite-difference oracle because the
    /// printed algebraic form was singular or inapplicable.
    pub analytic_fallback: bool,
}

impl DerivativeBundle {
    /// Flip genericity factor `(1/2) d2^2 + (1/3) d3`.
    pub fn genericity(&self) -> f64 {
        0.5 * self.d2 * self.d2 + self.d3 / 3.0
    }

    /// Assemble the bundle. d2/d3/Schwarzian fall back to the oracle when some
    /// `Fx^j` vanishes along the orbit; the mixed derivative falls back when
    /// the orbit is not non-hyperbolic (the analytic form only holds there).
    pub fn compute(m: &ImplicitMap, o: &Orbit) -> Result<DerivativeBundle, DerivError> {
        let tables = step_tables(m, o)?;
        let (d1_total, partial_d1) = d1_from_tables(&tables);
        let (da_total, partial_da) = d_alpha_from_tables(&tables);
        let nu = tables.iter().map(|t| t.nu).collect();

        let fx_ok = tables.iter().all(|t| t.fx.abs() >= 1e-12);
        let mut fallback = false;
        let policy = FdPolicy::default();

        let (d2_total, partial_d2, d3_total) = if fx_ok {
            let (d2v, d2p) = d2_from_tables(&tables);
            (d2v, d2p, d3_from_tables(&tables))
        } else {
            fallback = true;
            let d2v = oracle::fd(m, o, Derivative::D2, &policy)?;
            let d3v = oracle::fd(m, o, Derivative::D3, &policy)?;
            (d2v, vec![f64::NAN; 0], d3v)
        };

        let at_bifurcation = (d1_total.abs() - 1.0).abs() <= 1e-6;
        let dax = if at_bifurcation && fx_ok {
            let mut sum = CompensatedSum::default();
            for (j, t) in tables.iter().enumerate() {
                sum.add(
                    kernel_a(t) * partial_da[j]
                        + (t.fyy / t.fy - t.fxy / t.fx) * t.fa / t.fy
                        + t.fxa / t.fx
                        - t.fya / t.fy,
                );
            }
            d1_total.signum() * sum.value()
        } else {
            fallback = true;
            oracle::fd(m, o, Derivative::DAlphaX, &policy)?
        };

        let schw = if d1_total != 0.0 {
            d3_total / d1_total - 1.5 * (d2_total / d1_total) * (d2_total / d1_total)
        } else {
            f64::NAN
        };

        Ok(DerivativeBundle {
            d1: d1_total,
            d_alpha: da_total,
            d2: d2_total,
            d_alpha_x: dax,
            d3: d3_total,
            schwarzian: schw,
            nu,
            partial_d1,
            partial_d2,
            partial_d_alpha: partial_da,
            analytic_fallback: fallback,
        })
    }
}
