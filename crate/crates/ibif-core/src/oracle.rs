//! Independent finite-difference oracle for every analytic derivative.
//!
//! `f^p` is computed numerically by chaining implicit root solves, each seeded
//! from the corresponding unperturbed orbit point so perturbed trajectories
//! stay on the same branch. Derivatives come from central differences with a
//! Richardson extrapolation table; third derivatives use the five-point
//! antisymmetric stencil.
//!
//! Inner solves are driven to machine precision; roundoff then scales like
//! eps/h^k, so the effective step grows with the derivative order (x10 for
//! second and mixed derivatives, x100 for third) to keep the extrapolated
//! estimates inside the advertised tolerances.

use crate::expr::EvalError;
use crate::model::{ImplicitMap, PartialKey};
use crate::orbit::Orbit;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("branch escape at step {offset}: perturbed root solve failed")]
    BranchEscape { offset: usize },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Which derivative of `f^p` to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    D1,
    DAlpha,
    D2,
    DAlphaX,
    D3,
}

/// Finite-difference policy.
#[derive(Debug, Clone, Copy)]
pub struct FdPolicy {
    /// Base step, scaled by `max(1, |x_0|)` and by the derivative order.
    pub base_step: f64,
    /// Richardson combine levels (>= 1).
    pub richardson_levels: usize,
}

impl Default for FdPolicy {
    fn default() -> Self {
        FdPolicy {
            base_step: 1e-5,
            richardson_levels: 2,
        }
    }
}

// Machine-precision implicit step for oracle use.
fn tight_step(m: &ImplicitMap, x: f64, alpha: f64, guess: f64) -> Option<f64> {
    let mut y = guess;
    for _ in 0..60 {
        let f = m.at(PartialKey::F, x, y, alpha).ok()?;
        let fy = m.at(PartialKey::Fy, x, y, alpha).ok()?;
        if fy.abs() < 1e-12 {
            return if f.abs() < 1e-10 { Some(y) } else { None };
        }
        let step = f / fy;
        y -= step;
        if !y.is_finite() {
            return None;
        }
        if step.abs() <= 1e-16 * y.abs().max(1.0) {
            return Some(y);
        }
    }
    let f = m.at(PartialKey::F, x, y, alpha).ok()?;
    (f.abs() < 1e-10).then_some(y)
}

/// `f^p(x; alpha)` via implicit stepping, guesses chained from the
/// unperturbed orbit.
fn compose(m: &ImplicitMap, o: &Orbit, x: f64, alpha: f64) -> Result<f64, OracleError> {
    let p = o.period();
    let mut current = x;
    for j in 0..p {
        let guess = o.points[(j + 1) % p];
        current = tight_step(m, current, alpha, guess)
            .ok_or(OracleError::BranchEscape { offset: j })?;
    }
    Ok(current)
}

fn richardson<E>(
    mut eval: impl FnMut(f64) -> Result<f64, E>,
    h0: f64,
    levels: usize,
) -> Result<f64, E> {
    // D(h), D(h/2), ..., then the standard triangular table; central stencils
    // have an even error series, so each combine cancels one h^2 power
    let n = levels + 1;
    let mut row: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        row.push(eval(h0 / (1u64 << i) as f64)?);
    }
    for level in 1..n {
        let factor = 4f64.powi(level as i32);
        for i in 0..n - level {
            row[i] = (factor * row[i + 1] - row[i]) / (factor - 1.0);
        }
    }
    Ok(row[0])
}

/// Central-difference estimate of the requested derivative of
/// `x -> f^p(x, alpha)` or `alpha -> f^p(x_0, alpha)` at the orbit.
pub fn fd(
    m: &ImplicitMap,
    o: &Orbit,
    which: Derivative,
    policy: &FdPolicy,
) -> Result<f64, OracleError> {
    let x0 = o.points[0];
    let a0 = o.alpha;
    let scale = x0.abs().max(1.0);
    let order_scale = match which {
        Derivative::D1 | Derivative::DAlpha => 1.0,
        Derivative::D2 | Derivative::DAlphaX => 10.0,
        Derivative::D3 => 100.0,
    };
    let h0 = policy.base_step * scale * order_scale;
    let levels = policy.richardson_levels.max(1);

    match which {
        Derivative::D1 => richardson(
            |h| {
                Ok((compose(m, o, x0 + h, a0)? - compose(m, o, x0 - h, a0)?) / (2.0 * h))
            },
            h0,
            levels,
        ),
        Derivative::DAlpha => richardson(
            |h| {
                Ok((compose(m, o, x0, a0 + h)? - compose(m, o, x0, a0 - h)?) / (2.0 * h))
            },
            h0,
            levels,
        ),
        Derivative::D2 => {
            let center = compose(m, o, x0, a0)?;
            richardson(
                |h| {
                    Ok((compose(m, o, x0 + h, a0)? - 2.0 * center
                        + compose(m, o, x0 - h, a0)?)
                        / (h * h))
                },
                h0,
                levels,
            )
        }
        Derivative::DAlphaX => richardson(
            |h| {
                Ok((compose(m, o, x0 + h, a0 + h)? - compose(m, o, x0 - h, a0 + h)?
                    - compose(m, o, x0 + h, a0 - h)?
                    + compose(m, o, x0 - h, a0 - h)?)
                    / (4.0 * h * h))
            },
            h0,
            levels,
        ),
        Derivative::D3 => richardson(
            |h| {
                Ok((compose(m, o, x0 + 2.0 * h, a0)? - 2.0 * compose(m, o, x0 + h, a0)?
                    + 2.0 * compose(m, o, x0 - h, a0)?
                    - compose(m, o, x0 - 2.0 * h, a0)?)
                    / (2.0 * h * h * h))
            },
            h0,
            levels,
        ),
    }
}
