//! Augmented bifurcation systems and classification.
//!
//! `solve_bifurcation` runs Newton on the p+1 equations
//! `F(x_j, x_{(j+1) mod p}, alpha) = 0` (j = 0..p) and
//! `d1 f^p(x_0) = sign` in the p+1 unknowns `(x_0..x_{p-1}, alpha)`. The last
//! Jacobian row differentiates the cyclic product `(-1)^p prod nu_j` directly:
//! each `x_k` enters through the two adjacent steps, `alpha` through every
//! step's `Fxa`/`Fya`. At transcritical points the augmented Jacobian is
//! structurally singular (two orbit branches cross), so the iteration stops on
//! step size rather than residual alone and falls back to least-squares steps.
//!
//! `classify` evaluates the standard codimension-1 condition sets on the
//! derivative bundle of `f^p` and resolves fold / transcritical / pitchfork at
//! `d1 = +1`, flip at `d1 = -1`, or degenerate.

use crate::deriv::{DerivativeBundle, DerivError};
use crate::expr::EvalError;
use crate::linalg;
use crate::model::{ImplicitMap, PartialKey};
use crate::orbit::{Orbit, OrbitError, OrbitOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BifurcationError {
    #[error("augmented solve did not converge within {max_iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        max_iterations: usize,
        residual: f64,
    },
    #[error("singular augmented Jacobian")]
    SingularJacobian,
    #[error("candidate orbit is invalid: {0}")]
    Orbit(#[from] OrbitError),
    #[error("stacked system is inconsistent: residual floor {residual_floor:.3e} exceeds {tolerance:.1e} (the map lacks the required symmetry)")]
    InconsistentSystem {
        residual_floor: f64,
        tolerance: f64,
    },
    #[error("iterates collapse to a lower period; no minimal-period solution in this basin")]
    CollapsedPeriod,
    #[error("derivative evaluation failed: {0}")]
    Deriv(#[from] DerivError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// A solved non-hyperbolic orbit: `d1 f^p = sign` with the orbit equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationCandidate {
    pub orbit: Orbit,
    /// +1 or -1, the solved non-hyperbolicity side.
    pub sign: f64,
    /// Final max-norm residual of the augmented system.
    pub augmented_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BifurcationKind {
    Fold,
    Transcritical,
    Pitchfork,
    Flip,
    Degenerate,
}

impl std::fmt::Display for BifurcationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BifurcationKind::Fold => "fold",
            BifurcationKind::Transcritical => "transcritical",
            BifurcationKind::Pitchfork => "pitchfork",
            BifurcationKind::Flip => "flip",
            BifurcationKind::Degenerate => "degenerate",
        };
        f.write_str(s)
    }
}

/// One classification condition with its evaluated value and verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Dead band separating "is zero" from "is nonzero".
#[derive(Debug, Clone, Copy)]
pub struct ClassifyThresholds {
    pub t_zero: f64,
    pub t_nonzero: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            t_zero: 1e-6,
            t_nonzero: 1e-6,
        }
    }
}

/// Candidate, classification, and every condition value with its verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub candidate: BifurcationCandidate,
    pub kind: BifurcationKind,
    pub conditions: Vec<ConditionEntry>,
    pub bundle: DerivativeBundle,
}

// partials of nu_j = Fx^j / Fy^j in its three slots
struct NuRow {
    nu: f64,
    d_first: f64,
    d_second: f64,
    d_alpha: f64,
}

fn nu_rows(m: &ImplicitMap, pts: &[f64], alpha: f64) -> Result<Vec<NuRow>, EvalError> {
    let p = pts.len();
    let mut rows = Vec::with_capacity(p);
    for j in 0..p {
        let (x, y) = (pts[j], pts[(j + 1) % p]);
        let fx = m.at(PartialKey::Fx, x, y, alpha)?;
        let fy = m.at(PartialKey::Fy, x, y, alpha)?;
        let fxx = m.at(PartialKey::Fxx, x, y, alpha)?;
        let fxy = m.at(PartialKey::Fxy, x, y, alpha)?;
        let fyy = m.at(PartialKey::Fyy, x, y, alpha)?;
        let fxa = m.at(PartialKey::Fxalpha, x, y, alpha)?;
        let fya = m.at(PartialKey::Fyalpha, x, y, alpha)?;
        let nu = fx / fy;
        rows.push(NuRow {
            nu,
            d_first: (fxx - nu * fxy) / fy,
            d_second: (fxy - nu * fyy) / fy,
            d_alpha: (fxa - nu * fya) / fy,
        });
    }
    Ok(rows)
}

fn product_excluding(rows: &[NuRow], skip: usize) -> f64 {
    rows.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, r)| r.nu)
        .product()
}

// residuals of the augmented system: p orbit equations plus d1 - sign
fn augmented_residuals(
    m: &ImplicitMap,
    v: &DVector<f64>,
    p: usize,
    sign: f64,
) -> Result<DVector<f64>, EvalError> {
    let alpha = v[p];
    let mut r = DVector::zeros(p + 1);
    for j in 0..p {
        r[j] = m.at(PartialKey::F, v[j], v[(j + 1) % p], alpha)?;
    }
    let mut d1 = if p % 2 == 0 { 1.0 } else { -1.0 };
    for j in 0..p {
        let (x, y) = (v[j], v[(j + 1) % p]);
        d1 *= m.at(PartialKey::Fx, x, y, alpha)? / m.at(PartialKey::Fy, x, y, alpha)?;
    }
    r[p] = d1 - sign;
    Ok(r)
}

fn augmented_jacobian(
    m: &ImplicitMap,
    v: &DVector<f64>,
    p: usize,
) -> Result<DMatrix<f64>, EvalError> {
    let alpha = v[p];
    let pts: Vec<f64> = v.iter().take(p).copied().collect();
    let mut jac = DMatrix::zeros(p + 1, p + 1);
    for j in 0..p {
        let (x, y) = (pts[j], pts[(j + 1) % p]);
        jac[(j, j)] += m.at(PartialKey::Fx, x, y, alpha)?;
        jac[(j, (j + 1) % p)] += m.at(PartialKey::Fy, x, y, alpha)?;
        jac[(j, p)] = m.at(PartialKey::Falpha, x, y, alpha)?;
    }
    let rows = nu_rows(m, &pts, alpha)?;
    let parity = if p % 2 == 0 { 1.0 } else { -1.0 };
    for k in 0..p {
        // x_k enters step k as the first slot and step (k-1) mod p as the second
        let prev = (k + p - 1) % p;
        let mut entry = rows[k].d_first * product_excluding(&rows, k);
        entry += rows[prev].d_second * product_excluding(&rows, prev);
        jac[(p, k)] = parity * entry;
    }
    let mut alpha_entry = 0.0;
    for j in 0..p {
        alpha_entry += rows[j].d_alpha * product_excluding(&rows, j);
    }
    jac[(p, p)] = parity * alpha_entry;
    Ok(jac)
}

/// Solve the augmented system for a non-hyperbolic p-orbit near the seed.
/// `seed` holds the p orbit points followed by the alpha seed.
pub fn solve_bifurcation(
    m: &ImplicitMap,
    sign: f64,
    seed: &[f64],
    opts: &OrbitOptions,
) -> Result<BifurcationCandidate, BifurcationError> {
    assert!(sign == 1.0 || sign == -1.0, "sign must be +1 or -1");
    assert!(seed.len() >= 2, "seed needs p points plus alpha");
    let p = seed.len() - 1;
    let max_iterations = 200usize;
    let mut v = DVector::from_column_slice(seed);
    let mut r = augmented_residuals(m, &v, p, sign)?;
    let mut best = r.amax();

    for iteration in 0..=max_iterations {
        let scale = v.amax().max(1.0);
        if best <= opts.residual_tol {
            // polish: keep stepping while the step still moves the iterate;
            // transcritical crossings have singular Jacobians here and
            // converge linearly in alpha even after the residual bottoms out
            let jac = augmented_jacobian(m, &v, p)?;
            if let Some(step) = linalg::newton_step(&jac, &r) {
                if step.amax() <= 1e-13 * scale {
                    break;
                }
                let trial = &v + &step;
                if let Ok(tr) = augmented_residuals(m, &trial, p, sign) {
                    if tr.amax() <= best.max(opts.residual_tol) {
                        v = trial;
                        r = tr;
                        best = r.amax();
                        continue;
                    }
                }
            }
            break;
        }
        if iteration == max_iterations {
            return Err(BifurcationError::NoConvergence {
                max_iterations,
                residual: best,
            });
        }
        let jac = augmented_jacobian(m, &v, p)?;
        let step = linalg::newton_step(&jac, &r).ok_or(BifurcationError::SingularJacobian)?;
        let mut scale_damp = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let trial = &v + &step * scale_damp;
            if let Ok(tr) = augmented_residuals(m, &trial, p, sign) {
                let t = tr.amax();
                if t < best || t <= opts.residual_tol {
                    v = trial;
                    r = tr;
                    best = t;
                    accepted = true;
                    break;
                }
            }
            scale_damp *= 0.5;
        }
        if !accepted {
            return Err(BifurcationError::NoConvergence {
                max_iterations,
                residual: best,
            });
        }
    }

    let alpha = v[p];
    let pts: Vec<f64> = v.iter().take(p).copied().collect();
    let orbit = Orbit::from_points(m, pts, alpha, opts).map_err(|e| match e {
        OrbitError::MinimalityViolation { .. } => BifurcationError::CollapsedPeriod,
        other => BifurcationError::Orbit(other),
    })?;
    Ok(BifurcationCandidate {
        orbit,
        sign,
        augmented_residual: best,
    })
}

/// Solve the pitchfork system: orbit equations, `d1 = 1`, and `d2 = 0`,
/// by Gauss-Newton on the stacked residual (p + 2 equations, p + 1 unknowns).
/// Consistency requires map symmetry; asymmetric maps either stall at a
/// residual floor or collapse toward a lower-period orbit, both reported as
/// errors.
pub fn solve_pitchfork(
    m: &ImplicitMap,
    seed: &[f64],
    opts: &OrbitOptions,
) -> Result<BifurcationCandidate, BifurcationError> {
    assert!(seed.len() >= 2, "seed needs p points plus alpha");
    let p = seed.len() - 1;
    let accept_tol = 1e-8;
    let max_iterations = 300usize;
    let mut v = DVector::from_column_slice(seed);

    let stacked = |v: &DVector<f64>| -> Result<DVector<f64>, BifurcationError> {
        let alpha = v[p];
        let pts: Vec<f64> = v.iter().take(p).copied().collect();
        let mut r = DVector::zeros(p + 2);
        for j in 0..p {
            r[j] = m.at(PartialKey::F, pts[j], pts[(j + 1) % p], alpha)?;
        }
        let (d1v, d2v) = d1_d2_raw(m, &pts, alpha)?;
        r[p] = d1v - 1.0;
        r[p + 1] = d2v;
        Ok(r)
    };

    let mut r = stacked(&v)?;
    let mut best = r.amax();
    // a flip fixed point satisfies the stacked system exactly as a collapsed
    // 2-cycle (d1 = 1 and d2 = 0 are identities there), so iterates homing in
    // on the diagonal mean the map lacks the symmetry for a genuine pitchfork
    let collapse_floor = 1e-6 * v.amax().max(1.0);
    for _ in 0..max_iterations {
        if best <= accept_tol && collapse_gap(&v, p) > collapse_floor {
            break;
        }
        // finite-difference Jacobian of the stacked residual; the d2 row mixes
        // third partials with products that are cheap to evaluate numerically
        let h = 1e-7;
        let mut jac = DMatrix::zeros(p + 2, p + 1);
        for c in 0..=p {
            let mut vp = v.clone();
            let mut vm = v.clone();
            let dc = h * v[c].abs().max(1.0);
            vp[c] += dc;
            vm[c] -= dc;
            let rp = stacked(&vp)?;
            let rm = stacked(&vm)?;
            for row in 0..p + 2 {
                jac[(row, c)] = (rp[row] - rm[row]) / (2.0 * dc);
            }
        }
        let step = linalg::lstsq(&jac, &(-&r)).ok_or(BifurcationError::SingularJacobian)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let trial = &v + &step * scale;
            if collapse_gap(&trial, p) > collapse_floor {
                if let Ok(tr) = stacked(&trial) {
                    let t = tr.norm();
                    if t < r.norm() || tr.amax() <= accept_tol {
                        v = trial;
                        r = tr;
                        best = r.amax();
                        accepted = true;
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            if collapse_gap(&v, p) <= 100.0 * collapse_floor {
                return Err(BifurcationError::CollapsedPeriod);
            }
            if step.amax() <= 1e-13 * v.amax().max(1.0) {
                break;
            }
            return Err(BifurcationError::InconsistentSystem {
                residual_floor: best,
                tolerance: accept_tol,
            });
        }
        if step.amax() * scale <= 1e-14 * v.amax().max(1.0) {
            break;
        }
    }

    if best > accept_tol {
        if collapse_gap(&v, p) <= 100.0 * collapse_floor {
            return Err(BifurcationError::CollapsedPeriod);
        }
        return Err(BifurcationError::InconsistentSystem {
            residual_floor: best,
            tolerance: accept_tol,
        });
    }
    let alpha = v[p];
    let pts: Vec<f64> = v.iter().take(p).copied().collect();
    // the stacked system converges past 1e-8 but not necessarily to the orbit
    // solver's 1e-12; refine with a plain orbit solve at the solved alpha
    let orbit = crate::orbit::solve_periodic_orbit(m, alpha, &pts, opts)
        .map_err(|e| match e {
            OrbitError::MinimalityViolation { .. } => BifurcationError::CollapsedPeriod,
            other => BifurcationError::Orbit(other),
        })?;
    let r_final = augmented_residuals(m, &{
        let mut w = DVector::zeros(p + 1);
        for (i, x) in orbit.points.iter().enumerate() {
            w[i] = *x;
        }
        w[p] = alpha;
        w
    }, p, 1.0)?;
    Ok(BifurcationCandidate {
        orbit,
        sign: 1.0,
        augmented_residual: r_final.amax(),
    })
}

// smallest pairwise gap between orbit points, infinite for p = 1
fn collapse_gap(v: &DVector<f64>, p: usize) -> f64 {
    if p < 2 {
        return f64::INFINITY;
    }
    let mut gap = f64::INFINITY;
    for i in 0..p {
        for j in i + 1..p {
            gap = gap.min((v[i] - v[j]).abs());
        }
    }
    gap
}

// d1 and d2 of f^p as plain functions of (points, alpha); used by the
// pitchfork residual where the points are not yet an orbit
fn d1_d2_raw(m: &ImplicitMap, pts: &[f64], alpha: f64) -> Result<(f64, f64), BifurcationError> {
    let p = pts.len();
    let mut d1_list = Vec::with_capacity(p + 1);
    d1_list.push(1.0);
    let mut nu = Vec::with_capacity(p);
    for j in 0..p {
        let (x, y) = (pts[j], pts[(j + 1) % p]);
        let fx = m.at(PartialKey::Fx, x, y, alpha)?;
        let fy = m.at(PartialKey::Fy, x, y, alpha)?;
        nu.push(fx / fy);
        d1_list.push(-nu[j] * d1_list[j]);
    }
    let mut sum = 0.0;
    for j in 0..p {
        let (x, y) = (pts[j], pts[(j + 1) % p]);
        let fx = m.at(PartialKey::Fx, x, y, alpha)?;
        let fxx = m.at(PartialKey::Fxx, x, y, alpha)?;
        let fxy = m.at(PartialKey::Fxy, x, y, alpha)?;
        let fyy = m.at(PartialKey::Fyy, x, y, alpha)?;
        sum += (fxx - 2.0 * fxy * nu[j] + fyy * nu[j] * nu[j]) / fx * d1_list[j];
    }
    Ok((d1_list[p], d1_list[p] * sum))
}

/// Classify a candidate from the condition values on `f^p`.
pub fn classify(
    m: &ImplicitMap,
    candidate: &BifurcationCandidate,
    thresholds: &ClassifyThresholds,
) -> Result<BifurcationReport, BifurcationError> {
    let bundle = DerivativeBundle::compute(m, &candidate.orbit)?;
    let t_z = thresholds.t_zero;
    let t_nz = thresholds.t_nonzero;
    let genericity = bundle.genericity();

    let mut conditions = vec![
        ConditionEntry {
            name: "d_alpha".into(),
            value: bundle.d_alpha,
            threshold: t_z,
            pass: bundle.d_alpha.abs() <= t_z,
        },
        ConditionEntry {
            name: "d2".into(),
            value: bundle.d2,
            threshold: t_nz,
            pass: bundle.d2.abs() > t_nz,
        },
        ConditionEntry {
            name: "d_alpha_x".into(),
            value: bundle.d_alpha_x,
            threshold: t_nz,
            pass: bundle.d_alpha_x.abs() > t_nz,
        },
        ConditionEntry {
            name: "d3".into(),
            value: bundle.d3,
            threshold: t_nz,
            pass: bundle.d3.abs() > t_nz,
        },
        ConditionEntry {
            name: "genericity".into(),
            value: genericity,
            threshold: t_nz,
            pass: genericity.abs() > t_nz,
        },
    ];

    let kind = if candidate.sign > 0.0 {
        let da = bundle.d_alpha.abs();
        let d2a = bundle.d2.abs();
        let daxa = bundle.d_alpha_x.abs();
        let d3a = bundle.d3.abs();
        if da > t_nz && d2a > t_nz {
            BifurcationKind::Fold
        } else if da <= t_z && d2a > t_nz && daxa > t_nz {
            BifurcationKind::Transcritical
        } else if da <= t_z && d2a <= t_z && d3a > t_nz && daxa > t_nz {
            BifurcationKind::Pitchfork
        } else {
            BifurcationKind::Degenerate
        }
    } else if genericity.abs() > t_nz && bundle.d_alpha_x.abs() > t_nz {
        BifurcationKind::Flip
    } else {
        BifurcationKind::Degenerate
    };

    // for the fold the d_alpha condition is a non-vanishing requirement
    if kind == BifurcationKind::Fold {
        conditions[0].pass = bundle.d_alpha.abs() > t_nz;
    }

    Ok(BifurcationReport {
        candidate: candidate.clone(),
        kind,
        conditions,
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv;
    use crate::model::ImplicitMap;
    use crate::orbit::OrbitOptions;

    const EX1: &str = "y - alpha*x*(1 - x + y^5/100)";
    const EX2: &str =
        "y + x + alpha*x*((x - y^3/100)^2 - 1) - x*((x - y^3/100)^4 - 1)";
    const EX3: &str = "y - alpha*(x + y^5/100)^3 - (1 - alpha)*(x + y^5/100)";

    fn opts() -> OrbitOptions {
        OrbitOptions::default()
    }

    #[test]
    fn ex1_period_three_fold_solve() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.16, 0.52, 0.95, 3.76], &opts()).unwrap();
        let expect = [0.16498, 0.51813, 0.954];
        for (got, want) in c.orbit.points.iter().zip(expect) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!((c.orbit.alpha - 3.75938).abs() < 1e-3);
        let (d1v, _) = deriv::d1(&m, &c.orbit).unwrap();
        assert!((d1v - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn ex4_period_two_flip_solve() {
        let m = ImplicitMap::parse(EX1, "ex4", None).unwrap();
        let c = solve_bifurcation(&m, -1.0, &[0.85, 0.44, 3.4], &opts()).unwrap();
        assert!((c.orbit.points[0] - 0.8466).abs() < 1e-3, "{:?}", c.orbit.points);
        assert!((c.orbit.points[1] - 0.4427).abs() < 1e-3);
        assert!((c.orbit.alpha - 3.405).abs() < 1e-3);
    }

    #[test]
    fn linear_map_loses_hyperbolicity_at_alpha_one() {
        let m = ImplicitMap::parse("y - alpha*x", "linear", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.0, 1.2], &opts()).unwrap();
        assert!(c.orbit.points[0].abs() < 1e-10);
        assert!((c.orbit.alpha - 1.0).abs() < 1e-10);
        let report = classify(&m, &c, &ClassifyThresholds::default()).unwrap();
        assert_eq!(report.kind, BifurcationKind::Degenerate);
        assert!(report.bundle.d2.abs() < 1e-9);
        assert!(report.bundle.d3.abs() < 1e-9);
    }

    #[test]
    fn ex1_classifies_as_fold() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.16, 0.52, 0.95, 3.76], &opts()).unwrap();
        let report = classify(&m, &c, &ClassifyThresholds::default()).unwrap();
        assert_eq!(report.kind, BifurcationKind::Fold);
    }

    #[test]
    fn ex2_classifies_as_transcritical_with_alpha_two() {
        let m = ImplicitMap::parse(EX2, "ex2", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.99, -0.99, 2.1], &opts()).unwrap();
        assert!((c.orbit.alpha - 2.0).abs() < 1e-6, "alpha {}", c.orbit.alpha);
        let report = classify(&m, &c, &ClassifyThresholds::default()).unwrap();
        assert_eq!(report.kind, BifurcationKind::Transcritical);
        assert!((report.bundle.d_alpha_x - 4.07769).abs() < 1e-3);
    }

    #[test]
    fn ex3_pitchfork_solve_and_classification() {
        let m = ImplicitMap::parse(EX3, "ex3", None).unwrap();
        let c = solve_pitchfork(&m, &[-0.58, 0.58, 3.0], &opts()).unwrap();
        assert!((c.orbit.alpha - 2.9989).abs() < 1e-3, "alpha {}", c.orbit.alpha);
        let report = classify(&m, &c, &ClassifyThresholds::default()).unwrap();
        assert_eq!(report.kind, BifurcationKind::Pitchfork);
        assert!((report.bundle.d3 + 295.6).abs() < 1.0);
        assert!((report.bundle.d_alpha_x - 4.05).abs() < 0.05);
    }

    #[test]
    fn odd_cubic_map_has_fixed_point_pitchfork_at_alpha_one() {
        let m = ImplicitMap::parse("y - alpha*x + x^3", "odd-cubic", None).unwrap();
        let c = solve_pitchfork(&m, &[0.05, 0.9], &opts()).unwrap();
        assert!(c.orbit.points[0].abs() < 1e-8, "{:?}", c.orbit.points);
        assert!((c.orbit.alpha - 1.0).abs() < 1e-8);
    }

    #[test]
    fn asymmetric_map_pitchfork_system_errors() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let result = solve_pitchfork(&m, &[0.3, 0.7, 3.2], &opts());
        match result {
            Err(BifurcationError::InconsistentSystem { residual_floor, .. }) => {
                assert!(residual_floor > 1e-8, "floor {residual_floor}");
            }
            // iterates home in on a flip fixed point, which satisfies the
            // stacked system only as a collapsed two-cycle
            Err(BifurcationError::CollapsedPeriod) => {}
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn classification_is_stable_under_threshold_perturbation() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.16, 0.52, 0.95, 3.76], &opts()).unwrap();
        for factor in [0.1, 1.0, 10.0] {
            let t = ClassifyThresholds {
                t_zero: 1e-6 * factor,
                t_nonzero: 1e-6 * factor,
            };
            let report = classify(&m, &c, &t).unwrap();
            assert_eq!(report.kind, BifurcationKind::Fold, "factor {factor}");
        }
    }

    #[test]
    fn classification_is_invariant_under_cyclic_shift() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let c = solve_bifurcation(&m, 1.0, &[0.16, 0.52, 0.95, 3.76], &opts()).unwrap();
        let base = classify(&m, &c, &ClassifyThresholds::default()).unwrap();
        for shift in 1..3 {
            let mut pts = c.orbit.points.clone();
            pts.rotate_left(shift);
            let rotated = BifurcationCandidate {
                orbit: Orbit::from_points(&m, pts, c.orbit.alpha, &opts()).unwrap(),
                sign: c.sign,
                augmented_residual: c.augmented_residual,
            };
            let report = classify(&m, &rotated, &ClassifyThresholds::default()).unwrap();
            assert_eq!(report.kind, base.kind);
        }
    }

    #[test]
    fn candidate_invariants_recheck_independently() {
        let m = ImplicitMap::parse(EX1, "ex4", None).unwrap();
        let c = solve_bifurcation(&m, -1.0, &[0.85, 0.44, 3.4], &opts()).unwrap();
        assert!(c.orbit.residual <= 1e-12);
        let (d1v, _) = deriv::d1(&m, &c.orbit).unwrap();
        assert!((d1v - c.sign).abs() <= 1e-8);
    }
}
