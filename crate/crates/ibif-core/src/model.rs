//! Packaging of a map `F(x, y, alpha)` with every partial derivative the
//! derivative formulas reference. Downstream modules only ever touch `F`
//! through an [`ImplicitMap`].

use crate::expr::{Bindings, EvalError, Expression, ParseError, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The thirteen partials used by the orbit-derivative formulas: total order up
/// to 3 in (x, y) and order 1 in alpha mixed with order up to 2 in (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartialKey {
    F,
    Fx,
    Fy,
    Falpha,
    Fxx,
    Fxy,
    Fyy,
    Fxalpha,
    Fyalpha,
    Fxxx,
    Fxxy,
    Fxyy,
    Fyyy,
}

impl PartialKey {
    pub const ALL: [PartialKey; 13] = [
        PartialKey::F,
        PartialKey::Fx,
        PartialKey::Fy,
        PartialKey::Falpha,
        PartialKey::Fxx,
        PartialKey::Fxy,
        PartialKey::Fyy,
        PartialKey::Fxalpha,
        PartialKey::Fyalpha,
        PartialKey::Fxxx,
        PartialKey::Fxxy,
        PartialKey::Fxyy,
        PartialKey::Fyyy,
    ];

    fn index(self) -> usize {
        match self {
            PartialKey::F => 0,
            PartialKey::Fx => 1,
            PartialKey::Fy => 2,
            PartialKey::Falpha => 3,
            PartialKey::Fxx => 4,
            PartialKey::Fxy => 5,
            PartialKey::Fyy => 6,
            PartialKey::Fxalpha => 7,
            PartialKey::Fyalpha => 8,
            PartialKey::Fxxx => 9,
            PartialKey::Fxxy => 10,
            PartialKey::Fxyy => 11,
            PartialKey::Fyyy => 12,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to parse map expression: {0}")]
    Parse(#[from] ParseError),
    #[error("map evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// A map together with its symbolic partial-derivative bundle.
///
/// Immutable after construction; shared references may be used concurrently.
#[derive(Debug, Clone)]
pub struct ImplicitMap {
    name: String,
    partials: [Expression; 13],
    domain_hint: (f64, f64),
}

const DEFAULT_DOMAIN: (f64, f64) = (-10.0, 10.0);

impl ImplicitMap {
    /// Build the full partial table from `F` by symbolic differentiation.
    pub fn build(f: Expression, name: impl Into<String>, domain_hint: Option<(f64, f64)>) -> Self {
        let fx = f.differentiate(Var::X);
        let fy = f.differentiate(Var::Y);
        let falpha = f.differentiate(Var::Alpha);
        let fxx = fx.differentiate(Var::X);
        let fxy = fx.differentiate(Var::Y);
        let fyy = fy.differentiate(Var::Y);
        let fxalpha = fx.differentiate(Var::Alpha);
        let fyalpha = fy.differentiate(Var::Alpha);
        let fxxx = fxx.differentiate(Var::X);
        let fxxy = fxx.differentiate(Var::Y);
        let fxyy = fxy.differentiate(Var::Y);
        let fyyy = fyy.differentiate(Var::Y);
        ImplicitMap {
            name: name.into(),
            partials: [
                f, fx, fy, falpha, fxx, fxy, fyy, fxalpha, fyalpha, fxxx, fxxy, fxyy, fyyy,
            ],
            domain_hint: domain_hint.unwrap_or(DEFAULT_DOMAIN),
        }
    }

    /// Parse `text` and build the map.
    pub fn parse(
        text: &str,
        name: impl Into<String>,
        domain_hint: Option<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        Ok(Self::build(Expression::parse(text)?, name, domain_hint))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain_hint(&self) -> (f64, f64) {
        self.domain_hint
    }

    pub fn expression(&self, key: PartialKey) -> &Expression {
        &self.partials[key.index()]
    }

    /// Evaluate one partial at the given bindings.
    pub fn eval_partial(&self, key: PartialKey, b: &Bindings) -> Result<f64, EvalError> {
        self.partials[key.index()].evaluate(b)
    }

    /// Shorthand for the step pair `(x_j, x_{j+1})` at parameter `alpha`.
    pub fn at(&self, key: PartialKey, x: f64, y: f64, alpha: f64) -> Result<f64, EvalError> {
        self.eval_partial(key, &Bindings::new(x, y, alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "y - alpha*x*(1 - x + y^5/100)";

    fn pseudo_points(n: usize) -> Vec<(f64, f64, f64)> {
        let mut t = 0.618_f64;
        (0..n)
            .map(|_| {
                t = (t * 941.0).fract();
                let x = t * 2.0 - 1.0;
                let y = (t * 17.0).fract() * 2.0 - 1.0;
                let a = (t * 29.0).fract() * 4.0;
                (x, y, a)
            })
            .collect()
    }

    #[test]
    fn ex1_fx_matches_printed_form() {
        let m = ImplicitMap::parse(EX1, "ex1", Some((0.0, 1.0))).unwrap();
        let printed = Expression::parse("alpha*(-1 + 2*x - y^5/100)").unwrap();
        for (x, y, a) in pseudo_points(50) {
            let b = Bindings::new(x, y, a);
            let lhs = m.eval_partial(PartialKey::Fx, &b).unwrap();
            let rhs = printed.evaluate(&b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn linear_map_has_vanishing_higher_partials() {
        let m = ImplicitMap::parse("y - x", "identity", None).unwrap();
        for key in [
            PartialKey::Fxx,
            PartialKey::Fxy,
            PartialKey::Fyy,
            PartialKey::Fxxx,
            PartialKey::Fxxy,
            PartialKey::Fxyy,
            PartialKey::Fyyy,
        ] {
            for (x, y, a) in pseudo_points(10) {
                assert_eq!(m.at(key, x, y, a).unwrap(), 0.0);
            }
        }
        for (x, y, a) in pseudo_points(10) {
            assert_eq!(m.at(PartialKey::Fx, x, y, a).unwrap(), -1.0);
        }
    }

    #[test]
    fn ex4_third_partial_in_y_matches_printed_form() {
        let m = ImplicitMap::parse(EX1, "ex4", None).unwrap();
        let printed = Expression::parse("-3*alpha*x*y^2/5").unwrap();
        for (x, y, a) in pseudo_points(50) {
            let b = Bindings::new(x, y, a);
            let lhs = m.eval_partial(PartialKey::Fyyy, &b).unwrap();
            let rhs = printed.evaluate(&b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn eval_partial_fy_at_printed_orbit_point() {
        let m = ImplicitMap::parse(EX1, "ex1", None).unwrap();
        let got = m.at(PartialKey::Fy, 0.16498, 0.51813, 3.75938).unwrap();
        let expect = 1.0 - 0.05 * 3.75938 * 0.16498 * 0.51813_f64.powi(4);
        assert!((got - expect).abs() < 1e-12);
    }

    // central finite differences of F reproduce each generated partial
    #[test]
    fn all_thirteen_partials_are_fd_consistent() {
        let m = ImplicitMap::parse(EX1, "ex1", Some((-2.0, 2.0))).unwrap();
        let h = 1e-5;
        let fd = |key_num: PartialKey, var: Var, x: f64, y: f64, a: f64| -> f64 {
            let shift = |d: f64| match var {
                Var::X => m.at(key_num, x + d, y, a).unwrap(),
                Var::Y => m.at(key_num, x, y + d, a).unwrap(),
                Var::Alpha => m.at(key_num, x, y, a + d).unwrap(),
            };
            (shift(h) - shift(-h)) / (2.0 * h)
        };
        // every partial is the derivative of a lower-order one
        let chain: [(PartialKey, PartialKey, Var); 12] = [
            (PartialKey::Fx, PartialKey::F, Var::X),
            (PartialKey::Fy, PartialKey::F, Var::Y),
            (PartialKey::Falpha, PartialKey::F, Var::Alpha),
            (PartialKey::Fxx, PartialKey::Fx, Var::X),
            (PartialKey::Fxy, PartialKey::Fx, Var::Y),
            (PartialKey::Fyy, PartialKey::Fy, Var::Y),
            (PartialKey::Fxalpha, PartialKey::Fx, Var::Alpha),
            (PartialKey::Fyalpha, PartialKey::Fy, Var::Alpha),
            (PartialKey::Fxxx, PartialKey::Fxx, Var::X),
            (PartialKey::Fxxy, PartialKey::Fxx, Var::Y),
            (PartialKey::Fxyy, PartialKey::Fxy, Var::Y),
            (PartialKey::Fyyy, PartialKey::Fyy, Var::Y),
        ];
        for (x, y, a) in pseudo_points(100) {
            for (target, base, var) in chain {
                let analytic = m.at(target, x, y, a).unwrap();
                let numeric = fd(base, var, x, y, a);
                let tol = 1e-6 * analytic.abs().max(1.0);
                assert!(
                    (analytic - numeric).abs() <= tol.max(1e-6),
                    "{target:?} at ({x},{y},{a}): {analytic} vs {numeric}"
                );
            }
        }
    }
}
