//! Implicit maps built from an ODE right-hand side `G(x)` for one-step
//! integrators, with the step size `h` bound to the parameter slot `alpha`,
//! plus the method-specific non-hyperbolicity and transversality sums that
//! cross-check the generic orbit derivatives.

use crate::expr::{Bindings, EvalError, Expression, ParseError, Var};
use crate::model::ImplicitMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("failed to parse right-hand side: {0}")]
    Parse(#[from] ParseError),
    #[error("right-hand side must reference only x")]
    ForeignVariable,
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// An autonomous scalar ODE right-hand side `x' = G(x)`.
#[derive(Debug, Clone)]
pub struct OdeModel {
    g: Expression,
    g_prime: Expression,
    name: String,
}

impl OdeModel {
    pub fn new(g: Expression, name: impl Into<String>) -> Result<Self, OdeError> {
        if g.references(Var::Y) || g.references(Var::Alpha) {
            return Err(OdeError::ForeignVariable);
        }
        let g_prime = g.differentiate(Var::X);
        Ok(OdeModel {
            g,
            g_prime,
            name: name.into(),
        })
    }

    pub fn parse(text: &str, name: impl Into<String>) -> Result<Self, OdeError> {
        Self::new(Expression::parse(text)?, name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn g(&self, x: f64) -> Result<f64, EvalError> {
        self.g.evaluate(&Bindings::new(x, 0.0, 0.0))
    }

    pub fn g_prime(&self, x: f64) -> Result<f64, EvalError> {
        self.g_prime.evaluate(&Bindings::new(x, 0.0, 0.0))
    }

    fn g_of(&self, var: Var) -> Expression {
        self.g.substitute(Var::X, &Expression::Var(var))
    }
}

/// Backward Euler step as an implicit map: `F(x, y, alpha) = y - x - alpha G(y)`.
pub fn backward_euler_map(ode: &OdeModel) -> ImplicitMap {
    use Expression::*;
    let f = Sub(
        Box::new(Sub(
            Box::new(Var(self::Var::Y)),
            Box::new(Var(self::Var::X)),
        )),
        Box::new(Mul(
            Box::new(Var(self::Var::Alpha)),
            Box::new(ode.g_of(self::Var::Y)),
        )),
    );
    ImplicitMap::build(f, format!("backward_euler({})", ode.name()), None)
}

/// Trapezoid step: `F(x, y, alpha) = y - x - (alpha/2)(G(y) + G(x))`.
pub fn trapezoid_map(ode: &OdeModel) -> ImplicitMap {
    use Expression::*;
    let f = Sub(
        Box::new(Sub(
            Box::new(Var(self::Var::Y)),
            Box::new(Var(self::Var::X)),
        )),
        Box::new(Mul(
            Box::new(Div(
                Box::new(Var(self::Var::Alpha)),
                Box::new(Num(2.0)),
            )),
            Box::new(Add(
                Box::new(ode.g_of(self::Var::Y)),
                Box::new(ode.g_of(self::Var::X)),
            )),
        )),
    );
    ImplicitMap::build(f, format!("trapezoid({})", ode.name()), None)
}

/// Forward Euler step, trivially explicit: `F(x, y, alpha) = y - x - alpha G(x)`.
pub fn forward_euler_map(ode: &OdeModel) -> ImplicitMap {
    use Expression::*;
    let f = Sub(
        Box::new(Sub(
            Box::new(Var(self::Var::Y)),
            Box::new(Var(self::Var::X)),
        )),
        Box::new(Mul(
            Box::new(Var(self::Var::Alpha)),
            Box::new(ode.g_of(self::Var::X)),
        )),
    );
    ImplicitMap::build(f, format!("forward_euler({})", ode.name()), None)
}

/// Backward-Euler non-hyperbolicity product `prod_j (1 - h G'(x_j))`;
/// the orbit is non-hyperbolic when this equals +-1.
pub fn euler_nonhyperbolicity(ode: &OdeModel, points: &[f64], h: f64) -> Result<f64, EvalError> {
    let mut product = 1.0;
    for &x in points {
        product *= 1.0 - h * ode.g_prime(x)?;
    }
    Ok(product)
}

/// Backward-Euler transversality sum
/// `sum_{j=1..p} G(x_j) prod_{i=j..p} (1 - h G'(x_i))^{-1}` with `x_p = x_0`;
/// equals the generic parameter derivative of `f^p` on the constructed map.
pub fn euler_transversality(ode: &OdeModel, points: &[f64], h: f64) -> Result<f64, EvalError> {
    let p = points.len();
    let at = |i: usize| points[i % p];
    let mut sum = 0.0;
    for j in 1..=p {
        let mut term = ode.g(at(j))?;
        for i in j..=p {
            term /= 1.0 - h * ode.g_prime(at(i))?;
        }
        sum += term;
    }
    Ok(sum)
}

/// Trapezoid non-hyperbolicity product
/// `prod_j (1 + (h/2) G'(x_j)) / (1 - (h/2) G'(x_j))`.
pub fn trapezoid_nonhyperbolicity(
    ode: &OdeModel,
    points: &[f64],
    h: f64,
) -> Result<f64, EvalError> {
    let mut product = 1.0;
    for &x in points {
        let gp = ode.g_prime(x)?;
        product *= (1.0 + 0.5 * h * gp) / (1.0 - 0.5 * h * gp);
    }
    Ok(product)
}

/// Trapezoid transversality sum
/// `(1/2) sum_j (G(x_j) + G(x_{j+1})) / (1 - (h/2) G'(x_{j+1}))
///   prod_{i>j} (1 + (h/2) G'(x_i)) / (1 - (h/2) G'(x_{i+1}))`
/// with `x_p = x_0`; equals the generic parameter derivative on the
/// constructed map (every term enters with a positive sign: the alternating
/// factors of the generic sum cancel against the signs of `Fx` and `Falpha`).
pub fn trapezoid_transversality(
    ode: &OdeModel,
    points: &[f64],
    h: f64,
) -> Result<f64, EvalError> {
    let p = points.len();
    let at = |i: usize| points[i % p];
    let mut sum = 0.0;
    for j in 0..p {
        let mut term =
            0.5 * (ode.g(at(j))? + ode.g(at(j + 1))?) / (1.0 - 0.5 * h * ode.g_prime(at(j + 1))?);
        for i in j + 1..p {
            term *= (1.0 + 0.5 * h * ode.g_prime(at(i))?)
                / (1.0 - 0.5 * h * ode.g_prime(at(i + 1))?);
        }
        sum += term;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv;
    use crate::model::PartialKey;
    use crate::orbit::{solve_periodic_orbit, OrbitOptions};

    fn quintic() -> OdeModel {
        OdeModel::parse("x^5 - 1", "quintic").unwrap()
    }

    fn pseudo(n: usize) -> Vec<f64> {
        let mut t = 0.37f64;
        (0..n)
            .map(|_| {
                t = (t * 883.0).fract();
                t * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn backward_euler_map_matches_hand_built_form() {
        let m = backward_euler_map(&quintic());
        let reference = ImplicitMap::parse("y - x - alpha*(y^5 - 1)", "ref", None).unwrap();
        for w in pseudo(30).chunks(3) {
            let (x, y, a) = (w[0], w[1], w[2].abs());
            let lhs = m.at(PartialKey::F, x, y, a).unwrap();
            let rhs = reference.at(PartialKey::F, x, y, a).unwrap();
            assert!((lhs - rhs).abs() < 1e-14, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_rhs_gives_identity_dynamics() {
        let ode = OdeModel::parse("0*x", "zero").unwrap();
        for m in [backward_euler_map(&ode), trapezoid_map(&ode), forward_euler_map(&ode)] {
            let y = crate::orbit::implicit_step(&m, 0.37, 0.8, 0.0).unwrap();
            assert!((y - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_decay_keeps_origin_fixed_for_all_steps() {
        let ode = OdeModel::parse("-x", "decay").unwrap();
        let m = backward_euler_map(&ode);
        for h in [0.1, 0.5, 2.0] {
            let o = solve_periodic_orbit(&m, h, &[0.01], &OrbitOptions::default()).unwrap();
            assert!(o.points[0].abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_map_matches_substituted_form() {
        let m = trapezoid_map(&quintic());
        let reference =
            ImplicitMap::parse("y - x - alpha/2*(y^5 + x^5 - 2)", "ref", None).unwrap();
        for w in pseudo(30).chunks(3) {
            let (x, y, a) = (w[0], w[1], w[2].abs());
            let lhs = m.at(PartialKey::F, x, y, a).unwrap();
            let rhs = reference.at(PartialKey::F, x, y, a).unwrap();
            assert!((lhs - rhs).abs() < 1e-13, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn trapezoid_linear_decay_multiplier() {
        // fixed point 0 of G = -x: d1 = (1 - h/2)/(1 + h/2), a contraction for h > 0
        let ode = OdeModel::parse("-x", "decay").unwrap();
        let m = trapezoid_map(&ode);
        for h in [0.2, 1.0, 3.0] {
            let o = solve_periodic_orbit(&m, h, &[0.0], &OrbitOptions::default()).unwrap();
            let (d1v, _) = deriv::d1(&m, &o).unwrap();
            let expect = (1.0 - 0.5 * h) / (1.0 + 0.5 * h);
            assert!((d1v - expect).abs() < 1e-12, "h {h}: {d1v} vs {expect}");
            assert!(d1v.abs() < 1.0);
        }
    }

    #[test]
    fn euler_nonhyperbolicity_examples() {
        let ode = quintic();
        assert_eq!(euler_nonhyperbolicity(&ode, &[1.0], 0.4).unwrap(), -1.0);
        assert_eq!(euler_nonhyperbolicity(&ode, &[1.0, 0.3], 0.0).unwrap(), 1.0);
        let v = euler_nonhyperbolicity(&ode, &[1.15767, -0.602341], 1.63071).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn euler_transversality_consistent_with_generic_parameter_derivative() {
        let ode = quintic();
        let m = backward_euler_map(&ode);
        // flip fixed point at h = 0.4
        let o = solve_periodic_orbit(&m, 0.4, &[1.0], &OrbitOptions::default()).unwrap();
        let specialized = euler_transversality(&ode, &o.points, 0.4).unwrap();
        let (generic, _) = deriv::d_alpha(&m, &o).unwrap();
        assert!((specialized - generic).abs() <= 1e-9, "{specialized} vs {generic}");
        // period-3 fold: nonzero transversality
        let h3 = 0.619616329522921;
        let o3 = solve_periodic_orbit(
            &m,
            h3,
            &[0.784072, 0.16453, 1.22008],
            &OrbitOptions::default(),
        )
        .unwrap();
        let specialized = euler_transversality(&ode, &o3.points, h3).unwrap();
        let (generic, _) = deriv::d_alpha(&m, &o3).unwrap();
        assert!((specialized - generic).abs() <= 1e-9 * generic.abs().max(1.0));
        assert!(specialized.abs() > 1.0);
    }

    #[test]
    fn zero_rhs_transversality_vanishes() {
        let ode = OdeModel::parse("0*x", "zero").unwrap();
        assert_eq!(euler_transversality(&ode, &[0.3, 0.7], 0.5).unwrap(), 0.0);
        assert_eq!(trapezoid_transversality(&ode, &[0.3, 0.7], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn specialization_identity_on_random_points() {
        // both sums are algebraic identities in (points, h); check off-orbit too
        let ode = OdeModel::parse("1 - 2*x + x^3/2", "cubic").unwrap();
        let meuler = backward_euler_map(&ode);
        let mtrap = trapezoid_map(&ode);
        let pts = pseudo(9);
        for (chunk, h) in pts.chunks(3).zip([0.3, 0.7, 1.1]) {
            let fake = crate::orbit::Orbit {
                points: chunk.to_vec(),
                alpha: h,
                residual: 0.0,
                min_fy: 1.0,
                degenerate: false,
                degenerate_jacobian: false,
            };
            let (g_euler, _) = deriv::d_alpha(&meuler, &fake).unwrap();
            let s_euler = euler_transversality(&ode, chunk, h).unwrap();
            assert!((g_euler - s_euler).abs() <= 1e-10 * g_euler.abs().max(1.0));
            let (g_trap, _) = deriv::d_alpha(&mtrap, &fake).unwrap();
            let s_trap = trapezoid_transversality(&ode, chunk, h).unwrap();
            assert!((g_trap - s_trap).abs() <= 1e-10 * g_trap.abs().max(1.0));
            let (d1_euler, _) = deriv::d1(&meuler, &fake).unwrap();
            let n_euler = euler_nonhyperbolicity(&ode, chunk, h).unwrap();
            assert!((d1_euler - 1.0 / n_euler).abs() <= 1e-10 * d1_euler.abs().max(1.0));
            let (d1_trap, _) = deriv::d1(&mtrap, &fake).unwrap();
            let n_trap = trapezoid_nonhyperbolicity(&ode, chunk, h).unwrap();
            assert!((d1_trap - n_trap).abs() <= 1e-10 * d1_trap.abs().max(1.0));
        }
    }

    #[test]
    fn vanishing_step_gives_unit_multiplier() {
        // any fixed point: d1 -> 1 as h -> 0 for both methods
        let ode = OdeModel::parse("x^3 - 2", "cube-root").unwrap();
        let root = 2f64.powf(1.0 / 3.0);
        let h = 1e-8;
        for m in [backward_euler_map(&ode), trapezoid_map(&ode)] {
            let o = solve_periodic_orbit(&m, h, &[root], &OrbitOptions::default()).unwrap();
            let (d1v, _) = deriv::d1(&m, &o).unwrap();
            assert!((d1v - 1.0).abs() < 1e-6, "{d1v}");
        }
    }
}
