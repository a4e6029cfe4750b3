//! Built-in scenarios: a model file plus checks that need more than the DSL.

use super::model::{Generator, Group, Model};
use super::report::{Check, Status};
use super::tasks::sample_jets;
use crate::colombeau::{
    apply_group, default_grid, embed_delta, growth_exponent, shock_limit_oracle, weak_residual_curve, ResidualCurve, Verdict,
};
use crate::expr::{Bindings, Compiled, Expr};
use crate::factorization::{
    build_solved_form, characteristic_fields, cocycle_defect, compare_factors, compute_factor_q, infinitesimal_factor, invariance_check,
    berest_defect, principal_matrix_from_qtilde, quasilinear_closed_form, verify_hyperbolic_reduction, Dependence, FactorError,
    FactorMatrix, FactorMethod, HyperbolicCandidate, InvarianceTarget,
};
use crate::jet::{prolong_group_action, prolong_vector_field};
use crate::numerics::max_abs_diff;
use std::fmt::Display;

type Extras = fn(&Model, u64) -> Vec<Check>;

pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub model: &'static str,
    extras: Extras,
}

impl Scenario {
    pub fn extras(&self, m: &Model, seed: u64) -> Vec<Check> {
        (self.extras)(m, seed)
    }
}

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

pub static SCENARIOS: [Scenario; 8] = [
    Scenario {
        name: "burgers-riemann",
        summary: "Riemann shock for Burgers' equation and growth of delta nets",
        model: BURGERS,
        extras: burgers_extras,
    },
    Scenario {
        name: "generalized-burgers",
        summary: "u_t + f(u) u_x: projective groups, their factors, generators and shocks",
        model: GENERALIZED,
        extras: generalized_extras,
    },
    Scenario {
        name: "two-component-transport",
        summary: "U_t + U U_x = 0, V_t + U V_x = 0 under a projective action",
        model: TWO_COMPONENT,
        extras: two_component_extras,
    },
    Scenario {
        name: "quasilinear-factor",
        summary: "closed-form factor of a quasilinear system and its negative controls",
        model: QUASILINEAR,
        extras: quasilinear_extras,
    },
    Scenario {
        name: "semilinear-transport",
        summary: "u_t + a u_x + u = 0 with a linear symmetry group",
        model: SEMILINEAR,
        extras: semilinear_extras,
    },
    Scenario {
        name: "ode-counterexample",
        summary: "u = cos(eps^2 x)/eps: u' is associated to 0, u to no constant",
        model: ODE,
        extras: no_extras,
    },
    Scenario {
        name: "hyperbolic-2x2",
        summary: "characteristic reduction for a constant-coefficient 2x2 system",
        model: HYPERBOLIC,
        extras: hyperbolic_extras,
    },
    Scenario {
        name: "invariance-suite",
        summary: "invariance of smooth functions and nets, mollifier independence, group images of shocks",
        model: INVARIANCE,
        extras: invariance_extras,
    },
];

const BURGERS: &str = "\
# Burgers' equation with a Riemann shock travelling at speed c.
vars
  independent x, t
  dependent u
system
  u_t: u_t + u*u_x
net shock
  u = ul + (ur - ul)*Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  test phi = bump((x - 2*c)^2 + (t - 2)^2) on x in [2*c - 1, 2*c + 1], t in [1, 3]
  probes order 1 at (2*c - 0.5, 2), (2*c - 0.25, 2), (2*c, 2), (2*c + 0.25, 2), (2*c + 0.5, 2)
  expect associated slope >= 0.8
scenario
  ul = 1
  ur = 0
  c = (ul + ur)/2
  eps = 2^-8 .. 2^-12
";

const GENERALIZED: &str = "\
# u_t + f(u) u_x = 0 with flux F, F' = f.
vars
  independent x, t
  dependent u
  family exp
system
  u_t: u_t + f(u)*u_x
group G1
  x -> x/(1 - eta*t)
  t -> t/(1 - eta*t)
  u -> finv(eta*x + f(u) - eta*f(u)*t)
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
  expect Q = (1 - eta*t)^3*fp(u)/fp(finv(eta*x + f(u) - eta*f(u)*t))
group G2
  x -> x/(1 - eta*x)
  t -> t/(1 - eta*x)
  u -> finv(f(u)/(1 - eta*(x - f(u)*t)))
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
  expect Q = (1 - eta*x)^3*fp(u)/((1 - eta*(x - t*f(u)))^3*fp(finv(f(u)/(1 - eta*(x - t*f(u))))))
generator w1 of G1
  x -> x*t
  t -> t^2
  u -> (x - f(u)*t)/fp(u)
generator w2 of G2
  x -> x^2
  t -> x*t
  u -> f(u)*(x - f(u)*t)/fp(u)
net shock
  u = ul + (ur - ul)*Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  test phi = bump((x - 2*c)^2 + (t - 2)^2) on x in [2*c - 1, 2*c + 1], t in [1, 3]
  probes order 1 at (2*c - 0.5, 2), (2*c - 0.25, 2), (2*c, 2), (2*c + 0.25, 2), (2*c + 0.5, 2)
  expect associated slope >= 0.8
scenario
  ul = 1
  ur = 0
  dc = 0
  c = (F(ur) - F(ul))/(ur - ul) + dc
  eps = 2^-8 .. 2^-12
";

const TWO_COMPONENT: &str = "\
# Burgers' equation carrying a passive scalar.
vars
  independent x, t
  dependent U, V
system
  U_t: U_t + U*U_x
  V_t: V_t + U*V_x
group Gq
  x -> x/(1 - eta*t)
  t -> t/(1 - eta*t)
  U -> (1 - eta*t)*U + eta*x
  V -> V
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
  expect Q = (1 - eta*t)^3, 0; 0, (1 - eta*t)^2
generator wq of Gq
  x -> x*t
  t -> t^2
  U -> x - U*t
  V -> 0
";

const QUASILINEAR: &str = "\
# Projectable actions on a quasilinear system. Gi bends V nonlinearly and
# Gii moves t along x; both break the x-only dependence of the factor.
vars
  independent x, t
  dependent U, V
system
  U_t: U_t + U*U_x
  V_t: V_t + U*V_x
group Gq
  x -> x/(1 - eta*t)
  t -> t/(1 - eta*t)
  U -> (1 - eta*t)*U + eta*x
  V -> V
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
group Gi
  x -> x
  t -> t
  U -> U
  V -> V/(1 - eta*V)
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
group Gii
  x -> x/(1 - eta*x)
  t -> t/(1 - eta*x)
  U -> U/(1 - eta*(x - U*t))
  V -> V
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
generator wq of Gq
  x -> x*t
  t -> t^2
  U -> x - U*t
  V -> 0
";

const SEMILINEAR: &str = "\
# Damped transport with a shear-and-scale symmetry along x - c t.
vars
  independent x, t
  dependent u
system
  u_t: u_t + a*u_x + u
group Gs
  x -> x + c*eta*(x - c*t)
  t -> t + eta*(x - c*t)
  u -> exp(-eta*(x - c*t))*u
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
generator ws of Gs
  x -> c*(x - c*t)
  t -> x - c*t
  u -> -(x - c*t)*u
  alpha = -(x - c*t)
  beta = 0
scenario
  a = 1/2
  c = a
";

const ODE: &str = "\
# u = cos(eps^2 x)/eps on the line.
vars
  independent x
  dependent u
net derivative
  u = cos(eps^2*x)/eps
  domain x in [-2, 2]
  residual u_x
  test phi = bump((x - 0.5)^2) on x in [-0.5, 1.5] unit-mass
  expect associated slope >= 0.8
net constant0
  u = cos(eps^2*x)/eps
  domain x in [-2, 2]
  residual u
  test phi = bump((x - 0.5)^2) on x in [-0.5, 1.5] unit-mass
  expect not-associated slope <= -0.8
net constant1
  u = cos(eps^2*x)/eps
  domain x in [-2, 2]
  residual u - 1
  test phi = bump((x - 0.5)^2) on x in [-0.5, 1.5] unit-mass
  expect not-associated slope <= -0.8
";

const HYPERBOLIC: &str = "\
# u_t + A u_x = 0 with constant A = (a11, a12; a21, a22).
vars
  independent x, t
  dependent u, v
system
  u_t: u_t + a11*u_x + a12*v_x
  v_t: v_t + a21*u_x + a22*v_x
scenario
  a11 = 0
  a12 = 1
  a21 = 4
  a22 = 0
";

const INVARIANCE: &str = "\
# Burgers' equation: invariant functions and nets, and shocks under its groups.
vars
  independent x, t
  dependent u
system
  u_t: u_t + u*u_x
group Gx
  x -> x + eta
  t -> t
  u -> u
group G1
  x -> x/(1 - eta*t)
  t -> t/(1 - eta*t)
  u -> eta*x + u - eta*u*t
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [0.5, 2]
  expect Q = (1 - eta*t)^3
generator travel
  x -> c
  t -> 1
  u -> 0
  alpha = 0
  beta = 0
generator skew
  x -> 1
  t -> 1
  u -> 0
  alpha = 0
  beta = 0
generator scale
  x -> x
  t -> t
  u -> 0
  alpha = 0
  beta = 0
net shock
  u = ul + (ur - ul)*Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  test phi = bump((x - 2*c)^2 + (t - 2)^2) on x in [2*c - 1, 2*c + 1], t in [1, 3]
  expect associated slope >= 0.8
net mollifiers
  u = ul + (ur - ul)*Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  residual u - (ul + (ur - ul)*Theta2((x - c*t)/eps))
  test phi = bump((x - 2*c)^2 + (t - 2)^2) on x in [2*c - 1, 2*c + 1], t in [1, 3]
  expect associated slope >= 0.8
net deltasquare
  u = theta((x - c*t)/eps)^2/eps^2
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  residual u
  test phi = bump((x - 2*c)^2 + (t - 2)^2) on x in [2*c - 1, 2*c + 1], t in [1, 3]
  expect not-associated slope <= -0.8
scenario
  ul = 1
  ur = 0
  c = (ul + ur)/2
";

fn s(e: impl Display) -> String {
    e.to_string()
}

fn attempt(name: &str, f: impl FnOnce() -> Result<Check, String>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e))
}

fn group<'a>(m: &'a Model, name: &str) -> Result<&'a Group, String> {
    m.group(name).ok_or_else(|| format!("no group `{name}`"))
}

fn generator<'a>(m: &'a Model, name: &str) -> Result<&'a Generator, String> {
    m.generator(name).ok_or_else(|| format!("no generator `{name}`"))
}

fn no_extras(_: &Model, _: u64) -> Vec<Check> {
    vec![]
}

/// Compares the Richardson limit of the shock residual with the line-integral oracle.
fn limit_check(name: &str, curve: &ResidualCurve, oracle: f64) -> Check {
    let ok = if oracle.abs() <= 1e-12 {
        curve.verdict == Verdict::ConvergesToZero
    } else {
        curve.limit_estimate.is_some_and(|l| (l - oracle).abs() <= 0.05 * oracle.abs())
    };
    Check::new(name, Status::from_bool(ok))
        .curve(curve)
        .note(format!("oracle {oracle:.6e}, {}", curve.verdict.label()))
}

fn shock_limit(m: &Model, flux: &str) -> Check {
    let name = "rankine-hugoniot-limit";
    attempt(name, || {
        let (ul, ur, c) = (m.value("ul").map_err(s)?, m.value("ur").map_err(s)?, m.value("c").map_err(s)?);
        let flux_jump = m.value(flux).map_err(s)?;
        let n = m.net("shock").ok_or("no net `shock`")?;
        let sys = n.system.as_ref().ok_or("net without a system")?;
        let phi = n.tests.first().ok_or("net without a test function")?;
        let curve = weak_residual_curve(sys, &n.net, phi, &m.grid, &m.table).map_err(s)?.remove(0);
        let oracle = shock_limit_oracle(flux_jump, c, ul, ur, phi, &m.table).map_err(s)?;
        Ok(limit_check(name, &curve, oracle))
    })
}

fn growth_check(name: &str, p: Result<crate::colombeau::GrowthFit, String>, target: f64, tol: f64) -> Check {
    match p {
        Ok(fit) => {
            let mut c = Check::new(name, Status::from_bool((fit.p - target).abs() <= tol)).note(format!("p = {:.4}", fit.p));
            c.slope = Some(fit.p);
            c.residuals = Some(fit.sups);
            c.epsilons = Some(fit.epsilons);
            c
        }
        Err(e) => Check::failed(name, e),
    }
}

fn burgers_extras(m: &Model, _seed: u64) -> Vec<Check> {
    let mut out = vec![shock_limit(m, "(ur^2 - ul^2)/2")];
    let grid = default_grid();
    let x = m.spec.symbol(0).clone();
    let dom = vec![(-1.0, 1.0)];
    let delta = embed_delta(&m.mollifier, &Expr::symbol(&x), &[x], dom.clone());
    let fit = |multi: &[usize]| growth_exponent(&delta, 0, multi, &dom, &grid, &m.table).map_err(s);
    out.push(growth_check("growth:delta", fit(&[]), 1.0, 0.1));
    out.push(growth_check("growth:delta-prime", fit(&[0]), 2.0, 0.1));
    let shock = m
        .net("shock")
        .ok_or_else(|| "no net `shock`".to_string())
        .and_then(|n| growth_exponent(&n.net, 0, &[], &n.net.domain, &grid, &m.table).map_err(s));
    out.push(growth_check("growth:shock", shock, 0.0, 0.05));
    out
}

/// Symbolic prolongation of a generator against a Richardson-extrapolated
/// central difference in eta of the prolonged group action.
fn prolongation_check(m: &Model, g: &str, w: &str, seed: u64) -> Check {
    let name = format!("prolongation:{w}");
    attempt(&name.clone(), || {
        let (g, w) = (group(m, g)?, generator(m, w)?);
        let pa = prolong_group_action(&g.action, &m.spec, &m.table)
            .and_then(|p| p.compile(&m.table))
            .map_err(s)?;
        let coeffs = prolong_vector_field(&w.field, &m.spec, &m.table).map_err(s)?;
        let cs = coeffs
            .iter()
            .map(|e| Compiled::new(e, &m.spec.symbols(), &Bindings::new(), &m.table))
            .collect::<Result<Vec<_>, _>>()
            .map_err(s)?;
        let diff = |h: f64, z: &[f64]| -> Option<Vec<f64>> {
            let (a, b) = (pa.apply(h, z).ok()?, pa.apply(-h, z).ok()?);
            Some(a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let (mut worst, mut used): (f64, usize) = (0.0, 0);
        for z in sample_jets(&m.spec, &g.action.domain, 2.0, 50, seed) {
            let (Some(d1), Some(d2)) = (diff(1e-3, &z), diff(5e-4, &z)) else { continue };
            used += 1;
            for (k, c) in cs.iter().enumerate() {
                let numeric = (4.0 * d2[k] - d1[k]) / 3.0;
                worst = worst.max((numeric - c.eval(&z).map_err(s)?).abs());
            }
        }
        if used == 0 {
            return Err("the action is undefined at every sampled jet".into());
        }
        Ok(Check::bound(name, worst, 1e-5))
    })
}

fn expected_factor(m: &Model, g: &Group) -> Result<FactorMatrix, String> {
    let sys = m.system.as_ref().ok_or("no system")?;
    let q = g.expect.clone().ok_or_else(|| format!("group `{}` declares no expected Q", g.name))?;
    Ok(FactorMatrix::symbolic(sys, q, g.action.eta_range))
}

fn cocycle_check(m: &Model, g: &str, seed: u64) -> Check {
    let name = format!("cocycle:{g}");
    attempt(&name.clone(), || {
        let g = group(m, g)?;
        let sys = m.system.as_ref().ok_or("no system")?;
        let q = compute_factor_q(sys, &g.action, FactorMethod::Auto, &m.table).map_err(s)?;
        Ok(Check::bound(name, cocycle_defect(&q, &g.action, 100, seed, &m.table).map_err(s)?, 1e-8))
    })
}

fn generalized_extras(m: &Model, seed: u64) -> Vec<Check> {
    let mut out = vec![shock_limit(m, "F(ur) - F(ul)")];
    let Some(sys) = m.system.as_ref() else { return out };
    for (gname, wname) in [("G1", "w1"), ("G2", "w2")] {
        let name = format!("qtilde-derivative:{wname}");
        out.push(attempt(&name.clone(), || {
            let (g, w) = (group(m, gname)?, generator(m, wname)?);
            let qt = infinitesimal_factor(sys, &w.field, &m.table).map_err(s)?.qtilde.compile(&m.table).map_err(s)?;
            let q = expected_factor(m, g)?.compile(&m.table).map_err(s)?;
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for z in sample_jets(&m.spec, &g.action.domain, 2.0, 50, seed) {
                let (Ok(a), Ok(b), Ok(d)) = (q.eval(h, &z), q.eval(-h, &z), qt.eval(0.0, &z)) else { continue };
                for i in 0..d.len() {
                    for j in 0..d.len() {
                        worst = worst.max(((a[i][j] - b[i][j]) / (2.0 * h) - d[i][j]).abs());
                    }
                }
            }
            Ok(Check::bound(name, worst, 1e-6))
        }));
        let name = format!("principal-matrix:{gname}");
        out.push(attempt(&name.clone(), || {
            let (g, w) = (group(m, gname)?, generator(m, wname)?);
            let qt = infinitesimal_factor(sys, &w.field, &m.table).map_err(s)?.qtilde;
            let q = expected_factor(m, g)?.compile(&m.table).map_err(s)?;
            let t = m.spec.index_of_name("t").ok_or("no variable t")?;
            let mut worst: f64 = 0.0;
            for mut z in sample_jets(&m.spec, &g.action.domain, 2.0, 20, seed) {
                z[t] = 1.0;
                let Ok(expected) = q.eval(0.1, &z) else { continue };
                let got = principal_matrix_from_qtilde(&qt, &g.action, &z, 0.1, &m.table).map_err(s)?;
                worst = worst.max(max_abs_diff(&got, &expected));
            }
            Ok(Check::bound(name, worst, 1e-6))
        }));
        out.push(cocycle_check(m, gname, seed));
        out.push(prolongation_check(m, gname, wname, seed));
        let name = format!("factor-quadrature:{gname}");
        out.push(attempt(&name.clone(), || {
            let g = group(m, gname)?;
            let q = compute_factor_q(sys, &g.action, FactorMethod::Quadrature, &m.table).map_err(s)?;
            let d = compare_factors(&q, &expected_factor(m, g)?, &g.action.domain, 200, seed, &m.table).map_err(s)?;
            Ok(Check::bound(name, d, m.tol))
        }));
    }
    out
}

fn two_component_extras(m: &Model, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let Some(sys) = m.system.as_ref() else { return out };
    out.push(attempt("determinant-constant", || {
        let sf = build_solved_form(sys, seed, &m.table).map_err(s)?;
        Ok(Check::new("determinant-constant", Status::from_bool(sf.determinant.is_one())).expression(sf.determinant.to_string()))
    }));
    out.push(prolongation_check(m, "Gq", "wq", seed));
    out.push(attempt("quasilinear-closed-form:Gq", || {
        let g = group(m, "Gq")?;
        let closed = FactorMatrix::symbolic(sys, quasilinear_closed_form(sys, &g.action, &m.table).map_err(s)?, g.action.eta_range);
        let d = compare_factors(&closed, &expected_factor(m, g)?, &g.action.domain, 200, seed, &m.table).map_err(s)?;
        Ok(Check::bound("quasilinear-closed-form:Gq", d, m.tol).expression(closed.render()))
    }));
    out.push(cocycle_check(m, "Gq", seed));
    out
}

fn quasilinear_extras(m: &Model, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let Some(sys) = m.system.as_ref() else { return out };
    let quadrature = |g: &Group| compute_factor_q(sys, &g.action, FactorMethod::Quadrature, &m.table).map_err(s);
    out.push(attempt("quadrature-closed-form:Gq", || {
        let g = group(m, "Gq")?;
        let q = quadrature(g)?;
        let closed = FactorMatrix::symbolic(sys, quasilinear_closed_form(sys, &g.action, &m.table).map_err(s)?, g.action.eta_range);
        let d = compare_factors(&q, &closed, &g.action.domain, m.samples, seed, &m.table).map_err(s)?;
        Ok(Check::bound("quadrature-closed-form:Gq", d, m.tol).expression(closed.render()))
    }));
    out.push(attempt("dependence:Gq", || {
        let q = quadrature(group(m, "Gq")?)?;
        Ok(Check::new("dependence:Gq", Status::from_bool(q.dependence == Dependence::EtaX)).note(format!("{:?}", q.dependence)))
    }));
    for g in ["Gi", "Gii"] {
        let name = format!("negative-control:{g}");
        out.push(attempt(&name.clone(), || {
            let q = quadrature(group(m, g)?)?;
            Ok(Check::new(name, Status::from_bool(q.dependence != Dependence::EtaX)).note(format!("{:?}", q.dependence)))
        }));
    }
    out.push(prolongation_check(m, "Gq", "wq", seed));
    out
}

fn semilinear_extras(m: &Model, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let Some(sys) = m.system.as_ref() else { return out };
    out.push(attempt("semilinear-q:Gs", || {
        let g = group(m, "Gs")?;
        let q = compute_factor_q(sys, &g.action, FactorMethod::Auto, &m.table).map_err(s)?;
        let pa = prolong_group_action(&g.action, &m.spec, &m.table).map_err(s)?;
        let (ux, ut) = (m.spec.index_of_name("u_x").ok_or("no u_x")?, m.spec.index_of_name("u_t").ok_or("no u_t")?);
        let b = |k, l| pa.b(k, l).cloned().ok_or_else(|| format!("no coefficient b({k}, {l})"));
        let closed = crate::expr::normalize(&(b(ut, ut)? + m.expr("a").map_err(s)? * b(ux, ut)?));
        let expected = FactorMatrix::symbolic(sys, vec![vec![closed.clone()]], g.action.eta_range);
        let d = compare_factors(&q, &expected, &g.action.domain, 200, seed, &m.table).map_err(s)?;
        Ok(Check::bound("semilinear-q:Gs", d, m.tol).expression(closed.to_string()))
    }));
    out.push(attempt("berest:ws", || {
        let w = generator(m, "ws")?;
        let qt = infinitesimal_factor(sys, &w.field, &m.table).map_err(s)?.qtilde;
        Ok(Check::bound("berest:ws", berest_defect(sys, &w.field, &qt, 100, seed, &m.table).map_err(s)?, 1e-10))
    }));
    out.push(attempt("invariance-smooth:ws", || {
        let (g, w) = (group(m, "Gs")?, generator(m, "ws")?);
        let u = [m.expr("exp(-t)*sin(x - c*t)").map_err(s)?];
        let r = invariance_check(&w.field, InvarianceTarget::Smooth { u: &u, domain: &g.action.domain }, &m.spec, &m.table).map_err(s)?;
        Ok(invariance_result("invariance-smooth:ws", &r, true))
    }));
    out.push(prolongation_check(m, "Gs", "ws", seed));
    out
}

fn invariance_result(name: &str, r: &crate::factorization::InvarianceReport, expect_invariant: bool) -> Check {
    let mut c = Check::new(name, Status::from_bool(r.pass == expect_invariant));
    if let Some(v) = r.max_residual {
        c = c.residual(v);
    }
    if let Some(curve) = r.curves.first() {
        c = c.curve(curve);
    }
    c.note(if r.exact_zero { "exactly zero" } else { "not identically zero" })
}

fn hyperbolic_extras(m: &Model, _seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let Some(a) = m.system.as_ref().and_then(|s| s.quasi_matrix.clone()) else {
        return vec![Check::failed("characteristic-fields", "the system is not of the form u_t + A u_x = 0")];
    };
    let us = m.spec.dependent_symbols();
    let xs = m.spec.independent_symbols();
    let square = vec![(-1.0, 1.0); 2];
    let fields = characteristic_fields(&a, &us, &square, 50, &m.table);
    out.push(match &fields {
        Ok(cf) => Check::new("characteristic-fields", Status::from_bool(cf.defect <= 1e-10 && cf.gap > 0.0))
            .residual(cf.defect)
            .expression(format!("lambda = {}, {}", cf.lambda[0], cf.lambda[1])),
        Err(e) => Check::failed("characteristic-fields", e),
    });
    out.push(attempt("characteristic-fields-flux", || {
        let flux = vec![
            vec![m.expr("v").map_err(s)?, m.expr("u").map_err(s)?],
            vec![Expr::one(), m.expr("v").map_err(s)?],
        ];
        let cf = characteristic_fields(&flux, &us, &[(0.5, 2.0), (-1.0, 1.0)], 50, &m.table).map_err(s)?;
        Ok(Check::new("characteristic-fields-flux", Status::from_bool(cf.defect <= 1e-10 && cf.gap > 0.0))
            .residual(cf.defect)
            .expression(format!("lambda = {}, {}", cf.lambda[0], cf.lambda[1])))
    }));
    if let Ok(cf) = &fields {
        let report = {
            let (x, t) = (Expr::symbol(&xs[0]), Expr::symbol(&xs[1]));
            let s_i = |i: usize| crate::expr::normalize(&(&x - &t * &cf.lambda[i]));
            let alphas = [Expr::call(crate::expr::Elementary::Sin, s_i(0)), Expr::powi(s_i(1), 2)];
            let comp = |k: usize| crate::expr::normalize(&(&alphas[0] * &cf.right[0][k] + &alphas[1] * &cf.right[1][k]));
            let cand = HyperbolicCandidate {
                xi: x.clone(),
                tau: t.clone(),
                phi: comp(0),
                psi: comp(1),
                alphas: Some(alphas.clone()),
                betas: Some(cf.right.clone()),
            };
            let vars = [xs[0].clone(), xs[1].clone(), us[0].clone(), us[1].clone()];
            verify_hyperbolic_reduction(&a, &cand, Some(cf), &vars, &[(-1.0, 1.0); 4], 50, &m.table).map_err(s)
        };
        match report {
            Ok(r) => {
                out.push(Check::bound("hyperbolic-first", r.first, 1e-10));
                out.push(Check::bound("hyperbolic-second", r.second, 1e-10));
                out.push(Check::bound("hyperbolic-m", r.m_equation, 1e-10));
                if let Some(v) = r.relations {
                    out.push(Check::bound("hyperbolic-relations", v, 1e-10));
                }
            }
            Err(e) => out.push(Check::failed("hyperbolic-first", e)),
        }
    }
    let rotation = vec![vec![Expr::zero(), Expr::one()], vec![Expr::int(-1), Expr::zero()]];
    out.push(match characteristic_fields(&rotation, &us, &square, 10, &m.table) {
        Err(FactorError::NotHyperbolic(pt)) => Check::new("not-hyperbolic-control", Status::Pass).note(format!("complex eigenvalues at {pt:?}")),
        Err(e) => Check::failed("not-hyperbolic-control", e),
        Ok(_) => Check::new("not-hyperbolic-control", Status::Fail).note("rotation accepted as hyperbolic"),
    });
    out
}

fn invariance_extras(m: &Model, _seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let smooth = |name: &str, w: &str, u: &str, domain: &[(f64, f64)], expect: bool| {
        attempt(name, || {
            let w = generator(m, w)?;
            let u = [m.expr(u).map_err(s)?];
            let r = invariance_check(&w.field, InvarianceTarget::Smooth { u: &u, domain }, &m.spec, &m.table).map_err(s)?;
            Ok(invariance_result(name, &r, expect))
        })
    };
    let unit = [(-1.0, 1.0), (0.5, 2.0)];
    out.push(smooth("invariance-smooth:travel", "travel", "sin(x - c*t)", &unit, true));
    out.push(smooth("invariance-smooth:skew", "skew", "sin(x - c*t)", &unit, false));
    out.push(smooth("invariance-smooth:scale", "scale", "x/t", &unit, true));
    let Some(shock) = m.net("shock") else { return out };
    let Some(phi) = shock.tests.first() else { return out };
    out.push(attempt("invariance-net:travel", || {
        let w = generator(m, "travel")?;
        let target = InvarianceTarget::Net {
            net: &shock.net,
            phi,
            grid: &m.grid,
        };
        let r = invariance_check(&w.field, target, &m.spec, &m.table).map_err(s)?;
        Ok(invariance_result("invariance-net:travel", &r, true))
    }));
    let Some(sys) = m.system.as_ref() else { return out };
    for (g, eta) in [("Gx", 0.25), ("G1", 0.05)] {
        let name = format!("image-association:{g}");
        out.push(attempt(&name.clone(), || {
            let g = group(m, g)?;
            let image = apply_group(&shock.net, &g.action, eta, &m.spec, &m.table).map_err(s)?;
            let curves = weak_residual_curve(sys, &image, phi, &m.grid, &m.table).map_err(s)?;
            Ok(super::tasks::association_check(name, &curves, &shock.expect))
        }));
    }
    out.push(attempt("image-evaluable:G1", || {
        let g = group(m, "G1")?;
        let image = apply_group(&shock.net, &g.action, 0.05, &m.spec, &m.table).map_err(s)?;
        let mut worst: f64 = 0.0;
        for i in 0..=8 {
            for j in 0..=8 {
                let pt: Vec<f64> = image
                    .domain
                    .iter()
                    .zip([i, j])
                    .map(|(&(a, b), k)| a + (b - a) * k as f64 / 8.0)
                    .collect();
                let v = image.evaluate(0, &pt, 0.01, &m.table).map_err(s)?;
                if !v.is_finite() {
                    return Ok(Check::new("image-evaluable:G1", Status::Fail).note(format!("non-finite value at {pt:?}")));
                }
                worst = worst.max(v.abs());
            }
        }
        Ok(Check::new("image-evaluable:G1", Status::Pass).note(format!("max |u| = {worst:.3}")))
    }));
    out
}
