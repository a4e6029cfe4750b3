//! Solved forms, factor matrices Q(eta, z) with Delta(pr g_eta z) = Q Delta(z),
//! infinitesimal factors, determining conditions, growth of the solved
//! Jacobian, invariance operators and characteristic fields of 2x2 systems.
//!
//! Semilinear systems are written Delta = L u - F.

use crate::colombeau::{weak_residual_curve, ColombeauError, GNet, ResidualCurve, TestFunction, Verdict};
use crate::expr::{
    differentiate, is_semantic_zero, normalize, substitute, Bindings, Compiled, Expr, ExprError, Node, Symbol,
    SymbolTable,
};
use crate::jet::{
    prolong_function, prolong_group_action, prolong_vector_field, symbolic_inverse, total_derivative,
    total_derivative_multi, Coord, GroupAction, JetError, JetSpec, VectorField,
};
use crate::numerics::{gl_fixed, linear_fit, rk4_solve, solve_linear, NumericsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Colombeau(#[from] ColombeauError),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("solved Jacobian is singular at {0:?}")]
    Singular(Vec<f64>),
    #[error("inverse of the solved form unavailable: {0}")]
    InverseFailed(String),
    #[error("not factorizable: remainder {residual:.3e} at {witness:?}")]
    NotFactorizable { witness: Vec<f64>, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("not strictly hyperbolic at {0:?}")]
    NotHyperbolic(Vec<f64>),
    #[error("generator has no linear decomposition (alpha, beta)")]
    MissingLinearPart,
    #[error("{0}")]
    Invalid(String),
}

type Result<T, E = FactorError> = std::result::Result<T, E>;
type Matrix = Vec<Vec<Expr>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Linear,
    Semilinear,
    Quasilinear,
    General,
}

#[derive(Clone, Debug)]
pub struct PDESystem {
    pub spec: JetSpec,
    pub equations: Vec<Expr>,
    /// Indices into the jet coordinates, all >= p; may be empty for
    /// auxiliary systems used only for residuals.
    pub solved: Vec<usize>,
    pub class: Classification,
    /// A(u) when every equation reads u^i_t + sum_j A_ij(u) u^j_x.
    pub quasi_matrix: Option<Matrix>,
}

fn jet_syms(spec: &JetSpec) -> Vec<Symbol> {
    spec.symbols()[spec.p()..].to_vec()
}

impl PDESystem {
    pub fn new(spec: JetSpec, equations: Vec<Expr>, solved: Vec<usize>, table: &SymbolTable) -> Result<Self> {
        let p = spec.p();
        if !solved.is_empty() && solved.len() != equations.len() {
            return Err(FactorError::InvalidSystem(format!(
                "{} equations but {} solved coordinates",
                equations.len(),
                solved.len()
            )));
        }
        if solved.iter().any(|&k| k < p || k >= spec.len()) {
            return Err(FactorError::InvalidSystem("solved indices must be jet coordinates".into()));
        }
        if solved.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FactorError::InvalidSystem("solved indices must be strictly increasing".into()));
        }
        let equations: Vec<Expr> = equations.iter().map(normalize).collect();
        for e in &equations {
            for s in e.free_symbols() {
                if spec.index_of(&s).is_none() && !matches!(s.as_str(), "eta" | "tau" | "eps") && table.role(&s).is_none() {
                    return Err(FactorError::InvalidSystem(format!("unknown symbol `{s}`")));
                }
            }
        }
        let mut sys = PDESystem {
            spec,
            equations,
            solved,
            class: Classification::General,
            quasi_matrix: None,
        };
        sys.quasi_matrix = sys.detect_quasilinear(table)?;
        sys.class = sys.classify(table)?;
        Ok(sys)
    }

    pub fn s(&self) -> usize {
        self.equations.len()
    }

    pub fn solved_symbols(&self) -> Vec<Symbol> {
        self.solved.iter().map(|&k| self.spec.symbol(k).clone()).collect()
    }

    /// Affine in every jet coordinate (with x-only coefficients), or in every
    /// derivative coordinate.
    fn classify(&self, table: &SymbolTable) -> Result<Classification> {
        let spec = &self.spec;
        let jets = jet_syms(spec);
        let mut linear = true;
        let mut semilinear = true;
        for e in &self.equations {
            for z in &jets {
                if !e.contains_symbol(z) {
                    continue;
                }
                let d = differentiate(e, z, table)?;
                let k = spec.index_of(z).unwrap();
                if spec.has_dependent(&d) {
                    linear = false;
                    if spec.order_of(k) >= 1 {
                        semilinear = false;
                    }
                }
            }
        }
        Ok(if linear {
            Classification::Linear
        } else if semilinear {
            Classification::Semilinear
        } else if self.quasi_matrix.is_some() {
            Classification::Quasilinear
        } else {
            Classification::General
        })
    }

    fn detect_quasilinear(&self, table: &SymbolTable) -> Result<Option<Matrix>> {
        let spec = &self.spec;
        if spec.p() != 2 || spec.order != 1 || self.s() != spec.q() {
            return Ok(None);
        }
        let (xi, ti) = (0usize, 1usize);
        let indep = spec.independent_symbols();
        let mut a = Vec::new();
        for (i, e) in self.equations.iter().enumerate() {
            let mut row = Vec::new();
            let mut rest = e.clone();
            for j in 0..spec.q() {
                let ut = spec.symbol(spec.dependent_index(j, &[ti]).unwrap()).clone();
                let ux = spec.symbol(spec.dependent_index(j, &[xi]).unwrap()).clone();
                let ct = differentiate(e, &ut, table)?;
                let want = if i == j { Expr::one() } else { Expr::zero() };
                if !is_semantic_zero(&(&ct - want), table) {
                    return Ok(None);
                }
                let cx = differentiate(e, &ux, table)?;
                if spec.has_derivatives(&cx) || indep.iter().any(|s| cx.contains_symbol(s)) {
                    return Ok(None);
                }
                rest = rest - &ct * Expr::symbol(&ut) - &cx * Expr::symbol(&ux);
                row.push(cx);
            }
            if !is_semantic_zero(&rest, table) {
                return Ok(None);
            }
            a.push(row);
        }
        Ok(Some(a))
    }

    /// J_{k1..ks}(Delta).
    pub fn solved_jacobian(&self, table: &SymbolTable) -> Result<Matrix> {
        if self.solved.is_empty() {
            return Err(FactorError::InvalidSystem("no solved coordinates".into()));
        }
        let ys = self.solved_symbols();
        self.equations
            .iter()
            .map(|e| ys.iter().map(|y| differentiate(e, y, table).map_err(FactorError::from)).collect())
            .collect()
    }
}

fn sample_in(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds.iter().map(|&(a, b)| if a == b { a } else { rng.gen_range(a..b) }).collect()
}

/// Sample box for jets: x from `domain`, jet coordinates from [-r, r].
fn jet_box(spec: &JetSpec, domain: &[(f64, f64)], r: f64) -> Vec<(f64, f64)> {
    let mut b = domain.to_vec();
    b.resize(spec.p(), (-2.0, 2.0));
    b.extend(std::iter::repeat_n((-r, r), spec.len() - spec.p()));
    b
}

fn compile_all(es: &[Expr], vars: &[Symbol], table: &SymbolTable) -> Result<Vec<Compiled>> {
    es.iter()
        .map(|e| Compiled::new(e, vars, &Bindings::new(), table).map_err(FactorError::from))
        .collect()
}

fn compile_matrix(m: &Matrix, vars: &[Symbol], table: &SymbolTable) -> Result<Vec<Vec<Compiled>>> {
    m.iter().map(|row| compile_all(row, vars, table)).collect()
}

fn eval_all(cs: &[Compiled], args: &[f64]) -> Result<Vec<f64>, ExprError> {
    cs.iter().map(|c| c.eval(args)).collect()
}

fn eval_matrix(cs: &[Vec<Compiled>], args: &[f64]) -> Result<Vec<Vec<f64>>, ExprError> {
    cs.iter().map(|row| eval_all(row, args)).collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_linear(m, &e)
        })
        .collect();
    cols.map(|c| (0..n).map(|i| (0..n).map(|j| c[j][i]).collect()).collect())
}

/// Delta~(z) = (z', Delta(z)) and its inverse.
#[derive(Clone, Debug)]
pub struct SolvedForm {
    pub solved_symbols: Vec<Symbol>,
    pub jacobian: Matrix,
    pub determinant: Expr,
    /// For systems affine in the solved coordinates: z''_j in terms of
    /// (z', y''), with y''_j written with the solved coordinate's symbol.
    pub inverse: Option<Vec<Expr>>,
    pub round_trip_error: f64,
}

const SOLVED_SAMPLES: usize = 50;
const NEWTON_ITERS: usize = 20;
const NEWTON_TOL: f64 = 1e-12;

/// Newton solve of Delta(z', w) = target for the solved coordinates w,
/// starting from the given point.
struct NewtonInverse {
    spec_len: usize,
    solved: Vec<usize>,
    delta: Vec<Compiled>,
    jac: Vec<Vec<Compiled>>,
}

impl NewtonInverse {
    fn new(sys: &PDESystem, jac: &Matrix, table: &SymbolTable) -> Result<Self> {
        let vars = sys.spec.symbols();
        Ok(NewtonInverse {
            spec_len: vars.len(),
            solved: sys.solved.clone(),
            delta: compile_all(&sys.equations, &vars, table)?,
            jac: compile_matrix(jac, &vars, table)?,
        })
    }

    fn solve(&self, z: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(z.len(), self.spec_len);
        let mut w = z.to_vec();
        for _ in 0..NEWTON_ITERS {
            let d = eval_all(&self.delta, &w)?;
            let r: Vec<f64> = d.iter().zip(target).map(|(a, b)| a - b).collect();
            let scale = 1.0 + target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if r.iter().all(|v| v.abs() <= NEWTON_TOL * scale) {
                return Ok(w);
            }
            let j = eval_matrix(&self.jac, &w)?;
            let step = solve_linear(&j, &r)
                .ok_or_else(|| FactorError::InverseFailed(format!("singular Newton step at {w:?}")))?;
            for (k, &idx) in self.solved.iter().enumerate() {
                w[idx] -= step[k];
            }
        }
        let d = eval_all(&self.delta, &w)?;
        let res = d.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = 1.0 + target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res <= 1e3 * NEWTON_TOL * scale {
            Ok(w)
        } else {
            Err(FactorError::InverseFailed(format!("Newton residual {res:.3e} after {NEWTON_ITERS} steps")))
        }
    }
}

pub fn build_solved_form(sys: &PDESystem, seed: u64, table: &SymbolTable) -> Result<SolvedForm> {
    let jac = sys.solved_jacobian(table)?;
    let ys = sys.solved_symbols();
    let (jinv, det) = symbolic_inverse(&jac).map_err(|e| match e {
        JetError::Singular => FactorError::Singular(vec![]),
        e => e.into(),
    })?;
    let affine = jac.iter().flatten().all(|e| ys.iter().all(|y| !e.contains_symbol(y)));
    let inverse = if affine {
        let zero: HashMap<Symbol, Expr> = ys.iter().map(|y| (y.clone(), Expr::zero())).collect();
        let rest: Vec<Expr> = sys.equations.iter().map(|e| normalize(&substitute(e, &zero))).collect();
        let inv: Vec<Expr> = jinv
            .iter()
            .map(|row| {
                normalize(&Expr::sum(
                    row.iter()
                        .zip(ys.iter().zip(&rest))
                        .map(|(a, (y, r))| a * (Expr::symbol(y) - r))
                        .collect(),
                ))
            })
            .collect();
        Some(inv)
    } else {
        None
    };
    let vars = sys.spec.symbols();
    let det_c = Compiled::new(&det, &vars, &Bindings::new(), table)?;
    let delta = compile_all(&sys.equations, &vars, table)?;
    let inv_c = match &inverse {
        Some(inv) => Some(compile_all(inv, &vars, table)?),
        None => None,
    };
    let newton = NewtonInverse::new(sys, &jac, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(&sys.spec, &[], 2.0);
    let mut worst: f64 = 0.0;
    for _ in 0..SOLVED_SAMPLES {
        let z = sample_in(&mut rng, &bounds);
        let d = det_c.eval(&z)?;
        if d.abs() <= 1e-12 {
            return Err(FactorError::Singular(z));
        }
        let y = eval_all(&delta, &z)?;
        let back: Vec<f64> = match &inv_c {
            Some(c) => {
                let mut arg = z.clone();
                for (k, &idx) in sys.solved.iter().enumerate() {
                    arg[idx] = y[k];
                }
                eval_all(c, &arg)?
            }
            None => {
                let mut start = z.clone();
                for &idx in &sys.solved {
                    start[idx] = 0.0;
                }
                let w = newton.solve(&start, &y)?;
                sys.solved.iter().map(|&i| w[i]).collect()
            }
        };
        for (k, &idx) in sys.solved.iter().enumerate() {
            worst = worst.max((back[k] - z[idx]).abs() / (1.0 + z[idx].abs()));
        }
    }
    if worst > 1e-9 {
        return Err(FactorError::InverseFailed(format!("round trip error {worst:.3e}")));
    }
    Ok(SolvedForm {
        solved_symbols: ys,
        jacobian: jac,
        determinant: det,
        inverse,
        round_trip_error: worst,
    })
}

/// Searches random pairs sharing z' for a collision Delta(z1) = Delta(z2)
/// with z1'' != z2''. Returns a colliding pair if one is found.
pub fn injectivity_spot_check(sys: &PDESystem, pairs: usize, seed: u64, table: &SymbolTable) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let vars = sys.spec.symbols();
    let delta = compile_all(&sys.equations, &vars, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(&sys.spec, &[], 2.0);
    for _ in 0..pairs {
        let z1 = sample_in(&mut rng, &bounds);
        let mut z2 = z1.clone();
        for &i in &sys.solved {
            z2[i] = rng.gen_range(-2.0..2.0);
        }
        let (Ok(a), Ok(b)) = (eval_all(&delta, &z1), eval_all(&delta, &z2)) else { continue };
        let dz = sys.solved.iter().map(|&i| (z1[i] - z2[i]).abs()).fold(0.0, f64::max);
        let dd = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if dz > 1e-6 && dd <= 1e-12 {
            return Ok(Some((z1, z2)));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dependence {
    EtaX,
    EtaXU,
    FullJet,
}

#[derive(Clone, Debug)]
pub enum FactorRepr {
    Symbolic(Matrix),
    /// Integrand in tau, integrated by Gauss-Legendre of the given order.
    Quadrature { integrand: Matrix, order: usize },
    /// Per-point Newton inverse: Q = int J(f) J(Delta)^-1 at the preimage of (z', tau Delta(z)).
    Newton { df: Matrix, ddelta: Matrix, order: usize },
}

/// s x s factor matrix in (eta, z).
#[derive(Clone, Debug)]
pub struct FactorMatrix {
    pub s: usize,
    pub spec: JetSpec,
    pub repr: FactorRepr,
    pub dependence: Dependence,
    pub eta_range: (f64, f64),
    equations: Vec<Expr>,
    solved: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorMethod {
    /// Exact termwise integration when the integrand is polynomial in tau.
    Auto,
    /// Always Gauss-Legendre in tau.
    Quadrature,
}

const TAU_ORDER: usize = 32;

fn dependence_of(exprs: &[&Expr], spec: &JetSpec) -> Dependence {
    let mut dep = Dependence::EtaX;
    for e in exprs {
        for s in e.free_symbols() {
            if let Some(k) = spec.index_of(&s) {
                if k >= spec.p() {
                    dep = dep.max(if spec.order_of(k) == 0 { Dependence::EtaXU } else { Dependence::FullJet });
                }
            }
        }
    }
    dep
}

/// Degree of e as a polynomial in `s`, or None if s occurs non-polynomially.
pub fn poly_degree(e: &Expr, s: &Symbol) -> Option<u32> {
    if !e.contains_symbol(s) {
        return Some(0);
    }
    match e.node() {
        Node::Symbol(x) if x == s => Some(1),
        Node::Add(ts) => ts.iter().map(|t| poly_degree(t, s)).try_fold(0, |m, d| d.map(|d| m.max(d))),
        Node::Mul(fs) => fs.iter().map(|f| poly_degree(f, s)).try_fold(0, |m, d| d.map(|d| m + d)),
        Node::Pow(b, r) if r.is_integer() && *r.numer() >= 0 => {
            poly_degree(b, s).map(|d| d * (*r.numer() as u32))
        }
        _ => None,
    }
}

/// Exact integral over tau in [0, 1] of a polynomial in tau, from its Taylor
/// coefficients at 0.
fn integrate_poly_tau(e: &Expr, tau: &Symbol, degree: u32, table: &SymbolTable) -> Result<Expr> {
    let zero = HashMap::from([(tau.clone(), Expr::zero())]);
    let mut d = e.clone();
    let mut fact = 1i64;
    let mut terms = Vec::new();
    for k in 0..=degree as i64 {
        if k > 0 {
            d = differentiate(&d, tau, table)?;
            fact *= k;
        }
        terms.push(Expr::frac(1, fact * (k + 1)) * substitute(&d, &zero));
    }
    Ok(normalize(&Expr::sum(terms)))
}

pub fn compute_factor_q(sys: &PDESystem, g: &GroupAction, method: FactorMethod, table: &SymbolTable) -> Result<FactorMatrix> {
    let spec = &sys.spec;
    let sf = build_solved_form(sys, 0x5eed, table)?;
    let pa = prolong_group_action(g, spec, table)?;
    let to_bar: HashMap<Symbol, Expr> = spec.symbols().into_iter().zip(pa.coords.iter().cloned()).collect();
    let f_eta: Vec<Expr> = sys.equations.iter().map(|e| normalize(&substitute(e, &to_bar))).collect();
    let ys = &sf.solved_symbols;
    let tau = Symbol::new("tau");
    let repr = match &sf.inverse {
        Some(inv) => {
            let to_pre: HashMap<Symbol, Expr> = ys.iter().cloned().zip(inv.iter().cloned()).collect();
            let composed: Vec<Expr> = f_eta.iter().map(|f| substitute(f, &to_pre)).collect();
            let scaled: HashMap<Symbol, Expr> = ys
                .iter()
                .cloned()
                .zip(sys.equations.iter().map(|d| Expr::symbol(&tau) * d))
                .collect();
            let integrand: Matrix = composed
                .iter()
                .map(|f| {
                    ys.iter()
                        .map(|y| Ok(normalize(&substitute(&differentiate(f, y, table)?, &scaled))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let degrees: Option<Vec<u32>> = integrand.iter().flatten().map(|e| poly_degree(e, &tau)).collect();
            match (method, degrees) {
                (FactorMethod::Auto, Some(ds)) => {
                    let s = sys.s();
                    let mut q = vec![vec![Expr::zero(); s]; s];
                    for (n, e) in integrand.iter().flatten().enumerate() {
                        q[n / s][n % s] = integrate_poly_tau(e, &tau, ds[n], table)?;
                    }
                    FactorRepr::Symbolic(q)
                }
                _ => FactorRepr::Quadrature { integrand, order: TAU_ORDER },
            }
        }
        None => {
            let df: Matrix = f_eta
                .iter()
                .map(|f| ys.iter().map(|y| differentiate(f, y, table).map_err(FactorError::from)).collect())
                .collect::<Result<_>>()?;
            FactorRepr::Newton {
                df,
                ddelta: sf.jacobian.clone(),
                order: TAU_ORDER,
            }
        }
    };
    let dependence = match &repr {
        FactorRepr::Symbolic(m) | FactorRepr::Quadrature { integrand: m, .. } => {
            dependence_of(&m.iter().flatten().collect::<Vec<_>>(), spec)
        }
        FactorRepr::Newton { .. } => Dependence::FullJet,
    };
    let q = FactorMatrix {
        s: sys.s(),
        spec: spec.clone(),
        repr,
        dependence,
        eta_range: g.eta_range,
        equations: sys.equations.clone(),
        solved: sys.solved.clone(),
    };
    // Q(0, z) = I
    let c = q.compile(table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d);
    let bounds = jet_box(spec, &g.domain, 2.0);
    let mut checked = 0;
    for _ in 0..40 {
        let z = sample_in(&mut rng, &bounds);
        let Ok(m) = c.eval(0.0, &z) else { continue };
        checked += 1;
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (v - want).abs() > 1e-10 {
                    return Err(FactorError::Invalid(format!("Q(0, z) is not the identity at {z:?}")));
                }
            }
        }
        if checked >= 10 {
            break;
        }
    }
    Ok(q)
}

impl FactorMatrix {
    /// A factor given in closed form, e.g. from a formula.
    pub fn symbolic(sys: &PDESystem, q: Matrix, eta_range: (f64, f64)) -> Self {
        let q: Matrix = q.iter().map(|r| r.iter().map(normalize).collect()).collect();
        let dependence = dependence_of(&q.iter().flatten().collect::<Vec<_>>(), &sys.spec);
        FactorMatrix {
            s: sys.s(),
            spec: sys.spec.clone(),
            repr: FactorRepr::Symbolic(q),
            dependence,
            eta_range,
            equations: sys.equations.clone(),
            solved: sys.solved.clone(),
        }
    }

    pub fn as_symbolic(&self) -> Option<&Matrix> {
        match &self.repr {
            FactorRepr::Symbolic(m) => Some(m),
            _ => None,
        }
    }

    /// Rendered entries, or a description of the numeric representation.
    pub fn render(&self) -> String {
        let rows = |m: &Matrix| {
            m.iter()
                .map(|r| format!("[{}]", r.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &self.repr {
            FactorRepr::Symbolic(m) => format!("[{}]", rows(m)),
            FactorRepr::Quadrature { integrand, order } => {
                format!("int_0^1 [{}] dtau (Gauss-Legendre {order})", rows(integrand))
            }
            FactorRepr::Newton { order, .. } => format!("Newton inverse, Gauss-Legendre {order} in tau"),
        }
    }

    pub fn compile(&self, table: &SymbolTable) -> Result<CompiledFactor> {
        let mut vars = vec![Symbol::new("eta"), Symbol::new("tau")];
        vars.extend(self.spec.symbols());
        let kind = match &self.repr {
            FactorRepr::Symbolic(m) => CompiledKind::Direct(compile_matrix(m, &vars, table)?),
            FactorRepr::Quadrature { integrand, order } => CompiledKind::Tau(compile_matrix(integrand, &vars, table)?, *order),
            FactorRepr::Newton { df, ddelta, order } => {
                let sys_vars = self.spec.symbols();
                CompiledKind::Newton {
                    df: compile_matrix(df, &vars, table)?,
                    newton: NewtonInverse {
                        spec_len: sys_vars.len(),
                        solved: self.solved.clone(),
                        delta: compile_all(&self.equations, &sys_vars, table)?,
                        jac: compile_matrix(ddelta, &sys_vars, table)?,
                    },
                    order: *order,
                }
            }
        };
        Ok(CompiledFactor { s: self.s, kind })
    }
}

enum CompiledKind {
    Direct(Vec<Vec<Compiled>>),
    Tau(Vec<Vec<Compiled>>, usize),
    Newton {
        df: Vec<Vec<Compiled>>,
        newton: NewtonInverse,
        order: usize,
    },
}

pub struct CompiledFactor {
    pub s: usize,
    kind: CompiledKind,
}

impl CompiledFactor {
    pub fn eval(&self, eta: f64, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut args = Vec::with_capacity(z.len() + 2);
        args.push(eta);
        args.push(0.0);
        args.extend_from_slice(z);
        match &self.kind {
            CompiledKind::Direct(m) => Ok(eval_matrix(m, &args)?),
            CompiledKind::Tau(m, order) => {
                let s = self.s;
                let mut out = vec![vec![0.0; s]; s];
                let fail = std::cell::RefCell::new(None);
                for i in 0..s {
                    for j in 0..s {
                        let f = |tau: f64| {
                            let mut a = args.clone();
                            a[1] = tau;
                            m[i][j].eval(&a).unwrap_or_else(|e| {
                                fail.borrow_mut().get_or_insert(e);
                                f64::NAN
                            })
                        };
                        out[i][j] = gl_fixed(&f, 0.0, 1.0, *order);
                    }
                }
                if let Some(e) = fail.into_inner() {
                    return Err(e.into());
                }
                Ok(out)
            }
            CompiledKind::Newton { df, newton, order } => {
                let s = self.s;
                let delta = eval_all(&newton.delta, z)?;
                let (nodes, weights) = crate::numerics::gauss_legendre(*order);
                let mut out = vec![vec![0.0; s]; s];
                let mut w = z.to_vec();
                let mut idx: Vec<usize> = (0..nodes.len()).collect();
                // march from tau = 1 (the point itself) downwards, seeding each solve
                idx.sort_by(|&a, &b| nodes[b].total_cmp(&nodes[a]));
                for k in idx {
                    let tau = 0.5 * (nodes[k] + 1.0);
                    let target: Vec<f64> = delta.iter().map(|d| tau * d).collect();
                    w = newton.solve(&w, &target)?;
                    let mut a = vec![eta, tau];
                    a.extend_from_slice(&w);
                    let jf = eval_matrix(df, &a)?;
                    let jd = eval_matrix(&newton.jac, &w)?;
                    let jd_inv = invert(&jd).ok_or_else(|| FactorError::Singular(w.clone()))?;
                    for i in 0..s {
                        for j in 0..s {
                            let v: f64 = (0..s).map(|l| jf[i][l] * jd_inv[l][j]).sum();
                            out[i][j] += 0.5 * weights[k] * v;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub samples: usize,
    pub eta_range: (f64, f64),
    pub tol: f64,
    pub seed: u64,
    pub jet_radius: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 100,
            eta_range: (-0.1, 0.1),
            tol: 1e-8,
            seed: 42,
            jet_radius: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationReport {
    pub max_residual: f64,
    pub functional_residual: f64,
    pub samples: usize,
    pub escapes: usize,
    pub pass: bool,
}

/// max |Delta(pr g_eta z) - Q(eta, z) Delta(z)| over random (eta, z), plus the
/// same identity along jets of random polynomials u(x).
pub fn verify_factorization(
    sys: &PDESystem,
    g: &GroupAction,
    q: &FactorMatrix,
    opts: &VerifyOptions,
    table: &SymbolTable,
) -> Result<FactorizationReport> {
    let spec = &sys.spec;
    let pa = prolong_group_action(g, spec, table)?.compile(table)?;
    let vars = spec.symbols();
    let delta = compile_all(&sys.equations, &vars, table)?;
    let qc = q.compile(table)?;
    let residual_at = |eta: f64, z: &[f64]| -> Option<f64> {
        let zbar = pa.apply(eta, z).ok()?;
        let lhs = eval_all(&delta, &zbar).ok()?;
        let d = eval_all(&delta, z).ok()?;
        let m = qc.eval(eta, z).ok()?;
        let rhs = mat_vec(&m, &d);
        let r = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.is_finite().then_some(r)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bounds = jet_box(spec, &g.domain, opts.jet_radius);
    let draws: Vec<(f64, Vec<f64>)> = (0..opts.samples * 20)
        .map(|_| (rng.gen_range(opts.eta_range.0..=opts.eta_range.1), sample_in(&mut rng, &bounds)))
        .collect();
    let results: Vec<Option<f64>> = draws.par_iter().map(|(eta, z)| residual_at(*eta, z)).collect();
    let mut max_residual: f64 = 0.0;
    let mut used = 0;
    let mut escapes = 0;
    for r in results {
        if used == opts.samples {
            break;
        }
        match r {
            Some(v) => {
                max_residual = max_residual.max(v);
                used += 1;
            }
            None => escapes += 1,
        }
    }
    if used < opts.samples {
        return Err(FactorError::Invalid(format!(
            "only {used} of {} samples stayed inside the action domain",
            opts.samples
        )));
    }
    // functional form along random quadratic-plus-one polynomials
    let mut functional: f64 = 0.0;
    let xs = spec.independent_symbols();
    for _ in 0..10 {
        let us: Vec<Expr> = (0..spec.q())
            .map(|_| random_polynomial(&mut rng, &xs, spec.order + 1))
            .collect();
        let jets = prolong_function(&us, spec, table)?;
        for _ in 0..5 {
            let x = sample_in(&mut rng, &g.domain[..spec.p().min(g.domain.len())]);
            let Ok(z) = jets.point_at(spec, &x, table) else { continue };
            let eta = rng.gen_range(opts.eta_range.0..=opts.eta_range.1);
            if let Some(r) = residual_at(eta, &z) {
                functional = functional.max(r);
            }
        }
    }
    Ok(FactorizationReport {
        max_residual,
        functional_residual: functional,
        samples: used,
        escapes,
        pass: max_residual <= opts.tol && functional <= opts.tol,
    })
}

fn random_polynomial(rng: &mut ChaCha8Rng, xs: &[Symbol], degree: usize) -> Expr {
    let mut monomials: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..degree {
        let mut next = monomials.clone();
        for m in &monomials {
            if m.len() + 1 > degree {
                continue;
            }
            for i in m.last().copied().unwrap_or(0)..xs.len() {
                let mut n = m.clone();
                n.push(i);
                if !next.contains(&n) {
                    next.push(n);
                }
            }
        }
        monomials = next;
    }
    let terms = monomials
        .into_iter()
        .map(|m| {
            let c = (rng.gen_range(-1.0..1.0f64) * 64.0).round() / 64.0;
            Expr::float(c) * Expr::product(m.iter().map(|&i| Expr::symbol(&xs[i])).collect())
        })
        .collect();
    normalize(&Expr::sum(terms))
}

/// pr v(Delta) = Q~ Delta with Q~ independent of eta.
#[derive(Clone, Debug)]
pub struct InfinitesimalFactor {
    pub qtilde: FactorMatrix,
    /// pr v(Delta) - Q~ Delta; zero for a factorizable symmetry.
    pub remainder: Vec<Expr>,
}

fn infinitesimal_parts(sys: &PDESystem, v: &VectorField, table: &SymbolTable) -> Result<(Matrix, Vec<Expr>)> {
    if sys.solved.is_empty() {
        return Err(FactorError::InvalidSystem("no solved coordinates".into()));
    }
    let spec = &sys.spec;
    let ys = sys.solved_symbols();
    let jac = sys.solved_jacobian(table)?;
    if jac.iter().flatten().any(|e| ys.iter().any(|y| e.contains_symbol(y))) {
        return Err(FactorError::Unsupported("system is not linear in its solved coordinates".into()));
    }
    let coeffs = prolong_vector_field(v, spec, table)?;
    let map: HashMap<Symbol, Expr> = spec.symbols().into_iter().zip(coeffs).collect();
    // pr v(Delta_i) = sum_k coeff_k dDelta_i/dz_k
    let prv: Vec<Expr> = sys
        .equations
        .iter()
        .map(|e| {
            let terms = e
                .free_symbols()
                .into_iter()
                .filter_map(|s| map.get(&s).map(|c| (s, c.clone())))
                .map(|(s, c)| Ok(c * differentiate(e, &s, table)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(normalize(&Expr::sum(terms)))
        })
        .collect::<Result<_>>()?;
    let mp: Matrix = prv
        .iter()
        .map(|p| ys.iter().map(|y| differentiate(p, y, table).map_err(FactorError::from)).collect())
        .collect::<Result<_>>()?;
    let (jinv, _) = symbolic_inverse(&jac)?;
    let s = sys.s();
    let qt: Matrix = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| normalize(&Expr::sum((0..s).map(|l| &mp[i][l] * &jinv[l][j]).collect())))
                .collect()
        })
        .collect();
    let remainder = (0..s)
        .map(|i| {
            let qd = Expr::sum((0..s).map(|j| &qt[i][j] * &sys.equations[j]).collect());
            normalize(&(&prv[i] - qd))
        })
        .collect();
    Ok((qt, remainder))
}

pub fn infinitesimal_factor(sys: &PDESystem, v: &VectorField, table: &SymbolTable) -> Result<InfinitesimalFactor> {
    let (qt, remainder) = infinitesimal_parts(sys, v, table)?;
    for r in &remainder {
        if !is_semantic_zero(r, table) {
            let (witness, residual) = witness_of(r, &sys.spec, table);
            return Err(FactorError::NotFactorizable { witness, residual });
        }
    }
    Ok(InfinitesimalFactor {
        qtilde: FactorMatrix::symbolic(sys, qt, (0.0, 0.0)),
        remainder,
    })
}

/// Sample point with the largest |e|.
fn witness_of(e: &Expr, spec: &JetSpec, table: &SymbolTable) -> (Vec<f64>, f64) {
    let vars = spec.symbols();
    let Ok(c) = Compiled::new(e, &vars, &Bindings::new(), table) else {
        return (vec![], f64::NAN);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bounds = jet_box(spec, &[], 2.0);
    let mut best = (vec![], 0.0);
    for _ in 0..100 {
        let z = sample_in(&mut rng, &bounds);
        if let Ok(v) = c.eval(&z) {
            if v.abs() > best.1 {
                best = (z, v.abs());
            }
        }
    }
    best
}

/// One coefficient of the remainder pr v(Delta) - Q~ Delta.
#[derive(Clone, Debug, Serialize)]
pub struct Condition {
    pub equation: usize,
    /// Monomial in the non-solved derivative coordinates, "1" for the free term.
    pub monomial: String,
    #[serde(serialize_with = "ser_expr")]
    pub expr: Expr,
}

fn ser_expr<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

fn total_degree(e: &Expr, syms: &[Symbol]) -> Option<u32> {
    // structural degree in all symbols at once: substitute s_k -> lambda s_k
    let lam = Symbol::new("#lambda");
    let map: HashMap<Symbol, Expr> = syms.iter().map(|s| (s.clone(), Expr::symbol(&lam) * Expr::symbol(s))).collect();
    let scaled = substitute(e, &map);
    poly_degree(&scaled, &lam)
}

/// Coefficients of e as a polynomial in `syms`, from derivatives at 0.
fn poly_coefficients(e: &Expr, syms: &[Symbol], table: &SymbolTable) -> Result<Vec<(Vec<u32>, Expr)>> {
    let degree = total_degree(e, syms)
        .ok_or_else(|| FactorError::Unsupported(format!("remainder is not polynomial in the jets: {e}")))?;
    let zero: HashMap<Symbol, Expr> = syms.iter().map(|s| (s.clone(), Expr::zero())).collect();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<u32>, Expr, usize)> = vec![(vec![0; syms.len()], e.clone(), 0)];
    while let Some((exps, d, start)) = stack.pop() {
        let c = normalize(&substitute(&d, &zero));
        let fact: i64 = exps.iter().map(|&k| (1..=k as i64).product::<i64>()).product();
        let coeff = normalize(&(Expr::frac(1, fact) * c));
        if !coeff.is_zero() {
            out.push((exps.clone(), coeff));
        }
        if exps.iter().sum::<u32>() >= degree {
            continue;
        }
        for (k, s) in syms.iter().enumerate().skip(start) {
            if !d.contains_symbol(s) {
                continue;
            }
            let dd = differentiate(&d, s, table)?;
            let mut e2 = exps.clone();
            e2[k] += 1;
            stack.push((e2, dd, k));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Coefficients of pr v(Delta) - Q~ Delta as a polynomial in the non-solved
/// derivative coordinates; the infinitesimal criterion holds iff all vanish.
pub fn determining_equations(sys: &PDESystem, ansatz: &VectorField, table: &SymbolTable) -> Result<Vec<Condition>> {
    if sys.class == Classification::General {
        return Err(FactorError::Unsupported("determining conditions need a linear, semilinear or quasilinear system".into()));
    }
    let (_, remainder) = infinitesimal_parts(sys, ansatz, table)?;
    let spec = &sys.spec;
    let free: Vec<Symbol> = (spec.p()..spec.len())
        .filter(|k| spec.order_of(*k) >= 1 && !sys.solved.contains(k))
        .map(|k| spec.symbol(k).clone())
        .collect();
    let mut out = Vec::new();
    for (i, r) in remainder.iter().enumerate() {
        for (exps, c) in poly_coefficients(r, &free, table)? {
            let mono: Vec<String> = exps
                .iter()
                .zip(&free)
                .filter(|(k, _)| **k > 0)
                .map(|(k, s)| if *k == 1 { s.to_string() } else { format!("{s}^{k}") })
                .collect();
            out.push(Condition {
                equation: i,
                monomial: if mono.is_empty() { "1".into() } else { mono.join("*") },
                expr: c,
            });
        }
    }
    Ok(out)
}

/// The two matrix equations for u_t + A(u) u_x and v = xi d_x + tau d_t + psi d_u:
/// psi_t + A psi_x (vector) and
/// A psi_u - xi_x A - xi_t I + sum_i psi^i dA/du^i - (psi_u - tau_t I - tau_x A) A.
pub fn quasilinear_conditions(sys: &PDESystem, v: &VectorField, table: &SymbolTable) -> Result<(Vec<Expr>, Matrix)> {
    let a = sys
        .quasi_matrix
        .as_ref()
        .ok_or_else(|| FactorError::Unsupported("system is not of the form u_t + A(u) u_x".into()))?;
    let spec = &sys.spec;
    let (x, t) = (spec.symbol(0).clone(), spec.symbol(1).clone());
    let us = spec.dependent_symbols();
    let s = sys.s();
    let d = |e: &Expr, w: &Symbol| differentiate(e, w, table);
    let psi = &v.phi;
    let mut first = Vec::new();
    for i in 0..s {
        let mut terms = vec![d(&psi[i], &t)?];
        for j in 0..s {
            terms.push(&a[i][j] * d(&psi[j], &x)?);
        }
        first.push(normalize(&Expr::sum(terms)));
    }
    let psi_u: Matrix = (0..s).map(|i| us.iter().map(|u| d(&psi[i], u)).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let (xi_x, xi_t) = (d(&v.xi[0], &x)?, d(&v.xi[0], &t)?);
    let (tau_x, tau_t) = (d(&v.xi[1], &x)?, d(&v.xi[1], &t)?);
    let mut second = vec![vec![Expr::zero(); s]; s];
    for i in 0..s {
        for j in 0..s {
            let mut terms = Vec::new();
            for l in 0..s {
                terms.push(&a[i][l] * &psi_u[l][j]);
                let inner = if i == l { &psi_u[i][l] - &tau_t - &tau_x * &a[i][l] } else { &psi_u[i][l] - &tau_x * &a[i][l] };
                terms.push(-(inner * &a[l][j]));
                terms.push(&psi[l] * d(&a[i][j], &us[l])?);
            }
            terms.push(-(&xi_x * &a[i][j]));
            if i == j {
                terms.push(-xi_t.clone());
            }
            second[i][j] = normalize(&Expr::sum(terms));
        }
    }
    Ok((first, second))
}

/// Q~ at eta-independent points, integrated along the prolonged flow:
/// dQ/deta = Q~(pr g_eta z) Q, Q(0) = I (RK4, 1024 steps).
pub fn principal_matrix_from_qtilde(
    qt: &FactorMatrix,
    g: &GroupAction,
    z: &[f64],
    eta: f64,
    table: &SymbolTable,
) -> Result<Vec<Vec<f64>>> {
    let s = qt.s;
    let qc = qt.compile(table)?;
    let pa = prolong_group_action(g, &qt.spec, table)?.compile(table)?;
    let rhs = |e: f64, y: &[f64]| -> Result<Vec<f64>, NumericsError> {
        let zb = pa.apply(e, z).map_err(|err| NumericsError::Evaluation(err.to_string()))?;
        let m = qc.eval(0.0, &zb).map_err(|err| NumericsError::Evaluation(err.to_string()))?;
        let mut out = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                out[i * s + j] = (0..s).map(|l| m[i][l] * y[l * s + j]).sum();
            }
        }
        Ok(out)
    };
    let mut y0 = vec![0.0; s * s];
    for i in 0..s {
        y0[i * s + i] = 1.0;
    }
    let y = rk4_solve(rhs, &y0, 0.0, eta, 1024)?;
    Ok((0..s).map(|i| y[i * s..(i + 1) * s].to_vec()).collect())
}

/// Max over samples of |Q(eta1 + eta2, z) - Q(eta2, pr g_eta1 z) Q(eta1, z)|.
pub fn cocycle_defect(q: &FactorMatrix, g: &GroupAction, samples: usize, seed: u64, table: &SymbolTable) -> Result<f64> {
    let qc = q.compile(table)?;
    let pa = prolong_group_action(g, &q.spec, table)?.compile(table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(&q.spec, &g.domain, 2.0);
    let (lo, hi) = g.eta_range;
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples * 20 {
        if used == samples {
            break;
        }
        let z = sample_in(&mut rng, &bounds);
        let (e1, e2) = (rng.gen_range(lo / 2.0..hi / 2.0), rng.gen_range(lo / 2.0..hi / 2.0));
        let Ok(zb) = pa.apply(e1, &z) else { continue };
        let (Ok(a), Ok(b), Ok(c)) = (qc.eval(e1 + e2, &z), qc.eval(e2, &zb), qc.eval(e1, &z)) else { continue };
        used += 1;
        let bc = crate::numerics::mat_mul(&b, &c);
        worst = worst.max(crate::numerics::max_abs_diff(&a, &bc));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthA3 {
    pub c: f64,
    pub r: f64,
    pub violation: Option<Vec<f64>>,
    pub samples: usize,
}

/// Samples |det J_{k1..ks}(Delta)| with x in K and jets in [-R, R], fits the
/// lower envelope against prod(1 + |z_k|), and looks for sign changes of the
/// determinant (which force a zero by continuity).
pub fn check_growth_a3(sys: &PDESystem, k_box: &[(f64, f64)], radius: f64, samples: usize, seed: u64, table: &SymbolTable) -> Result<GrowthA3> {
    let jac = sys.solved_jacobian(table)?;
    let det = match symbolic_inverse(&jac) {
        Ok((_, d)) => d,
        Err(JetError::Singular) => Expr::zero(),
        Err(e) => return Err(e.into()),
    };
    let spec = &sys.spec;
    let vars = spec.symbols();
    let c = Compiled::new(&det, &vars, &Bindings::new(), table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(spec, k_box, radius);
    let p = spec.p();
    let mut pts: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z = sample_in(&mut rng, &bounds);
        let d = c.eval(&z)?;
        let w: f64 = z[p..].iter().map(|v| 1.0 + v.abs()).product();
        pts.push((z, d, w));
    }
    let mut violation = pts.iter().find(|(_, d, _)| d.abs() <= 1e-14).map(|(z, _, _)| z.clone());
    if violation.is_none() {
        'outer: for a in 0..pts.len().min(200) {
            for b in a + 1..pts.len().min(200) {
                if pts[a].1.signum() != pts[b].1.signum() {
                    let (mut lo, mut hi) = (0.0f64, 1.0f64);
                    let at = |s: f64| -> Vec<f64> { pts[a].0.iter().zip(&pts[b].0).map(|(x, y)| x + s * (y - x)).collect() };
                    let sa = pts[a].1.signum();
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        let v = c.eval(&at(mid))?;
                        if v == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if v.signum() == sa {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    violation = Some(at(0.5 * (lo + hi)));
                    break 'outer;
                }
            }
        }
    }
    if violation.is_some() {
        return Ok(GrowthA3 { c: 0.0, r: f64::INFINITY, violation, samples });
    }
    // lower envelope in logarithmic bins of w
    let lw: Vec<f64> = pts.iter().map(|p| p.2.ln()).collect();
    let (wmin, wmax) = lw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    const BINS: usize = 12;
    let mut env: Vec<Option<(f64, f64)>> = vec![None; BINS];
    for (pt, l) in pts.iter().zip(&lw) {
        let k = (((l - wmin) / (wmax - wmin + 1e-300)) * BINS as f64).min(BINS as f64 - 1.0) as usize;
        let d = pt.1.abs().ln();
        match env[k] {
            Some((_, best)) if best <= d => {}
            _ => env[k] = Some((*l, d)),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = env.into_iter().flatten().unzip();
    let r = if xs.len() >= 3 { (-linear_fit(&xs, &ys).0).max(0.0) } else { 0.0 };
    let r = if r < 1e-12 { 0.0 } else { r };
    let cmin = pts.iter().map(|(_, d, w)| d.abs() * w.powf(r)).fold(f64::INFINITY, f64::min);
    Ok(GrowthA3 { c: cmin, r, violation: None, samples })
}

/// The smooth function or net that K u = beta is tested on.
pub enum InvarianceTarget<'a> {
    Smooth { u: &'a [Expr], domain: &'a [(f64, f64)] },
    Net { net: &'a GNet, phi: &'a TestFunction, grid: &'a [f64] },
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub exact_zero: bool,
    pub max_residual: Option<f64>,
    pub curves: Vec<ResidualCurve>,
    pub pass: bool,
}

/// K u - beta = (xi . D - alpha) u - beta as first-order jet expressions.
pub fn invariance_operator(v: &VectorField, spec: &JetSpec) -> Result<Vec<Expr>> {
    let lin = v.linear.as_ref().ok_or(FactorError::MissingLinearPart)?;
    let us = spec.dependent_symbols();
    let p = spec.p();
    (0..spec.q())
        .map(|a| {
            let mut terms = Vec::new();
            for i in 0..p {
                let k = spec
                    .dependent_index(a, &[i])
                    .ok_or_else(|| FactorError::Invalid("invariance needs first-order jets".into()))?;
                terms.push(&v.xi[i] * Expr::symbol(spec.symbol(k)));
            }
            for (b, u) in us.iter().enumerate() {
                terms.push(-(&lin.alpha[a][b] * Expr::symbol(u)));
            }
            terms.push(-lin.beta[a].clone());
            Ok(normalize(&Expr::sum(terms)))
        })
        .collect()
}

pub fn invariance_check(v: &VectorField, target: InvarianceTarget<'_>, spec: &JetSpec, table: &SymbolTable) -> Result<InvarianceReport> {
    let spec1 = spec.with_order(spec.order.max(1));
    let ops = invariance_operator(v, &spec1)?;
    match target {
        InvarianceTarget::Smooth { u, domain } => {
            let jets = prolong_function(u, &spec1, table)?;
            let map: HashMap<Symbol, Expr> = spec1.symbols().into_iter().zip(jets.values).skip(spec1.p()).collect();
            let res: Vec<Expr> = ops.iter().map(|e| normalize(&substitute(e, &map))).collect();
            let exact = res.iter().all(|r| is_semantic_zero(r, table));
            let max = if exact {
                0.0
            } else {
                let xs = spec1.independent_symbols();
                let cs = compile_all(&res, &xs, table)?;
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let mut m: f64 = 0.0;
                for _ in 0..100 {
                    let x = sample_in(&mut rng, domain);
                    for c in &cs {
                        m = m.max(c.eval(&x)?.abs());
                    }
                }
                m
            };
            Ok(InvarianceReport {
                exact_zero: exact,
                max_residual: Some(max),
                curves: vec![],
                pass: max <= 1e-10,
            })
        }
        InvarianceTarget::Net { net, phi, grid } => {
            let jets = prolong_function(&net.components, &spec1, table)?;
            let map: HashMap<Symbol, Expr> = spec1.symbols().into_iter().zip(jets.values).skip(spec1.p()).collect();
            let exact = ops.iter().all(|e| normalize(&substitute(e, &map)).is_zero());
            let aux = PDESystem::new(spec1.clone(), ops, vec![], table)?;
            let curves = weak_residual_curve(&aux, net, phi, grid, table)?;
            let pass = exact || curves.iter().all(|c| c.verdict == Verdict::ConvergesToZero);
            Ok(InvarianceReport {
                exact_zero: exact,
                max_residual: None,
                curves,
                pass,
            })
        }
    }
}

/// Berest's criterion for a linear system Delta = L u - F: the max over random
/// jets of |[xi D, L]u + L(alpha u + beta) - xi D F - Q~ (L u - F)|.
pub fn berest_defect(sys: &PDESystem, v: &VectorField, qt: &FactorMatrix, samples: usize, seed: u64, table: &SymbolTable) -> Result<f64> {
    if sys.class != Classification::Linear {
        return Err(FactorError::Unsupported("Berest's criterion needs a linear system".into()));
    }
    let lin = v.linear.as_ref().ok_or(FactorError::MissingLinearPart)?;
    let qm = qt
        .as_symbolic()
        .ok_or_else(|| FactorError::Unsupported("Q~ must be symbolic".into()))?;
    let spec = &sys.spec;
    let big = spec.with_order(spec.order + 1);
    let p = spec.p();
    let jets = jet_syms(spec);
    let zero: HashMap<Symbol, Expr> = jets.iter().map(|s| (s.clone(), Expr::zero())).collect();
    // coefficients a^i_k and F_i = -Delta_i(x, 0)
    let coeff: Vec<Vec<(usize, Expr)>> = sys
        .equations
        .iter()
        .map(|e| {
            jets.iter()
                .map(|s| Ok((spec.index_of(s).unwrap(), differentiate(e, s, table)?)))
                .filter(|r: &Result<(usize, Expr)>| r.as_ref().map_or(true, |(_, c)| !c.is_zero()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let f: Vec<Expr> = sys.equations.iter().map(|e| normalize(&(-substitute(e, &zero)))).collect();
    let apply_l = |w: &[Expr]| -> Result<Vec<Expr>> {
        coeff
            .iter()
            .map(|row| {
                let terms = row
                    .iter()
                    .map(|(k, a)| {
                        let Coord::Dependent { alpha, multi } = spec.coord(*k) else { unreachable!() };
                        Ok(a * total_derivative_multi(&w[*alpha], multi, &big, table)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(normalize(&Expr::sum(terms)))
            })
            .collect()
    };
    let xi_d = |e: &Expr| -> Result<Expr> {
        let terms = (0..p)
            .map(|j| Ok(&v.xi[j] * total_derivative(e, j, &big, table)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(normalize(&Expr::sum(terms)))
    };
    let us = spec.dependent_symbols();
    let u_exprs: Vec<Expr> = us.iter().map(Expr::symbol).collect();
    let lu = apply_l(&u_exprs)?;
    let xi_du: Vec<Expr> = u_exprs.iter().map(&xi_d).collect::<Result<_>>()?;
    let l_xi_du = apply_l(&xi_du)?;
    let au_b: Vec<Expr> = (0..spec.q())
        .map(|a| {
            let mut t: Vec<Expr> = (0..spec.q()).map(|b| &lin.alpha[a][b] * &u_exprs[b]).collect();
            t.push(lin.beta[a].clone());
            normalize(&Expr::sum(t))
        })
        .collect();
    let l_aub = apply_l(&au_b)?;
    let s = sys.s();
    let mut diffs = Vec::new();
    for i in 0..s {
        let lhs = xi_d(&lu[i])? - &l_xi_du[i] + &l_aub[i] - xi_d(&f[i])?;
        let rhs = Expr::sum((0..s).map(|j| &qm[i][j] * &sys.equations[j]).collect());
        diffs.push(normalize(&(lhs - rhs)));
    }
    let vars = big.symbols();
    let cs = compile_all(&diffs, &vars, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(&big, &[], 2.0);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let z = sample_in(&mut rng, &bounds);
        for c in &cs {
            worst = worst.max(c.eval(&z)?.abs());
        }
    }
    Ok(worst)
}

/// Eigen-decomposition of a 2x2 coefficient matrix A(u, v).
#[derive(Clone, Debug)]
pub struct CharacteristicFields {
    pub lambda: [Expr; 2],
    pub right: [[Expr; 2]; 2],
    pub left: [[Expr; 2]; 2],
    pub gap: f64,
    pub defect: f64,
}

pub fn characteristic_fields(a: &Matrix, vars: &[Symbol], region: &[(f64, f64)], samples: usize, table: &SymbolTable) -> Result<CharacteristicFields> {
    if a.len() != 2 || a.iter().any(|r| r.len() != 2) {
        return Err(FactorError::Invalid("characteristic fields need a 2x2 matrix".into()));
    }
    let (p, q, r, s) = (&a[0][0], &a[0][1], &a[1][0], &a[1][1]);
    let disc = normalize(&(Expr::powi(p - s, 2) + Expr::int(4) * q * r));
    let root = normalize(&Expr::pow(disc.clone(), crate::expr::Rational::new(1, 2)));
    let half = Expr::frac(1, 2);
    let tr = p + s;
    let lambda = [
        normalize(&(&half * (&tr - &root))),
        normalize(&(&half * (&tr + &root))),
    ];
    let right: [[Expr; 2]; 2] = std::array::from_fn(|i| {
        if !q.is_zero() {
            [q.clone(), normalize(&(&lambda[i] - p))]
        } else {
            [normalize(&(&lambda[i] - s)), r.clone()]
        }
    });
    let left_raw: [[Expr; 2]; 2] = std::array::from_fn(|i| {
        if !r.is_zero() {
            [r.clone(), normalize(&(&lambda[i] - p))]
        } else {
            [normalize(&(&lambda[i] - s)), q.clone()]
        }
    });
    let left: [[Expr; 2]; 2] = std::array::from_fn(|i| {
        let dot = &left_raw[i][0] * &right[i][0] + &left_raw[i][1] * &right[i][1];
        let inv = dot.recip();
        [normalize(&(&left_raw[i][0] * &inv)), normalize(&(&left_raw[i][1] * &inv))]
    });
    let disc_c = Compiled::new(&disc, vars, &Bindings::new(), table)?;
    let am = compile_matrix(a, vars, table)?;
    let lc = compile_all(&lambda, vars, table)?;
    let rc: Vec<Vec<Compiled>> = right.iter().map(|v| compile_all(v, vars, table)).collect::<Result<_>>()?;
    let ll: Vec<Vec<Compiled>> = left.iter().map(|v| compile_all(v, vars, table)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gap = f64::INFINITY;
    let mut defect: f64 = 0.0;
    for _ in 0..samples {
        let pt = sample_in(&mut rng, region);
        let d = disc_c.eval(&pt)?;
        if d <= 0.0 {
            return Err(FactorError::NotHyperbolic(pt));
        }
        let am = eval_matrix(&am, &pt)?;
        let lam = eval_all(&lc, &pt)?;
        gap = gap.min(lam[1] - lam[0]);
        for i in 0..2 {
            let rv = eval_all(&rc[i], &pt)?;
            let lv = eval_all(&ll[i], &pt)?;
            let ar = mat_vec(&am, &rv);
            for k in 0..2 {
                defect = defect.max((ar[k] - lam[i] * rv[k]).abs());
                let la = lv[0] * am[0][k] + lv[1] * am[1][k];
                defect = defect.max((la - lam[i] * lv[k]).abs());
            }
            let dot = lv[0] * rv[0] + lv[1] * rv[1];
            defect = defect.max((dot - 1.0).abs());
        }
    }
    Ok(CharacteristicFields { lambda, right, left, gap, defect })
}

/// Candidate coefficients of v = xi d_x + tau d_t + phi d_u + psi d_v.
#[derive(Clone, Debug)]
pub struct HyperbolicCandidate {
    pub xi: Expr,
    pub tau: Expr,
    pub phi: Expr,
    pub psi: Expr,
    /// alpha_i already composed with (x - t lambda_i, u, v), and beta_i (2-vectors).
    pub alphas: Option<[Expr; 2]>,
    pub betas: Option<[[Expr; 2]; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicReport {
    pub first: f64,
    pub second: f64,
    pub m_equation: f64,
    pub relations: Option<f64>,
}

/// Evaluates the first determining equation, the full second one, the reduced
/// M-equation and (optionally) the left/right vector relations at samples.
/// `vars` are (x, t, u, v).
pub fn verify_hyperbolic_reduction(
    a: &Matrix,
    cand: &HyperbolicCandidate,
    fields: Option<&CharacteristicFields>,
    vars: &[Symbol; 4],
    region: &[(f64, f64)],
    samples: usize,
    table: &SymbolTable,
) -> Result<HyperbolicReport> {
    let [x, t, u, v] = vars;
    let d = |e: &Expr, s: &Symbol| -> Result<Expr> { Ok(differentiate(e, s, table)?) };
    let mm = |m1: &Matrix, m2: &Matrix| -> Matrix {
        (0..2)
            .map(|i| (0..2).map(|j| normalize(&(&m1[i][0] * &m2[0][j] + &m1[i][1] * &m2[1][j]))).collect())
            .collect()
    };
    let dm = |m: &Matrix, s: &Symbol| -> Result<Matrix> {
        m.iter().map(|r| r.iter().map(|e| d(e, s)).collect()).collect()
    };
    let eye = |c: &Expr| -> Matrix { vec![vec![c.clone(), Expr::zero()], vec![Expr::zero(), c.clone()]] };
    let add = |m1: &Matrix, m2: &Matrix, k: i64| -> Matrix {
        (0..2)
            .map(|i| (0..2).map(|j| normalize(&(&m1[i][j] + Expr::int(k) * &m2[i][j]))).collect())
            .collect()
    };
    let scale = |c: &Expr, m: &Matrix| -> Matrix { m.iter().map(|r| r.iter().map(|e| normalize(&(c * e))).collect()).collect() };
    let w = [cand.phi.clone(), cand.psi.clone()];
    // (first)
    let first: Vec<Expr> = (0..2)
        .map(|i| Ok(normalize(&(d(&w[i], t)? + &a[i][0] * d(&w[0], x)? + &a[i][1] * d(&w[1], x)?))))
        .collect::<Result<_>>()?;
    let b: Matrix = (0..2).map(|i| Ok(vec![d(&w[i], u)?, d(&w[i], v)?])).collect::<Result<_>>()?;
    // (second): [A, B] + phi A_u + psi A_v - (xi I - tau A)_t - (xi I - tau A)_x A
    let comm = add(&mm(a, &b), &mm(&b, a), -1);
    let lhs = add(&add(&comm, &scale(&w[0], &dm(a, u)?), 1), &scale(&w[1], &dm(a, v)?), 1);
    let xt = add(&eye(&d(&cand.xi, t)?), &scale(&d(&cand.tau, t)?, a), -1);
    let xx = add(&eye(&d(&cand.xi, x)?), &scale(&d(&cand.tau, x)?, a), -1);
    let second = add(&add(&lhs, &xt, -1), &mm(&xx, a), -1);
    // (M): M_t + M_x A with M = B + xi_x I - tau_x A
    let m = add(&b, &xx, 1);
    let m_eq = add(&dm(&m, t)?, &mm(&dm(&m, x)?, a), 1);
    let relations: Option<Matrix> = match (&cand.alphas, &cand.betas, fields) {
        (Some(al), Some(be), Some(cf)) => {
            let phi_a: Vec<Expr> = (0..2)
                .map(|k| normalize(&(&al[0] * &cf.right[0][k] + &al[1] * &cf.right[1][k])))
                .collect();
            let b_a: Matrix = (0..2).map(|k| Ok(vec![d(&phi_a[k], u)?, d(&phi_a[k], v)?])).collect::<Result<_>>()?;
            let rhs = add(&b_a, &xx, 1);
            let lhs: Matrix = (0..2)
                .map(|k| {
                    (0..2)
                        .map(|j| normalize(&(&be[0][k] * &cf.left[0][j] + &be[1][k] * &cf.left[1][j])))
                        .collect()
                })
                .collect();
            Some(add(&lhs, &rhs, -1))
        }
        _ => None,
    };
    let vars_v: Vec<Symbol> = vars.to_vec();
    let max_over = |es: Vec<&Expr>| -> Result<f64> {
        let cs = es
            .iter()
            .map(|e| Compiled::new(e, &vars_v, &Bindings::new(), table))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let pt = sample_in(&mut rng, region);
            for c in &cs {
                worst = worst.max(c.eval(&pt)?.abs());
            }
        }
        Ok(worst)
    };
    Ok(HyperbolicReport {
        first: max_over(first.iter().collect())?,
        second: max_over(second.iter().flatten().collect())?,
        m_equation: max_over(m_eq.iter().flatten().collect())?,
        relations: match &relations {
            Some(r) => Some(max_over(r.iter().flatten().collect())?),
            None => None,
        },
    })
}

/// Symbols occurring in the matrix, for dependence scans in reports.
pub fn symbols_of(m: &Matrix) -> BTreeSet<Symbol> {
    m.iter().flatten().flat_map(|e| e.free_symbols()).collect()
}

/// (Xi1_x I - Xi2_x A(Phi)) Phi_u / (Xi1_x Xi2_t - Xi2_x Xi1_t) for u_t + A(u) u_x.
pub fn quasilinear_closed_form(sys: &PDESystem, g: &GroupAction, table: &SymbolTable) -> Result<Matrix> {
    let a = sys
        .quasi_matrix
        .as_ref()
        .ok_or_else(|| FactorError::Unsupported("system is not of the form u_t + A(u) u_x".into()))?;
    let spec = &sys.spec;
    let (x, t) = (spec.symbol(0), spec.symbol(1));
    let us = spec.dependent_symbols();
    let d = |e: &Expr, s: &Symbol| differentiate(e, s, table);
    let (x1x, x1t, x2x, x2t) = (d(&g.xi[0], x)?, d(&g.xi[0], t)?, d(&g.xi[1], x)?, d(&g.xi[1], t)?);
    let den = (&x1x * &x2t - &x2x * &x1t).recip();
    let to_phi: HashMap<Symbol, Expr> = us.iter().cloned().zip(g.phi.iter().cloned()).collect();
    let a_phi: Matrix = a.iter().map(|r| r.iter().map(|e| substitute(e, &to_phi)).collect()).collect();
    let s = sys.s();
    let phi_u: Matrix = (0..s)
        .map(|i| us.iter().map(|u| d(&g.phi[i], u)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    Ok((0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    let terms = (0..s)
                        .map(|l| {
                            let m = if i == l { &x1x - &x2x * &a_phi[i][l] } else { -(&x2x * &a_phi[i][l]) };
                            m * &phi_u[l][j]
                        })
                        .collect();
                    normalize(&(Expr::sum(terms) * &den))
                })
                .collect()
        })
        .collect())
}

/// Max |Q1 - Q2| over random (eta, z), skipping points where either fails.
pub fn compare_factors(q1: &FactorMatrix, q2: &FactorMatrix, domain: &[(f64, f64)], samples: usize, seed: u64, table: &SymbolTable) -> Result<f64> {
    let (c1, c2) = (q1.compile(table)?, q2.compile(table)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = jet_box(&q1.spec, domain, 2.0);
    let (lo, hi) = q1.eta_range;
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples * 20 {
        if used == samples {
            break;
        }
        let z = sample_in(&mut rng, &bounds);
        let eta = rng.gen_range(lo..=hi);
        let (Ok(a), Ok(b)) = (c1.eval(eta, &z), c2.eval(eta, &z)) else { continue };
        if a.iter().chain(&b).flatten().any(|v| !v.is_finite()) {
            continue;
        }
        used += 1;
        worst = worst.max(crate::numerics::max_abs_diff(&a, &b));
    }
    if used < samples {
        return Err(FactorError::Invalid(format!("only {used} of {samples} comparison samples were valid")));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, FunctionFamily};

    fn burgers(family: Option<FunctionFamily>) -> (SymbolTable, PDESystem) {
        let spec = JetSpec::new(&["x", "t"], &["u"], 1);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        let eq = match family {
            Some(f) => {
                t.register_family(f).unwrap();
                "u_t + f(u)*u_x"
            }
            None => "u_t + u*u_x",
        };
        let e = parse(eq, &t).unwrap();
        let k = spec.index_of_name("u_t").unwrap();
        let sys = PDESystem::new(spec, vec![e], vec![k], &t).unwrap();
        (t, sys)
    }

    fn action(t: &SymbolTable, spec: &JetSpec, xi: [&str; 2], phi: &[&str]) -> GroupAction {
        GroupAction::new(
            xi.iter().map(|s| parse(s, t).unwrap()).collect(),
            phi.iter().map(|s| parse(s, t).unwrap()).collect(),
            spec,
            t,
        )
        .unwrap()
        .with_domain(vec![(-2.0, 2.0), (-2.0, 2.0)])
    }

    #[test]
    fn classification() {
        let (t, sys) = burgers(None);
        assert_eq!(sys.class, Classification::Quasilinear);
        let spec = sys.spec.clone();
        let lin = PDESystem::new(spec.clone(), vec![parse("u_t + 0.5*u_x + u", &t).unwrap()], vec![4], &t).unwrap();
        assert_eq!(lin.class, Classification::Linear);
        let semi = PDESystem::new(spec.clone(), vec![parse("u_t + x*u_x + u^3", &t).unwrap()], vec![4], &t).unwrap();
        assert_eq!(semi.class, Classification::Semilinear);
        let gen = PDESystem::new(spec.clone(), vec![parse("u_t + u_x^2", &t).unwrap()], vec![4], &t).unwrap();
        assert_eq!(gen.class, Classification::General);
        assert!(PDESystem::new(spec, vec![parse("u_t", &t).unwrap()], vec![1], &t).is_err());
    }

    #[test]
    fn solved_form_of_burgers() {
        let (t, sys) = burgers(None);
        let sf = build_solved_form(&sys, 1, &t).unwrap();
        let inv = sf.inverse.unwrap();
        assert!(crate::expr::semantic_eq(&inv[0], &parse("u_t - u*u_x", &t).unwrap(), &t));
        assert!(sf.round_trip_error <= 1e-12);
        assert_eq!(sf.determinant, Expr::one());
    }

    #[test]
    fn general_system_uses_newton() {
        let spec = JetSpec::new(&["x", "t"], &["u"], 1);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        let e = parse("u_t + u_t^3/3 + u*u_x", &t).unwrap();
        let sys = PDESystem::new(spec.clone(), vec![e], vec![4], &t).unwrap();
        let sf = build_solved_form(&sys, 2, &t).unwrap();
        assert!(sf.inverse.is_none());
        // translation symmetry: Q = 1
        let g = action(&t, &spec, ["x + eta", "t"], &["u"]);
        let q = compute_factor_q(&sys, &g, FactorMethod::Auto, &t).unwrap();
        let rep = verify_factorization(&sys, &g, &q, &VerifyOptions { samples: 20, ..Default::default() }, &t).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn burgers_g1_factor_is_cubic() {
        let (t, sys) = burgers(None);
        let g = action(&t, &sys.spec, ["x/(1 - eta*t)", "t/(1 - eta*t)"], &["eta*x + u - eta*u*t"]);
        let q = compute_factor_q(&sys, &g, FactorMethod::Auto, &t).unwrap();
        let m = q.as_symbolic().unwrap();
        assert!(crate::expr::semantic_eq(&m[0][0], &parse("(1 - eta*t)^3", &t).unwrap(), &t), "{}", m[0][0]);
        assert_eq!(q.dependence, Dependence::EtaX);
        let rep = verify_factorization(&sys, &g, &q, &VerifyOptions::default(), &t).unwrap();
        assert!(rep.pass, "{rep:?}");
        let bad = FactorMatrix::symbolic(&sys, vec![vec![parse("(1 - eta*t)^2", &t).unwrap()]], (-0.1, 0.1));
        let rep = verify_factorization(&sys, &g, &bad, &VerifyOptions::default(), &t).unwrap();
        assert!(rep.max_residual > 1e-3);
    }

    #[test]
    fn quadrature_matches_symbolic() {
        let (t, sys) = burgers(None);
        let g = action(&t, &sys.spec, ["x/(1 - eta*x)", "t/(1 - eta*x)"], &["u/(1 - eta*(x - u*t))"]);
        let q1 = compute_factor_q(&sys, &g, FactorMethod::Auto, &t).unwrap();
        let q2 = compute_factor_q(&sys, &g, FactorMethod::Quadrature, &t).unwrap();
        assert!(compare_factors(&q1, &q2, &g.domain, 50, 9, &t).unwrap() <= 1e-10);
        assert_eq!(q1.dependence, Dependence::EtaXU);
    }

    #[test]
    fn identity_factor() {
        let (t, sys) = burgers(None);
        let g = GroupAction::identity(&sys.spec, &t).unwrap();
        let q = compute_factor_q(&sys, &g, FactorMethod::Auto, &t).unwrap();
        assert_eq!(q.as_symbolic().unwrap()[0][0], Expr::one());
        let rep = verify_factorization(&sys, &g, &q, &VerifyOptions::default(), &t).unwrap();
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn translation_has_zero_qtilde() {
        let (t, sys) = burgers(None);
        let v = VectorField::new(vec![Expr::one(), Expr::zero()], vec![Expr::zero()], &sys.spec).unwrap();
        let f = infinitesimal_factor(&sys, &v, &t).unwrap();
        assert!(f.qtilde.as_symbolic().unwrap()[0][0].is_zero());
        let c = determining_equations(&sys, &v, &t).unwrap();
        assert!(c.iter().all(|c| c.expr.is_zero()));
    }

    #[test]
    fn non_symmetry_is_rejected() {
        let (t, sys) = burgers(None);
        let v = VectorField::new(vec![Expr::zero(), Expr::zero()], vec![Expr::one()], &sys.spec).unwrap();
        assert!(matches!(infinitesimal_factor(&sys, &v, &t), Err(FactorError::NotFactorizable { .. })));
    }

    #[test]
    fn w1_qtilde_and_principal_matrix() {
        let (t, sys) = burgers(None);
        let v = VectorField::new(
            vec![parse("x*t", &t).unwrap(), parse("t^2", &t).unwrap()],
            vec![parse("x - u*t", &t).unwrap()],
            &sys.spec,
        )
        .unwrap();
        let f = infinitesimal_factor(&sys, &v, &t).unwrap();
        assert!(crate::expr::semantic_eq(&f.qtilde.as_symbolic().unwrap()[0][0], &parse("-3*t", &t).unwrap(), &t));
        let g = action(&t, &sys.spec, ["x/(1 - eta*t)", "t/(1 - eta*t)"], &["eta*x + u - eta*u*t"]);
        let q = principal_matrix_from_qtilde(&f.qtilde, &g, &[0.3, 1.0, 0.5, -0.2, 0.7], 0.1, &t).unwrap();
        assert!((q[0][0] - 0.729).abs() <= 1e-6);
    }

    #[test]
    fn growth_condition() {
        let (t, sys) = burgers(None);
        let g = check_growth_a3(&sys, &[(-1.0, 1.0), (-1.0, 1.0)], 10.0, 2000, 1, &t).unwrap();
        assert_eq!((g.r, g.c), (0.0, 1.0));
        let spec = sys.spec.clone();
        let bad = PDESystem::new(spec, vec![parse("u*u_t + u_x", &t).unwrap()], vec![4], &t).unwrap();
        let g = check_growth_a3(&bad, &[(-1.0, 1.0), (-1.0, 1.0)], 10.0, 2000, 1, &t).unwrap();
        let w = g.violation.unwrap();
        assert!(w[2].abs() <= 1e-10);
    }

    #[test]
    fn invariance_smooth() {
        let spec = JetSpec::new(&["x"], &["u"], 1);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        let v = VectorField::new(vec![parse("x", &t).unwrap()], vec![parse("2*u", &t).unwrap()], &spec)
            .unwrap()
            .with_linear(vec![vec![Expr::int(2)]], vec![Expr::zero()], &spec, &t)
            .unwrap();
        let u = [parse("x^2", &t).unwrap()];
        let r = invariance_check(&v, InvarianceTarget::Smooth { u: &u, domain: &[(-1.0, 1.0)] }, &spec, &t).unwrap();
        assert!(r.exact_zero && r.pass);
    }

    #[test]
    fn characteristic_fields_of_swap() {
        let t = SymbolTable::new();
        let vars = [Symbol::new("u"), Symbol::new("v")];
        let a = vec![vec![Expr::zero(), Expr::one()], vec![Expr::one(), Expr::zero()]];
        let cf = characteristic_fields(&a, &vars, &[(-1.0, 1.0), (-1.0, 1.0)], 20, &t).unwrap();
        assert_eq!(cf.lambda[0], Expr::int(-1));
        assert_eq!(cf.lambda[1], Expr::one());
        assert!(cf.defect <= 1e-12);
        let k = vec![vec![Expr::zero(), Expr::one()], vec![Expr::int(-1), Expr::zero()]];
        assert!(matches!(
            characteristic_fields(&k, &vars, &[(-1.0, 1.0), (-1.0, 1.0)], 20, &t),
            Err(FactorError::NotHyperbolic(_))
        ));
    }

    #[test]
    fn poly_degree_detection() {
        let mut t = SymbolTable::new();
        t.declare("x", crate::expr::Role::Independent).unwrap();
        let tau = Symbol::new("tau");
        assert_eq!(poly_degree(&parse("x*tau^2 + tau", &t).unwrap(), &tau), Some(2));
        assert_eq!(poly_degree(&parse("1/(1 + tau)", &t).unwrap(), &tau), None);
        let e = normalize(&parse("x*tau^2 + tau + 3", &t).unwrap());
        let i = integrate_poly_tau(&e, &tau, 2, &t).unwrap();
        assert!(crate::expr::semantic_eq(&i, &parse("x/3 + 1/2 + 3", &t).unwrap(), &t));
    }
}
