//! Regularized nets u_eps, mollifier embeddings of jumps and point masses,
//! group actions on nets, and numeric verdicts for growth and association.
//!
//! Verdicts are statements about the chosen representative net. A finite
//! probe family only gives a necessary condition for strong association.

use crate::expr::{
    differentiate, normalize, placeholder, substitute, Bindings, Compiled, Expr, ExprError, OpaqueFn, Symbol,
    SymbolTable,
};
use crate::factorization::PDESystem;
use crate::jet::{prolong_function, GroupAction, JetError};
use crate::numerics::{
    fit_power_law, gl_fixed, integrate, integrate_2d, linear_fit, NumericsError, PowerLawFit, QuadratureSpec,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColombeauError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("mollifier check failed: {0}")]
    Mollifier(String),
    #[error("inverse action leaves the evaluation domain at {0:?}")]
    OutsideDomain(Vec<f64>),
    #[error("{0}")]
    Invalid(String),
}

pub fn eps_symbol() -> Symbol {
    Symbol::new("eps")
}

/// Default grid eps_j = 2^-j, j = 3..12.
pub fn default_grid() -> Vec<f64> {
    (3..=12).map(|j| 0.5f64.powi(j)).collect()
}

/// Piecewise Chebyshev interpolant on [-1, 1]: equal pieces, each
/// interpolated at its own first-kind nodes.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    pieces: Vec<Vec<f64>>,
}

/// First-kind Chebyshev nodes of piece `i` out of `pieces`, `m` per piece.
fn piece_nodes(i: usize, pieces: usize, m: usize) -> Vec<f64> {
    let h = 2.0 / pieces as f64;
    let c = -1.0 + h * (i as f64 + 0.5);
    (0..m).map(|j| c + 0.5 * h * (PI * (j as f64 + 0.5) / m as f64).cos()).collect()
}

impl Chebyshev {
    fn coefficients(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        (0..n)
            .map(|k| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                    .sum();
                let c = 2.0 * s / n as f64;
                if k == 0 {
                    c / 2.0
                } else {
                    c
                }
            })
            .collect()
    }

    /// `values[i][j]` is the function at `piece_nodes(i, ..)[j]`. Trailing
    /// coefficients below `tol` (the quadrature noise floor) are dropped.
    fn from_pieces(values: &[Vec<f64>], tol: f64) -> Self {
        let pieces = values
            .iter()
            .map(|v| {
                let mut c = Self::coefficients(v);
                let keep = c.iter().rposition(|x| x.abs() > tol).map_or(1, |k| k + 1);
                c.truncate(keep);
                c
            })
            .collect();
        Chebyshev { pieces }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.pieces.len();
        let h = 2.0 / n as f64;
        let i = (((x + 1.0) / h) as usize).min(n - 1);
        let y = (x - (-1.0 + h * (i as f64 + 0.5))) * 2.0 / h;
        let coeffs = &self.pieces[i];
        let (mut b1, mut b2) = (0.0, 0.0);
        for c in coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * y * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        y * b1 - b2 + coeffs[0]
    }
}

const CHEB_PIECES: usize = 16;
const CHEB_PIECE_NODES: usize = 32;
const MOLLIFIER_DERIVATIVES: usize = 4;

/// A mollifier supported in [-1, 1] with unit mass, registered in the symbol
/// table as `name` (with derivatives `name_d1..name_d4`) and primitive `primitive`.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub name: String,
    pub primitive: String,
    /// Normalized profile over the placeholder `#0`.
    pub body: Expr,
    pub support: f64,
    pub mass: f64,
    pub sup_norm: f64,
    pub derivative_sup: f64,
}

fn masked(c: Compiled) -> impl Fn(&[f64]) -> f64 + Send + Sync {
    move |a: &[f64]| {
        let x = a[0];
        if x.abs() >= 1.0 {
            return 0.0;
        }
        match c.eval(&[x]) {
            Ok(v) => v,
            // exp(-1/(1-x^2)) underflows before its polynomial prefactors
            // overflow; the true value there is zero
            Err(_) if x.abs() > 0.5 => 0.0,
            Err(_) => f64::NAN,
        }
    }
}

impl Mollifier {
    /// The standard bump C exp(-1/(1-x^2)).
    pub fn standard(table: &mut SymbolTable) -> Result<Self, ColombeauError> {
        let body = crate::expr::parse("exp(-1/(1 - #0^2))", table)?;
        Mollifier::from_body("theta", "Theta", &body, table)
    }

    /// An asymmetric admissible mollifier C (1 + x/2) exp(-1/(1-x^2)).
    pub fn skewed(table: &mut SymbolTable) -> Result<Self, ColombeauError> {
        let body = crate::expr::parse("(1 + #0/2)*exp(-1/(1 - #0^2))", table)?;
        Mollifier::from_body("theta2", "Theta2", &body, table)
    }

    /// Normalizes `body` (over `#0`, non-negative on (-1, 1)) to unit mass and
    /// registers it together with its derivatives and primitive.
    pub fn from_body(name: &str, primitive: &str, body: &Expr, table: &mut SymbolTable) -> Result<Self, ColombeauError> {
        let x = placeholder(0);
        let raw = Compiled::new(body, std::slice::from_ref(&x), &Bindings::new(), table)?;
        let raw_f = masked(raw);
        let spec = QuadratureSpec::default().with_tol(1e-15);
        let mass0 = integrate(&|v| raw_f(&[v]), -1.0, 1.0, &spec)?.value;
        if !(mass0 > 0.0) {
            return Err(ColombeauError::Mollifier(format!("{name} has non-positive mass")));
        }
        let body = normalize(&(Expr::float(1.0 / mass0) * body));
        let mut derivs = vec![body.clone()];
        for k in 1..=MOLLIFIER_DERIVATIVES {
            let d = differentiate(&derivs[k - 1], &x, table)?;
            derivs.push(d);
        }
        let names: Vec<String> = (0..=MOLLIFIER_DERIVATIVES)
            .map(|k| if k == 0 { name.to_string() } else { format!("{name}_d{k}") })
            .collect();
        let mut evals = Vec::new();
        for (k, d) in derivs.iter().enumerate() {
            let c = Compiled::new(d, std::slice::from_ref(&x), &Bindings::new(), table)?;
            let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(masked(c));
            evals.push(f);
            let mut op = OpaqueFn::new(&names[k], 1);
            op.eval = Some(evals[k].clone());
            if k < MOLLIFIER_DERIVATIVES {
                op = op.with_derivative(0, Expr::opaque(&names[k + 1], vec![Expr::symbol(&x)]));
            }
            table.register_function(op)?;
        }
        // primitive from cumulative panels between the sorted interpolation nodes
        let theta = evals[0].clone();
        let mut nodes: Vec<(f64, usize, usize)> = (0..CHEB_PIECES)
            .flat_map(|i| {
                piece_nodes(i, CHEB_PIECES, CHEB_PIECE_NODES)
                    .into_iter()
                    .enumerate()
                    .map(move |(j, v)| (v, i, j))
            })
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = vec![vec![0.0; CHEB_PIECE_NODES]; CHEB_PIECES];
        let mut acc = 0.0;
        let mut prev = -1.0;
        for &(v, i, j) in &nodes {
            acc += gl_fixed(&|y| theta(&[y]), prev, v, 32);
            values[i][j] = acc;
            prev = v;
        }
        let total = acc + gl_fixed(&|y| theta(&[y]), prev, 1.0, 32);
        let cheb = Chebyshev::from_pieces(&values, 1e-16);
        let prim = move |a: &[f64]| {
            let y = a[0];
            if y <= -1.0 {
                0.0
            } else if y >= 1.0 {
                1.0
            } else {
                cheb.eval(y)
            }
        };
        let prim_check = prim.clone();
        table.register_function(
            OpaqueFn::new(primitive, 1)
                .with_eval(prim)
                .with_derivative(0, Expr::opaque(name, vec![Expr::symbol(&x)])),
        )?;
        let mut sup_norm: f64 = 0.0;
        let mut derivative_sup: f64 = 0.0;
        for i in 0..=4000 {
            let v = -1.0 + i as f64 / 2000.0;
            let t0 = evals[0](&[v]);
            if t0 < 0.0 {
                return Err(ColombeauError::Mollifier(format!("{name} is negative at {v}")));
            }
            sup_norm = sup_norm.max(t0);
            derivative_sup = derivative_sup.max(evals[1](&[v]).abs());
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(ColombeauError::Mollifier(format!("{name} has mass {total}")));
        }
        let (lo, hi) = (prim_check(&[-1.0 + 1e-12]), prim_check(&[1.0 - 1e-12]));
        if lo.abs() > 1e-10 || (hi - 1.0).abs() > 1e-10 {
            return Err(ColombeauError::Mollifier(format!("{primitive} endpoints {lo}, {hi}")));
        }
        Ok(Mollifier {
            name: name.to_string(),
            primitive: primitive.to_string(),
            body,
            support: 1.0,
            mass: total,
            sup_norm,
            derivative_sup,
        })
    }

    pub fn theta(&self, arg: Expr) -> Expr {
        Expr::opaque(&self.name, vec![arg])
    }

    pub fn primitive_of(&self, arg: Expr) -> Expr {
        Expr::opaque(&self.primitive, vec![arg])
    }
}

/// Representative (u_eps) of a generalized function: expressions in the
/// independent variables and `eps`.
#[derive(Clone, Debug)]
pub struct GNet {
    pub components: Vec<Expr>,
    pub vars: Vec<Symbol>,
    /// Expressions whose zero sets carry the eps-scale layers.
    pub layers: Vec<Expr>,
    pub domain: Vec<(f64, f64)>,
    pub claims_bounded: bool,
}

impl GNet {
    pub fn new(components: Vec<Expr>, vars: &[Symbol], domain: Vec<(f64, f64)>) -> Self {
        GNet {
            components: components.iter().map(normalize).collect(),
            vars: vars.to_vec(),
            layers: Vec::new(),
            domain,
            claims_bounded: false,
        }
    }

    pub fn with_layers(mut self, layers: Vec<Expr>) -> Self {
        self.layers = layers;
        self
    }

    /// a + b * net, componentwise.
    pub fn affine(&self, a: &Expr, b: &Expr) -> GNet {
        GNet {
            components: self.components.iter().map(|c| normalize(&(a + b * c))).collect(),
            ..self.clone()
        }
    }

    /// Stacks the components of several nets (sharing variables) into one net.
    pub fn stack(nets: &[GNet]) -> GNet {
        let mut out = nets[0].clone();
        for n in &nets[1..] {
            out.components.extend(n.components.iter().cloned());
            out.layers.extend(n.layers.iter().cloned());
            out.claims_bounded &= n.claims_bounded;
        }
        out
    }

    pub fn evaluate(&self, component: usize, x: &[f64], eps: f64, table: &SymbolTable) -> Result<f64, ExprError> {
        let mut b = Bindings::new();
        for (s, v) in self.vars.iter().zip(x) {
            b.set(s.clone(), *v);
        }
        b.set(eps_symbol(), eps);
        crate::expr::evaluate(&self.components[component], &b, table)
    }

    /// Exact symbolic derivative of a component along the multi-index.
    pub fn derivative(&self, component: usize, multi: &[usize], table: &SymbolTable) -> Result<Expr, ExprError> {
        multi.iter().try_fold(self.components[component].clone(), |e, &i| {
            differentiate(&e, &self.vars[i], table)
        })
    }
}

/// The net Theta(shift / eps).
pub fn embed_heaviside(m: &Mollifier, shift: &Expr, vars: &[Symbol], domain: Vec<(f64, f64)>) -> GNet {
    let arg = shift * Expr::symbol(&eps_symbol()).recip();
    let mut net = GNet::new(vec![m.primitive_of(arg)], vars, domain).with_layers(vec![normalize(shift)]);
    net.claims_bounded = true;
    net
}

/// The net (1/eps) theta(shift / eps).
pub fn embed_delta(m: &Mollifier, shift: &Expr, vars: &[Symbol], domain: Vec<(f64, f64)>) -> GNet {
    let e = Expr::symbol(&eps_symbol());
    let arg = shift * e.clone().recip();
    GNet::new(vec![e.recip() * m.theta(arg)], vars, domain).with_layers(vec![normalize(shift)])
}

/// The shock net u_l + (u_r - u_l) H_eps(shift).
pub fn shock_net(m: &Mollifier, ul: &Expr, ur: &Expr, shift: &Expr, vars: &[Symbol], domain: Vec<(f64, f64)>) -> GNet {
    embed_heaviside(m, shift, vars, domain).affine(ul, &(ur - ul))
}

/// Applies g_eta to the net: x -> Phi_eta(Xi_{-eta}(x), u_eps(Xi_{-eta}(x))).
///
/// The inverse of Xi_eta is taken from the one-parameter group law and
/// checked numerically on a lattice of the domain.
pub fn apply_group(net: &GNet, g: &GroupAction, eta: f64, spec: &crate::jet::JetSpec, table: &SymbolTable) -> Result<GNet, ColombeauError> {
    let eta_sym = Symbol::new("eta");
    let xs = spec.independent_symbols();
    let us = spec.dependent_symbols();
    if xs != net.vars || us.len() != net.components.len() {
        return Err(ColombeauError::Invalid("net does not match the jet space of the action".into()));
    }
    let minus = HashMap::from([(eta_sym.clone(), Expr::float(-eta))]);
    let plus = HashMap::from([(eta_sym.clone(), Expr::float(eta))]);
    let inv: Vec<Expr> = g.xi.iter().map(|e| normalize(&substitute(e, &minus))).collect();
    let fwd: Vec<Expr> = g.xi.iter().map(|e| normalize(&substitute(e, &plus))).collect();
    // Xi_eta(Xi_{-eta}(x)) = x on a lattice of the domain
    let inv_c: Vec<Compiled> = inv.iter().map(|e| Compiled::new(e, &xs, &Bindings::new(), table)).collect::<Result<_, _>>()?;
    let fwd_c: Vec<Compiled> = fwd.iter().map(|e| Compiled::new(e, &xs, &Bindings::new(), table)).collect::<Result<_, _>>()?;
    for pt in lattice(&net.domain, 9) {
        let y: Vec<f64> = inv_c.iter().map(|c| c.eval(&pt)).collect::<Result<_, _>>().map_err(|_| ColombeauError::OutsideDomain(pt.clone()))?;
        let back: Vec<f64> = fwd_c.iter().map(|c| c.eval(&y)).collect::<Result<_, _>>().map_err(|_| ColombeauError::OutsideDomain(pt.clone()))?;
        let err = back.iter().zip(&pt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-10 * (1.0 + pt.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Err(ColombeauError::Invalid(format!("Xi_-eta is not the inverse of Xi_eta at {pt:?}")));
        }
    }
    let to_pre: HashMap<Symbol, Expr> = xs.iter().cloned().zip(inv.iter().cloned()).collect();
    let pulled: Vec<Expr> = net.components.iter().map(|c| substitute(c, &to_pre)).collect();
    let mut map: HashMap<Symbol, Expr> = to_pre.clone();
    for (u, c) in us.iter().zip(&pulled) {
        map.insert(u.clone(), c.clone());
    }
    map.insert(eta_sym, Expr::float(eta));
    let components = g.phi.iter().map(|f| normalize(&substitute(f, &map))).collect();
    let layers = net.layers.iter().map(|l| normalize(&substitute(l, &to_pre))).collect();
    let out = GNet {
        components,
        vars: net.vars.clone(),
        layers,
        domain: net.domain.clone(),
        claims_bounded: net.claims_bounded,
    };
    for pt in lattice(&net.domain, 5) {
        for k in 0..out.components.len() {
            out.evaluate(k, &pt, 0.1, table).map_err(|_| ColombeauError::OutsideDomain(pt.clone()))?;
        }
    }
    Ok(out)
}

/// Uniform lattice with n points per dimension.
fn lattice(domain: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for &(a, b) in domain {
        let mut next = Vec::with_capacity(out.len() * n);
        for p in &out {
            for i in 0..n {
                let mut q = p.clone();
                q.push(if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 });
                next.push(q);
            }
        }
        out = next;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthVerdict {
    Bounded,
    Moderate,
    NegligibleCandidate,
}

#[derive(Clone, Debug)]
pub struct GrowthFit {
    /// Fitted exponent in sup |d^alpha u_eps| ~ eps^-p.
    pub p: f64,
    pub fit: PowerLawFit,
    pub sups: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub verdict: GrowthVerdict,
}

/// Points along the first variable where a layer function equals k eps for
/// k in {-1, -1/2, 0, 1/2, 1}, at fixed values of the remaining variables.
fn layer_breaks(layers: &[Compiled], rest: &[f64], eps: f64, (a, b): (f64, f64)) -> Vec<f64> {
    let mut out = Vec::new();
    let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let at = |layer: &Compiled, x: f64| -> Option<f64> {
        let mut v = vec![x];
        v.extend_from_slice(rest);
        v.push(eps);
        layer.eval(&v).ok()
    };
    for layer in layers {
        const N: usize = 96;
        let xs: Vec<f64> = (0..=N).map(|i| a + (b - a) * i as f64 / N as f64).collect();
        let vals: Vec<Option<f64>> = xs.iter().map(|&x| at(layer, x)).collect();
        for lv in levels {
            let target = lv * eps;
            for i in 0..N {
                let (Some(f0), Some(f1)) = (vals[i], vals[i + 1]) else { continue };
                let (g0, g1) = (f0 - target, f1 - target);
                if g0 == 0.0 {
                    out.push(xs[i]);
                    continue;
                }
                if g0 * g1 > 0.0 {
                    continue;
                }
                let g = |x: f64| at(layer, x).map(|f| f - target);
                out.push(illinois(&g, (xs[i], g0), (xs[i + 1], g1)));
            }
        }
    }
    out
}

/// Root of `g` in a sign-changing bracket by the Illinois variant of regula falsi.
fn illinois(g: &dyn Fn(f64) -> Option<f64>, (mut a, mut ga): (f64, f64), (mut b, mut gb): (f64, f64)) -> f64 {
    let tol = 1e-14 * (1.0 + a.abs().max(b.abs()));
    for _ in 0..100 {
        if gb == 0.0 {
            return b;
        }
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let Some(gc) = g(c) else { break };
        if gc * gb < 0.0 {
            a = b;
            ga = gb;
        } else {
            ga *= 0.5;
        }
        b = c;
        gb = gc;
    }
    0.5 * (a + b)
}

const GROWTH_LATTICE: usize = 200;
const NEGLIGIBLE_CAP: f64 = 8.0;

/// Estimates sup over the box, on a lattice refined around the largest value.
fn sup_on_box(
    f: &dyn Fn(&[f64]) -> Result<f64, ExprError>,
    domain: &[(f64, f64)],
    breaks: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<f64, ExprError> {
    let dim = domain.len();
    let n = if dim == 1 { 20 * GROWTH_LATTICE } else { GROWTH_LATTICE };
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![];
    let consider = |pt: Vec<f64>, best: &mut f64, arg: &mut Vec<f64>| -> Result<(), ExprError> {
        let v = f(&pt)?.abs();
        if v > *best {
            *best = v;
            *arg = pt;
        }
        Ok(())
    };
    for pt in lattice(domain, n) {
        consider(pt, &mut best, &mut arg)?;
    }
    // layers thinner than the lattice spacing
    for rest in lattice(&domain[1..], n) {
        let mut bs = breaks(&rest);
        bs.sort_by(f64::total_cmp);
        for w in bs.windows(2) {
            for i in 0..=20 {
                let mut pt = vec![w[0] + (w[1] - w[0]) * i as f64 / 20.0];
                pt.extend_from_slice(&rest);
                consider(pt, &mut best, &mut arg)?;
            }
        }
    }
    let mut half: Vec<f64> = domain.iter().map(|(a, b)| (b - a) / (n - 1) as f64).collect();
    if let Some(h) = half.first_mut() {
        *h = h.min(1e-3 * (domain[0].1 - domain[0].0));
    }
    for _ in 0..8 {
        let local: Vec<(f64, f64)> = arg
            .iter()
            .zip(domain)
            .zip(&half)
            .map(|((c, (a, b)), h)| ((c - h).max(*a), (c + h).min(*b)))
            .collect();
        for pt in lattice(&local, 21) {
            consider(pt, &mut best, &mut arg)?;
        }
        half.iter_mut().for_each(|h| *h /= 10.0);
    }
    Ok(best)
}

/// Fits p in sup_K |d^alpha u_eps| = O(eps^-p) over the grid.
pub fn growth_exponent(
    net: &GNet,
    component: usize,
    multi: &[usize],
    domain: &[(f64, f64)],
    grid: &[f64],
    table: &SymbolTable,
) -> Result<GrowthFit, ColombeauError> {
    if grid.len() < 8 {
        return Err(ColombeauError::Invalid("growth fits need at least 8 grid points".into()));
    }
    let d = net.derivative(component, multi, table)?;
    let mut vars = net.vars.clone();
    vars.push(eps_symbol());
    let c = Compiled::new(&d, &vars, &Bindings::new(), table)?;
    let layers = net
        .layers
        .iter()
        .map(|l| Compiled::new(l, &vars, &Bindings::new(), table))
        .collect::<Result<Vec<_>, _>>()?;
    let sups = grid
        .par_iter()
        .map(|&eps| {
            let f = |x: &[f64]| {
                let mut a = x.to_vec();
                a.push(eps);
                c.eval(&a)
            };
            let b = |rest: &[f64]| layer_breaks(&layers, rest, eps, domain[0]);
            sup_on_box(&f, domain, &b)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let inv: Vec<f64> = grid.iter().map(|e| 1.0 / e).collect();
    let fit = fit_power_law(&inv, &sups);
    let p = if fit.is_defined() {
        fit.slope
    } else if sups.iter().all(|s| *s == 0.0) {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    };
    let verdict = if p.abs() <= 0.05 {
        GrowthVerdict::Bounded
    } else if p <= -NEGLIGIBLE_CAP {
        GrowthVerdict::NegligibleCandidate
    } else {
        GrowthVerdict::Moderate
    };
    Ok(GrowthFit {
        p,
        fit,
        sups,
        epsilons: grid.to_vec(),
        verdict,
    })
}

/// A compactly supported test function with a bounding box of its support.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub expr: Expr,
    pub support: Vec<(f64, f64)>,
    pub label: String,
}

/// Registers `bump(r2) = exp(-1/(1 - r2))` for r2 < 1 and 0 otherwise.
pub fn register_bump(table: &mut SymbolTable) -> Result<(), ExprError> {
    if table.has_function("bump") {
        return Ok(());
    }
    let p0 = Expr::symbol(&placeholder(0));
    let rule = -(Expr::opaque("bump", vec![p0.clone()]) * Expr::powi(Expr::one() - p0, -2));
    table.register_function(
        OpaqueFn::new("bump", 1)
            .with_eval(|a| if a[0] < 1.0 { (-1.0 / (1.0 - a[0])).exp() } else { 0.0 })
            .with_derivative(0, rule),
    )
}

/// The bump psi_0((x - a)/s) scaled by s^k, as an expression.
pub fn bump_at(vars: &[Symbol], center: &[f64], s: f64, k: u32) -> TestFunction {
    let r2 = Expr::sum(
        vars.iter()
            .zip(center)
            .map(|(v, a)| Expr::powi((Expr::symbol(v) - Expr::float(*a)) * Expr::float(1.0 / s), 2))
            .collect(),
    );
    let expr = normalize(&(Expr::float(s.powi(k as i32)) * Expr::opaque("bump", vec![r2])));
    TestFunction {
        expr,
        support: center.iter().map(|a| (a - s, a + s)).collect(),
        label: format!("center={center:?} s={s}"),
    }
}

/// Translates and dilates the base bump: phi_{a,s} = s^k psi_0((x - a)/s).
#[derive(Clone, Debug)]
pub struct ProbeFamily {
    pub centers: Vec<Vec<f64>>,
    pub dilations: Vec<f64>,
    pub order: u32,
}

impl ProbeFamily {
    pub fn new(centers: Vec<Vec<f64>>, order: u32) -> Self {
        ProbeFamily {
            centers,
            dilations: vec![1.0, 0.5, 0.25],
            order,
        }
    }

    pub fn members(&self, vars: &[Symbol]) -> Vec<TestFunction> {
        let mut out = Vec::new();
        for c in &self.centers {
            for &s in &self.dilations {
                out.push(bump_at(vars, c, s, self.order));
            }
        }
        out
    }

    /// True if every member's support lies inside the domain.
    pub fn inside(&self, domain: &[(f64, f64)]) -> bool {
        let smax = self.dilations.iter().copied().fold(0.0, f64::max);
        self.centers.iter().all(|c| {
            c.iter()
                .zip(domain)
                .all(|(a, (lo, hi))| a - smax >= *lo - 1e-12 && a + smax <= *hi + 1e-12)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "limit", rename_all = "kebab-case")]
pub enum Verdict {
    ConvergesToZero,
    ConvergesToNonzero(f64),
    Diverges,
    Inconclusive(String),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ConvergesToZero => "converges-to-zero",
            Verdict::ConvergesToNonzero(_) => "converges-to-nonzero",
            Verdict::Diverges => "diverges",
            Verdict::Inconclusive(_) => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualCurve {
    pub equation_index: usize,
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: Option<f64>,
    pub verdict: Verdict,
    pub limit_estimate: Option<f64>,
}

/// Residual magnitude below which a curve counts as identically zero.
const EXACT_ZERO: f64 = 1e-13;

impl ResidualCurve {
    /// Classifies r(eps). The slope of log|r| against log eps is fitted on the
    /// last half of the grid. Zero: slope >= 0.5 and |r(eps_min)| <=
    /// 10 eps_min^0.5 max|r|. Divergent: slope <= -0.5. Otherwise the limit is
    /// extrapolated (Richardson, first order) from the last two and the two
    /// preceding points; disagreement above 20% is inconclusive.
    pub fn analyze(equation_index: usize, epsilons: Vec<f64>, residuals: Vec<f64>) -> Self {
        let n = epsilons.len();
        let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if max_abs <= EXACT_ZERO {
            return ResidualCurve {
                equation_index,
                epsilons,
                residuals,
                slope: None,
                verdict: Verdict::ConvergesToZero,
                limit_estimate: Some(0.0),
            };
        }
        let half = n / 2;
        let tail_e = &epsilons[half..];
        let tail_r: Vec<f64> = residuals[half..].iter().map(|r| r.abs().max(1e-300)).collect();
        let lx: Vec<f64> = tail_e.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = tail_r.iter().map(|r| r.ln()).collect();
        let slope = linear_fit(&lx, &ly).0;
        let e_min = epsilons[n - 1];
        let r_min = residuals[n - 1].abs();
        let richardson = |i: usize| {
            let rho = epsilons[i - 1] / epsilons[i];
            (rho * residuals[i] - residuals[i - 1]) / (rho - 1.0)
        };
        let limit = (n >= 4).then(|| richardson(n - 1));
        let verdict = if slope >= 0.5 && r_min <= 10.0 * e_min.sqrt() * max_abs {
            Verdict::ConvergesToZero
        } else if slope <= -0.5 {
            Verdict::Diverges
        } else if n < 4 {
            Verdict::Inconclusive("grid too short for extrapolation".into())
        } else {
            let l1 = richardson(n - 1);
            let l0 = richardson(n - 2);
            let lh = richardson(half.max(1));
            let spread = (l1 - l0).abs().max((l1 - lh).abs());
            if spread > 0.2 * l1.abs() {
                Verdict::Inconclusive(format!("extrapolated limits {l0:.3e} and {l1:.3e} disagree"))
            } else if l1.abs() <= 10.0 * e_min.sqrt() * max_abs && slope > 0.0 {
                Verdict::Inconclusive("slow decay".into())
            } else {
                Verdict::ConvergesToNonzero(l1)
            }
        };
        ResidualCurve {
            equation_index,
            epsilons,
            residuals,
            slope: Some(slope),
            limit_estimate: match verdict {
                Verdict::ConvergesToZero => Some(0.0),
                _ => limit,
            },
            verdict,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Compiled integrand Delta_i(x, pr u_eps(x)) for each equation, over (x.., eps).
pub struct NetResidual {
    pub equations: Vec<Expr>,
    vars: Vec<Symbol>,
    layers: Vec<Compiled>,
    dim: usize,
}

impl NetResidual {
    pub fn new(sys: &PDESystem, net: &GNet, table: &SymbolTable) -> Result<Self, ColombeauError> {
        let spec = &sys.spec;
        if spec.independent_symbols() != net.vars || spec.q() != net.components.len() {
            return Err(ColombeauError::Invalid("net does not match the system's variables".into()));
        }
        let jets = prolong_function(&net.components, spec, table)?;
        let map: HashMap<Symbol, Expr> = spec
            .symbols()
            .into_iter()
            .zip(jets.values)
            .skip(spec.p())
            .collect();
        let equations = sys.equations.iter().map(|e| normalize(&substitute(e, &map))).collect();
        let mut vars = net.vars.clone();
        vars.push(eps_symbol());
        let layers = net
            .layers
            .iter()
            .map(|l| Compiled::new(l, &vars, &Bindings::new(), table))
            .collect::<Result<_, _>>()?;
        Ok(NetResidual {
            equations,
            vars,
            layers,
            dim: spec.p(),
        })
    }

    fn breaks(&self, rest: &[f64], eps: f64, range: (f64, f64)) -> Vec<f64> {
        layer_breaks(&self.layers, rest, eps, range)
    }

    /// r_i(eps) = integral of Delta_i(x, pr u_eps) phi over the support of phi.
    pub fn integral(&self, i: usize, phi: &TestFunction, eps: f64, table: &SymbolTable) -> Result<f64, ColombeauError> {
        let integrand = normalize(&(&self.equations[i] * &phi.expr));
        if integrand.is_zero() {
            return Ok(0.0);
        }
        let c = Compiled::new(&integrand, &self.vars, &Bindings::new(), table)?;
        let fail = std::sync::Mutex::new(None::<ExprError>);
        let record = |e: ExprError| {
            fail.lock().unwrap().get_or_insert(e);
            f64::NAN
        };
        let spec = QuadratureSpec::default();
        let value = match self.dim {
            1 => {
                let f = |x: f64| c.eval(&[x, eps]).unwrap_or_else(record);
                let q = integrate(
                    &f,
                    phi.support[0].0,
                    phi.support[0].1,
                    &spec.clone().with_breakpoints(self.breaks(&[], eps, phi.support[0])),
                );
                q.map(|q| q.value)
            }
            2 => {
                let f = |x: f64, t: f64| c.eval(&[x, t, eps]).unwrap_or_else(record);
                let xr = phi.support[0];
                let q = integrate_2d(
                    &f,
                    phi.support[1],
                    xr,
                    &|t| self.breaks(&[t], eps, xr),
                    &spec,
                    &spec,
                );
                q.map(|q| q.value)
            }
            d => return Err(ColombeauError::Invalid(format!("weak residuals support 1 or 2 variables, got {d}"))),
        };
        if let Some(e) = fail.into_inner().unwrap() {
            return Err(e.into());
        }
        Ok(value?)
    }
}

/// r_i(eps) for every equation of the system against one test function.
pub fn weak_residual_curve(
    sys: &PDESystem,
    net: &GNet,
    phi: &TestFunction,
    grid: &[f64],
    table: &SymbolTable,
) -> Result<Vec<ResidualCurve>, ColombeauError> {
    let nr = NetResidual::new(sys, net, table)?;
    (0..sys.equations.len())
        .map(|i| {
            let rs = grid
                .par_iter()
                .map(|&eps| nr.integral(i, phi, eps, table))
                .collect::<Vec<_>>();
            curve_or_inconclusive(i, grid, rs)
        })
        .collect()
}

/// Quadrature failures turn the curve inconclusive instead of passing silently.
fn curve_or_inconclusive(
    i: usize,
    grid: &[f64],
    rs: Vec<Result<f64, ColombeauError>>,
) -> Result<ResidualCurve, ColombeauError> {
    let mut vals = Vec::with_capacity(rs.len());
    for r in rs {
        match r {
            Ok(v) => vals.push(v),
            Err(ColombeauError::Numerics(e)) => {
                let partial: Vec<f64> = vals.clone();
                return Ok(ResidualCurve {
                    equation_index: i,
                    epsilons: grid.to_vec(),
                    residuals: partial,
                    slope: None,
                    verdict: Verdict::Inconclusive(format!("quadrature: {e}")),
                    limit_estimate: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ResidualCurve::analyze(i, grid.to_vec(), vals))
}

/// Sup over the probe family of |r_i(eps)|, per equation.
pub fn strong_association_check(
    sys: &PDESystem,
    net: &GNet,
    family: &ProbeFamily,
    grid: &[f64],
    table: &SymbolTable,
) -> Result<Vec<ResidualCurve>, ColombeauError> {
    if !family.inside(&net.domain) {
        return Err(ColombeauError::Invalid("probe supports leave the net's domain".into()));
    }
    let nr = NetResidual::new(sys, net, table)?;
    let members = family.members(&net.vars);
    let mut out = Vec::new();
    for i in 0..sys.equations.len() {
        let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|e| (0..members.len()).map(move |m| (e, m))).collect();
        let vals: Vec<Result<f64, ColombeauError>> = jobs
            .par_iter()
            .map(|&(e, m)| nr.integral(i, &members[m], grid[e], table))
            .collect();
        let mut sups: Vec<Result<f64, ColombeauError>> = Vec::with_capacity(grid.len());
        for e in 0..grid.len() {
            let mut best = Ok(0.0f64);
            for m in 0..members.len() {
                match (&vals[e * members.len() + m], &best) {
                    (Ok(v), Ok(b)) => best = Ok(b.max(v.abs())),
                    (Err(err), Ok(_)) => best = Err(err.clone()),
                    _ => {}
                }
            }
            sups.push(best);
        }
        out.push(curve_or_inconclusive(i, grid, sups)?);
    }
    Ok(out)
}

/// Oracle for the Burgers-type limit of r(eps) for a shock along x = c t:
/// the integral over t of [F(u_r) - F(u_l) - c (u_r - u_l)] phi(c t, t).
pub fn shock_limit_oracle(flux_jump: f64, c: f64, ul: f64, ur: f64, phi: &TestFunction, table: &SymbolTable) -> Result<f64, ColombeauError> {
    let x = Symbol::new("x");
    let t = Symbol::new("t");
    let c_phi = Compiled::new(&phi.expr, &[x, t], &Bindings::new(), table)?;
    let jump = flux_jump - c * (ur - ul);
    let (t0, t1) = phi.support[1];
    let q = integrate(
        &|tt| c_phi.eval(&[c * tt, tt]).unwrap_or(f64::NAN),
        t0,
        t1,
        &QuadratureSpec::default().with_tol(1e-13),
    )?;
    Ok(jump * q.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Role};
    use crate::factorization::PDESystem;
    use crate::jet::JetSpec;
    use approx::assert_abs_diff_eq;

    fn table_1d() -> SymbolTable {
        let mut t = SymbolTable::new();
        t.declare("x", Role::Independent).unwrap();
        register_bump(&mut t).unwrap();
        t
    }

    #[test]
    fn mollifier_normalization_and_primitive() {
        let mut t = table_1d();
        let m = Mollifier::standard(&mut t).unwrap();
        assert!((m.mass - 1.0).abs() <= 1e-10);
        let th = |v: f64| crate::expr::evaluate(&m.primitive_of(Expr::float(v)), &Bindings::new(), &t).unwrap();
        assert_abs_diff_eq!(th(0.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(th(-1.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th(1.0), 1.0, epsilon = 1e-12);
        // interpolant against direct quadrature
        for &y in &[-0.9, -0.5, -0.1, 0.3, 0.77, 0.95] {
            let f = |v: f64| crate::expr::evaluate(&m.theta(Expr::float(v)), &Bindings::new(), &t).unwrap();
            let direct = integrate(&f, -1.0, y, &QuadratureSpec::default().with_tol(1e-14)).unwrap().value;
            assert_abs_diff_eq!(th(y), direct, epsilon = 1e-12);
        }
        let m2 = Mollifier::skewed(&mut t).unwrap();
        assert!((m2.mass - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn heaviside_and_delta_nets() {
        let mut t = table_1d();
        let m = Mollifier::standard(&mut t).unwrap();
        let x = [Symbol::new("x")];
        let h = embed_heaviside(&m, &Expr::sym("x"), &x, vec![(-1.0, 1.0)]);
        assert_abs_diff_eq!(h.evaluate(0, &[1.0], 0.1, &t).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.evaluate(0, &[0.0], 0.1, &t).unwrap(), 0.5, epsilon = 1e-12);
        let d = embed_delta(&m, &Expr::sym("x"), &x, vec![(-1.0, 1.0)]);
        for &eps in &[0.1, 1e-3] {
            let f = |v: f64| d.evaluate(0, &[v], eps, &t).unwrap();
            let spec = QuadratureSpec::default().with_breakpoints(vec![-eps, 0.0, eps]);
            assert_abs_diff_eq!(integrate(&f, -1.0, 1.0, &spec).unwrap().value, 1.0, epsilon = 1e-10);
        }
        for &eps in &[0.1, 0.01] {
            assert_abs_diff_eq!(d.evaluate(0, &[0.0], eps, &t).unwrap(), m.sup_norm / eps, epsilon = 1e-9 / eps);
        }
        // delta against the base bump tends to psi_0(0) = e^-1
        let eps = 1e-3;
        let f = |v: f64| d.evaluate(0, &[v], eps, &t).unwrap() * if v.abs() < 1.0 { (-1.0 / (1.0 - v * v)).exp() } else { 0.0 };
        let spec = QuadratureSpec::default().with_breakpoints(vec![-eps, 0.0, eps]);
        let v = integrate(&f, -1.0, 1.0, &spec).unwrap().value;
        assert!((v - (-1.0f64).exp()).abs() <= 1e-4);
    }

    #[test]
    fn shock_net_value_on_the_shock() {
        let spec = JetSpec::new(&["x", "t"], &["u"], 1);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        let m = Mollifier::standard(&mut t).unwrap();
        let vars = spec.independent_symbols();
        let net = shock_net(&m, &Expr::one(), &Expr::zero(), &parse("x - 0.5*t", &t).unwrap(), &vars, vec![(-2.0, 2.0), (0.0, 2.0)]);
        assert_abs_diff_eq!(net.evaluate(0, &[0.5, 1.0], 0.01, &t).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn growth_of_delta_and_shock() {
        let mut t = table_1d();
        let m = Mollifier::standard(&mut t).unwrap();
        let x = [Symbol::new("x")];
        let d = embed_delta(&m, &Expr::sym("x"), &x, vec![(-1.0, 1.0)]);
        let g = growth_exponent(&d, 0, &[], &[(-1.0, 1.0)], &default_grid(), &t).unwrap();
        assert!((g.p - 1.0).abs() <= 0.1, "p = {} {:?}", g.p, g.sups);
        let g = growth_exponent(&d, 0, &[0], &[(-1.0, 1.0)], &default_grid(), &t).unwrap();
        assert!((g.p - 2.0).abs() <= 0.1, "p = {}", g.p);
        let h = embed_heaviside(&m, &Expr::sym("x"), &x, vec![(-1.0, 1.0)]);
        let g = growth_exponent(&h, 0, &[], &[(-1.0, 1.0)], &default_grid(), &t).unwrap();
        assert!(g.p.abs() <= 0.05);
        assert_eq!(g.verdict, GrowthVerdict::Bounded);
    }

    #[test]
    fn verdict_rules() {
        let grid = default_grid();
        let lin: Vec<f64> = grid.iter().map(|e| 3.0 * e).collect();
        assert_eq!(ResidualCurve::analyze(0, grid.clone(), lin).verdict, Verdict::ConvergesToZero);
        let blow: Vec<f64> = grid.iter().map(|e| 2.0 / e).collect();
        assert_eq!(ResidualCurve::analyze(0, grid.clone(), blow).verdict, Verdict::Diverges);
        let lim: Vec<f64> = grid.iter().map(|e| -0.1 + 0.5 * e).collect();
        match ResidualCurve::analyze(0, grid.clone(), lim).verdict {
            Verdict::ConvergesToNonzero(l) => assert_abs_diff_eq!(l, -0.1, epsilon = 1e-12),
            v => panic!("{v:?}"),
        }
        let zero = vec![0.0; grid.len()];
        assert_eq!(ResidualCurve::analyze(0, grid.clone(), zero).verdict, Verdict::ConvergesToZero);
        let wild: Vec<f64> = grid.iter().enumerate().map(|(i, _)| if i % 2 == 0 { 1.0 } else { 0.3 }).collect();
        assert!(matches!(ResidualCurve::analyze(0, grid, wild).verdict, Verdict::Inconclusive(_)));
    }

    #[test]
    fn constant_net_has_zero_residual() {
        let spec = JetSpec::new(&["x", "t"], &["u"], 1);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        register_bump(&mut t).unwrap();
        let sys = PDESystem::new(spec.clone(), vec![parse("u_t + u*u_x", &t).unwrap()], vec![4], &t).unwrap();
        let net = GNet::new(vec![Expr::one()], &spec.independent_symbols(), vec![(-2.0, 2.0), (0.0, 2.0)]);
        let phi = bump_at(&spec.independent_symbols(), &[0.0, 1.0], 0.9, 0);
        let c = weak_residual_curve(&sys, &net, &phi, &default_grid(), &t).unwrap();
        assert!(c[0].residuals.iter().all(|r| *r == 0.0));
        assert_eq!(c[0].verdict, Verdict::ConvergesToZero);
    }

    #[test]
    fn probe_family_members() {
        let vars = [Symbol::new("x"), Symbol::new("t")];
        let fam = ProbeFamily::new(vec![vec![0.0, 1.2], vec![0.5, 1.2]], 1);
        assert_eq!(fam.members(&vars).len(), 6);
        assert!(fam.inside(&[(-1.0, 1.5), (0.2, 2.2)]));
        assert!(!fam.inside(&[(-0.5, 1.5), (0.2, 2.2)]));
    }
}
