//! Jet-space coordinates, total derivatives and prolongation of functions,
//! vector fields and group actions.
//!
//! Coordinates are enumerated as `x_1..x_p`, then for each order
//! `k = 0..n` and each dependent variable the multi-indices of length `k` in
//! lexicographic order. A multi-index is a nondecreasing list of
//! independent-variable positions, so `u_xt` and `u_tx` are one coordinate.

use crate::expr::{
    differentiate, is_semantic_zero, normalize, substitute, Bindings, Compiled, Expr, ExprError, Role, Symbol,
    SymbolTable,
};
use crate::numerics::{rk4_solve, NumericsError};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("total derivative of `{0}` needs jets above the configured order")]
    OrderOverflow(String),
    #[error("not projectable: {0}")]
    NotProjectable(String),
    #[error("Jacobian of the base transformation is singular")]
    Singular,
    #[error("nonlinear actions can only be prolonged to first order")]
    NonlinearHigherOrder,
    #[error("action is not the identity at eta = 0: {0}")]
    NotIdentity(String),
    #[error("linear decomposition does not match: {0}")]
    LinearDecomposition(String),
    #[error("flow escaped (|z| > 1e12) before eta = {0}")]
    Escape(f64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Coord {
    Independent(usize),
    Dependent { alpha: usize, multi: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct JetSpec {
    pub independents: Vec<String>,
    pub dependents: Vec<String>,
    pub order: usize,
    coords: Vec<(Symbol, Coord)>,
    index: HashMap<Symbol, usize>,
}

fn multi_indices(p: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for shorter in multi_indices(p, k - 1) {
        let start = shorter.last().copied().unwrap_or(0);
        for j in start..p {
            let mut m = shorter.clone();
            m.push(j);
            out.push(m);
        }
    }
    out
}

/// C(n, k) as u64.
pub fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

impl JetSpec {
    pub fn new(independents: &[&str], dependents: &[&str], order: usize) -> Self {
        let independents: Vec<String> = independents.iter().map(|s| s.to_string()).collect();
        let dependents: Vec<String> = dependents.iter().map(|s| s.to_string()).collect();
        let mut coords = Vec::new();
        for (i, x) in independents.iter().enumerate() {
            coords.push((Symbol::new(x), Coord::Independent(i)));
        }
        let p = independents.len();
        for k in 0..=order {
            for (alpha, u) in dependents.iter().enumerate() {
                for multi in multi_indices(p, k) {
                    let name = if multi.is_empty() {
                        u.clone()
                    } else {
                        let suffix: String = multi.iter().map(|&j| independents[j].as_str()).collect();
                        format!("{u}_{suffix}")
                    };
                    coords.push((Symbol::new(&name), Coord::Dependent { alpha, multi }));
                }
            }
        }
        let index = coords.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
        JetSpec {
            independents,
            dependents,
            order,
            coords,
            index,
        }
    }

    pub fn p(&self) -> usize {
        self.independents.len()
    }

    pub fn q(&self) -> usize {
        self.dependents.len()
    }

    /// Total number of coordinates N.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        self.coords.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn symbol(&self, k: usize) -> &Symbol {
        &self.coords[k].0
    }

    pub fn coord(&self, k: usize) -> &Coord {
        &self.coords[k].1
    }

    pub fn index_of(&self, s: &Symbol) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        self.index_of(&Symbol::new(name))
    }

    pub fn independent_symbols(&self) -> Vec<Symbol> {
        self.coords[..self.p()].iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn dependent_symbols(&self) -> Vec<Symbol> {
        (0..self.q()).map(|a| self.symbol(self.p() + a).clone()).collect()
    }

    /// Index of u^alpha_J for a (not necessarily sorted) multi-index.
    pub fn dependent_index(&self, alpha: usize, multi: &[usize]) -> Option<usize> {
        let mut m = multi.to_vec();
        m.sort_unstable();
        self.coords
            .iter()
            .position(|(_, c)| matches!(c, Coord::Dependent { alpha: a, multi: mm } if *a == alpha && *mm == m))
    }

    /// Index of the coordinate u^alpha_{J,i} for the coordinate k = u^alpha_J.
    pub fn extend(&self, k: usize, i: usize) -> Option<usize> {
        match self.coord(k) {
            Coord::Dependent { alpha, multi } => {
                let mut m = multi.clone();
                m.push(i);
                self.dependent_index(*alpha, &m)
            }
            Coord::Independent(_) => None,
        }
    }

    pub fn order_of(&self, k: usize) -> usize {
        match self.coord(k) {
            Coord::Independent(_) => 0,
            Coord::Dependent { multi, .. } => multi.len(),
        }
    }

    /// Number of order-k coordinates per dependent variable: C(p+k-1, k).
    pub fn count_of_order(&self, k: usize) -> usize {
        binomial((self.p() + k).saturating_sub(1) as u64, k as u64) as usize
    }

    /// Declares variables and jet coordinates in the table.
    pub fn declare_into(&self, table: &mut SymbolTable) -> Result<(), ExprError> {
        for (s, c) in &self.coords {
            let role = match c {
                Coord::Independent(_) => Role::Independent,
                Coord::Dependent { .. } => Role::Jet,
            };
            table.declare(s.as_str(), role)?;
        }
        for u in &self.dependents {
            table.declare_dependent_name(u);
        }
        Ok(())
    }

    /// A copy of this spec with a different order.
    pub fn with_order(&self, order: usize) -> JetSpec {
        let i: Vec<&str> = self.independents.iter().map(String::as_str).collect();
        let d: Vec<&str> = self.dependents.iter().map(String::as_str).collect();
        JetSpec::new(&i, &d, order)
    }

    pub fn is_jet_symbol(&self, s: &Symbol) -> bool {
        self.index_of(s).is_some_and(|k| k >= self.p())
    }

    /// True if the expression contains any derivative coordinate (order >= 1).
    pub fn has_derivatives(&self, e: &Expr) -> bool {
        e.free_symbols()
            .iter()
            .any(|s| self.index_of(s).is_some_and(|k| self.order_of(k) >= 1))
    }

    pub fn has_dependent(&self, e: &Expr) -> bool {
        e.free_symbols().iter().any(|s| self.is_jet_symbol(s))
    }
}

/// D_i e = de/dx_i + sum over u^a_J of u^a_{J,i} de/du^a_J.
pub fn total_derivative(e: &Expr, i: usize, spec: &JetSpec, table: &SymbolTable) -> Result<Expr, JetError> {
    let mut terms = vec![differentiate(e, spec.symbol(i), table)?];
    for s in e.free_symbols() {
        let Some(k) = spec.index_of(&s) else { continue };
        if k < spec.p() {
            continue;
        }
        let Some(next) = spec.extend(k, i) else {
            return Err(JetError::OrderOverflow(e.to_string()));
        };
        let d = differentiate(e, &s, table)?;
        terms.push(Expr::symbol(spec.symbol(next)) * d);
    }
    Ok(normalize(&Expr::sum(terms)))
}

/// Total derivative along a multi-index, applied in order.
pub fn total_derivative_multi(e: &Expr, multi: &[usize], spec: &JetSpec, table: &SymbolTable) -> Result<Expr, JetError> {
    multi
        .iter()
        .try_fold(e.clone(), |acc, &i| total_derivative(&acc, i, spec, table))
}

/// All jet coordinates of a concrete function u(x), as expressions in x.
#[derive(Clone, Debug)]
pub struct JetFunction {
    pub values: Vec<Expr>,
}

impl JetFunction {
    /// Bindings for every jet coordinate at the point x.
    pub fn bindings_at(&self, spec: &JetSpec, x: &[f64], table: &SymbolTable) -> Result<Bindings, JetError> {
        let mut b = Bindings::new();
        for (i, s) in spec.independent_symbols().iter().enumerate() {
            b.set(s.clone(), x[i]);
        }
        let base = b.clone();
        for (k, e) in self.values.iter().enumerate().skip(spec.p()) {
            b.set(spec.symbol(k).clone(), crate::expr::evaluate(e, &base, table)?);
        }
        Ok(b)
    }

    pub fn point_at(&self, spec: &JetSpec, x: &[f64], table: &SymbolTable) -> Result<Vec<f64>, JetError> {
        let b = self.bindings_at(spec, x, table)?;
        Ok(spec.symbols().iter().map(|s| b.get(s).unwrap_or(f64::NAN)).collect())
    }
}

pub fn prolong_function(u: &[Expr], spec: &JetSpec, table: &SymbolTable) -> Result<JetFunction, JetError> {
    if u.len() != spec.q() {
        return Err(JetError::Invalid(format!("expected {} components, got {}", spec.q(), u.len())));
    }
    let mut values: Vec<Expr> = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let v = match spec.coord(k) {
            Coord::Independent(_) => Expr::symbol(spec.symbol(k)),
            Coord::Dependent { alpha, multi } => match multi.split_last() {
                None => normalize(&u[*alpha]),
                Some((&last, rest)) => {
                    let parent = spec.dependent_index(*alpha, rest).expect("parent coordinate");
                    differentiate(&values[parent], spec.symbol(last), table)?
                }
            },
        };
        values.push(v);
    }
    Ok(JetFunction { values })
}

/// Linear part of a generator: phi = alpha(x) u + beta(x).
#[derive(Clone, Debug)]
pub struct LinearPart {
    pub alpha: Vec<Vec<Expr>>,
    pub beta: Vec<Expr>,
}

/// Projectable infinitesimal generator sum xi_i d/dx_i + sum phi_a d/du^a.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub xi: Vec<Expr>,
    pub phi: Vec<Expr>,
    pub linear: Option<LinearPart>,
}

impl VectorField {
    pub fn new(xi: Vec<Expr>, phi: Vec<Expr>, spec: &JetSpec) -> Result<Self, JetError> {
        if xi.len() != spec.p() || phi.len() != spec.q() {
            return Err(JetError::Invalid("generator has the wrong number of components".into()));
        }
        for x in &xi {
            if spec.has_dependent(x) {
                return Err(JetError::NotProjectable(format!("xi = {x} depends on dependent variables")));
            }
        }
        for f in &phi {
            if spec.has_derivatives(f) {
                return Err(JetError::Invalid(format!("phi = {f} involves derivatives")));
            }
        }
        Ok(VectorField {
            xi: xi.iter().map(normalize).collect(),
            phi: phi.iter().map(normalize).collect(),
            linear: None,
        })
    }

    /// Attaches and checks a linear decomposition phi = alpha u + beta.
    pub fn with_linear(mut self, alpha: Vec<Vec<Expr>>, beta: Vec<Expr>, spec: &JetSpec, table: &SymbolTable) -> Result<Self, JetError> {
        let us = spec.dependent_symbols();
        for (a, f) in self.phi.iter().enumerate() {
            let mut lin = vec![beta[a].clone()];
            for (l, u) in us.iter().enumerate() {
                if spec.has_dependent(&alpha[a][l]) {
                    return Err(JetError::LinearDecomposition(format!("alpha[{a}][{l}] depends on u")));
                }
                lin.push(alpha[a][l].clone() * Expr::symbol(u));
            }
            if !is_semantic_zero(&(f - Expr::sum(lin)), table) {
                return Err(JetError::LinearDecomposition(format!("phi[{a}] = {f}")));
            }
        }
        self.linear = Some(LinearPart { alpha, beta });
        Ok(self)
    }
}

/// Coefficients of pr v for every jet coordinate (xi for independents).
/// Uses the recursion Phi^{J,i} = D_i Phi^J - sum_l (D_i xi_l) u_{J,l}.
pub fn prolong_vector_field(v: &VectorField, spec: &JetSpec, table: &SymbolTable) -> Result<Vec<Expr>, JetError> {
    let p = spec.p();
    let mut dxi: Vec<Vec<Expr>> = Vec::with_capacity(p);
    for i in 0..p {
        dxi.push(v.xi.iter().map(|x| differentiate(x, spec.symbol(i), table)).collect::<Result<_, _>>()?);
    }
    let mut out: Vec<Expr> = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let c = match spec.coord(k) {
            Coord::Independent(i) => v.xi[*i].clone(),
            Coord::Dependent { alpha, multi } => match multi.split_last() {
                None => v.phi[*alpha].clone(),
                Some((&i, rest)) => {
                    let parent = spec.dependent_index(*alpha, rest).expect("parent coordinate");
                    let mut terms = vec![total_derivative(&out[parent], i, spec, table)?];
                    for (l, dl) in dxi[i].iter().enumerate() {
                        if dl.is_zero() {
                            continue;
                        }
                        let mut m = rest.to_vec();
                        m.push(l);
                        let ujl = spec.dependent_index(*alpha, &m).expect("same order");
                        terms.push(-(dl * Expr::symbol(spec.symbol(ujl))));
                    }
                    normalize(&Expr::sum(terms))
                }
            },
        };
        out.push(c);
    }
    Ok(out)
}

/// The closed prolongation formula Phi^J = D_J(phi - sum xi_i u_i) + sum xi_i u_{J,i},
/// evaluated on a spec one order higher. Used to cross-check the recursion.
pub fn prolong_vector_field_closed(v: &VectorField, spec: &JetSpec, table: &SymbolTable) -> Result<Vec<Expr>, JetError> {
    let big = spec.with_order(spec.order + 1);
    let mut out = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let c = match spec.coord(k) {
            Coord::Independent(i) => v.xi[*i].clone(),
            Coord::Dependent { alpha, multi } => {
                let mut q = vec![v.phi[*alpha].clone()];
                for (i, xi) in v.xi.iter().enumerate() {
                    let ui = big.dependent_index(*alpha, &[i]).expect("first order");
                    q.push(-(xi * Expr::symbol(big.symbol(ui))));
                }
                let mut terms = vec![total_derivative_multi(&Expr::sum(q), multi, &big, table)?];
                for (i, xi) in v.xi.iter().enumerate() {
                    let mut m = multi.clone();
                    m.push(i);
                    let uji = big.dependent_index(*alpha, &m).expect("order n + 1");
                    terms.push(xi * Expr::symbol(big.symbol(uji)));
                }
                normalize(&Expr::sum(terms))
            }
        };
        out.push(c);
    }
    Ok(out)
}

/// Linear part of an action: Phi_eta = phi(eta, x) u + psi(eta, x).
#[derive(Clone, Debug)]
pub struct LinearAction {
    pub phi: Vec<Vec<Expr>>,
    pub psi: Vec<Expr>,
}

/// One-parameter projectable group action (x, u) -> (Xi_eta(x), Phi_eta(x, u)).
#[derive(Clone, Debug)]
pub struct GroupAction {
    pub xi: Vec<Expr>,
    pub phi: Vec<Expr>,
    pub eta_range: (f64, f64),
    pub linear: Option<LinearAction>,
    pub slowly_increasing: bool,
    /// Box in x on which the action is used.
    pub domain: Vec<(f64, f64)>,
}

impl GroupAction {
    pub fn new(xi: Vec<Expr>, phi: Vec<Expr>, spec: &JetSpec, table: &SymbolTable) -> Result<Self, JetError> {
        if xi.len() != spec.p() || phi.len() != spec.q() {
            return Err(JetError::Invalid("action has the wrong number of components".into()));
        }
        for x in &xi {
            if spec.has_dependent(x) {
                return Err(JetError::NotProjectable(format!("Xi = {x} depends on dependent variables")));
            }
        }
        let g = GroupAction {
            xi: xi.iter().map(normalize).collect(),
            phi: phi.iter().map(normalize).collect(),
            eta_range: (-0.1, 0.1),
            linear: None,
            slowly_increasing: false,
            domain: vec![(-2.0, 2.0); spec.p()],
        };
        g.check_identity(spec, table)?;
        Ok(g)
    }

    pub fn with_linear(mut self, phi: Vec<Vec<Expr>>, psi: Vec<Expr>, spec: &JetSpec, table: &SymbolTable) -> Result<Self, JetError> {
        let us = spec.dependent_symbols();
        for (a, f) in self.phi.iter().enumerate() {
            let mut lin = vec![psi[a].clone()];
            for (l, u) in us.iter().enumerate() {
                if spec.has_dependent(&phi[a][l]) {
                    return Err(JetError::LinearDecomposition(format!("phi[{a}][{l}] depends on u")));
                }
                lin.push(phi[a][l].clone() * Expr::symbol(u));
            }
            if !is_semantic_zero(&(f - Expr::sum(lin)), table) {
                return Err(JetError::LinearDecomposition(format!("Phi[{a}] = {f}")));
            }
        }
        self.linear = Some(LinearAction { phi, psi });
        Ok(self)
    }

    /// Detects a linear-in-u structure and records it.
    pub fn detect_linear(self, spec: &JetSpec, table: &SymbolTable) -> Result<Self, JetError> {
        let us = spec.dependent_symbols();
        let mut mat = Vec::new();
        let mut psi = Vec::new();
        for f in &self.phi {
            let row = us
                .iter()
                .map(|u| differentiate(f, u, table))
                .collect::<Result<Vec<_>, _>>()?;
            if row.iter().any(|e| spec.has_dependent(e)) {
                return Ok(self);
            }
            let zero: HashMap<Symbol, Expr> = us.iter().map(|u| (u.clone(), Expr::zero())).collect();
            psi.push(normalize(&substitute(f, &zero)));
            mat.push(row);
        }
        self.with_linear(mat, psi, spec, table)
    }

    pub fn with_eta_range(mut self, lo: f64, hi: f64) -> Self {
        self.eta_range = (lo, hi);
        self
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = domain;
        self
    }

    fn check_identity(&self, spec: &JetSpec, table: &SymbolTable) -> Result<(), JetError> {
        let eta = HashMap::from([(Symbol::new("eta"), Expr::zero())]);
        let targets = spec.symbols();
        for (k, e) in self.xi.iter().chain(&self.phi).enumerate() {
            let at0 = substitute(e, &eta);
            if !is_semantic_zero(&(at0 - Expr::symbol(&targets[k])), table) {
                return Err(JetError::NotIdentity(e.to_string()));
            }
        }
        Ok(())
    }

    /// Identity action on the given spec.
    pub fn identity(spec: &JetSpec, table: &SymbolTable) -> Result<Self, JetError> {
        let xi = spec.independent_symbols().iter().map(Expr::symbol).collect();
        let phi = spec.dependent_symbols().iter().map(Expr::symbol).collect();
        GroupAction::new(xi, phi, spec, table)?.detect_linear(spec, table)
    }

    /// Infinitesimal generator d/d eta at eta = 0.
    pub fn generator(&self, spec: &JetSpec, table: &SymbolTable) -> Result<VectorField, JetError> {
        let eta = Symbol::new("eta");
        let zero = HashMap::from([(eta.clone(), Expr::zero())]);
        let at0 = |e: &Expr| -> Result<Expr, JetError> { Ok(normalize(&substitute(&differentiate(e, &eta, table)?, &zero))) };
        let xi = self.xi.iter().map(at0).collect::<Result<_, _>>()?;
        let phi = self.phi.iter().map(at0).collect::<Result<_, _>>()?;
        VectorField::new(xi, phi, spec)
    }
}

/// Prolonged action z -> pr g_eta(z) on all jet coordinates.
#[derive(Clone, Debug)]
pub struct ProlongedAction {
    pub spec: JetSpec,
    pub coords: Vec<Expr>,
    /// For linear actions: b[k][l] = d zbar_k / d z_l (jet columns l >= p) and the offsets b0[k].
    pub table_b: Option<(Vec<Vec<Expr>>, Vec<Expr>)>,
}

/// Adjugate inverse of a symbolic p x p matrix, p <= 3. Returns (inverse, det).
pub fn symbolic_inverse(m: &[Vec<Expr>]) -> Result<(Vec<Vec<Expr>>, Expr), JetError> {
    let n = m.len();
    let det = match n {
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        3 => Expr::sum(
            (0..3)
                .map(|j| {
                    let c = cofactor3(m, 0, j);
                    &m[0][j] * c
                })
                .collect(),
        ),
        _ => return Err(JetError::Invalid(format!("symbolic inverse limited to p <= 3, got {n}"))),
    };
    let det = normalize(&det);
    if det.is_zero() {
        return Err(JetError::Singular);
    }
    let inv_det = det.clone().recip();
    let adj: Vec<Vec<Expr>> = match n {
        1 => vec![vec![Expr::one()]],
        2 => vec![
            vec![m[1][1].clone(), -&m[0][1]],
            vec![-&m[1][0], m[0][0].clone()],
        ],
        _ => (0..3)
            .map(|i| (0..3).map(|j| cofactor3(m, j, i)).collect())
            .collect(),
    };
    let inv = adj
        .into_iter()
        .map(|row| row.into_iter().map(|e| normalize(&(e * &inv_det))).collect())
        .collect();
    Ok((inv, det))
}

fn cofactor3(m: &[Vec<Expr>], i: usize, j: usize) -> Expr {
    let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
    let c: Vec<usize> = (0..3).filter(|&k| k != j).collect();
    let minor = &m[r[0]][c[0]] * &m[r[1]][c[1]] - &m[r[0]][c[1]] * &m[r[1]][c[0]];
    if (i + j).is_multiple_of(2) {
        minor
    } else {
        -minor
    }
}

/// Prolongs g to the order of `spec` by zbar_{J,i} = sum_j D_j(zbar_J) (J Xi^{-1})_{j i}.
/// Nonlinear actions are limited to first order.
pub fn prolong_group_action(g: &GroupAction, spec: &JetSpec, table: &SymbolTable) -> Result<ProlongedAction, JetError> {
    if spec.order > 1 && g.linear.is_none() {
        return Err(JetError::NonlinearHigherOrder);
    }
    let p = spec.p();
    let jac: Vec<Vec<Expr>> = (0..p)
        .map(|i| (0..p).map(|j| differentiate(&g.xi[i], spec.symbol(j), table)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let (jinv, _det) = symbolic_inverse(&jac)?;
    let mut coords: Vec<Expr> = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let c = match spec.coord(k) {
            Coord::Independent(i) => g.xi[*i].clone(),
            Coord::Dependent { alpha, multi } => match multi.split_last() {
                None => g.phi[*alpha].clone(),
                Some((&i, rest)) => {
                    let parent = spec.dependent_index(*alpha, rest).expect("parent coordinate");
                    let mut terms = Vec::with_capacity(p);
                    for (j, row) in jinv.iter().enumerate() {
                        if row[i].is_zero() {
                            continue;
                        }
                        terms.push(total_derivative(&coords[parent], j, spec, table)? * &row[i]);
                    }
                    normalize(&Expr::sum(terms))
                }
            },
        };
        coords.push(c);
    }
    let table_b = if g.linear.is_some() {
        let jets: Vec<Symbol> = spec.symbols()[p..].to_vec();
        let zero: HashMap<Symbol, Expr> = jets.iter().map(|s| (s.clone(), Expr::zero())).collect();
        let mut b = Vec::with_capacity(spec.len());
        let mut b0 = Vec::with_capacity(spec.len());
        for c in &coords {
            let row = jets.iter().map(|s| differentiate(c, s, table)).collect::<Result<Vec<_>, _>>()?;
            b0.push(normalize(&substitute(c, &zero)));
            b.push(row);
        }
        Some((b, b0))
    } else {
        None
    };
    Ok(ProlongedAction {
        spec: spec.clone(),
        coords,
        table_b,
    })
}

impl ProlongedAction {
    /// Compiles the prolonged coordinates for evaluation at (eta, z).
    pub fn compile(&self, table: &SymbolTable) -> Result<CompiledAction, JetError> {
        let mut vars = vec![Symbol::new("eta")];
        vars.extend(self.spec.symbols());
        let parts = self
            .coords
            .iter()
            .map(|c| Compiled::new(c, &vars, &Bindings::new(), table))
            .collect::<Result<_, _>>()?;
        Ok(CompiledAction { parts })
    }

    /// b^k_l for jet coordinates k, l (indices into the full coordinate list).
    pub fn b(&self, k: usize, l: usize) -> Option<&Expr> {
        let p = self.spec.p();
        self.table_b.as_ref().and_then(|(b, _)| if l >= p { b[k].get(l - p) } else { None })
    }
}

#[derive(Clone)]
pub struct CompiledAction {
    parts: Vec<Compiled>,
}

impl CompiledAction {
    pub fn apply(&self, eta: f64, z: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut args = Vec::with_capacity(z.len() + 1);
        args.push(eta);
        args.extend_from_slice(z);
        self.parts.iter().map(|c| c.eval(&args)).collect()
    }
}

/// Integrates the generator from `start` = (x, u) for parameter time eta with
/// 1024 RK4 steps.
pub fn flow(v: &VectorField, eta: f64, start: &[f64], spec: &JetSpec, table: &SymbolTable) -> Result<Vec<f64>, JetError> {
    let mut vars = spec.independent_symbols();
    vars.extend(spec.dependent_symbols());
    let fields: Vec<Compiled> = v
        .xi
        .iter()
        .chain(&v.phi)
        .map(|e| Compiled::new(e, &vars, &Bindings::new(), table))
        .collect::<Result<_, _>>()?;
    let rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>, NumericsError> {
        fields
            .iter()
            .map(|c| c.eval(y).map_err(|e| NumericsError::Evaluation(e.to_string())))
            .collect()
    };
    match rk4_solve(rhs, start, 0.0, eta, 1024) {
        Ok(y) => Ok(y),
        Err(NumericsError::BlowUp { .. }) => Err(JetError::Escape(eta)),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, FunctionFamily};
    use approx::assert_abs_diff_eq;

    fn setup(order: usize) -> (JetSpec, SymbolTable) {
        let spec = JetSpec::new(&["x", "t"], &["u"], order);
        let mut t = SymbolTable::new();
        spec.declare_into(&mut t).unwrap();
        t.register_family(FunctionFamily::Identity).unwrap();
        (spec, t)
    }

    #[test]
    fn enumeration() {
        let spec = JetSpec::new(&["x", "t"], &["u"], 3);
        assert_eq!(spec.len(), 2 + 1 + 2 + 3 + 4);
        let names: Vec<String> = spec.symbols().iter().map(|s| s.to_string()).collect();
        assert_eq!(&names[..8], &["x", "t", "u", "u_x", "u_t", "u_xx", "u_xt", "u_tt"]);
        for k in 0..=3 {
            assert_eq!(spec.count_of_order(k), k + 1);
        }
        let two = JetSpec::new(&["x", "t"], &["U", "V"], 1);
        let names: Vec<String> = two.symbols().iter().map(|s| s.to_string()).collect();
        assert_eq!(names, ["x", "t", "U", "V", "U_x", "U_t", "V_x", "V_t"]);
    }

    #[test]
    fn total_derivatives() {
        let (spec, t) = setup(2);
        let d = |s: &str, i| total_derivative(&parse(s, &t).unwrap(), i, &spec, &t).unwrap();
        assert_eq!(d("u", 0), Expr::sym("u_x"));
        assert_eq!(d("u*u_x", 1), normalize(&parse("u_t*u_x + u*u_xt", &t).unwrap()));
        assert_eq!(d("x^2", 0), normalize(&parse("2*x", &t).unwrap()));
        assert!(matches!(
            total_derivative(&Expr::sym("u_xx"), 0, &spec, &t),
            Err(JetError::OrderOverflow(_))
        ));
    }

    #[test]
    fn total_derivative_against_function_jets() {
        let (spec, t) = setup(2);
        let u = prolong_function(&[parse("sin(x + t^2)", &t).unwrap()], &spec, &t).unwrap();
        let e = parse("u*u_x", &t).unwrap();
        let de = total_derivative(&e, 1, &spec, &t).unwrap();
        let b = u.bindings_at(&spec, &[0.4, 0.9], &t).unwrap();
        // d/dt of sin(x+t^2) cos(x+t^2)
        let s: f64 = 0.4 + 0.81;
        let want = 2.0 * 0.9 * (s.cos().powi(2) - s.sin().powi(2));
        assert_abs_diff_eq!(evaluate(&de, &b, &t).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn function_prolongation() {
        let (spec, t) = setup(2);
        let jf = prolong_function(&[parse("sin(x + t^2)", &t).unwrap()], &spec, &t).unwrap();
        let k = spec.index_of_name("u_xt").unwrap();
        let b = Bindings::from_pairs(&[("x", 1.0), ("t", 1.0)]);
        assert_abs_diff_eq!(evaluate(&jf.values[k], &b, &t).unwrap(), -2.0 * 2f64.sin(), epsilon = 1e-12);
        let spec1 = JetSpec::new(&["x"], &["u"], 2);
        let mut t1 = SymbolTable::new();
        spec1.declare_into(&mut t1).unwrap();
        let jf = prolong_function(&[parse("x^3", &t1).unwrap()], &spec1, &t1).unwrap();
        assert_eq!(jf.values[2], normalize(&parse("3*x^2", &t1).unwrap()));
        assert_eq!(jf.values[3], normalize(&parse("6*x", &t1).unwrap()));
        let jc = prolong_function(&[Expr::int(4)], &spec, &t).unwrap();
        assert!(jc.values[spec.p() + 1..].iter().all(Expr::is_zero));
    }

    #[test]
    fn vector_field_prolongation() {
        let (spec, t) = setup(2);
        let vf = |xi: [&str; 2], phi: &str| {
            VectorField::new(
                xi.iter().map(|s| parse(s, &t).unwrap()).collect(),
                vec![parse(phi, &t).unwrap()],
                &spec,
            )
            .unwrap()
        };
        let trans = prolong_vector_field(&vf(["1", "0"], "0"), &spec, &t).unwrap();
        assert!(trans[spec.p()..].iter().all(Expr::is_zero));
        let scale = prolong_vector_field(&vf(["x", "t"], "0"), &spec, &t).unwrap();
        assert_eq!(scale[3], normalize(&(Expr::sym("u_x") * Expr::int(-1))));
        assert_eq!(scale[4], normalize(&(Expr::sym("u_t") * Expr::int(-1))));
        let w1 = vf(["x*t", "t^2"], "(x - f(u)*t)/fp(u)");
        let rec = prolong_vector_field(&w1, &spec, &t).unwrap();
        let closed = prolong_vector_field_closed(&w1, &spec, &t).unwrap();
        for (a, b) in rec.iter().zip(&closed) {
            assert!(is_semantic_zero(&(a - b), &t), "{a} vs {b}");
        }
    }

    #[test]
    fn non_projectable_rejected() {
        let (spec, t) = setup(1);
        let r = VectorField::new(vec![Expr::sym("u"), Expr::zero()], vec![Expr::zero()], &spec);
        assert!(matches!(r, Err(JetError::NotProjectable(_))));
        let r = GroupAction::new(
            vec![parse("x + eta*u", &t).unwrap(), Expr::sym("t")],
            vec![Expr::sym("u")],
            &spec,
            &t,
        );
        assert!(matches!(r, Err(JetError::NotProjectable(_))));
        let r = GroupAction::new(
            vec![parse("x + 1", &t).unwrap(), Expr::sym("t")],
            vec![Expr::sym("u")],
            &spec,
            &t,
        );
        assert!(matches!(r, Err(JetError::NotIdentity(_))));
    }

    fn g1(spec: &JetSpec, t: &SymbolTable) -> GroupAction {
        GroupAction::new(
            vec![parse("x/(1-eta*t)", t).unwrap(), parse("t/(1-eta*t)", t).unwrap()],
            vec![parse("finv(eta*x + f(u) - eta*f(u)*t)", t).unwrap()],
            spec,
            t,
        )
        .unwrap()
    }

    #[test]
    fn g1_first_prolongation_matches_transformed_function() {
        let (spec, t) = setup(1);
        let pa = prolong_group_action(&g1(&spec, &t), &spec, &t).unwrap();
        let act = pa.compile(&t).unwrap();
        let eta = 0.05;
        // transformed function for u = x^2 (f = id): u~(x~, t~) = eta x + x^2 (1 - eta t)
        // with x = x~ / (1 + eta t~), t = t~ / (1 + eta t~)
        let ut = |xt: f64, tt: f64| {
            let s = 1.0 + eta * tt;
            let (x, t0) = (xt / s, tt / s);
            eta * x + x * x * (1.0 - eta * t0)
        };
        for i in 0..10 {
            let (x, tt) = (-0.9 + 0.2 * i as f64, 0.3 + 0.05 * i as f64);
            let z = [x, tt, x * x, 2.0 * x, 0.0];
            let zb = act.apply(eta, &z).unwrap();
            let h = 1e-5;
            let fx = (ut(zb[0] + h, zb[1]) - ut(zb[0] - h, zb[1])) / (2.0 * h);
            let ft = (ut(zb[0], zb[1] + h) - ut(zb[0], zb[1] - h)) / (2.0 * h);
            assert_abs_diff_eq!(zb[2], ut(zb[0], zb[1]), epsilon = 1e-12);
            assert_abs_diff_eq!(zb[3], fx, epsilon = 1e-7);
            assert_abs_diff_eq!(zb[4], ft, epsilon = 1e-7);
        }
    }

    #[test]
    fn scaling_action_b_table() {
        let (spec, t) = setup(2);
        let g = GroupAction::new(
            vec![Expr::sym("x"), Expr::sym("t")],
            vec![parse("exp(eta)*u", &t).unwrap()],
            &spec,
            &t,
        )
        .unwrap()
        .detect_linear(&spec, &t)
        .unwrap();
        let pa = prolong_group_action(&g, &spec, &t).unwrap();
        let e = parse("exp(eta)", &t).unwrap();
        for k in spec.p()..spec.len() {
            for l in spec.p()..spec.len() {
                let want = if k == l { e.clone() } else { Expr::zero() };
                assert_eq!(pa.b(k, l).unwrap(), &normalize(&want));
            }
        }
        let (spec2, t2) = setup(2);
        let id = GroupAction::identity(&spec2, &t2).unwrap();
        let pa = prolong_group_action(&id, &spec2, &t2).unwrap();
        for (k, c) in pa.coords.iter().enumerate() {
            assert_eq!(c, &Expr::symbol(spec2.symbol(k)));
        }
        assert!(matches!(
            prolong_group_action(&g1(&spec2, &t2), &spec2, &t2),
            Err(JetError::NonlinearHigherOrder)
        ));
    }

    #[test]
    fn flows() {
        let (spec, t) = setup(1);
        let dx = VectorField::new(vec![Expr::one(), Expr::zero()], vec![Expr::zero()], &spec).unwrap();
        let y = flow(&dx, 1.0, &[0.0, 0.0, 0.0], &spec, &t).unwrap();
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-14);
        let w2 = VectorField::new(
            vec![parse("x^2", &t).unwrap(), parse("x*t", &t).unwrap()],
            vec![parse("f(u)/fp(u)*(x - f(u)*t)", &t).unwrap()],
            &spec,
        )
        .unwrap();
        let (eta, x, tt, u) = (0.1, 0.5, 0.2, 0.3);
        let y = flow(&w2, eta, &[x, tt, u], &spec, &t).unwrap();
        assert_abs_diff_eq!(y[0], x / (1.0 - eta * x), epsilon = 1e-8);
        assert_abs_diff_eq!(y[1], tt / (1.0 - eta * x), epsilon = 1e-8);
        assert_abs_diff_eq!(y[2], u / (1.0 - eta * (x - u * tt)), epsilon = 1e-8);
        let w1 = VectorField::new(
            vec![parse("x*t", &t).unwrap(), parse("t^2", &t).unwrap()],
            vec![parse("(x - f(u)*t)/fp(u)", &t).unwrap()],
            &spec,
        )
        .unwrap();
        let s = [0.4, 0.7, -0.2];
        let half = flow(&w1, 0.05, &s, &spec, &t).unwrap();
        let twice = flow(&w1, 0.05, &half, &spec, &t).unwrap();
        let once = flow(&w1, 0.1, &s, &spec, &t).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(twice[k], once[k], epsilon = 1e-8);
        }
        // 1 - eta t reaches 0 at eta = 1/t
        assert!(matches!(flow(&w1, 2.0, &[0.4, 1.0, 0.1], &spec, &t), Err(JetError::Escape(_))));
    }
}
