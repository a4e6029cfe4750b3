use super::{Expr, ExprError, Symbol};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// Role of a declared symbol. Each symbol has exactly one role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Independent,
    Jet,
    GroupParameter,
    Quadrature,
    Regularization,
    Constant,
}

pub type NumFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Placeholder symbol `#i` used inside derivative templates for argument slot `i`.
pub fn placeholder(i: usize) -> Symbol {
    Symbol::new(&format!("#{i}"))
}

/// A registered opaque function.
///
/// Rule-based functions carry one derivative template per slot, written over
/// the placeholders `#0, #1, ...`. Arbitrary functions carry no rules; their
/// derivatives are tracked as derivative orders on the call node.
#[derive(Clone)]
pub struct OpaqueFn {
    pub name: Symbol,
    pub arity: usize,
    pub derivatives: Vec<Option<Expr>>,
    pub arbitrary: bool,
    pub eval: Option<NumFn>,
    pub inverse: Option<Symbol>,
}

impl OpaqueFn {
    pub fn new(name: &str, arity: usize) -> Self {
        OpaqueFn {
            name: Symbol::new(name),
            arity,
            derivatives: vec![None; arity],
            arbitrary: false,
            eval: None,
            inverse: None,
        }
    }

    pub fn with_eval(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.eval = Some(Arc::new(f));
        self
    }

    pub fn with_derivative(mut self, slot: usize, template: Expr) -> Self {
        self.derivatives[slot] = Some(template);
        self
    }

    pub fn with_inverse(mut self, inverse: &str) -> Self {
        self.inverse = Some(Symbol::new(inverse));
        self
    }

    pub fn arbitrary(name: &str, arity: usize) -> Self {
        OpaqueFn {
            arbitrary: true,
            ..OpaqueFn::new(name, arity)
        }
    }
}

impl fmt::Debug for OpaqueFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpaqueFn")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("arbitrary", &self.arbitrary)
            .field("inverse", &self.inverse)
            .finish()
    }
}

/// Scalar nonlinearity families used for `u_t + f(u) u_x`. Registering a
/// family declares `f`, `fp` (= f'), `fpp` (= f''), `finv` and the primitive `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionFamily {
    Identity,
    Exp,
    /// f(u) = u + u^3, inverted numerically.
    Cubic,
}

impl FunctionFamily {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "id" | "identity" => Some(FunctionFamily::Identity),
            "exp" => Some(FunctionFamily::Exp),
            "cubic" => Some(FunctionFamily::Cubic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionFamily::Identity => "id",
            FunctionFamily::Exp => "exp",
            FunctionFamily::Cubic => "cubic",
        }
    }

    pub fn f(self, u: f64) -> f64 {
        match self {
            FunctionFamily::Identity => u,
            FunctionFamily::Exp => u.exp(),
            FunctionFamily::Cubic => u + u * u * u,
        }
    }

    pub fn primitive(self, u: f64) -> f64 {
        match self {
            FunctionFamily::Identity => 0.5 * u * u,
            FunctionFamily::Exp => u.exp(),
            FunctionFamily::Cubic => 0.5 * u * u + 0.25 * u.powi(4),
        }
    }

    fn fp(self, u: f64) -> f64 {
        match self {
            FunctionFamily::Identity => 1.0,
            FunctionFamily::Exp => u.exp(),
            FunctionFamily::Cubic => 1.0 + 3.0 * u * u,
        }
    }

    fn fpp(self, u: f64) -> f64 {
        match self {
            FunctionFamily::Identity => 0.0,
            FunctionFamily::Exp => u.exp(),
            FunctionFamily::Cubic => 6.0 * u,
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            FunctionFamily::Identity => y,
            FunctionFamily::Exp => {
                if y > 0.0 {
                    y.ln()
                } else {
                    f64::NAN
                }
            }
            FunctionFamily::Cubic => {
                // monotone, so Newton from the cube-root seed converges
                let mut u = y.cbrt();
                for _ in 0..60 {
                    let step = (u + u * u * u - y) / (1.0 + 3.0 * u * u);
                    u -= step;
                    if step.abs() <= 1e-16 * (1.0 + u.abs()) {
                        break;
                    }
                }
                u
            }
        }
    }
}

#[derive(Clone)]
pub struct SymbolTable {
    symbols: BTreeMap<Symbol, Role>,
    functions: BTreeMap<Symbol, OpaqueFn>,
    independents: Vec<String>,
    dependents: BTreeSet<String>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    /// New table with the reserved symbols `eta`, `tau` and `eps` declared.
    pub fn new() -> Self {
        let mut t = SymbolTable {
            symbols: BTreeMap::new(),
            functions: BTreeMap::new(),
            independents: Vec::new(),
            dependents: BTreeSet::new(),
        };
        t.symbols.insert(Symbol::new("eta"), Role::GroupParameter);
        t.symbols.insert(Symbol::new("tau"), Role::Quadrature);
        t.symbols.insert(Symbol::new("eps"), Role::Regularization);
        t
    }

    pub fn declare(&mut self, name: &str, role: Role) -> Result<Symbol, ExprError> {
        let sym = Symbol::new(name);
        if self.functions.contains_key(&sym) {
            return Err(ExprError::RoleConflict {
                name: name.to_string(),
                existing: Role::Constant,
            });
        }
        match self.symbols.get(&sym) {
            Some(r) if *r != role => Err(ExprError::RoleConflict {
                name: name.to_string(),
                existing: *r,
            }),
            _ => {
                self.symbols.insert(sym.clone(), role);
                if role == Role::Independent && !self.independents.iter().any(|s| s == name) {
                    self.independents.push(name.to_string());
                }
                Ok(sym)
            }
        }
    }

    /// Records a dependent-variable name so that mixed jet spellings like
    /// `u_tx` resolve to their canonical coordinate `u_xt`.
    pub fn declare_dependent_name(&mut self, name: &str) {
        self.dependents.insert(name.to_string());
    }

    pub fn role(&self, sym: &Symbol) -> Option<Role> {
        self.symbols.get(sym).copied()
    }

    pub fn symbols_with_role(&self, role: Role) -> Vec<Symbol> {
        self.symbols
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn register_function(&mut self, f: OpaqueFn) -> Result<(), ExprError> {
        if let Some(r) = self.symbols.get(&f.name) {
            return Err(ExprError::RoleConflict {
                name: f.name.to_string(),
                existing: *r,
            });
        }
        self.functions.insert(f.name.clone(), f);
        Ok(())
    }

    pub fn declare_arbitrary(&mut self, name: &str, arity: usize) -> Result<(), ExprError> {
        self.register_function(OpaqueFn::arbitrary(name, arity))
    }

    pub fn function(&self, name: &Symbol) -> Option<&OpaqueFn> {
        self.functions.get(name)
    }

    pub fn has_function(&self, name: &str) -> bool {
        self.functions.contains_key(&Symbol::new(name))
    }

    /// Resolves an identifier to a declared symbol, canonicalizing jet names.
    pub fn resolve(&self, name: &str) -> Option<Symbol> {
        let sym = Symbol::new(name);
        if self.symbols.contains_key(&sym) {
            return Some(sym);
        }
        let (dep, suffix) = name.rsplit_once('_')?;
        if !self.dependents.contains(dep) || suffix.is_empty() {
            return None;
        }
        let mut idx = Vec::with_capacity(suffix.len());
        for ch in suffix.chars() {
            let pos = self
                .independents
                .iter()
                .position(|s| s.len() == ch.len_utf8() && s.starts_with(ch))?;
            idx.push(pos);
        }
        idx.sort_unstable();
        let canon: String = idx
            .iter()
            .map(|&i| self.independents[i].as_str())
            .collect();
        let sym = Symbol::new(&format!("{dep}_{canon}"));
        self.symbols.contains_key(&sym).then_some(sym)
    }

    /// Registers `f`, `fp`, `fpp`, `finv` and `F` for the given family.
    pub fn register_family(&mut self, family: FunctionFamily) -> Result<(), ExprError> {
        let p0 = || Expr::symbol(&placeholder(0));
        self.register_function(
            OpaqueFn::new("f", 1)
                .with_eval(move |a| family.f(a[0]))
                .with_derivative(0, Expr::opaque("fp", vec![p0()]))
                .with_inverse("finv"),
        )?;
        self.register_function(
            OpaqueFn::new("fp", 1)
                .with_eval(move |a| family.fp(a[0]))
                .with_derivative(0, Expr::opaque("fpp", vec![p0()])),
        )?;
        let fpp_rule = match family {
            FunctionFamily::Identity => Expr::zero(),
            FunctionFamily::Exp => Expr::opaque("fpp", vec![p0()]),
            FunctionFamily::Cubic => Expr::int(6),
        };
        self.register_function(
            OpaqueFn::new("fpp", 1)
                .with_eval(move |a| family.fpp(a[0]))
                .with_derivative(0, fpp_rule),
        )?;
        // (f^-1)' = 1 / f'(f^-1)
        let finv_rule = Expr::opaque("fp", vec![Expr::opaque("finv", vec![p0()])]).recip();
        self.register_function(
            OpaqueFn::new("finv", 1)
                .with_eval(move |a| family.inverse(a[0]))
                .with_derivative(0, finv_rule)
                .with_inverse("f"),
        )?;
        self.register_function(
            OpaqueFn::new("F", 1)
                .with_eval(move |a| family.primitive(a[0]))
                .with_derivative(0, Expr::opaque("f", vec![p0()])),
        )?;
        Ok(())
    }

    /// Checks `g(f(u)) = u` for every function with a declared inverse, at the
    /// given sample arguments. Returns the worst deviation.
    pub fn check_inverse_round_trip(&self, samples: &[f64]) -> Result<f64, ExprError> {
        let mut worst: f64 = 0.0;
        for f in self.functions.values() {
            let Some(inv) = &f.inverse else { continue };
            let (Some(fe), Some(ge)) = (
                f.eval.as_ref(),
                self.function(inv).and_then(|g| g.eval.as_ref()),
            ) else {
                return Err(ExprError::NoEvaluator(f.name.to_string()));
            };
            for &u in samples {
                let y = fe(&[u]);
                if !y.is_finite() {
                    continue;
                }
                let back = ge(&[y]);
                worst = worst.max((back - u).abs());
            }
        }
        Ok(worst)
    }
}

impl fmt::Debug for SymbolTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolTable")
            .field("symbols", &self.symbols)
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .finish()
    }
}
