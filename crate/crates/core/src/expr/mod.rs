//! Immutable symbolic expressions.
//!
//! An [`Expr`] is a reference-counted tree over exact rationals, floats,
//! symbols, sums, products, rational powers, elementary calls and opaque
//! (registered) function calls. Nodes are never mutated after construction, so
//! expressions are cheap to clone and safe to share across threads.
//!
//! Quotients are stored as products with negative exponents; `a/b` parses to
//! `a * b^(-1)` and the pretty printer folds them back into fractions.

mod diff;
mod display;
mod eval;
mod normalize;
mod parse;
mod subst;
mod table;

pub use diff::{differentiate, gradient};
pub use eval::{evaluate, Bindings, Compiled};
pub use normalize::{expand, is_semantic_zero, normalize, semantic_eq, simplify};
pub use parse::parse;
pub use subst::{substitute, substitute_function, substitute_normalized};
pub use table::{placeholder, FunctionFamily, NumFn, OpaqueFn, Role, SymbolTable};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use thiserror::Error;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("exponent must be a rational constant, got `{0}`")]
    SymbolicExponent(String),
    #[error("no derivative rule for slot {slot} of `{name}`")]
    NoDerivativeRule { name: String, slot: usize },
    #[error("no numeric evaluator for `{0}`")]
    NoEvaluator(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound symbol `{0}` during evaluation")]
    Unbound(String),
    #[error("symbol `{name}` already declared with role {existing:?}")]
    RoleConflict { name: String, existing: Role },
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Elementary {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Exp => "exp",
            Elementary::Log => "log",
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Sqrt => "sqrt",
            Elementary::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Elementary::Exp,
            "log" | "ln" => Elementary::Log,
            "sin" => Elementary::Sin,
            "cos" => Elementary::Cos,
            "sqrt" => Elementary::Sqrt,
            "abs" => Elementary::Abs,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, x: f64) -> Result<f64, ExprError> {
        match self {
            Elementary::Exp => Ok(x.exp()),
            Elementary::Log => {
                if x <= 0.0 {
                    Err(ExprError::Domain(format!("log of non-positive value {x}")))
                } else {
                    Ok(x.ln())
                }
            }
            Elementary::Sin => Ok(x.sin()),
            Elementary::Cos => Ok(x.cos()),
            Elementary::Sqrt => {
                if x < 0.0 {
                    Err(ExprError::Domain(format!("sqrt of negative value {x}")))
                } else {
                    Ok(x.sqrt())
                }
            }
            Elementary::Abs => Ok(x.abs()),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Rational(Rational),
    Float(f64),
    Symbol(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Rational),
    Call(Elementary, Expr),
    /// Registered function call. `orders` counts partial derivatives per
    /// argument slot and is only non-zero for arbitrary (rule-free) functions.
    Opaque {
        name: Symbol,
        orders: Vec<u32>,
        args: Vec<Expr>,
    },
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn rational(r: Rational) -> Self {
        Expr::from_node(Node::Rational(r))
    }

    pub fn int(n: i64) -> Self {
        Expr::rational(Rational::from_integer(n as i128))
    }

    pub fn frac(num: i64, den: i64) -> Self {
        Expr::rational(Rational::new(num as i128, den as i128))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn float(x: f64) -> Self {
        Expr::from_node(Node::Float(x))
    }

    pub fn sym(name: &str) -> Self {
        Expr::from_node(Node::Symbol(Symbol::new(name)))
    }

    pub fn symbol(s: &Symbol) -> Self {
        Expr::from_node(Node::Symbol(s.clone()))
    }

    /// Sum with trivial folding: zero terms are dropped.
    pub fn sum(terms: Vec<Expr>) -> Self {
        let mut kept: Vec<Expr> = terms.into_iter().filter(|t| !t.is_zero()).collect();
        match kept.len() {
            0 => Expr::zero(),
            1 => kept.pop().unwrap(),
            _ => Expr::from_node(Node::Add(kept)),
        }
    }

    /// Product with trivial folding: a zero factor annihilates, unit factors vanish.
    pub fn product(factors: Vec<Expr>) -> Self {
        if factors.iter().any(|f| f.is_zero()) {
            return Expr::zero();
        }
        let mut kept: Vec<Expr> = factors.into_iter().filter(|f| !f.is_one()).collect();
        match kept.len() {
            0 => Expr::one(),
            1 => kept.pop().unwrap(),
            _ => Expr::from_node(Node::Mul(kept)),
        }
    }

    pub fn pow(base: Expr, exp: Rational) -> Self {
        if exp.is_zero() {
            return Expr::one();
        }
        if exp.is_one() {
            return base;
        }
        if base.is_one() {
            return Expr::one();
        }
        Expr::from_node(Node::Pow(base, exp))
    }

    pub fn powi(base: Expr, n: i64) -> Self {
        Expr::pow(base, Rational::from_integer(n as i128))
    }

    pub fn recip(self) -> Self {
        Expr::powi(self, -1)
    }

    pub fn call(f: Elementary, arg: Expr) -> Self {
        Expr::from_node(Node::Call(f, arg))
    }

    pub fn exp(arg: Expr) -> Self {
        Expr::call(Elementary::Exp, arg)
    }

    pub fn opaque(name: &str, args: Vec<Expr>) -> Self {
        let n = args.len();
        Expr::from_node(Node::Opaque {
            name: Symbol::new(name),
            orders: vec![0; n],
            args,
        })
    }

    pub fn is_zero(&self) -> bool {
        match self.node() {
            Node::Rational(r) => r.is_zero(),
            Node::Float(x) => *x == 0.0,
            _ => false,
        }
    }

    pub fn is_one(&self) -> bool {
        match self.node() {
            Node::Rational(r) => r.is_one(),
            _ => false,
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self.node() {
            Node::Rational(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.node() {
            Node::Rational(r) => r.to_f64(),
            Node::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self.node() {
            Node::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// Splits a product into numerator and denominator factors (negative
    /// exponents go to the denominator). Non-products have denominator 1.
    pub fn as_quotient(&self) -> (Expr, Expr) {
        let factors: Vec<Expr> = match self.node() {
            Node::Mul(fs) => fs.clone(),
            _ => vec![self.clone()],
        };
        let mut num = Vec::new();
        let mut den = Vec::new();
        for f in factors {
            match f.node() {
                Node::Pow(b, r) if r.is_negative() => den.push(Expr::pow(b.clone(), -*r)),
                _ => num.push(f),
            }
        }
        (Expr::product(num), Expr::product(den))
    }

    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        match self.node() {
            Node::Rational(_) | Node::Float(_) => {}
            Node::Symbol(s) => {
                out.insert(s.clone());
            }
            Node::Add(ts) | Node::Mul(ts) => ts.iter().for_each(|t| t.collect_symbols(out)),
            Node::Pow(b, _) => b.collect_symbols(out),
            Node::Call(_, a) => a.collect_symbols(out),
            Node::Opaque { args, .. } => args.iter().for_each(|a| a.collect_symbols(out)),
        }
    }

    pub fn contains_symbol(&self, s: &Symbol) -> bool {
        match self.node() {
            Node::Rational(_) | Node::Float(_) => false,
            Node::Symbol(t) => t == s,
            Node::Add(ts) | Node::Mul(ts) => ts.iter().any(|t| t.contains_symbol(s)),
            Node::Pow(b, _) => b.contains_symbol(s),
            Node::Call(_, a) => a.contains_symbol(s),
            Node::Opaque { args, .. } => args.iter().any(|a| a.contains_symbol(s)),
        }
    }

    /// Names of all opaque functions referenced by the expression.
    pub fn opaque_names(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_opaque(&mut out);
        out
    }

    fn collect_opaque(&self, out: &mut BTreeSet<Symbol>) {
        match self.node() {
            Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => {}
            Node::Add(ts) | Node::Mul(ts) => ts.iter().for_each(|t| t.collect_opaque(out)),
            Node::Pow(b, _) => b.collect_opaque(out),
            Node::Call(_, a) => a.collect_opaque(out),
            Node::Opaque { name, args, .. } => {
                out.insert(name.clone());
                args.iter().for_each(|a| a.collect_opaque(out));
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => 0,
            Node::Add(ts) | Node::Mul(ts) => ts.iter().map(Expr::size).sum(),
            Node::Pow(b, _) => b.size(),
            Node::Call(_, a) => a.size(),
            Node::Opaque { args, .. } => args.iter().map(Expr::size).sum(),
        }
    }

    fn rank(&self) -> u8 {
        match self.node() {
            Node::Rational(_) => 0,
            Node::Float(_) => 1,
            Node::Symbol(_) => 2,
            Node::Pow(..) => 3,
            Node::Mul(_) => 4,
            Node::Add(_) => 5,
            Node::Call(..) => 6,
            Node::Opaque { .. } => 7,
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let r = self.rank().cmp(&other.rank());
        if r != Ordering::Equal {
            return r;
        }
        match (self.node(), other.node()) {
            (Node::Rational(a), Node::Rational(b)) => a.cmp(b),
            (Node::Float(a), Node::Float(b)) => a.total_cmp(b),
            (Node::Symbol(a), Node::Symbol(b)) => a.cmp(b),
            (Node::Add(a), Node::Add(b)) | (Node::Mul(a), Node::Mul(b)) => a.cmp(b),
            (Node::Pow(a, ra), Node::Pow(b, rb)) => a.cmp(b).then(ra.cmp(rb)),
            (Node::Call(fa, a), Node::Call(fb, b)) => fa.cmp(fb).then_with(|| a.cmp(b)),
            (
                Node::Opaque {
                    name: na,
                    orders: oa,
                    args: aa,
                },
                Node::Opaque {
                    name: nb,
                    orders: ob,
                    args: ab,
                },
            ) => na.cmp(nb).then_with(|| oa.cmp(ob)).then_with(|| aa.cmp(ab)),
            _ => unreachable!("ranks are equal"),
        }
    }
}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self.node() {
            Node::Rational(r) => r.hash(state),
            Node::Float(x) => x.to_bits().hash(state),
            Node::Symbol(s) => s.hash(state),
            Node::Add(ts) | Node::Mul(ts) => ts.hash(state),
            Node::Pow(b, r) => {
                b.hash(state);
                r.hash(state);
            }
            Node::Call(f, a) => {
                f.hash(state);
                a.hash(state);
            }
            Node::Opaque { name, orders, args } => {
                name.hash(state);
                orders.hash(state);
                args.hash(state);
            }
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $body(self, rhs)
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $body(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $body(self, rhs.clone())
            }
        }
        impl std::ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $body(self.clone(), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum(vec![a, b]));
binop!(Sub, sub, |a, b: Expr| Expr::sum(vec![a, -b]));
binop!(Mul, mul, |a, b| Expr::product(vec![a, b]));
binop!(Div, div, |a, b: Expr| Expr::product(vec![a, b.recip()]));

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Rational(r) => Expr::rational(-*r),
            Node::Float(x) => Expr::float(-x),
            _ => Expr::product(vec![Expr::int(-1), self]),
        }
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -(self.clone())
    }
}

/// Multiplies two exact rationals, reporting overflow instead of panicking.
pub(crate) fn checked_mul(a: &Rational, b: &Rational) -> Option<Rational> {
    num_traits::CheckedMul::checked_mul(a, b)
}

pub(crate) fn checked_add(a: &Rational, b: &Rational) -> Option<Rational> {
    num_traits::CheckedAdd::checked_add(a, b)
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
