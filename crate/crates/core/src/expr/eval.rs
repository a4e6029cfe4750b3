use super::{rational_to_f64, Elementary, Expr, ExprError, Node, NumFn, Rational, Symbol, SymbolTable};
use num_traits::{Signed, ToPrimitive};
use std::collections::HashMap;
use std::sync::Arc;

/// Values for free symbols.
#[derive(Clone, Debug, Default)]
pub struct Bindings(HashMap<Symbol, f64>);

impl Bindings {
    pub fn new() -> Self {
        Bindings(HashMap::new())
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Bindings(pairs.iter().map(|(k, v)| (Symbol::new(k), *v)).collect())
    }

    pub fn set(&mut self, s: Symbol, v: f64) -> &mut Self {
        self.0.insert(s, v);
        self
    }

    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.0.insert(Symbol::new(name), v);
        self
    }

    pub fn get(&self, s: &Symbol) -> Option<f64> {
        self.0.get(s).copied()
    }

    pub fn covers(&self, e: &Expr) -> bool {
        e.free_symbols().iter().all(|s| self.0.contains_key(s))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &f64)> {
        self.0.iter()
    }
}

impl FromIterator<(Symbol, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (Symbol, f64)>>(iter: I) -> Self {
        Bindings(iter.into_iter().collect())
    }
}

fn pow_f64(b: f64, r: &Rational) -> Result<f64, ExprError> {
    if r.is_integer() {
        let n = r.to_integer();
        if b == 0.0 && n < 0 {
            return Err(ExprError::Domain("division by zero".into()));
        }
        return Ok(match n.to_i32() {
            Some(k) => b.powi(k),
            None => b.powf(n as f64),
        });
    }
    if b < 0.0 {
        // odd denominators have a real root
        if r.denom() % 2 == 0 {
            return Err(ExprError::Domain(format!("even root of negative value {b}")));
        }
        let mag = (-b).powf(rational_to_f64(r));
        return Ok(if r.numer() % 2 == 0 { mag } else { -mag });
    }
    if b == 0.0 && r.is_negative() {
        return Err(ExprError::Domain("division by zero".into()));
    }
    Ok(b.powf(rational_to_f64(r)))
}

fn finite(v: f64, what: &dyn Fn() -> String) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain(format!("non-finite value in {}", what())))
    }
}

/// Tree-walking evaluation. Domain problems are reported as errors.
pub fn evaluate(e: &Expr, b: &Bindings, table: &SymbolTable) -> Result<f64, ExprError> {
    let v = eval_rec(e, b, table)?;
    finite(v, &|| e.to_string())
}

fn eval_rec(e: &Expr, b: &Bindings, table: &SymbolTable) -> Result<f64, ExprError> {
    Ok(match e.node() {
        Node::Rational(r) => rational_to_f64(r),
        Node::Float(x) => *x,
        Node::Symbol(s) => b.get(s).ok_or_else(|| ExprError::Unbound(s.to_string()))?,
        Node::Add(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_rec(t, b, table)?;
            }
            acc
        }
        Node::Mul(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= eval_rec(f, b, table)?;
            }
            acc
        }
        Node::Pow(base, r) => pow_f64(eval_rec(base, b, table)?, r)?,
        Node::Call(f, a) => f.apply(eval_rec(a, b, table)?)?,
        Node::Opaque { name, orders, args } => {
            let ev = opaque_evaluator(name, orders, table)?;
            let vals = args
                .iter()
                .map(|a| eval_rec(a, b, table))
                .collect::<Result<Vec<_>, _>>()?;
            let v = ev(&vals);
            if v.is_nan() {
                return Err(ExprError::Domain(format!("{name} undefined at {vals:?}")));
            }
            v
        }
    })
}

fn opaque_evaluator(name: &Symbol, orders: &[u32], table: &SymbolTable) -> Result<NumFn, ExprError> {
    if orders.iter().any(|o| *o != 0) {
        return Err(ExprError::NoEvaluator(format!("derivative of {name}")));
    }
    table
        .function(name)
        .and_then(|f| f.eval.clone())
        .ok_or_else(|| ExprError::NoEvaluator(name.to_string()))
}

#[derive(Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
    PowI(usize, i32),
    PowR(usize, Rational),
    Call(Elementary, usize),
    Opaque(NumFn, Vec<usize>, Symbol),
}

/// An expression compiled to a register tape over a fixed variable order.
///
/// Shared subtrees are compiled once, so expressions built by repeated
/// substitution stay cheap to evaluate. Instances are immutable and can be
/// evaluated from several threads at once.
#[derive(Clone)]
pub struct Compiled {
    ops: Arc<Vec<Op>>,
    vars: Vec<Symbol>,
}

impl Compiled {
    /// Compiles `e` with `vars` as the runtime inputs. Any other free symbol
    /// must be bound in `consts`.
    pub fn new(e: &Expr, vars: &[Symbol], consts: &Bindings, table: &SymbolTable) -> Result<Self, ExprError> {
        let mut ops = Vec::new();
        let mut memo = Memo::default();
        let index: HashMap<&Symbol, usize> = vars.iter().enumerate().map(|(i, s)| (s, i)).collect();
        compile_rec(e, &index, consts, table, &mut ops, &mut memo)?;
        Ok(Compiled {
            ops: Arc::new(ops),
            vars: vars.to_vec(),
        })
    }

    pub fn vars(&self) -> &[Symbol] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        const STACK: usize = 96;
        if self.ops.len() <= STACK {
            self.run(x, &mut [0.0; STACK])
        } else {
            self.run(x, &mut vec![0.0; self.ops.len()])
        }
    }

    fn run(&self, x: &[f64], regs: &mut [f64]) -> Result<f64, ExprError> {
        for (k, op) in self.ops.iter().enumerate() {
            regs[k] = match op {
                Op::Const(c) => *c,
                Op::Var(i) => x[*i],
                Op::Add(is) => is.iter().map(|&i| regs[i]).sum(),
                Op::Mul(is) => is.iter().map(|&i| regs[i]).product(),
                Op::PowI(i, n) => {
                    let b: f64 = regs[*i];
                    if b == 0.0 && *n < 0 {
                        return Err(ExprError::Domain("division by zero".into()));
                    }
                    b.powi(*n)
                }
                Op::PowR(i, r) => pow_f64(regs[*i], r)?,
                Op::Call(f, i) => f.apply(regs[*i])?,
                Op::Opaque(f, is, name) => {
                    let mut buf = [0.0; 8];
                    let heap: Vec<f64>;
                    let args: &[f64] = if is.len() <= buf.len() {
                        for (slot, &i) in buf.iter_mut().zip(is) {
                            *slot = regs[i];
                        }
                        &buf[..is.len()]
                    } else {
                        heap = is.iter().map(|&i| regs[i]).collect();
                        &heap
                    };
                    let v = f(args);
                    if v.is_nan() {
                        return Err(ExprError::Domain(format!("{name} undefined at {args:?}")));
                    }
                    v
                }
            };
        }
        let out = regs[self.ops.len() - 1];
        finite(out, &|| "compiled expression".to_string())
    }
}

#[derive(Default)]
struct Memo {
    by_ptr: HashMap<usize, usize>,
    by_value: HashMap<Expr, usize>,
}

fn compile_rec(
    e: &Expr,
    index: &HashMap<&Symbol, usize>,
    consts: &Bindings,
    table: &SymbolTable,
    ops: &mut Vec<Op>,
    memo: &mut Memo,
) -> Result<usize, ExprError> {
    let key = Arc::as_ptr(&e.0) as usize;
    if let Some(&r) = memo.by_ptr.get(&key) {
        return Ok(r);
    }
    if let Some(&r) = memo.by_value.get(e) {
        memo.by_ptr.insert(key, r);
        return Ok(r);
    }
    let op = match e.node() {
        Node::Rational(r) => Op::Const(rational_to_f64(r)),
        Node::Float(x) => Op::Const(*x),
        Node::Symbol(s) => match index.get(s) {
            Some(&i) => Op::Var(i),
            None => Op::Const(consts.get(s).ok_or_else(|| ExprError::Unbound(s.to_string()))?),
        },
        Node::Add(ts) | Node::Mul(ts) => {
            let is_add = matches!(e.node(), Node::Add(_));
            let unit = if is_add { 0.0 } else { 1.0 };
            let mut folded = unit;
            let mut is = Vec::new();
            for t in ts {
                let i = compile_rec(t, index, consts, table, ops, memo)?;
                match ops[i] {
                    Op::Const(c) if is_add => folded += c,
                    Op::Const(c) => folded *= c,
                    _ => is.push(i),
                }
            }
            if is.is_empty() {
                Op::Const(folded)
            } else {
                if folded != unit {
                    ops.push(Op::Const(folded));
                    is.push(ops.len() - 1);
                }
                if is.len() == 1 {
                    let r = is[0];
                    memo.by_ptr.insert(key, r);
                    memo.by_value.insert(e.clone(), r);
                    return Ok(r);
                }
                if is_add {
                    Op::Add(is)
                } else {
                    Op::Mul(is)
                }
            }
        }
        Node::Pow(b, r) => {
            let i = compile_rec(b, index, consts, table, ops, memo)?;
            match r.to_integer().to_i32() {
                Some(n) if r.is_integer() => Op::PowI(i, n),
                _ => Op::PowR(i, *r),
            }
        }
        Node::Call(f, a) => Op::Call(*f, compile_rec(a, index, consts, table, ops, memo)?),
        Node::Opaque { name, orders, args } => {
            let f = opaque_evaluator(name, orders, table)?;
            let is = args
                .iter()
                .map(|a| compile_rec(a, index, consts, table, ops, memo))
                .collect::<Result<_, _>>()?;
            Op::Opaque(f, is, name.clone())
        }
    };
    ops.push(op);
    let r = ops.len() - 1;
    memo.by_ptr.insert(key, r);
    memo.by_value.insert(e.clone(), r);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, FunctionFamily, Role};
    use approx::assert_abs_diff_eq;

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        for s in ["x", "t"] {
            t.declare(s, Role::Independent).unwrap();
        }
        t.declare("u", Role::Jet).unwrap();
        t.register_family(FunctionFamily::Exp).unwrap();
        t
    }

    #[test]
    fn basic_values() {
        let t = table();
        let e = parse("2*x", &t).unwrap();
        assert_eq!(evaluate(&e, &Bindings::from_pairs(&[("x", 3.0)]), &t), Ok(6.0));
        let q = parse("(1-eta*t)^3", &t).unwrap();
        let v = evaluate(&q, &Bindings::from_pairs(&[("eta", 0.1), ("t", 1.0)]), &t).unwrap();
        assert_abs_diff_eq!(v, 0.729, epsilon = 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let t = table();
        let e = parse("finv(f(0.4))", &t).unwrap();
        assert_abs_diff_eq!(evaluate(&e, &Bindings::new(), &t).unwrap(), 0.4, epsilon = 1e-12);
        assert!(t.check_inverse_round_trip(&[-2.0, -0.5, 0.0, 0.7, 2.0]).unwrap() <= 1e-10);
    }

    #[test]
    fn domain_errors_are_reported() {
        let t = table();
        let b = Bindings::from_pairs(&[("x", 0.0)]);
        assert!(matches!(evaluate(&parse("log(x)", &t).unwrap(), &b, &t), Err(ExprError::Domain(_))));
        assert!(matches!(evaluate(&parse("1/x", &t).unwrap(), &b, &t), Err(ExprError::Domain(_))));
        assert!(matches!(evaluate(&parse("finv(x - 1)", &t).unwrap(), &b, &t), Err(ExprError::Domain(_))));
        assert_eq!(evaluate(&parse("y", &t).unwrap_or(Expr::sym("y")), &b, &t), Err(ExprError::Unbound("y".into())));
    }

    #[test]
    fn compiled_matches_tree() {
        let t = table();
        let e = parse("exp(x)*f(u)^2 - (x+t)^(1/3) + sqrt(t)/u", &t).unwrap();
        let vars = [Symbol::new("x"), Symbol::new("u")];
        let c = Compiled::new(&e, &vars, &Bindings::from_pairs(&[("t", 0.3)]), &t).unwrap();
        for &(x, u) in &[(0.1, 0.5), (-1.2, 2.0), (0.7, -0.3)] {
            let b = Bindings::from_pairs(&[("x", x), ("u", u), ("t", 0.3)]);
            assert_abs_diff_eq!(c.eval(&[x, u]).unwrap(), evaluate(&e, &b, &t).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn odd_roots_of_negatives() {
        let t = table();
        let b = Bindings::from_pairs(&[("x", -8.0)]);
        assert_abs_diff_eq!(evaluate(&parse("x^(1/3)", &t).unwrap(), &b, &t).unwrap(), -2.0, epsilon = 1e-14);
        assert!(evaluate(&parse("x^(1/2)", &t).unwrap(), &b, &t).is_err());
    }
}

