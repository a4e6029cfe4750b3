use super::{normalize, placeholder, Elementary, Expr, ExprError, Node, Rational, Symbol, SymbolTable};
use num_traits::One;
use std::collections::HashMap;

/// Exact partial derivative of `e` with respect to `s`, normalized.
pub fn differentiate(e: &Expr, s: &Symbol, table: &SymbolTable) -> Result<Expr, ExprError> {
    Ok(normalize(&raw(e, s, table)?))
}

/// Partial derivatives with respect to each symbol in turn.
pub fn gradient(e: &Expr, syms: &[Symbol], table: &SymbolTable) -> Result<Vec<Expr>, ExprError> {
    syms.iter().map(|s| differentiate(e, s, table)).collect()
}

fn raw(e: &Expr, s: &Symbol, table: &SymbolTable) -> Result<Expr, ExprError> {
    if !e.contains_symbol(s) {
        return Ok(Expr::zero());
    }
    Ok(match e.node() {
        Node::Rational(_) | Node::Float(_) => Expr::zero(),
        Node::Symbol(t) => {
            if t == s {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(ts) => Expr::sum(ts.iter().map(|t| raw(t, s, table)).collect::<Result<_, _>>()?),
        Node::Mul(fs) => {
            let mut terms = Vec::new();
            for (i, f) in fs.iter().enumerate() {
                let df = raw(f, s, table)?;
                if df.is_zero() {
                    continue;
                }
                let mut prod: Vec<Expr> = fs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, g)| g.clone())
                    .collect();
                prod.push(df);
                terms.push(Expr::product(prod));
            }
            Expr::sum(terms)
        }
        Node::Pow(b, r) => {
            let db = raw(b, s, table)?;
            Expr::product(vec![
                Expr::rational(*r),
                Expr::pow(b.clone(), r - Rational::one()),
                db,
            ])
        }
        Node::Call(f, a) => {
            let da = raw(a, s, table)?;
            let outer = match f {
                Elementary::Exp => e.clone(),
                Elementary::Log => a.clone().recip(),
                Elementary::Sin => Expr::call(Elementary::Cos, a.clone()),
                Elementary::Cos => -Expr::call(Elementary::Sin, a.clone()),
                Elementary::Sqrt => Expr::frac(1, 2) * Expr::pow(a.clone(), Rational::new(-1, 2)),
                Elementary::Abs => a.clone() * Expr::call(Elementary::Abs, a.clone()).recip(),
            };
            outer * da
        }
        Node::Opaque { name, orders, args } => {
            let mut terms = Vec::new();
            for (slot, a) in args.iter().enumerate() {
                let da = raw(a, s, table)?;
                if da.is_zero() {
                    continue;
                }
                terms.push(opaque_partial(name, orders, args, slot, table)? * da);
            }
            Expr::sum(terms)
        }
    })
}

/// Partial derivative of an opaque call with respect to argument `slot`.
pub(crate) fn opaque_partial(
    name: &Symbol,
    orders: &[u32],
    args: &[Expr],
    slot: usize,
    table: &SymbolTable,
) -> Result<Expr, ExprError> {
    let f = table
        .function(name)
        .ok_or_else(|| ExprError::UnknownSymbol(name.to_string()))?;
    if f.arbitrary {
        let mut o = orders.to_vec();
        o[slot] += 1;
        return Ok(Expr::from_node(Node::Opaque {
            name: name.clone(),
            orders: o,
            args: args.to_vec(),
        }));
    }
    let template = f
        .derivatives
        .get(slot)
        .and_then(|d| d.clone())
        .ok_or_else(|| ExprError::NoDerivativeRule {
            name: name.to_string(),
            slot,
        })?;
    let map: HashMap<Symbol, Expr> = args
        .iter()
        .enumerate()
        .map(|(i, a)| (placeholder(i), a.clone()))
        .collect();
    Ok(super::substitute(&template, &map))
}
