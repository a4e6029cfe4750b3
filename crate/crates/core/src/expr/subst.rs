use super::{differentiate, normalize, placeholder, Expr, ExprError, Node, Symbol, SymbolTable};
use std::collections::HashMap;

/// Simultaneous substitution of symbols. The result is not normalized.
pub fn substitute(e: &Expr, map: &HashMap<Symbol, Expr>) -> Expr {
    if map.is_empty() {
        return e.clone();
    }
    let mut memo = HashMap::new();
    subst_rec(e, map, &mut memo)
}

/// [`substitute`] followed by [`normalize`].
pub fn substitute_normalized(e: &Expr, map: &HashMap<Symbol, Expr>) -> Expr {
    normalize(&substitute(e, map))
}

// Shared subtrees are rewritten once; the memo is keyed by node address.
fn subst_rec(e: &Expr, map: &HashMap<Symbol, Expr>, memo: &mut HashMap<usize, Expr>) -> Expr {
    let key = std::sync::Arc::as_ptr(&e.0) as usize;
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match e.node() {
        Node::Rational(_) | Node::Float(_) => e.clone(),
        Node::Symbol(s) => map.get(s).cloned().unwrap_or_else(|| e.clone()),
        Node::Add(ts) => Expr::from_node(Node::Add(ts.iter().map(|t| subst_rec(t, map, memo)).collect())),
        Node::Mul(ts) => Expr::from_node(Node::Mul(ts.iter().map(|t| subst_rec(t, map, memo)).collect())),
        Node::Pow(b, r) => Expr::from_node(Node::Pow(subst_rec(b, map, memo), *r)),
        Node::Call(f, a) => Expr::call(*f, subst_rec(a, map, memo)),
        Node::Opaque { name, orders, args } => Expr::from_node(Node::Opaque {
            name: name.clone(),
            orders: orders.clone(),
            args: args.iter().map(|a| subst_rec(a, map, memo)).collect(),
        }),
    };
    memo.insert(key, out.clone());
    out
}

/// Replaces every call of the opaque function `name` by `template`, an
/// expression over the placeholders `#0, #1, ...`. Calls carrying derivative
/// orders receive the matching partial derivative of the template.
pub fn substitute_function(
    e: &Expr,
    name: &str,
    template: &Expr,
    table: &SymbolTable,
) -> Result<Expr, ExprError> {
    let target = Symbol::new(name);
    let out = subst_fn_rec(e, &target, template, table)?;
    Ok(normalize(&out))
}

fn subst_fn_rec(e: &Expr, target: &Symbol, template: &Expr, table: &SymbolTable) -> Result<Expr, ExprError> {
    let rec = |x: &Expr| subst_fn_rec(x, target, template, table);
    Ok(match e.node() {
        Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => e.clone(),
        Node::Add(ts) => Expr::from_node(Node::Add(ts.iter().map(rec).collect::<Result<_, _>>()?)),
        Node::Mul(ts) => Expr::from_node(Node::Mul(ts.iter().map(rec).collect::<Result<_, _>>()?)),
        Node::Pow(b, r) => Expr::from_node(Node::Pow(rec(b)?, *r)),
        Node::Call(f, a) => Expr::call(*f, rec(a)?),
        Node::Opaque { name, orders, args } => {
            let args: Vec<Expr> = args.iter().map(rec).collect::<Result<_, _>>()?;
            if name != target {
                return Ok(Expr::from_node(Node::Opaque {
                    name: name.clone(),
                    orders: orders.clone(),
                    args,
                }));
            }
            let mut body = template.clone();
            for (slot, &k) in orders.iter().enumerate() {
                for _ in 0..k {
                    body = differentiate(&body, &placeholder(slot), table)?;
                }
            }
            let map: HashMap<Symbol, Expr> = args
                .into_iter()
                .enumerate()
                .map(|(i, a)| (placeholder(i), a))
                .collect();
            substitute(&body, &map)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, FunctionFamily, Role};

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        for s in ["x", "y", "t"] {
            t.declare(s, Role::Independent).unwrap();
        }
        for s in ["u", "u_x", "u_t"] {
            t.declare(s, Role::Jet).unwrap();
        }
        t.register_family(FunctionFamily::Identity).unwrap();
        t.declare_arbitrary("a", 2).unwrap();
        t
    }

    #[test]
    fn simultaneous() {
        let t = table();
        let map: HashMap<Symbol, Expr> = [("x", "y"), ("y", "x")]
            .iter()
            .map(|(k, v)| (Symbol::new(k), parse(v, &t).unwrap()))
            .collect();
        assert_eq!(substitute(&Expr::sym("x"), &map), Expr::sym("y"));
        let e = parse("x - 2*y", &t).unwrap();
        assert_eq!(substitute_normalized(&e, &map), normalize(&parse("y - 2*x", &t).unwrap()));
    }

    #[test]
    fn on_shell() {
        let t = table();
        let e = parse("u_t + u*u_x", &t).unwrap();
        let map = HashMap::from([(Symbol::new("u_t"), parse("-u*u_x", &t).unwrap())]);
        assert_eq!(substitute_normalized(&e, &map), Expr::zero());
    }

    #[test]
    fn identity_family_reduces_q1_template() {
        let t = table();
        let q = parse("(1-eta*t)^3*fp(finv(eta*x + f(u) - eta*f(u)*t))/fp(u)", &t).unwrap();
        let mut e = q;
        for (name, body) in [("fp", "1"), ("f", "#0"), ("finv", "#0")] {
            e = substitute_function(&e, name, &parse(body, &t).unwrap(), &t).unwrap();
        }
        assert_eq!(e, normalize(&parse("(1-eta*t)^3", &t).unwrap()));
    }

    #[test]
    fn derivative_orders_differentiate_template() {
        let t = table();
        let e = parse("D[1,0]a(x,t) + D[0,2]a(x,t)", &t).unwrap();
        let out = substitute_function(&e, "a", &parse("#0^2*#1^3", &t).unwrap(), &t).unwrap();
        assert_eq!(out, normalize(&parse("2*x*t^3 + 6*x^2*t", &t).unwrap()));
    }
}
