use super::{Expr, Node, Rational};
use num_traits::{One, Signed};
use std::fmt;

// Binding strength of the printed form: sums < products < powers < atoms.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const POWER: u8 = 3;
const ATOM: u8 = 4;

fn rational_str(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn float_str(x: f64) -> String {
    let s = format!("{x:?}");
    match s.as_str() {
        "inf" => "1e999".to_string(),
        "-inf" => "-1e999".to_string(),
        _ => s,
    }
}

/// Leading numeric sign of a term, used to print `a - b` instead of `a + -b`.
fn is_negative(e: &Expr) -> bool {
    match e.node() {
        Node::Rational(r) => r.is_negative(),
        Node::Float(x) => *x < 0.0,
        Node::Mul(fs) => fs.first().is_some_and(is_negative),
        _ => false,
    }
}

fn negated(e: &Expr) -> Expr {
    match e.node() {
        Node::Rational(r) => Expr::rational(-*r),
        Node::Float(x) => Expr::float(-x),
        Node::Mul(fs) => {
            let mut fs = fs.clone();
            fs[0] = negated(&fs[0]);
            if fs[0].is_one() {
                fs.remove(0);
            }
            if fs.len() == 1 {
                fs.pop().unwrap()
            } else {
                Expr::from_node(Node::Mul(fs))
            }
        }
        _ => e.clone(),
    }
}

fn strength(e: &Expr) -> u8 {
    match e.node() {
        Node::Rational(r) => {
            if r.is_integer() && !r.is_negative() {
                ATOM
            } else {
                PRODUCT
            }
        }
        Node::Float(x) => {
            if *x < 0.0 {
                PRODUCT
            } else {
                ATOM
            }
        }
        Node::Symbol(_) | Node::Call(..) | Node::Opaque { .. } => ATOM,
        Node::Add(_) => SUM,
        Node::Mul(_) => PRODUCT,
        Node::Pow(_, r) => {
            if r.is_negative() {
                PRODUCT
            } else {
                POWER
            }
        }
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    if strength(e) >= min {
        render(e)
    } else {
        format!("({})", render(e))
    }
}

fn render_product(fs: &[Expr]) -> String {
    let mut num: Vec<String> = Vec::new();
    let mut den: Vec<String> = Vec::new();
    let mut sign = "";
    for (i, f) in fs.iter().enumerate() {
        match f.node() {
            Node::Rational(r) if i == 0 => {
                let r = if r.is_negative() {
                    sign = "-";
                    -*r
                } else {
                    *r
                };
                if !r.numer().is_one() || (r.denom().is_one() && fs.len() == 1) {
                    num.push(r.numer().to_string());
                }
                if !r.denom().is_one() {
                    den.push(r.denom().to_string());
                }
            }
            Node::Float(x) if i == 0 => {
                if *x < 0.0 {
                    sign = "-";
                }
                num.push(float_str(x.abs()));
            }
            Node::Pow(b, r) if r.is_negative() => {
                let inv = Expr::pow(b.clone(), -*r);
                den.push(wrap(&inv, POWER));
            }
            _ => num.push(wrap(f, POWER)),
        }
    }
    let top = if num.is_empty() { "1".to_string() } else { num.join("*") };
    match den.len() {
        0 => format!("{sign}{top}"),
        1 => format!("{sign}{top}/{}", den[0]),
        _ => format!("{sign}{top}/({})", den.join("*")),
    }
}

fn render(e: &Expr) -> String {
    match e.node() {
        Node::Rational(r) => rational_str(r),
        Node::Float(x) => float_str(*x),
        Node::Symbol(s) => s.to_string(),
        Node::Add(ts) => {
            let mut ts = ts.clone();
            if let Some(k) = ts.iter().position(|t| !is_negative(t)) {
                let lead = ts.remove(k);
                ts.insert(0, lead);
            }
            let mut out = String::new();
            for (i, t) in ts.iter().enumerate() {
                if i == 0 {
                    out.push_str(&wrap(t, SUM));
                } else if is_negative(t) {
                    out.push_str(" - ");
                    out.push_str(&wrap(&negated(t), PRODUCT));
                } else {
                    out.push_str(" + ");
                    out.push_str(&wrap(t, SUM));
                }
            }
            out
        }
        Node::Mul(fs) => render_product(fs),
        Node::Pow(b, r) => {
            if r.is_negative() {
                return render_product(std::slice::from_ref(e));
            }
            let exp = if r.is_integer() {
                rational_str(r)
            } else {
                format!("({})", rational_str(r))
            };
            format!("{}^{}", wrap(b, ATOM), exp)
        }
        Node::Call(f, a) => format!("{}({})", f.name(), render(a)),
        Node::Opaque { name, orders, args } => {
            let args: Vec<String> = args.iter().map(render).collect();
            if orders.iter().all(|o| *o == 0) {
                format!("{}({})", name, args.join(", "))
            } else {
                let os: Vec<String> = orders.iter().map(|o| o.to_string()).collect();
                format!("D[{}]{}({})", os.join(","), name, args.join(", "))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{normalize, parse, Role, SymbolTable};

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        for s in ["x", "t", "u"] {
            t.declare(s, Role::Independent).unwrap();
        }
        t.declare_arbitrary("a", 2).unwrap();
        t
    }

    #[test]
    fn reads_naturally() {
        let t = table();
        let show = |s: &str| normalize(&parse(s, &t).unwrap()).to_string();
        assert_eq!(show("x - t"), "x - t");
        assert_eq!(show("x/(1-eta*t)"), "x/(1 - eta*t)");
        assert_eq!(show("-3*t"), "-3*t");
        assert_eq!(show("x^(1/2)"), "x^(1/2)");
        assert_eq!(show("x/2"), "x/2");
    }

    #[test]
    fn reparses_to_the_same_tree() {
        let t = table();
        for s in [
            "x - 2*t/(3*u)",
            "(1 - eta*t)^3 - x^(-2/3)",
            "exp(-x)*D[1,0]a(x, t) - 0.25*u",
            "-(x + 1)^2/(t*u)",
            "2.5e-7*x - 1/(x - t)^2",
        ] {
            let e = normalize(&parse(s, &t).unwrap());
            let back = normalize(&parse(&e.to_string(), &t).unwrap());
            assert_eq!(back, e, "{s} -> {e}");
        }
    }
}
