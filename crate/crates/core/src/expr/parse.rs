//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | "+" unary | power
//! power   := atom ("^" unary)?
//! atom    := number | ident | ident "(" args ")" | "D[" int ("," int)* "]" ident "(" args ")"
//!          | "(" expr ")"
//! args    := expr ("," expr)*
//! number  := digits ("." digits)? (("e" | "E") ("+" | "-")? digits)?
//! ```
//!
//! Exponents must reduce to rational constants. Decimal literals are read as
//! exact rationals. `D[i,j,..]f(args)` is a partial derivative of an
//! arbitrary function with the given per-slot orders.

use super::{normalize, Elementary, Expr, ExprError, Node, Rational, Symbol, SymbolTable};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Expr),
    Ident(String),
    Op(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let int_part: String = chars[start..i].iter().collect();
            let mut frac_part = String::new();
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    frac_part.push(chars[i]);
                    i += 1;
                }
            }
            let mut exponent: i32 = 0;
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                let mut sign = 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    if chars[j] == '-' {
                        sign = -1;
                    }
                    j += 1;
                }
                let ds = j;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j > ds {
                    let digits: String = chars[ds..j].iter().collect();
                    exponent = sign
                        * digits.parse::<i32>().map_err(|_| ExprError::Syntax {
                            pos: i,
                            msg: "exponent out of range".into(),
                        })?;
                    i = j;
                }
            }
            out.push((start, Tok::Num(number(&int_part, &frac_part, exponent))));
        } else if c.is_alphabetic() || c == '_' || c == '#' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '#') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^(),[]".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

/// Exact rational for a decimal literal when it fits in i128, else a float.
fn number(int_part: &str, frac_part: &str, exponent: i32) -> Expr {
    let digits = format!("{int_part}{frac_part}");
    let scale = exponent - frac_part.len() as i32;
    let exact = digits.parse::<i128>().ok().and_then(|m| {
        let p = 10i128.checked_pow(scale.unsigned_abs())?;
        if scale >= 0 {
            m.checked_mul(p).map(Rational::from_integer)
        } else {
            Some(Rational::new(m, p))
        }
    });
    match exact {
        Some(r) => Expr::rational(r),
        None => {
            let text = format!("{}.{}e{}", if int_part.is_empty() { "0" } else { int_part }, frac_part, exponent);
            Expr::float(text.parse().unwrap_or(f64::NAN))
        }
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    table: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            pos: self.at(),
            msg: msg.into(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::from_node(Node::Add(terms))
        })
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat('*') {
                factors.push(self.unary()?);
            } else if self.eat('/') {
                factors.push(Expr::powi(self.unary()?, -1));
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::from_node(Node::Mul(factors))
        })
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(-inner);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp_start = self.at();
            let exp = self.unary()?;
            let n = normalize(&exp);
            return match n.as_rational() {
                Some(r) => Ok(Expr::from_node(Node::Pow(base, r))),
                None => Err(match n.node() {
                    Node::Float(_) => ExprError::Syntax {
                        pos: exp_start,
                        msg: "exponent too large for exact arithmetic".into(),
                    },
                    _ => ExprError::SymbolicExponent(exp.to_string()),
                }),
            };
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ExprError> {
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let start = self.at();
        match self.peek().cloned() {
            Some(Tok::Num(e)) => {
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) if name == "D" && self.toks.get(self.pos + 1).map(|t| &t.1) == Some(&Tok::Op('[')) => {
                self.pos += 2;
                let mut orders = Vec::new();
                loop {
                    match self.peek().cloned() {
                        Some(Tok::Num(n)) => {
                            let k = n
                                .as_rational()
                                .filter(|r| r.is_integer() && *r >= Rational::from_integer(0))
                                .ok_or_else(|| self.err("derivative order must be a non-negative integer"))?;
                            orders.push(k.to_integer() as u32);
                            self.pos += 1;
                        }
                        _ => return Err(self.err("expected derivative order")),
                    }
                    if !self.eat(',') {
                        break;
                    }
                }
                self.expect(']')?;
                let fname = match self.peek().cloned() {
                    Some(Tok::Ident(f)) => f,
                    _ => return Err(self.err("expected function name after derivative orders")),
                };
                let fpos = self.at();
                self.pos += 1;
                let args = self.args()?;
                let f = self
                    .table
                    .function(&Symbol::new(&fname))
                    .ok_or_else(|| ExprError::UnknownSymbol(fname.clone()))?;
                if !f.arbitrary {
                    return Err(ExprError::Syntax {
                        pos: fpos,
                        msg: format!("`{fname}` has derivative rules; D[..] applies to arbitrary functions only"),
                    });
                }
                if f.arity != args.len() || orders.len() != args.len() {
                    return Err(ExprError::Arity {
                        name: fname,
                        expected: f.arity,
                        got: args.len().min(orders.len()),
                    });
                }
                Ok(Expr::from_node(Node::Opaque {
                    name: Symbol::new(&fname),
                    orders,
                    args,
                }))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Op('(')) {
                    let args = self.args()?;
                    if let Some(el) = Elementary::from_name(&name) {
                        if args.len() != 1 {
                            return Err(ExprError::Arity {
                                name,
                                expected: 1,
                                got: args.len(),
                            });
                        }
                        return Ok(Expr::call(el, args.into_iter().next().unwrap()));
                    }
                    let f = self
                        .table
                        .function(&Symbol::new(&name))
                        .ok_or_else(|| ExprError::UnknownSymbol(name.clone()))?;
                    if f.arity != args.len() {
                        return Err(ExprError::Arity {
                            name,
                            expected: f.arity,
                            got: args.len(),
                        });
                    }
                    return Ok(Expr::opaque(&name, args));
                }
                if name.starts_with('#') {
                    return Ok(Expr::sym(&name));
                }
                match self.table.resolve(&name) {
                    Some(s) => Ok(Expr::symbol(&s)),
                    None => Err(ExprError::UnknownSymbol(name)),
                }
            }
            Some(Tok::Op(c)) => Err(ExprError::Syntax {
                pos: start,
                msg: format!("unexpected `{c}`"),
            }),
            None => Err(ExprError::Syntax {
                pos: start,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses `text` against the symbols and functions declared in `table`.
pub fn parse(text: &str, table: &SymbolTable) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
        table,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{FunctionFamily, Role};

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new();
        for s in ["x", "t"] {
            t.declare(s, Role::Independent).unwrap();
        }
        for s in ["u", "u_x", "u_t", "u_xt"] {
            t.declare(s, Role::Jet).unwrap();
        }
        t.declare_dependent_name("u");
        t.register_family(FunctionFamily::Identity).unwrap();
        t
    }

    #[test]
    fn burgers_shape() {
        let t = table();
        let e = parse("u_t + u*u_x", &t).unwrap();
        match e.node() {
            Node::Add(ts) => {
                assert_eq!(ts[0], Expr::sym("u_t"));
                assert_eq!(ts[1], Expr::sym("u") * Expr::sym("u_x"));
            }
            _ => panic!("expected a sum, got {e}"),
        }
    }

    #[test]
    fn quotient_is_negative_power() {
        let t = table();
        let e = parse("x/(1-eta*t)", &t).unwrap();
        let (num, den) = e.as_quotient();
        assert_eq!(num, Expr::sym("x"));
        assert_eq!(normalize(&den), normalize(&parse("1 - eta*t", &t).unwrap()));
    }

    #[test]
    fn opaque_calls() {
        let t = table();
        let e = parse("finv(eta*x + f(u) - eta*f(u)*t)", &t).unwrap();
        let names: Vec<String> = e.opaque_names().iter().map(|s| s.to_string()).collect();
        assert_eq!(names, vec!["f", "finv"]);
    }

    #[test]
    fn errors_carry_context() {
        let t = table();
        assert_eq!(parse("y + 1", &t), Err(ExprError::UnknownSymbol("y".into())));
        assert!(matches!(parse("f(u, x)", &t), Err(ExprError::Arity { expected: 1, got: 2, .. })));
        assert!(matches!(parse("x^t", &t), Err(ExprError::SymbolicExponent(_))));
        assert!(matches!(parse("x + * 2", &t), Err(ExprError::Syntax { pos: 4, .. })));
        assert!(matches!(parse("(x", &t), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn decimals_are_exact() {
        let t = table();
        assert_eq!(parse("0.25", &t).unwrap(), Expr::frac(1, 4));
        assert_eq!(parse("1e-3", &t).unwrap(), Expr::frac(1, 1000));
        assert_eq!(parse("2.5E2", &t).unwrap(), Expr::int(250));
    }

    #[test]
    fn mixed_jets_are_canonical() {
        let t = table();
        assert_eq!(parse("u_tx", &t).unwrap(), Expr::sym("u_xt"));
    }

    #[test]
    fn precedence() {
        let t = table();
        let e = normalize(&parse("-x^2 + 2*3^2", &t).unwrap());
        let want = normalize(&(Expr::int(18) - Expr::powi(Expr::sym("x"), 2)));
        assert_eq!(e, want);
        assert_eq!(normalize(&parse("2^3^2", &t).unwrap()), Expr::int(512));
        assert_eq!(normalize(&parse("x^(1/2)", &t).unwrap()), Expr::pow(Expr::sym("x"), Rational::new(1, 2)));
    }
}
