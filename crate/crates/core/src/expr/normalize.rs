use super::{
    checked_add, checked_mul, evaluate, rational_to_f64, Bindings, Elementary, Expr, Node, Rational,
    SymbolTable,
};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Numeric coefficient: exact until something inexact enters.
#[derive(Clone, Copy, Debug)]
enum Coef {
    R(Rational),
    F(f64),
}

impl Coef {
    fn one() -> Self {
        Coef::R(Rational::one())
    }

    fn zero() -> Self {
        Coef::R(Rational::zero())
    }

    fn to_f64(self) -> f64 {
        match self {
            Coef::R(r) => rational_to_f64(&r),
            Coef::F(x) => x,
        }
    }

    fn add(self, o: Coef) -> Coef {
        match (self, o) {
            (Coef::R(a), Coef::R(b)) => checked_add(&a, &b).map_or_else(
                || Coef::F(rational_to_f64(&a) + rational_to_f64(&b)),
                Coef::R,
            ),
            _ => Coef::F(self.to_f64() + o.to_f64()),
        }
    }

    fn mul(self, o: Coef) -> Coef {
        match (self, o) {
            (Coef::R(a), Coef::R(b)) => checked_mul(&a, &b).map_or_else(
                || Coef::F(rational_to_f64(&a) * rational_to_f64(&b)),
                Coef::R,
            ),
            _ => Coef::F(self.to_f64() * o.to_f64()),
        }
    }

    fn is_zero(self) -> bool {
        match self {
            Coef::R(r) => r.is_zero(),
            Coef::F(x) => x == 0.0,
        }
    }

    fn is_one(self) -> bool {
        matches!(self, Coef::R(r) if r.is_one())
    }

    fn expr(self) -> Expr {
        match self {
            Coef::R(r) => Expr::rational(r),
            Coef::F(x) => Expr::float(x),
        }
    }

    fn of(e: &Expr) -> Option<Coef> {
        match e.node() {
            Node::Rational(r) => Some(Coef::R(*r)),
            Node::Float(x) => Some(Coef::F(*x)),
            _ => None,
        }
    }
}

/// Exact integer power of a rational, `None` on overflow or 0^negative.
fn rational_powi(base: Rational, n: i128) -> Option<Rational> {
    if base.is_zero() {
        return if n > 0 { Some(Rational::zero()) } else { None };
    }
    let b = if n < 0 { base.recip() } else { base };
    let mut acc = Rational::one();
    for _ in 0..n.unsigned_abs() {
        acc = checked_mul(&acc, &b)?;
    }
    Some(acc)
}

/// Brings an expression to canonical form.
///
/// Sums and products are flattened and sorted, numeric coefficients and
/// repeated factors are collected, integer powers of products are
/// distributed, a numeric coefficient on a single sum is distributed over it,
/// and trivial elementary identities (`exp(0)`, `log(exp(x))`, `sqrt`) are
/// folded. The result is idempotent under `normalize`.
pub fn normalize(e: &Expr) -> Expr {
    match e.node() {
        Node::Rational(_) | Node::Symbol(_) => e.clone(),
        Node::Float(x) => {
            if *x == 0.0 {
                Expr::zero()
            } else {
                e.clone()
            }
        }
        Node::Add(ts) => norm_add(ts.iter().map(normalize).collect()),
        Node::Mul(fs) => norm_mul(fs.iter().map(normalize).collect()),
        Node::Pow(b, r) => norm_pow(normalize(b), *r),
        Node::Call(f, a) => norm_call(*f, normalize(a)),
        Node::Opaque { name, orders, args } => Expr::from_node(Node::Opaque {
            name: name.clone(),
            orders: orders.clone(),
            args: args.iter().map(normalize).collect(),
        }),
    }
}

/// Splits a normalized term into its numeric coefficient and the remaining key.
fn split_coef(t: &Expr) -> (Coef, Expr) {
    if let Some(c) = Coef::of(t) {
        return (c, Expr::one());
    }
    if let Node::Mul(fs) = t.node() {
        if let Some(c) = Coef::of(&fs[0]) {
            let rest = fs[1..].to_vec();
            let key = if rest.len() == 1 {
                rest[0].clone()
            } else {
                Expr::from_node(Node::Mul(rest))
            };
            return (c, key);
        }
    }
    (Coef::one(), t.clone())
}

fn with_coef(c: Coef, key: Expr) -> Expr {
    if c.is_one() {
        return key;
    }
    if key.is_one() {
        return c.expr();
    }
    match key.node() {
        Node::Mul(fs) => {
            let mut v = Vec::with_capacity(fs.len() + 1);
            v.push(c.expr());
            v.extend(fs.iter().cloned());
            Expr::from_node(Node::Mul(v))
        }
        _ => Expr::from_node(Node::Mul(vec![c.expr(), key])),
    }
}

fn norm_add(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t.node() {
            Node::Add(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(t),
        }
    }
    let mut constant = Coef::zero();
    let mut collected: BTreeMap<Expr, Coef> = BTreeMap::new();
    for t in &flat {
        let (c, key) = split_coef(t);
        if key.is_one() {
            constant = constant.add(c);
        } else {
            let slot = collected.entry(key).or_insert_with(Coef::zero);
            *slot = slot.add(c);
        }
    }
    let mut out = Vec::with_capacity(collected.len() + 1);
    if !constant.is_zero() {
        out.push(constant.expr());
    }
    for (key, c) in collected {
        if !c.is_zero() {
            out.push(with_coef(c, key));
        }
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::from_node(Node::Add(out)),
    }
}

fn norm_mul(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(factors.len());
    for f in factors {
        match f.node() {
            Node::Mul(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(f),
        }
    }
    let mut coef = Coef::one();
    let mut powers: BTreeMap<Expr, Rational> = BTreeMap::new();
    let mut exp_arg: Vec<Expr> = Vec::new();
    for f in flat {
        if let Some(c) = Coef::of(&f) {
            coef = coef.mul(c);
            continue;
        }
        let (base, r) = match f.node() {
            Node::Pow(b, r) => (b.clone(), *r),
            _ => (f.clone(), Rational::one()),
        };
        if let Node::Call(Elementary::Exp, a) = base.node() {
            if r.is_integer() {
                exp_arg.push(Expr::rational(r) * a);
                continue;
            }
        }
        let slot = powers.entry(base).or_insert_with(Rational::zero);
        *slot = checked_add(slot, &r).unwrap_or(*slot);
    }
    if coef.is_zero() {
        return Expr::zero();
    }
    let mut rest: Vec<Expr> = Vec::new();
    if !exp_arg.is_empty() {
        let arg = normalize(&Expr::sum(exp_arg));
        let ex = norm_call(Elementary::Exp, arg);
        if let Some(c) = Coef::of(&ex) {
            coef = coef.mul(c);
        } else {
            rest.push(ex);
        }
    }
    for (base, r) in powers {
        if r.is_zero() {
            continue;
        }
        let p = if r.is_one() {
            base
        } else {
            Expr::from_node(Node::Pow(base, r))
        };
        rest.push(p);
    }
    rest.sort();
    if rest.is_empty() {
        return coef.expr();
    }
    if rest.len() == 1 {
        if let Node::Add(ts) = rest[0].node() {
            if !coef.is_one() {
                let c = coef.expr();
                return norm_add(ts.iter().map(|t| norm_mul(vec![c.clone(), t.clone()])).collect());
            }
        }
        if coef.is_one() {
            return rest.pop().unwrap();
        }
    }
    if !coef.is_one() {
        rest.insert(0, coef.expr());
    }
    Expr::from_node(Node::Mul(rest))
}

fn norm_pow(base: Expr, r: Rational) -> Expr {
    if r.is_zero() {
        return Expr::one();
    }
    if r.is_one() {
        return base;
    }
    match base.node() {
        Node::Rational(b) => {
            if r.is_integer() {
                if let Some(v) = rational_powi(*b, r.to_integer()) {
                    return Expr::rational(v);
                }
                return Expr::float(rational_to_f64(b).powf(rational_to_f64(&r)));
            }
            if b.is_one() {
                return Expr::one();
            }
            if b.is_zero() && r.is_positive() {
                return Expr::zero();
            }
            if let Some(root) = exact_root(*b, *r.denom()) {
                return norm_pow(Expr::rational(root), Rational::from_integer(*r.numer()));
            }
            Expr::from_node(Node::Pow(base.clone(), r))
        }
        Node::Float(x) => {
            if r.is_integer() || *x > 0.0 {
                Expr::float(x.powf(rational_to_f64(&r)))
            } else {
                Expr::from_node(Node::Pow(base.clone(), r))
            }
        }
        Node::Pow(b2, r2) if r.is_integer() => match checked_mul(r2, &r) {
            Some(rr) => norm_pow(b2.clone(), rr),
            None => Expr::from_node(Node::Pow(base.clone(), r)),
        },
        Node::Mul(fs) if r.is_integer() => norm_mul(fs.iter().map(|f| norm_pow(f.clone(), r)).collect()),
        Node::Call(Elementary::Exp, a) if r.is_integer() => {
            norm_call(Elementary::Exp, normalize(&(Expr::rational(r) * a)))
        }
        _ => Expr::from_node(Node::Pow(base, r)),
    }
}

/// b^(1/n) when it is rational.
fn exact_root(b: Rational, n: i128) -> Option<Rational> {
    if b.is_negative() || !(2..=64).contains(&n) {
        return None;
    }
    let root = |m: i128| -> Option<i128> {
        let guess = (m as f64).powf(1.0 / n as f64).round() as i128;
        (guess.max(1) - 1..=guess + 1).find(|g| g.checked_pow(n as u32) == Some(m))
    };
    Some(Rational::new(root(*b.numer())?, root(*b.denom())?))
}

fn norm_call(f: Elementary, a: Expr) -> Expr {
    if let Node::Float(x) = a.node() {
        if let Ok(v) = f.apply(*x) {
            return Expr::float(v);
        }
    }
    match f {
        Elementary::Sqrt => norm_pow(a, Rational::new(1, 2)),
        Elementary::Exp => match a.node() {
            _ if a.is_zero() => Expr::one(),
            Node::Call(Elementary::Log, y) => y.clone(),
            _ => Expr::call(f, a),
        },
        Elementary::Log => match a.node() {
            _ if a.is_one() => Expr::zero(),
            Node::Call(Elementary::Exp, y) => y.clone(),
            _ => Expr::call(f, a),
        },
        Elementary::Sin if a.is_zero() => Expr::zero(),
        Elementary::Cos if a.is_zero() => Expr::one(),
        Elementary::Abs => match a.node() {
            Node::Rational(r) => Expr::rational(r.abs()),
            _ => Expr::call(f, a),
        },
        _ => Expr::call(f, a),
    }
}

/// Normalizes and then folds `f(g(y))` to `y` whenever the table declares `g`
/// as the inverse of `f`.
pub fn simplify(e: &Expr, table: &SymbolTable) -> Expr {
    normalize(&fold_inverses(&normalize(e), table))
}

fn fold_inverses(e: &Expr, table: &SymbolTable) -> Expr {
    let rebuilt = |ts: &[Expr]| ts.iter().map(|t| fold_inverses(t, table)).collect::<Vec<_>>();
    match e.node() {
        Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => e.clone(),
        Node::Add(ts) => Expr::from_node(Node::Add(rebuilt(ts))),
        Node::Mul(ts) => Expr::from_node(Node::Mul(rebuilt(ts))),
        Node::Pow(b, r) => Expr::from_node(Node::Pow(fold_inverses(b, table), *r)),
        Node::Call(f, a) => Expr::call(*f, fold_inverses(a, table)),
        Node::Opaque { name, orders, args } => {
            let args = rebuilt(args);
            if orders.iter().all(|o| *o == 0) && args.len() == 1 {
                if let (Some(inv), Node::Opaque { name: inner, orders: io, args: ia }) =
                    (table.function(name).and_then(|f| f.inverse.clone()), args[0].node())
                {
                    if *inner == inv && io.iter().all(|o| *o == 0) && ia.len() == 1 {
                        return ia[0].clone();
                    }
                }
            }
            Expr::from_node(Node::Opaque {
                name: name.clone(),
                orders: orders.clone(),
                args,
            })
        }
    }
}

const EXPAND_TERM_CAP: usize = 20_000;

/// Distributes products over sums and expands positive integer powers of
/// sums. Gives up (returning the normalized input) if the expansion would
/// exceed a fixed term budget.
pub fn expand(e: &Expr) -> Expr {
    match try_expand(&normalize(e)) {
        Some(x) => normalize(&x),
        None => normalize(e),
    }
}

fn terms_of(e: &Expr) -> Vec<Expr> {
    match e.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![e.clone()],
    }
}

fn try_expand(e: &Expr) -> Option<Expr> {
    Some(match e.node() {
        Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => e.clone(),
        Node::Add(ts) => {
            let parts = ts.iter().map(try_expand).collect::<Option<Vec<_>>>()?;
            normalize(&Expr::sum(parts))
        }
        Node::Mul(fs) => {
            let mut acc: Vec<Expr> = vec![Expr::one()];
            for f in fs {
                let fe = try_expand(f)?;
                let ft = terms_of(&fe);
                if acc.len() * ft.len() > EXPAND_TERM_CAP {
                    return None;
                }
                let mut next = Vec::with_capacity(acc.len() * ft.len());
                for a in &acc {
                    for b in &ft {
                        next.push(norm_mul(vec![a.clone(), b.clone()]));
                    }
                }
                acc = terms_of(&norm_add(next));
            }
            norm_add(acc)
        }
        Node::Pow(b, r) => {
            let be = try_expand(b)?;
            if r.is_integer() && r.is_positive() && matches!(be.node(), Node::Add(_)) {
                let n = r.to_integer();
                if n > 64 {
                    return None;
                }
                let factors = vec![be; n as usize];
                try_expand(&Expr::from_node(Node::Mul(factors)))?
            } else {
                norm_pow(be, *r)
            }
        }
        Node::Call(f, a) => norm_call(*f, try_expand(a)?),
        Node::Opaque { name, orders, args } => Expr::from_node(Node::Opaque {
            name: name.clone(),
            orders: orders.clone(),
            args: args.iter().map(try_expand).collect::<Option<Vec<_>>>()?,
        }),
    })
}

const ZERO_SAMPLES: usize = 20;
const ZERO_TOL: f64 = 1e-9;

/// Decides whether `e` is identically zero.
///
/// First tries expansion plus normalization with inverse folding. If that
/// does not reduce to the literal 0, falls back to numeric testing at 20
/// pseudo-random points (fixed seed) with tolerance 1e-9 relative to the
/// magnitude of the individual terms. The fallback is probabilistic: it can
/// accept a non-zero expression that happens to vanish at every sample.
pub fn is_semantic_zero(e: &Expr, table: &SymbolTable) -> bool {
    let s = simplify(&expand(e), table);
    if s.is_zero() {
        return true;
    }
    if s.free_symbols().is_empty() && s.as_f64().is_some() {
        return s.as_f64().unwrap().abs() <= ZERO_TOL;
    }
    numeric_zero(&s, table)
}

fn numeric_zero(e: &Expr, table: &SymbolTable) -> bool {
    let syms: Vec<_> = e.free_symbols().into_iter().collect();
    let terms = terms_of(e);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2e20);
    let mut passed = 0;
    let mut attempts = 0;
    while passed < ZERO_SAMPLES && attempts < 20 * ZERO_SAMPLES {
        attempts += 1;
        // the second half of the attempts samples positive values only, for
        // expressions with log/sqrt style domains
        let positive = attempts > 10 * ZERO_SAMPLES;
        let mut b = Bindings::new();
        for s in &syms {
            let v: f64 = if positive {
                rng.gen_range(0.05..1.7)
            } else {
                rng.gen_range(-1.7..1.7)
            };
            b.set(s.clone(), v);
        }
        let Ok(v) = evaluate(e, &b, table) else { continue };
        let mut scale: f64 = 1.0;
        for t in &terms {
            match evaluate(t, &b, table) {
                Ok(tv) => scale = scale.max(tv.abs()),
                Err(_) => continue,
            }
        }
        if v.abs() > ZERO_TOL * scale {
            return false;
        }
        passed += 1;
    }
    passed >= ZERO_SAMPLES / 4
}

/// Semantic equality via `is_semantic_zero(a - b)`.
pub fn semantic_eq(a: &Expr, b: &Expr, table: &SymbolTable) -> bool {
    is_semantic_zero(&(a - b), table)
}
