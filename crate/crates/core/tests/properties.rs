use proptest::prelude::*;
use weaksym::cli::model::{build, Model};
use weaksym::cli::report::Status;
use weaksym::cli::tasks::{sample_jets, Task};
use weaksym::cli::{analyze_text, dsl::parse_model, scenario_text};
use weaksym::colombeau::{apply_group, weak_residual_curve, Verdict};
use weaksym::expr::{
    differentiate, evaluate, is_semantic_zero, normalize, Bindings, Elementary, Expr, Rational, Role, Symbol, SymbolTable,
};
use weaksym::factorization::{
    compute_factor_q, infinitesimal_factor, principal_matrix_from_qtilde, FactorMatrix, FactorMethod,
};
use weaksym::jet::{binomial, prolong_function, prolong_group_action, prolong_vector_field, JetSpec};
use weaksym::numerics::{gl_fixed, max_abs_diff, mat_mul, rk4_solve};

#[derive(Clone, Debug)]
enum Tree {
    X,
    Y,
    Const(i64, i64),
    Add(Box<Tree>, Box<Tree>),
    Mul(Box<Tree>, Box<Tree>),
    Pow(Box<Tree>, i64),
    Sin(Box<Tree>),
    Cos(Box<Tree>),
    Exp(Box<Tree>),
    /// sqrt(1 + e^2)
    Hypot(Box<Tree>),
    /// log(1 + e^2)
    LogSq(Box<Tree>),
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![Just(Tree::X), Just(Tree::Y), (-5i64..=5, 1i64..=4).prop_map(|(a, b)| Tree::Const(a, b))];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), 0i64..=3).prop_map(|(a, k)| Tree::Pow(Box::new(a), k)),
            inner.clone().prop_map(|a| Tree::Sin(Box::new(a))),
            inner.clone().prop_map(|a| Tree::Cos(Box::new(a))),
            inner.clone().prop_map(|a| Tree::Exp(Box::new(a))),
            inner.clone().prop_map(|a| Tree::Hypot(Box::new(a))),
            inner.prop_map(|a| Tree::LogSq(Box::new(a))),
        ]
    })
}

fn to_expr(t: &Tree) -> Expr {
    let one_plus_sq = |a: &Tree| Expr::one() + Expr::powi(to_expr(a), 2);
    match t {
        Tree::X => Expr::sym("x"),
        Tree::Y => Expr::sym("y"),
        Tree::Const(a, b) => Expr::frac(*a, *b),
        Tree::Add(a, b) => to_expr(a) + to_expr(b),
        Tree::Mul(a, b) => to_expr(a) * to_expr(b),
        Tree::Pow(a, k) => Expr::powi(to_expr(a), *k),
        Tree::Sin(a) => Expr::call(Elementary::Sin, to_expr(a)),
        Tree::Cos(a) => Expr::call(Elementary::Cos, to_expr(a)),
        Tree::Exp(a) => Expr::exp(to_expr(a)),
        Tree::Hypot(a) => Expr::pow(one_plus_sq(a), Rational::new(1, 2)),
        Tree::LogSq(a) => Expr::call(Elementary::Log, one_plus_sq(a)),
    }
}

fn xy_table() -> SymbolTable {
    let mut t = SymbolTable::new();
    t.declare("x", Role::Independent).unwrap();
    t.declare("y", Role::Independent).unwrap();
    t
}

fn at(x: f64, y: f64) -> Bindings {
    Bindings::from_pairs(&[("x", x), ("y", y)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn differentiation_is_linear(e1 in tree(), e2 in tree(), a in (-6i64..=6, 1i64..=5), b in (-6i64..=6, 1i64..=5),
                                 x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let t = xy_table();
        let s = Symbol::new("x");
        let (a, b) = (Expr::frac(a.0, a.1), Expr::frac(b.0, b.1));
        let (e1, e2) = (to_expr(&e1), to_expr(&e2));
        let lhs = differentiate(&normalize(&(&a * &e1 + &b * &e2)), &s, &t).unwrap();
        let rhs = &a * differentiate(&e1, &s, &t).unwrap() + &b * differentiate(&e2, &s, &t).unwrap();
        prop_assert!(is_semantic_zero(&(&lhs - &rhs), &t), "{lhs} vs {rhs}");
        let (l, r) = (evaluate(&lhs, &at(x, y), &t).unwrap(), evaluate(&rhs, &at(x, y), &t).unwrap());
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs().max(r.abs())), "{l} vs {r}");
    }

    #[test]
    fn derivative_matches_central_difference(e in tree(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let t = xy_table();
        let e = to_expr(&e);
        let f = |x: f64| evaluate(&e, &at(x, y), &t).unwrap();
        prop_assume!(f(x).abs() <= 1e3);
        let h = 1e-6;
        let numeric = (f(x + h) - f(x - h)) / (2.0 * h);
        let exact = evaluate(&differentiate(&e, &Symbol::new("x"), &t).unwrap(), &at(x, y), &t).unwrap();
        prop_assert!((exact - numeric).abs() <= 1e-5 * (1.0 + exact.abs()), "{exact} vs {numeric} for {e}");
    }

    #[test]
    fn normalize_preserves_values(e in tree(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let t = xy_table();
        let e = to_expr(&e);
        let raw = evaluate(&e, &at(x, y), &t).unwrap();
        let n = evaluate(&normalize(&e), &at(x, y), &t).unwrap();
        prop_assert!((raw - n).abs() <= 1e-12 * (1.0 + raw.abs()), "{raw} vs {n} for {e}");
    }

    #[test]
    fn jet_coordinate_count(p in 1usize..=3, q in 1usize..=3, n in 0usize..=3) {
        let xs = ["x", "y", "z"];
        let us = ["u", "v", "w"];
        let spec = JetSpec::new(&xs[..p], &us[..q], n);
        prop_assert_eq!(spec.len() as u64, p as u64 + q as u64 * binomial((p + n) as u64, n as u64));
        for k in 0..=n {
            prop_assert_eq!(spec.count_of_order(k) as u64, binomial((p + k - 1) as u64, k as u64));
        }
    }

    #[test]
    fn mixed_jets_are_symmetric(cs in prop::collection::vec(-4i64..=4, 9), x in -1.0f64..1.0, t0 in -1.0f64..1.0) {
        let spec = JetSpec::new(&["x", "t"], &["u"], 2);
        let mut table = SymbolTable::new();
        spec.declare_into(&mut table).unwrap();
        prop_assert_eq!(spec.dependent_index(0, &[0, 1]), spec.dependent_index(0, &[1, 0]));
        let u: Expr = Expr::sum(
            (0..9).map(|k| Expr::int(cs[k]) * Expr::powi(Expr::sym("x"), (k / 3) as i64) * Expr::powi(Expr::sym("t"), (k % 3) as i64)).collect(),
        );
        let jets = prolong_function(std::slice::from_ref(&u), &spec, &table).unwrap();
        let k = spec.dependent_index(0, &[0, 1]).unwrap();
        let (sx, st) = (Symbol::new("x"), Symbol::new("t"));
        let xt = differentiate(&differentiate(&u, &sx, &table).unwrap(), &st, &table).unwrap();
        let tx = differentiate(&differentiate(&u, &st, &table).unwrap(), &sx, &table).unwrap();
        let b = Bindings::from_pairs(&[("x", x), ("t", t0)]);
        let v = evaluate(&jets.values[k], &b, &table).unwrap();
        prop_assert!((v - evaluate(&xt, &b, &table).unwrap()).abs() <= 1e-12 * (1.0 + v.abs()));
        prop_assert!((v - evaluate(&tx, &b, &table).unwrap()).abs() <= 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn gauss_legendre_16_is_exact_to_degree_31(cs in prop::collection::vec(-1.0f64..1.0, 32), a in -2.0f64..0.0, b in 0.1f64..2.0) {
        let poly = |x: f64| cs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let prim = |x: f64| cs.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * x + c / (k + 1) as f64) * x;
        let scale: f64 = cs.iter().enumerate().map(|(k, c)| c.abs() * 2f64.powi(k as i32 + 1)).sum();
        let got = gl_fixed(&poly, a, b, 16);
        prop_assert!((got - (prim(b) - prim(a))).abs() <= 1e-13 * scale);
    }

    #[test]
    fn rk4_is_fourth_order(lambda in prop_oneof![-2.0f64..-0.5, 0.5f64..2.0]) {
        let rhs = |_: f64, y: &[f64]| Ok(vec![lambda * y[0]]);
        let exact = lambda.exp();
        let e1 = (rk4_solve(rhs, &[1.0], 0.0, 1.0, 20).unwrap()[0] - exact).abs();
        let e2 = (rk4_solve(rhs, &[1.0], 0.0, 1.0, 40).unwrap()[0] - exact).abs();
        let ratio = e1 / e2;
        prop_assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn prolongation_matches_flow(a in -3i64..=3, b in -3i64..=3, c in -3i64..=3, seed in any::<u64>()) {
        let text = format!(
            "vars\n  independent x, t\n  dependent u\n  order 2\ngroup G\n  x -> x + ({a})*eta\n  t -> t + ({b})*eta\n  u -> exp(({c})*eta)*u\n\
             generator w of G\n  x -> {a}\n  t -> {b}\n  u -> ({c})*u\n"
        );
        let m = build(&parse_model(&text).unwrap()).unwrap();
        let (g, w) = (&m.groups[0].action, &m.generators[0].field);
        let pa = prolong_group_action(g, &m.spec, &m.table).unwrap().compile(&m.table).unwrap();
        let coeffs = prolong_vector_field(w, &m.spec, &m.table).unwrap();
        let syms = m.spec.symbols();
        for z in sample_jets(&m.spec, &g.domain, 2.0, 50, seed) {
            let d = |h: f64| -> Vec<f64> {
                let (p, q) = (pa.apply(h, &z).unwrap(), pa.apply(-h, &z).unwrap());
                p.iter().zip(&q).map(|(p, q)| (p - q) / (2.0 * h)).collect()
            };
            let (d1, d2) = (d(1e-3), d(5e-4));
            let b: Bindings = syms.iter().cloned().zip(z.iter().copied()).collect();
            for (k, e) in coeffs.iter().enumerate() {
                let numeric = (4.0 * d2[k] - d1[k]) / 3.0;
                prop_assert!((numeric - evaluate(e, &b, &m.table).unwrap()).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn linear_systems_have_eta_x_factors(k in (-4i64..=4, 1i64..=3), mm in (-4i64..=4, 1i64..=3), a in -2i64..=2, b in -2i64..=2, s in -3i64..=3) {
        let text = format!(
            "vars\n  independent x, t\n  dependent u\nsystem\n  u_t: u_t + ({}/{})*u_x + ({}/{})*u\n\
             group G\n  x -> x + ({a})*eta\n  t -> t + ({b})*eta\n  u -> exp(({s})*eta)*u\n",
            k.0, k.1, mm.0, mm.1
        );
        let r = analyze_text(&text, &[Task::Factor], 42).unwrap();
        prop_assert_eq!(r.check("factor:G").unwrap().status, Status::Pass);
        prop_assert_eq!(r.check("linear-dependence:G").unwrap().status, Status::Pass);
    }

    #[test]
    fn passing_generators_have_infinitesimal_factors(al in -3i64..=3, be in -3i64..=3, ga in -3i64..=3) {
        // al w1 + be w2 + ga d/dx for u_t + u u_x
        let text = format!(
            "vars\n  independent x, t\n  dependent u\nsystem\n  u_t: u_t + u*u_x\n\
             generator w\n  x -> ({al})*x*t + ({be})*x^2 + ({ga})\n  t -> ({al})*t^2 + ({be})*x*t\n  u -> ({al})*(x - u*t) + ({be})*u*(x - u*t)\n"
        );
        let r = analyze_text(&text, &[Task::Determining], 42).unwrap();
        prop_assert_eq!(r.check("determining:w").unwrap().status, Status::Pass);
        prop_assert_eq!(r.check("infinitesimal-factor:w").unwrap().status, Status::Pass);
        let m = build(&parse_model(&text).unwrap()).unwrap();
        let f = infinitesimal_factor(m.system.as_ref().unwrap(), &m.generators[0].field, &m.table).unwrap();
        for e in &f.remainder {
            prop_assert!(is_semantic_zero(e, &m.table), "remainder {e}");
        }
    }
}

fn generalized(family: &str) -> Model {
    let text = scenario_text("generalized-burgers", &[("family".into(), family.into())]).unwrap();
    build(&parse_model(&text).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn factor_constructions_agree(family in prop_oneof![Just("id"), Just("exp"), Just("cubic")], which in 0usize..2, seed in any::<u64>()) {
        let m = generalized(family);
        let sys = m.system.as_ref().unwrap();
        let (g, w) = (&m.groups[which], &m.generators[which]);
        let closed = FactorMatrix::symbolic(sys, g.expect.clone().unwrap(), g.action.eta_range).compile(&m.table).unwrap();
        let quad = compute_factor_q(sys, &g.action, FactorMethod::Quadrature, &m.table).unwrap().compile(&m.table).unwrap();
        let qt = infinitesimal_factor(sys, &w.field, &m.table).unwrap().qtilde;
        let etas = sample_jets(&JetSpec::new(&["e"], &["v"], 0), &[(-0.1, 0.1)], 0.1, 20, seed ^ 1);
        for (z, e) in sample_jets(&m.spec, &g.action.domain, 1.0, 20, seed).iter().zip(etas) {
            let eta = e[0];
            let (Ok(a), Ok(b)) = (closed.eval(eta, z), quad.eval(eta, z)) else { continue };
            let c = principal_matrix_from_qtilde(&qt, &g.action, z, eta, &m.table).unwrap();
            prop_assert!(max_abs_diff(&a, &b) <= 1e-6, "closed {a:?} vs quadrature {b:?}");
            prop_assert!(max_abs_diff(&a, &c) <= 1e-6, "closed {a:?} vs ODE {c:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn factors_satisfy_the_group_law(which in 0usize..2, e1 in -0.05f64..0.05, e2 in -0.05f64..0.05, seed in any::<u64>()) {
        let m = generalized("exp");
        let g = &m.groups[which].action;
        let q = compute_factor_q(m.system.as_ref().unwrap(), g, FactorMethod::Auto, &m.table).unwrap().compile(&m.table).unwrap();
        let pa = prolong_group_action(g, &m.spec, &m.table).unwrap().compile(&m.table).unwrap();
        for z in sample_jets(&m.spec, &g.domain, 1.0, 10, seed) {
            let zb = pa.apply(e1, &z).unwrap();
            let lhs = q.eval(e1 + e2, &z).unwrap();
            let rhs = mat_mul(&q.eval(e2, &zb).unwrap(), &q.eval(e1, &z).unwrap());
            prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-8);
        }
    }
}

const SHOCK_MODEL: &str = "\
vars
  independent x, t
  dependent u
system
  u_t: u_t + u*u_x
group Gx
  x -> x + eta
  t -> t
  u -> u
net shock
  u = 1 - Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  test phi = bump((x - 2*c - s)^2 + (t - 2)^2) on x in [2*c + s - 1, 2*c + s + 1], t in [1, 3]
  expect associated
net pair
  u = 1 - Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  residual u - (1 - Theta2((x - c*t)/eps))
  test phi = bump((x - 2*c - s)^2 + (t - 2)^2) on x in [2*c + s - 1, 2*c + s + 1], t in [1, 3]
  expect associated slope >= 0.8
net square
  u = theta((x - c*t)/eps)^2/eps^2
  layer x - c*t
  domain x in [2*c - 2, 2*c + 2], t in [0.5, 3.5]
  residual u
  test phi = bump((x - 2*c - s)^2 + (t - 2)^2) on x in [2*c + s - 1, 2*c + s + 1], t in [1, 3] unit-mass
  expect not-associated slope <= -0.8
scenario
  c = 1/2
  s = 0
  eps = 2^-3 .. 2^-8
";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn oscillating_net_is_not_associated_to_constants(c in -2i64..=2) {
        let text = format!(
            "vars\n  independent x\n  dependent u\nnet osc\n  u = cos(eps^2*x)/eps\n  domain x in [-2, 2]\n  residual u - ({c})\n\
             test phi = bump((x - 0.5)^2) on x in [-0.5, 1.5] unit-mass\n  expect not-associated slope <= -0.8\n\
             net slope\n  u = cos(eps^2*x)/eps\n  domain x in [-2, 2]\n  residual u_x\n\
             test phi = bump((x - 0.5)^2) on x in [-0.5, 1.5] unit-mass\n  expect associated slope >= 0.8\n"
        );
        let r = analyze_text(&text, &[Task::Associate], 42).unwrap();
        let osc = r.check("weak:osc:phi").unwrap();
        prop_assert_eq!(osc.status, Status::Pass);
        prop_assert!((osc.slope.unwrap() + 1.0).abs() <= 0.05);
        prop_assert_eq!(r.check("weak:slope:phi").unwrap().status, Status::Pass);
    }

    #[test]
    fn mollifiers_pair_associate_and_delta_squares_do_not(c in 3i64..=7, s in -2i64..=2) {
        let text = SHOCK_MODEL
            .replace("c = 1/2", &format!("c = {c}/10"))
            .replace("s = 0", &format!("s = {s}/10"));
        let r = analyze_text(&text, &[Task::Associate], 42).unwrap();
        prop_assert_eq!(r.check("weak:pair:phi").unwrap().status, Status::Pass);
        let sq = r.check("weak:square:phi").unwrap();
        prop_assert_eq!(sq.status, Status::Pass);
        prop_assert!((sq.slope.unwrap() + 1.0).abs() <= 0.05);
    }

    #[test]
    fn translations_preserve_weak_verdicts(eta in -0.3f64..0.3, s in -2i64..=2) {
        let text = SHOCK_MODEL.replace("s = 0", &format!("s = {s}/10"));
        let m = build(&parse_model(&text).unwrap()).unwrap();
        let n = m.net("shock").unwrap();
        let sys = n.system.as_ref().unwrap();
        let before = weak_residual_curve(sys, &n.net, &n.tests[0], &m.grid, &m.table).unwrap();
        let image = apply_group(&n.net, &m.groups[0].action, eta, &m.spec, &m.table).unwrap();
        let after = weak_residual_curve(sys, &image, &n.tests[0], &m.grid, &m.table).unwrap();
        prop_assert_eq!(&before[0].verdict, &Verdict::ConvergesToZero);
        prop_assert_eq!(&after[0].verdict, &Verdict::ConvergesToZero);
    }
}
