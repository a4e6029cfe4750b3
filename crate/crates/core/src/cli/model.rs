//! Turns a parsed model file into jet spaces, systems, actions and nets.

use super::dsl::{Claim, DslError, Interval, ModelFile, Src};
use crate::colombeau::{register_bump, GNet, Mollifier, ProbeFamily, TestFunction};
use crate::expr::{evaluate, normalize, parse, substitute, Bindings, Compiled, Expr, ExprError, FunctionFamily, Role, Symbol, SymbolTable};
use crate::factorization::PDESystem;
use crate::jet::{GroupAction, JetSpec, VectorField};
use crate::numerics::{integrate, integrate_2d, QuadratureSpec};
use std::collections::HashMap;

pub type Matrix = Vec<Vec<Expr>>;

pub struct Group {
    pub name: String,
    pub action: GroupAction,
    pub expect: Option<Matrix>,
}

pub struct Generator {
    pub name: String,
    pub field: VectorField,
    pub of: Option<usize>,
}

pub struct Expectation {
    pub claim: Claim,
    pub slope: Option<f64>,
}

pub struct Net {
    pub name: String,
    pub net: GNet,
    /// The system the net is tested against: the model's system or the
    /// net's own residual.
    pub system: Option<PDESystem>,
    pub tests: Vec<TestFunction>,
    pub probes: Option<ProbeFamily>,
    pub expect: Expectation,
}

pub struct Model {
    pub table: SymbolTable,
    pub spec: JetSpec,
    pub system: Option<PDESystem>,
    pub groups: Vec<Group>,
    pub generators: Vec<Generator>,
    pub nets: Vec<Net>,
    pub constants: HashMap<Symbol, Expr>,
    pub grid: Vec<f64>,
    pub samples: usize,
    pub tol: f64,
    pub mollifier: Mollifier,
    pub skewed: Mollifier,
}

impl Model {
    /// Parses an expression in the model's scope, with constants substituted.
    pub fn expr(&self, text: &str) -> Result<Expr, ExprError> {
        Ok(normalize(&substitute(&parse(text, &self.table)?, &self.constants)))
    }

    pub fn value(&self, text: &str) -> Result<f64, ExprError> {
        evaluate(&self.expr(text)?, &Bindings::new(), &self.table)
    }

    pub fn group(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn generator(&self, name: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&Net> {
        self.nets.iter().find(|n| n.name == name)
    }
}

fn expr_error(src: &Src, e: ExprError) -> DslError {
    let col = match &e {
        ExprError::Syntax { pos, .. } => src.col + pos,
        ExprError::UnknownSymbol(name) | ExprError::Unbound(name) => src.text.find(name.as_str()).map_or(src.col, |i| src.col + i),
        _ => src.col,
    };
    DslError {
        line: src.line,
        col,
        msg: e.to_string(),
    }
}

struct Ctx {
    table: SymbolTable,
    constants: HashMap<Symbol, Expr>,
}

impl Ctx {
    fn expr(&self, src: &Src) -> Result<Expr, DslError> {
        let e = parse(&src.text, &self.table).map_err(|e| expr_error(src, e))?;
        Ok(normalize(&substitute(&e, &self.constants)))
    }

    fn number(&self, src: &Src) -> Result<f64, DslError> {
        let e = self.expr(src)?;
        let v = evaluate(&e, &Bindings::new(), &self.table).map_err(|e| expr_error(src, e))?;
        if !v.is_finite() {
            return Err(src.err("not a finite number"));
        }
        Ok(v)
    }

    fn row(&self, srcs: &[Src]) -> Result<Vec<Expr>, DslError> {
        srcs.iter().map(|s| self.expr(s)).collect()
    }

    fn matrix(&self, rows: &[Vec<Src>]) -> Result<Matrix, DslError> {
        rows.iter().map(|r| self.row(r)).collect()
    }

    /// Box over `vars`, defaulting to `fallback` for variables not listed.
    fn domain(&self, ivs: &[Interval], vars: &[String], fallback: Option<(f64, f64)>, at: &Src) -> Result<Vec<(f64, f64)>, DslError> {
        let mut out = vec![None; vars.len()];
        for iv in ivs {
            let k = vars
                .iter()
                .position(|v| *v == iv.var.text)
                .ok_or_else(|| iv.var.err(format!("`{}` is not an independent variable", iv.var.text)))?;
            let (lo, hi) = (self.number(&iv.lo)?, self.number(&iv.hi)?);
            if lo >= hi {
                return Err(iv.lo.err("empty interval"));
            }
            out[k] = Some((lo, hi));
        }
        out.into_iter()
            .zip(vars)
            .map(|(r, v)| r.or(fallback).ok_or_else(|| at.err(format!("domain misses `{v}`"))))
            .collect()
    }
}

/// Orders `VAR -> expr` maps by the given variables.
fn ordered<'a>(maps: &'a [(Src, Src)], vars: &[String], at: &Src) -> Result<Vec<&'a Src>, DslError> {
    for (lhs, _) in maps {
        if !vars.contains(&lhs.text) {
            return Err(lhs.err(format!("`{}` is not a variable of the model", lhs.text)));
        }
        if maps.iter().filter(|(l, _)| l.text == lhs.text).count() > 1 {
            return Err(lhs.err(format!("`{}` is mapped twice", lhs.text)));
        }
    }
    vars.iter()
        .map(|v| {
            maps.iter()
                .find(|(l, _)| l.text == *v)
                .map(|(_, r)| r)
                .ok_or_else(|| at.err(format!("no component for `{v}`")))
        })
        .collect()
}

fn jet_error(at: &Src, e: impl std::fmt::Display) -> DslError {
    at.err(e.to_string())
}

pub fn build(m: &ModelFile) -> Result<Model, DslError> {
    let top = Src {
        text: String::new(),
        line: 1,
        col: 1,
    };
    let vars = m.vars.as_ref().ok_or_else(|| top.err("missing vars section"))?;
    let at_vars = Src { line: vars.line, ..top.clone() };
    if vars.independent.is_empty() || vars.dependent.is_empty() {
        return Err(at_vars.err("vars need at least one independent and one dependent variable"));
    }
    let ind: Vec<&str> = vars.independent.iter().map(String::as_str).collect();
    let dep: Vec<&str> = vars.dependent.iter().map(String::as_str).collect();
    let spec = JetSpec::new(&ind, &dep, vars.order);
    let mut table = SymbolTable::new();
    spec.declare_into(&mut table).map_err(|e| jet_error(&at_vars, e))?;
    if let Some(f) = &vars.family {
        let fam = FunctionFamily::from_name(&f.text).ok_or_else(|| f.err(format!("unknown function family `{}`", f.text)))?;
        table.register_family(fam).map_err(|e| expr_error(f, e))?;
    }
    register_bump(&mut table).map_err(|e| jet_error(&at_vars, e))?;
    let mollifier = Mollifier::standard(&mut table).map_err(|e| jet_error(&at_vars, e))?;
    let skewed = Mollifier::skewed(&mut table).map_err(|e| jet_error(&at_vars, e))?;

    let mut ctx = Ctx {
        table,
        constants: HashMap::new(),
    };
    for (name, value) in &m.scenario.constants {
        let e = ctx.expr(value)?;
        let v = match e.as_rational() {
            Some(_) => e,
            None => Expr::float(ctx.number(value)?),
        };
        let sym = ctx.table.declare(&name.text, Role::Constant).map_err(|e| expr_error(name, e))?;
        ctx.constants.insert(sym, v);
    }
    let grid = match &m.scenario.eps {
        None => crate::colombeau::default_grid(),
        Some((a, b)) => {
            let (ea, eb) = (ctx.number(a)?.log2(), ctx.number(b)?.log2());
            if (ea - ea.round()).abs() > 1e-9 || (eb - eb.round()).abs() > 1e-9 || eb >= ea {
                return Err(a.err("eps grid must run between powers of two, from large to small"));
            }
            (eb.round() as i32..=ea.round() as i32).rev().map(|k| 2f64.powi(k)).collect()
        }
    };
    let samples = match &m.scenario.samples {
        None => 100,
        Some(s) => {
            let v = ctx.number(s)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(s.err("samples must be a positive integer"));
            }
            v as usize
        }
    };
    let tol = match &m.scenario.tol {
        None => 1e-8,
        Some(s) => ctx.number(s)?,
    };

    let system = if m.system.is_empty() {
        None
    } else {
        let mut eqs = Vec::new();
        let mut solved = Vec::new();
        for eq in &m.system {
            eqs.push(ctx.expr(&eq.expr)?);
            if let Some(s) = &eq.solved {
                let sym = ctx
                    .table
                    .resolve(&s.text)
                    .ok_or_else(|| s.err(format!("`{}` is not a jet coordinate", s.text)))?;
                solved.push(spec.index_of(&sym).ok_or_else(|| s.err(format!("`{}` is not a jet coordinate", s.text)))?);
            }
        }
        let at = &m.system[0].expr;
        Some(PDESystem::new(spec.clone(), eqs, solved, &ctx.table).map_err(|e| jet_error(at, e))?)
    };

    let all_vars: Vec<String> = vars.independent.iter().chain(&vars.dependent).cloned().collect();
    let mut groups = Vec::new();
    for g in &m.groups {
        let comps = ordered(&g.maps, &all_vars, &g.name)?;
        let exprs = comps.iter().map(|s| ctx.expr(s)).collect::<Result<Vec<_>, _>>()?;
        let (xi, phi) = exprs.split_at(spec.p());
        let mut action = GroupAction::new(xi.to_vec(), phi.to_vec(), &spec, &ctx.table)
            .and_then(|a| a.detect_linear(&spec, &ctx.table))
            .map_err(|e| jet_error(&g.name, e))?
            .with_domain(ctx.domain(&g.domain, &vars.independent, Some((-1.0, 1.0)), &g.name)?);
        if let Some((lo, hi)) = &g.eta {
            let (a, b) = (ctx.number(lo)?, ctx.number(hi)?);
            if !(a < 0.0 && b > 0.0) {
                return Err(lo.err("eta range must contain 0 in its interior"));
            }
            action = action.with_eta_range(a, b);
        }
        let expect = g.expect.as_ref().map(|rows| ctx.matrix(rows)).transpose()?;
        if let (Some(q), Some(sys)) = (&expect, &system) {
            if q.len() != sys.s() || q.iter().any(|r| r.len() != sys.s()) {
                return Err(g.name.err(format!("expected Q must be {0}x{0}", sys.s())));
            }
        }
        groups.push(Group {
            name: g.name.text.clone(),
            action,
            expect,
        });
    }

    let mut generators = Vec::new();
    for w in &m.generators {
        let comps = ordered(&w.maps, &all_vars, &w.name)?;
        let exprs = comps.iter().map(|s| ctx.expr(s)).collect::<Result<Vec<_>, _>>()?;
        let (xi, phi) = exprs.split_at(spec.p());
        let mut field = VectorField::new(xi.to_vec(), phi.to_vec(), &spec).map_err(|e| jet_error(&w.name, e))?;
        if let Some(rows) = &w.alpha {
            let alpha = ctx.matrix(rows)?;
            let beta = match &w.beta {
                Some(b) => ctx.row(b)?,
                None => vec![Expr::zero(); spec.q()],
            };
            field = field
                .with_linear(alpha, beta, &spec, &ctx.table)
                .map_err(|e| jet_error(&w.name, e))?;
        }
        let of = match &w.of {
            None => None,
            Some(g) => Some(
                groups
                    .iter()
                    .position(|x| x.name == g.text)
                    .ok_or_else(|| g.err(format!("unknown group `{}`", g.text)))?,
            ),
        };
        generators.push(Generator {
            name: w.name.text.clone(),
            field,
            of,
        });
    }

    let xs = spec.independent_symbols();
    let mut nets = Vec::new();
    for n in &m.nets {
        let comps = ordered(&n.components, &vars.dependent, &n.name)?;
        let components = comps.iter().map(|s| ctx.expr(s)).collect::<Result<Vec<_>, _>>()?;
        let domain = ctx.domain(&n.domain, &vars.independent, None, &n.name)?;
        let layers = n.layers.iter().map(|s| ctx.expr(s)).collect::<Result<Vec<_>, _>>()?;
        let net = GNet::new(components, &xs, domain).with_layers(layers);
        let sys = match &n.residual {
            Some(r) => Some(PDESystem::new(spec.clone(), vec![ctx.expr(r)?], vec![], &ctx.table).map_err(|e| jet_error(r, e))?),
            None => system.clone(),
        };
        let mut tests = Vec::new();
        for t in &n.tests {
            let expr = ctx.expr(&t.expr)?;
            let support = ctx.domain(&t.support, &vars.independent, None, &t.name)?;
            let mut phi = TestFunction {
                expr,
                support,
                label: t.name.text.clone(),
            };
            if t.unit_mass {
                let mass = test_mass(&phi, &xs, &ctx.table).map_err(|e| t.expr.err(e))?;
                if !(mass.abs() > 1e-300) {
                    return Err(t.expr.err("test function has zero mass"));
                }
                phi.expr = normalize(&(Expr::float(1.0 / mass) * phi.expr));
            }
            tests.push(phi);
        }
        let probes = match &n.probes {
            None => None,
            Some((k, centers)) => {
                let order = ctx.number(k)?;
                if order < 0.0 || order.fract() != 0.0 {
                    return Err(k.err("probe order must be a non-negative integer"));
                }
                let cs = centers
                    .iter()
                    .map(|c| {
                        if c.len() != spec.p() {
                            return Err(c[0].err(format!("probe centers need {} coordinates", spec.p())));
                        }
                        c.iter().map(|v| ctx.number(v)).collect::<Result<Vec<f64>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(ProbeFamily::new(cs, order as u32))
            }
        };
        let expect = match &n.expect {
            None => Expectation {
                claim: Claim::Associated,
                slope: None,
            },
            Some(e) => Expectation {
                claim: e.claim,
                slope: e.slope.as_ref().map(|s| ctx.number(s)).transpose()?,
            },
        };
        if (!tests.is_empty() || probes.is_some()) && sys.is_none() {
            return Err(n.name.err("net has test functions but neither a system nor a residual"));
        }
        nets.push(Net {
            name: n.name.text.clone(),
            net,
            system: sys,
            tests,
            probes,
            expect,
        });
    }

    Ok(Model {
        table: ctx.table,
        spec,
        system,
        groups,
        generators,
        nets,
        constants: ctx.constants,
        grid,
        samples,
        tol,
        mollifier,
        skewed,
    })
}

/// Integral of a test function over its support box (one or two variables).
fn test_mass(phi: &TestFunction, xs: &[Symbol], table: &SymbolTable) -> Result<f64, String> {
    let c = Compiled::new(&phi.expr, xs, &Bindings::new(), table).map_err(|e| e.to_string())?;
    let spec = QuadratureSpec::default();
    let q = match xs.len() {
        1 => integrate(&|x| c.eval(&[x]).unwrap_or(f64::NAN), phi.support[0].0, phi.support[0].1, &spec),
        2 => integrate_2d(
            &|x, t| c.eval(&[x, t]).unwrap_or(f64::NAN),
            phi.support[1],
            phi.support[0],
            &|_| vec![],
            &spec,
            &spec,
        ),
        d => return Err(format!("unit-mass tests support 1 or 2 variables, got {d}")),
    };
    q.map(|q| q.value).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::dsl::parse_model;

    #[test]
    fn builds_a_burgers_model() {
        let text = "\
vars
  independent x, t
  dependent u
system
  u_t: u_t + u*u_x
group G
  x -> x + eta
  t -> t
  u -> u
generator w of G
  x -> 1
  t -> 0
  u -> 0
net shock
  u = ul + (ur - ul)*Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [-1, 3], t in [0.5, 3.5]
  test phi = bump((x - 1)^2 + (t - 2)^2) on x in [0, 2], t in [1, 3] unit-mass
scenario
  ul = 1
  ur = 0
  c = (ul + ur)/2
  eps = 2^-3 .. 2^-6
";
        let m = build(&parse_model(text).unwrap()).unwrap();
        assert_eq!(m.grid, vec![0.125, 0.0625, 0.03125, 0.015625]);
        assert_eq!(m.constants[&Symbol::new("c")], Expr::frac(1, 2));
        assert_eq!(m.generators[0].of, Some(0));
        let phi = &m.nets[0].tests[0];
        let mass = test_mass(phi, &m.spec.independent_symbols(), &m.table).unwrap();
        assert!((mass - 1.0).abs() <= 1e-9);
        assert!(m.nets[0].net.evaluate(0, &[0.0, 1.0], 0.01, &m.table).unwrap() == 1.0);
    }

    #[test]
    fn undeclared_symbol_is_located() {
        let text = "vars\n  independent x, t\n  dependent u\nsystem\n  u_t: u_t + w*u_x\n";
        let Err(e) = build(&parse_model(text).unwrap()) else { panic!("model built") };
        assert_eq!((e.line, e.col), (5, 14));
        assert!(e.msg.contains("`w`"), "{}", e.msg);
    }
}
