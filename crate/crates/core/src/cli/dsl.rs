//! Line-oriented model files.
//!
//! ```text
//! vars
//!   independent x, t
//!   dependent u
//!   order 1
//!   family exp
//! system
//!   u_t: u_t + f(u)*u_x
//! group G1
//!   x -> x/(1 - eta*t)
//!   ...
//!   eta in [-0.1, 0.1]
//!   domain x in [-1, 1], t in [-1, 1]
//!   expect Q = (1 - eta*t)^3
//! generator w1 of G1
//!   x -> x*t
//! net shock
//!   u = ul + (ur - ul)*Theta((x - c*t)/eps)
//!   layer x - c*t
//!   domain x in [-1, 3], t in [0.5, 3.5]
//!   test phi = bump((x - 1)^2 + (t - 2)^2) on x in [0, 2], t in [1, 3]
//!   probes order 1 at (1, 2), (1.25, 2)
//!   expect associated slope >= 0.8
//! scenario
//!   ul = 1
//!   eps = 2^-3 .. 2^-12
//! ```
//!
//! `#` starts a comment. Numbers (intervals, centers, bounds) may be constant
//! expressions over the scenario constants.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for DslError {}

/// A piece of source text with its position (1-based line and column).
#[derive(Clone, Debug, PartialEq)]
pub struct Src {
    pub text: String,
    pub line: usize,
    pub col: usize,
}

impl Src {
    pub fn err(&self, msg: impl Into<String>) -> DslError {
        DslError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn sub(&self, offset: usize, text: &str) -> Src {
        Src {
            text: text.to_string(),
            line: self.line,
            col: self.col + offset,
        }
    }

    /// Trimmed sub-slice, keeping the column of its first character.
    fn slice(&self, a: usize, b: usize) -> Src {
        let raw = &self.text[a..b];
        let lead = raw.len() - raw.trim_start().len();
        self.sub(a + lead, raw.trim())
    }
}

#[derive(Clone, Debug, Default)]
pub struct VarsDecl {
    pub independent: Vec<String>,
    pub dependent: Vec<String>,
    pub order: usize,
    pub family: Option<Src>,
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct EquationDecl {
    pub solved: Option<Src>,
    pub expr: Src,
}

/// `x in [a, b]` with both bounds as constant expressions.
#[derive(Clone, Debug)]
pub struct Interval {
    pub var: Src,
    pub lo: Src,
    pub hi: Src,
}

#[derive(Clone, Debug)]
pub struct GroupDecl {
    pub name: Src,
    pub maps: Vec<(Src, Src)>,
    pub eta: Option<(Src, Src)>,
    pub domain: Vec<Interval>,
    pub expect: Option<Vec<Vec<Src>>>,
}

#[derive(Clone, Debug)]
pub struct GeneratorDecl {
    pub name: Src,
    pub of: Option<Src>,
    pub maps: Vec<(Src, Src)>,
    pub alpha: Option<Vec<Vec<Src>>>,
    pub beta: Option<Vec<Src>>,
}

#[derive(Clone, Debug)]
pub struct TestDecl {
    pub name: Src,
    pub expr: Src,
    pub support: Vec<Interval>,
    pub unit_mass: bool,
}

#[derive(Clone, Debug, Copy, PartialEq, Eq)]
pub enum Claim {
    Associated,
    NotAssociated,
}

#[derive(Clone, Debug)]
pub struct ExpectDecl {
    pub claim: Claim,
    /// `slope >= v` for associated nets, `slope <= v` otherwise.
    pub slope: Option<Src>,
}

#[derive(Clone, Debug)]
pub struct NetDecl {
    pub name: Src,
    pub components: Vec<(Src, Src)>,
    pub layers: Vec<Src>,
    pub domain: Vec<Interval>,
    pub residual: Option<Src>,
    pub tests: Vec<TestDecl>,
    pub probes: Option<(Src, Vec<Vec<Src>>)>,
    pub expect: Option<ExpectDecl>,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioDecl {
    pub constants: Vec<(Src, Src)>,
    pub eps: Option<(Src, Src)>,
    pub samples: Option<Src>,
    pub tol: Option<Src>,
}

#[derive(Clone, Debug, Default)]
pub struct ModelFile {
    pub vars: Option<VarsDecl>,
    pub system: Vec<EquationDecl>,
    pub groups: Vec<GroupDecl>,
    pub generators: Vec<GeneratorDecl>,
    pub nets: Vec<NetDecl>,
    pub scenario: ScenarioDecl,
}

enum Section {
    None,
    Vars,
    System,
    Group,
    Generator,
    Net,
    Scenario,
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_alphabetic() || c == '_') && cs.all(|c| c.is_alphanumeric() || c == '_')
}

/// Splits at `sep` outside parentheses and brackets.
fn split_top(src: &Src, sep: char) -> Vec<Src> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in src.text.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(src.slice(start, i));
                start = i + ch.len_utf8();
            }
            _ => {}
        }
    }
    out.push(src.slice(start, src.text.len()));
    out
}

/// Position of `pat` at nesting depth zero.
fn find_top(s: &str, pat: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            _ if depth == 0 && s[i..].starts_with(pat) => return Some(i),
            _ => {}
        }
    }
    None
}

fn strip_word(src: &Src, word: &str) -> Option<Src> {
    let t = src.text.as_str();
    let rest = t.strip_prefix(word)?;
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(src.slice(word.len(), t.len()))
}

/// `lhs OP rhs` split at the first top-level occurrence of `op`.
fn split_op(src: &Src, op: &str) -> Option<(Src, Src)> {
    let i = find_top(&src.text, op)?;
    Some((src.slice(0, i), src.slice(i + op.len(), src.text.len())))
}

fn interval(src: &Src) -> Result<Interval, DslError> {
    let (var, range) = split_op(src, " in ").ok_or_else(|| src.err("expected `VAR in [lo, hi]`"))?;
    let inner = range
        .text
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| range.err("expected `[lo, hi]`"))?;
    let inner = range.sub(1, inner);
    let parts = split_top(&inner, ',');
    if parts.len() != 2 || !is_ident(&var.text) {
        return Err(src.err("expected `VAR in [lo, hi]`"));
    }
    Ok(Interval {
        var,
        lo: parts[0].clone(),
        hi: parts[1].clone(),
    })
}

fn intervals(src: &Src) -> Result<Vec<Interval>, DslError> {
    split_top(src, ',').iter().map(interval).collect()
}

/// `a, b; c, d` as rows.
fn matrix(src: &Src) -> Result<Vec<Vec<Src>>, DslError> {
    let rows: Vec<Vec<Src>> = split_top(src, ';').iter().map(|r| split_top(r, ',')).collect();
    if rows.iter().any(|r| r.len() != rows[0].len() || r.iter().any(|e| e.text.is_empty())) {
        return Err(src.err("matrix rows must be non-empty and of equal length"));
    }
    Ok(rows)
}

fn mapping(src: &Src) -> Result<(Src, Src), DslError> {
    let (lhs, rhs) = split_op(src, "->").ok_or_else(|| src.err("expected `VAR -> expression`"))?;
    if !is_ident(&lhs.text) || rhs.text.is_empty() {
        return Err(src.err("expected `VAR -> expression`"));
    }
    Ok((lhs, rhs))
}

fn assignment(src: &Src) -> Result<(Src, Src), DslError> {
    let (lhs, rhs) = split_op(src, "=").ok_or_else(|| src.err("expected `NAME = expression`"))?;
    if !is_ident(&lhs.text) || rhs.text.is_empty() {
        return Err(src.err("expected `NAME = expression`"));
    }
    Ok((lhs, rhs))
}

fn names(src: &Src) -> Result<Vec<String>, DslError> {
    let out: Vec<String> = split_top(src, ',').into_iter().map(|s| s.text).collect();
    if let Some(bad) = out.iter().find(|s| !is_ident(s)) {
        return Err(src.err(format!("`{bad}` is not a valid name")));
    }
    Ok(out)
}

fn header(src: &Src) -> Option<(Section, Vec<Src>)> {
    let words: Vec<Src> = {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in src.text.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    out.push(src.slice(s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(src.slice(s, src.text.len()));
        }
        out
    };
    let section = match words.first()?.text.as_str() {
        "vars" => Section::Vars,
        "system" => Section::System,
        "group" => Section::Group,
        "generator" => Section::Generator,
        "net" => Section::Net,
        "scenario" => Section::Scenario,
        _ => return None,
    };
    let rest = words[1..].to_vec();
    if rest.iter().any(|w| !is_ident(&w.text)) {
        return None;
    }
    Some((section, rest))
}

pub fn parse_model(text: &str) -> Result<ModelFile, DslError> {
    let mut m = ModelFile::default();
    let mut section = Section::None;
    for (n, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let lead = content.len() - content.trim_start().len();
        let src = Src {
            text: content.trim().to_string(),
            line: n + 1,
            col: lead + 1,
        };
        if src.text.is_empty() {
            continue;
        }
        if let Some((sec, args)) = header(&src) {
            let need = |k: usize, what: &str| -> Result<(), DslError> {
                if args.len() == k {
                    Ok(())
                } else {
                    Err(src.err(format!("expected `{what}`")))
                }
            };
            match sec {
                Section::Vars => {
                    need(0, "vars")?;
                    if m.vars.is_some() {
                        return Err(src.err("duplicate vars section"));
                    }
                    m.vars = Some(VarsDecl {
                        order: 1,
                        line: src.line,
                        ..Default::default()
                    });
                }
                Section::System | Section::Scenario => need(0, "section name without arguments")?,
                Section::Group => {
                    need(1, "group NAME")?;
                    m.groups.push(GroupDecl {
                        name: args[0].clone(),
                        maps: vec![],
                        eta: None,
                        domain: vec![],
                        expect: None,
                    });
                }
                Section::Generator => {
                    let of = match args.len() {
                        1 => None,
                        3 if args[1].text == "of" => Some(args[2].clone()),
                        _ => return Err(src.err("expected `generator NAME [of GROUP]`")),
                    };
                    m.generators.push(GeneratorDecl {
                        name: args[0].clone(),
                        of,
                        maps: vec![],
                        alpha: None,
                        beta: None,
                    });
                }
                Section::Net => {
                    need(1, "net NAME")?;
                    m.nets.push(NetDecl {
                        name: args[0].clone(),
                        components: vec![],
                        layers: vec![],
                        domain: vec![],
                        residual: None,
                        tests: vec![],
                        probes: None,
                        expect: None,
                    });
                }
                Section::None => unreachable!(),
            }
            section = sec;
            continue;
        }
        match section {
            Section::None => return Err(src.err("entry outside of any section")),
            Section::Vars => vars_entry(m.vars.as_mut().expect("vars section"), &src)?,
            Section::System => {
                let eq = match find_top(&src.text, ":") {
                    Some(i) => {
                        let lhs = src.slice(0, i);
                        if !is_ident(&lhs.text) {
                            return Err(lhs.err("expected a jet coordinate before `:`"));
                        }
                        EquationDecl {
                            solved: Some(lhs),
                            expr: src.slice(i + 1, src.text.len()),
                        }
                    }
                    None => EquationDecl { solved: None, expr: src.clone() },
                };
                m.system.push(eq);
            }
            Section::Group => group_entry(m.groups.last_mut().expect("group"), &src)?,
            Section::Generator => generator_entry(m.generators.last_mut().expect("generator"), &src)?,
            Section::Net => net_entry(m.nets.last_mut().expect("net"), &src)?,
            Section::Scenario => scenario_entry(&mut m.scenario, &src)?,
        }
    }
    Ok(m)
}

fn vars_entry(v: &mut VarsDecl, src: &Src) -> Result<(), DslError> {
    if let Some(r) = strip_word(src, "independent") {
        v.independent.extend(names(&r)?);
    } else if let Some(r) = strip_word(src, "dependent") {
        v.dependent.extend(names(&r)?);
    } else if let Some(r) = strip_word(src, "order") {
        v.order = r.text.parse().map_err(|_| r.err("order must be a non-negative integer"))?;
    } else if let Some(r) = strip_word(src, "family") {
        v.family = Some(r);
    } else {
        return Err(src.err("expected `independent`, `dependent`, `order` or `family`"));
    }
    Ok(())
}

fn group_entry(g: &mut GroupDecl, src: &Src) -> Result<(), DslError> {
    if let Some(r) = strip_word(src, "domain") {
        g.domain.extend(intervals(&r)?);
    } else if let Some(r) = strip_word(src, "expect") {
        let (lhs, rhs) = split_op(&r, "=").ok_or_else(|| r.err("expected `expect Q = rows`"))?;
        if lhs.text != "Q" {
            return Err(lhs.err("expected `Q`"));
        }
        g.expect = Some(matrix(&rhs)?);
    } else if src.text.starts_with("eta ") && find_top(&src.text, "->").is_none() {
        let iv = interval(src)?;
        g.eta = Some((iv.lo, iv.hi));
    } else {
        g.maps.push(mapping(src)?);
    }
    Ok(())
}

fn generator_entry(g: &mut GeneratorDecl, src: &Src) -> Result<(), DslError> {
    if find_top(&src.text, "->").is_some() {
        g.maps.push(mapping(src)?);
        return Ok(());
    }
    let (lhs, rhs) = assignment(src)?;
    match lhs.text.as_str() {
        "alpha" => g.alpha = Some(matrix(&rhs)?),
        "beta" => g.beta = Some(split_top(&rhs, ',')),
        _ => return Err(lhs.err("expected `VAR -> expression`, `alpha = ...` or `beta = ...`")),
    }
    Ok(())
}

fn net_entry(n: &mut NetDecl, src: &Src) -> Result<(), DslError> {
    if let Some(r) = strip_word(src, "layer") {
        n.layers.push(r);
    } else if let Some(r) = strip_word(src, "domain") {
        n.domain.extend(intervals(&r)?);
    } else if let Some(r) = strip_word(src, "residual") {
        n.residual = Some(r);
    } else if let Some(r) = strip_word(src, "test") {
        let (name, rest) = assignment(&r).map_err(|_| r.err("expected `test NAME = expression on VAR in [lo, hi], ...`"))?;
        let (expr, mut support) = split_op(&rest, " on ").ok_or_else(|| rest.err("expected `on VAR in [lo, hi]`"))?;
        let mut unit_mass = false;
        if let Some(s) = support.text.strip_suffix("unit-mass") {
            let len = s.trim_end().len();
            support = support.slice(0, len);
            unit_mass = true;
        }
        n.tests.push(TestDecl {
            name,
            expr,
            support: intervals(&support)?,
            unit_mass,
        });
    } else if let Some(r) = strip_word(src, "probes") {
        let r = strip_word(&r, "order").ok_or_else(|| r.err("expected `probes order K at (..), ...`"))?;
        let (k, centers) = split_op(&r, " at ").ok_or_else(|| r.err("expected `at (..), ...`"))?;
        let mut out = Vec::new();
        for c in split_top(&centers, ',') {
            let inner = c
                .text
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| c.err("probe centers are written `(x, t)`"))?;
            out.push(split_top(&c.sub(1, inner), ','));
        }
        n.probes = Some((k, out));
    } else if let Some(r) = strip_word(src, "expect") {
        let (claim_src, slope) = match split_op(&r, " slope ") {
            Some((a, b)) => (a, Some(b)),
            None => (r.clone(), None),
        };
        let claim = match claim_src.text.as_str() {
            "associated" => Claim::Associated,
            "not-associated" => Claim::NotAssociated,
            _ => return Err(claim_src.err("expected `associated` or `not-associated`")),
        };
        let slope = match slope {
            None => None,
            Some(s) => {
                let op = if claim == Claim::Associated { ">=" } else { "<=" };
                let v = s.text.strip_prefix(op).ok_or_else(|| s.err(format!("expected `slope {op} value`")))?;
                Some(s.slice(op.len(), op.len() + v.len()))
            }
        };
        n.expect = Some(ExpectDecl { claim, slope });
    } else {
        let (lhs, rhs) = assignment(src)?;
        n.components.push((lhs, rhs));
    }
    Ok(())
}

fn scenario_entry(s: &mut ScenarioDecl, src: &Src) -> Result<(), DslError> {
    let (lhs, rhs) = assignment(src)?;
    match lhs.text.as_str() {
        "eps" => {
            let (a, b) = split_op(&rhs, "..").ok_or_else(|| rhs.err("expected `eps = 2^-a .. 2^-b`"))?;
            s.eps = Some((a, b));
        }
        "samples" => s.samples = Some(rhs),
        "tol" => s.tol = Some(rhs),
        _ => s.constants.push((lhs, rhs)),
    }
    Ok(())
}

/// Rewrites `key = value` in the scenario section (or `family NAME` in vars).
/// Unknown keys are an error.
pub fn apply_override(text: &str, key: &str, value: &str) -> Result<String, String> {
    let mut out = Vec::new();
    let mut section = "";
    let mut hit = false;
    for raw in text.lines() {
        let content = raw.split('#').next().unwrap_or("").trim();
        let first = content.split_whitespace().next().unwrap_or("");
        if matches!(first, "vars" | "system" | "group" | "generator" | "net" | "scenario") && !content.contains(['=', ':', '>']) {
            section = first;
        }
        let indent = &raw[..raw.len() - raw.trim_start().len()];
        let replaced = match section {
            "scenario" => content
                .split_once('=')
                .filter(|(k, _)| k.trim() == key)
                .map(|_| format!("{indent}{key} = {value}")),
            "vars" if key == "family" && first == "family" => Some(format!("{indent}family {value}")),
            _ => None,
        };
        match replaced {
            Some(line) => {
                hit = true;
                out.push(line);
            }
            None => out.push(raw.to_string()),
        }
    }
    if !hit {
        return Err(format!("unknown override `--{key}`"));
    }
    let mut s = out.join("\n");
    if text.ends_with('\n') {
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = "\
vars
  independent x, t   # space-time
  dependent u
system
  u_t: u_t + u*u_x
group G
  x -> x/(1 - eta*t)
  t -> t/(1 - eta*t)
  u -> eta*x + u - eta*u*t
  eta in [-0.1, 0.1]
  domain x in [-1, 1], t in [-1, 1]
  expect Q = (1 - eta*t)^3
generator w of G
  x -> x*t
  t -> t^2
  u -> x - u*t
net shock
  u = 1 - Theta((x - c*t)/eps)
  layer x - c*t
  domain x in [-1, 3], t in [0.5, 3.5]
  test phi = bump((x - 1)^2 + (t - 2)^2) on x in [0, 2], t in [1, 3] unit-mass
  probes order 1 at (2*c, 2), (2*c + 0.25, 2)
  expect associated slope >= 0.8
scenario
  c = 1/2
  eps = 2^-3 .. 2^-12
";

    #[test]
    fn parses_all_sections() {
        let m = parse_model(MODEL).unwrap();
        let v = m.vars.unwrap();
        assert_eq!(v.independent, ["x", "t"]);
        assert_eq!(v.order, 1);
        assert_eq!(m.system[0].solved.as_ref().unwrap().text, "u_t");
        assert_eq!(m.system[0].expr.text, "u_t + u*u_x");
        assert_eq!(m.system[0].expr.col, 8);
        let g = &m.groups[0];
        assert_eq!(g.maps.len(), 3);
        assert_eq!(g.domain[1].var.text, "t");
        assert_eq!(g.expect.as_ref().unwrap()[0][0].text, "(1 - eta*t)^3");
        assert_eq!(m.generators[0].of.as_ref().unwrap().text, "G");
        let n = &m.nets[0];
        assert!(n.tests[0].unit_mass);
        assert_eq!(n.tests[0].support[1].hi.text, "3");
        let (k, centers) = n.probes.as_ref().unwrap();
        assert_eq!(k.text, "1");
        assert_eq!(centers[1][0].text, "2*c + 0.25");
        let e = n.expect.as_ref().unwrap();
        assert_eq!(e.claim, Claim::Associated);
        assert_eq!(e.slope.as_ref().unwrap().text, "0.8");
        assert_eq!(m.scenario.constants[0].0.text, "c");
        assert_eq!(m.scenario.eps.as_ref().unwrap().1.text, "2^-12");
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_model("vars\n  independent x\nsystem\n  u_t u_x\ngroup G\n  x = 1\n").unwrap_err();
        assert_eq!((e.line, e.col), (6, 3));
        let e = parse_model("  u_t: u_t\n").unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn overrides_rewrite_scenario_lines() {
        let t = apply_override(MODEL, "c", "0.4").unwrap();
        assert!(t.contains("  c = 0.4\n"));
        assert!(apply_override(MODEL, "nope", "1").is_err());
        let t = apply_override("vars\n  family id\n", "family", "exp").unwrap();
        assert_eq!(t, "vars\n  family exp\n");
    }
}
