//! The `factor`, `determining`, `verify` and `associate` pipelines.

use super::dsl::Claim;
use super::model::{Expectation, Group, Model};
use super::report::{Check, Status};
use super::CliError;
use crate::colombeau::{strong_association_check, weak_residual_curve, ResidualCurve, Verdict};
use crate::expr::{Bindings, Compiled, Expr, SymbolTable};
use crate::factorization::{
    build_solved_form, check_growth_a3, compute_factor_q, compare_factors, determining_equations, infinitesimal_factor,
    injectivity_spot_check, quasilinear_conditions, verify_factorization, Classification, Dependence, FactorMatrix, FactorMethod,
    PDESystem, VerifyOptions,
};
use crate::jet::JetSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Factor,
    Determining,
    Verify,
    Associate,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Factor, Task::Determining, Task::Verify, Task::Associate];

    pub fn parse(s: &str) -> Option<Task> {
        Some(match s {
            "factor" => Task::Factor,
            "determining" => Task::Determining,
            "verify" => Task::Verify,
            "associate" => Task::Associate,
            _ => return None,
        })
    }
}

/// Random jets: x in `domain`, every other coordinate in [-radius, radius].
pub fn sample_jets(spec: &JetSpec, domain: &[(f64, f64)], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..spec.len())
                .map(|k| {
                    let (a, b) = domain.get(k).copied().unwrap_or((-radius, radius));
                    rng.gen_range(a..b)
                })
                .collect()
        })
        .collect()
}

/// max |e| over sampled jets, skipping points where an expression is undefined.
pub fn max_on_jets(es: &[&Expr], spec: &JetSpec, jets: &[Vec<f64>], table: &SymbolTable) -> Result<f64, CliError> {
    let cs = es
        .iter()
        .map(|e| Compiled::new(e, &spec.symbols(), &Bindings::new(), table))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    let mut worst: f64 = 0.0;
    for z in jets {
        for c in &cs {
            if let Ok(v) = c.eval(z) {
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

fn system(m: &Model) -> Result<&PDESystem, CliError> {
    m.system
        .as_ref()
        .ok_or_else(|| CliError::Unsupported("the model declares groups or generators but no system".into()))
}

pub fn verify_options(m: &Model, g: &Group, seed: u64) -> VerifyOptions {
    VerifyOptions {
        samples: m.samples,
        eta_range: g.action.eta_range,
        tol: m.tol,
        seed,
        jet_radius: 2.0,
    }
}

pub fn run_tasks(m: &Model, tasks: &[Task], seed: u64) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for task in Task::ALL {
        if !tasks.contains(&task) {
            continue;
        }
        match task {
            Task::Factor => factor(m, seed, &mut out)?,
            Task::Verify => verify(m, seed, &mut out)?,
            Task::Determining => determining(m, seed, &mut out)?,
            Task::Associate => associate(m, &mut out)?,
        }
    }
    Ok(out)
}

fn factor(m: &Model, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    if m.groups.is_empty() {
        return Ok(());
    }
    let sys = system(m)?;
    for g in &m.groups {
        let name = format!("factor:{}", g.name);
        let q = match compute_factor_q(sys, &g.action, FactorMethod::Auto, &m.table) {
            Ok(q) => q,
            Err(e) => {
                out.push(Check::failed(name, e));
                continue;
            }
        };
        out.push(match verify_factorization(sys, &g.action, &q, &verify_options(m, g, seed), &m.table) {
            Ok(r) => Check::new(name, Status::from_bool(r.pass))
                .residual(r.max_residual.max(r.functional_residual))
                .expression(q.render()),
            Err(e) => Check::failed(name, e),
        });
        if let Some(expect) = &g.expect {
            let name = format!("factor-closed-form:{}", g.name);
            let closed = FactorMatrix::symbolic(sys, expect.clone(), g.action.eta_range);
            out.push(match compare_factors(&q, &closed, &g.action.domain, 200, seed, &m.table) {
                Ok(d) => Check::bound(name, d, m.tol),
                Err(e) => Check::failed(name, e),
            });
        }
        if sys.class == Classification::Linear && g.action.linear.is_some() {
            out.push(
                Check::new(format!("linear-dependence:{}", g.name), Status::from_bool(q.dependence == Dependence::EtaX))
                    .note(format!("{:?}", q.dependence)),
            );
        }
    }
    Ok(())
}

fn verify(m: &Model, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let Some(sys) = &m.system else { return Ok(()) };
    if sys.solved.is_empty() {
        return Ok(());
    }
    out.push(match build_solved_form(sys, seed, &m.table) {
        Ok(sf) => {
            let c = Check::bound("solved-form", sf.round_trip_error, 1e-10);
            match &sf.inverse {
                Some(inv) => c.expression(inv.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")),
                None => c.note("inverse by Newton iteration"),
            }
        }
        Err(e) => Check::failed("solved-form", e),
    });
    out.push(match injectivity_spot_check(sys, m.samples, seed, &m.table) {
        Ok(None) => Check::new("injectivity", Status::Pass),
        Ok(Some((a, b))) => Check::new("injectivity", Status::Fail).note(format!("{a:?} and {b:?} have the same image")),
        Err(e) => Check::failed("injectivity", e),
    });
    for g in &m.groups {
        let Some(expect) = &g.expect else { continue };
        let name = format!("verify:{}", g.name);
        let q = FactorMatrix::symbolic(sys, expect.clone(), g.action.eta_range);
        out.push(match verify_factorization(sys, &g.action, &q, &verify_options(m, g, seed), &m.table) {
            Ok(r) => Check::new(name, Status::from_bool(r.pass)).residual(r.max_residual.max(r.functional_residual)),
            Err(e) => Check::failed(name, e),
        });
    }
    let k_box = m.groups.first().map_or_else(|| vec![(-1.0, 1.0); m.spec.p()], |g| g.action.domain.clone());
    out.push(match check_growth_a3(sys, &k_box, 10.0, 2000, seed, &m.table) {
        Ok(g) => Check::new("growth-a3", Status::from_bool(g.violation.is_none())).note(format!("c = {:.3e}, r = {}", g.c, g.r)),
        Err(e) => Check::failed("growth-a3", e),
    });
    Ok(())
}

fn determining(m: &Model, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    if m.generators.is_empty() {
        return Ok(());
    }
    let sys = system(m)?;
    if sys.class == Classification::General {
        return Err(CliError::Unsupported(
            "determining equations need a linear, semilinear or quasilinear system".into(),
        ));
    }
    for w in &m.generators {
        let domain = w.of.map_or_else(|| vec![(-1.0, 1.0); m.spec.p()], |g| m.groups[g].action.domain.clone());
        let jets = sample_jets(&m.spec, &domain, 2.0, 100, seed);
        let name = format!("determining:{}", w.name);
        out.push(match determining_equations(sys, &w.field, &m.table) {
            Ok(conds) => {
                let es: Vec<&Expr> = conds.iter().map(|c| &c.expr).collect();
                let worst = max_on_jets(&es, &m.spec, &jets, &m.table)?;
                let note = match conds.len() {
                    0 => "every coefficient vanishes identically".to_string(),
                    n => format!("{n} coefficients sampled at 100 jets"),
                };
                Check::bound(name, worst, 1e-10).note(note)
            }
            Err(e) => Check::failed(name, e),
        });
        let name = format!("infinitesimal-factor:{}", w.name);
        out.push(match infinitesimal_factor(sys, &w.field, &m.table) {
            Ok(f) => Check::new(name, Status::Pass).expression(f.qtilde.render()),
            Err(e) => Check::failed(name, e),
        });
        if sys.quasi_matrix.is_some() && m.spec.p() == 2 {
            let name = format!("quasilinear-structure:{}", w.name);
            out.push(match quasilinear_conditions(sys, &w.field, &m.table) {
                Ok((first, second)) => {
                    let es: Vec<&Expr> = first.iter().chain(second.iter().flatten()).collect();
                    Check::bound(name, max_on_jets(&es, &m.spec, &jets, &m.table)?, 1e-10)
                }
                Err(e) => Check::failed(name, e),
            });
        }
    }
    Ok(())
}

/// Pass/fail of a family of residual curves against the declared claim.
pub fn association_check(name: String, curves: &[ResidualCurve], e: &Expectation) -> Check {
    if let Some(c) = curves.iter().find(|c| matches!(c.verdict, Verdict::Inconclusive(_))) {
        let note = match &c.verdict {
            Verdict::Inconclusive(why) => why.clone(),
            _ => unreachable!(),
        };
        return Check::new(name, Status::Inconclusive).curve(c).note(format!("inconclusive: {note}"));
    }
    let zero = |c: &ResidualCurve| c.verdict == Verdict::ConvergesToZero;
    match e.claim {
        Claim::Associated => {
            let slope_ok = |c: &ResidualCurve| match (e.slope, c.slope) {
                (Some(b), Some(s)) => s >= b,
                _ => true,
            };
            let bad = curves.iter().find(|c| !zero(c) || !slope_ok(c));
            let shown = bad.or(curves.first());
            let check = Check::new(name, Status::from_bool(bad.is_none()));
            match shown {
                Some(c) => check.curve(c),
                None => check,
            }
        }
        Claim::NotAssociated => {
            let slope_ok = |c: &ResidualCurve| match (e.slope, c.slope) {
                (Some(b), Some(s)) => s <= b,
                (Some(_), None) => false,
                _ => true,
            };
            let good = curves.iter().find(|c| !zero(c) && slope_ok(c));
            let shown = good.or(curves.first());
            let check = Check::new(name, Status::from_bool(good.is_some()));
            match shown {
                Some(c) => check.curve(c),
                None => check,
            }
        }
    }
}

fn associate(m: &Model, out: &mut Vec<Check>) -> Result<(), CliError> {
    for n in &m.nets {
        let Some(sys) = &n.system else { continue };
        for phi in &n.tests {
            let name = format!("weak:{}:{}", n.name, phi.label);
            out.push(match weak_residual_curve(sys, &n.net, phi, &m.grid, &m.table) {
                Ok(curves) => association_check(name, &curves, &n.expect),
                Err(e) => Check::failed(name, e),
            });
        }
        if let Some(family) = &n.probes {
            let name = format!("strong:{}", n.name);
            out.push(match strong_association_check(sys, &n.net, family, &m.grid, &m.table) {
                Ok(curves) => association_check(name, &curves, &n.expect),
                Err(e) => Check::failed(name, e),
            });
        }
    }
    Ok(())
}
