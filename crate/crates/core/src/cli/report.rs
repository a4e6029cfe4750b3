//! Check records and their JSON / text rendering.

use crate::colombeau::ResidualCurve;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Free-form note for the text table.
    #[serde(skip)]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, status: Status) -> Self {
        Check {
            name: name.into(),
            status,
            slope: None,
            residuals: None,
            epsilons: None,
            limit_estimate: None,
            max_residual: None,
            expression: None,
            note: None,
        }
    }

    /// Pass iff `value <= tol`.
    pub fn bound(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check::new(name, Status::from_bool(value <= tol)).residual(value)
    }

    pub fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Check::new(name, Status::Fail).note(err.to_string())
    }

    pub fn residual(mut self, v: f64) -> Self {
        self.max_residual = Some(v);
        self
    }

    pub fn expression(mut self, e: impl Into<String>) -> Self {
        self.expression = Some(e.into());
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }

    pub fn curve(mut self, c: &ResidualCurve) -> Self {
        self.slope = c.slope;
        self.residuals = Some(c.residuals.clone());
        self.epsilons = Some(c.epsilons.clone());
        self.limit_estimate = c.limit_estimate;
        self.note = Some(c.verdict.label().to_string());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: String,
    pub input_digest: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(input: &str, seed: u64, checks: Vec<Check>) -> Self {
        Report {
            version: format!("weaksym {} (report schema 1)", env!("CARGO_PKG_VERSION")),
            input_digest: digest(input),
            seed,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}  seed {}  input {}", self.version, self.seed, &self.input_digest[..16]);
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Inconclusive => "INCONCLUSIVE",
            };
            let mut evidence = Vec::new();
            if let Some(v) = c.slope {
                evidence.push(format!("slope {v:.3}"));
            }
            if let Some(v) = c.limit_estimate {
                evidence.push(format!("limit {v:.4e}"));
            }
            if let Some(v) = c.max_residual {
                evidence.push(format!("residual {v:.2e}"));
            }
            if let Some(n) = &c.note {
                evidence.push(n.clone());
            }
            if let Some(e) = &c.expression {
                evidence.push(format!("= {e}"));
            }
            let _ = writeln!(s, "{status:<12} {:<width$}  {}", c.name, evidence.join("  "));
        }
        let (pass, total) = (self.checks.iter().filter(|c| c.status == Status::Pass).count(), self.checks.len());
        let _ = writeln!(s, "{pass}/{total} checks passed");
        s
    }
}

pub fn digest(input: &str) -> String {
    Sha256::digest(input.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let r = Report::new("", 42, vec![]);
        assert!(r.passed());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["checks"].as_array().unwrap().len(), 0);
        assert_eq!(r.input_digest, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn key_order_and_text_lines() {
        let r = Report::new("x", 1, vec![Check::bound("a", 1e-12, 1e-8), Check::bound("b", 1.0, 1e-8)]);
        let j = r.to_json();
        let pos = |k: &str| j.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("version") < pos("input_digest") && pos("input_digest") < pos("seed") && pos("seed") < pos("checks"));
        assert!(!j.contains("note"));
        let t = r.to_text();
        assert!(t.lines().any(|l| l.starts_with("PASS") && l.contains(" a ")));
        assert!(t.lines().any(|l| l.starts_with("FAIL") && l.contains(" b ")));
        assert!(!r.passed());
    }
}
