use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

/// One decided property. A failing check always carries a witness and a
/// numeric one always carries its tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

impl Check {
    /// Passes when `value < tolerance`.
    pub fn below(name: &str, value: f64, tolerance: f64, witness: impl FnOnce() -> Value) -> Self {
        Self::numeric(name, value, tolerance, value < tolerance, witness)
    }

    /// Passes when `value >= -tolerance`.
    pub fn nonnegative(name: &str, value: f64, tolerance: f64, witness: impl FnOnce() -> Value) -> Self {
        Self::numeric(name, value, tolerance, value >= -tolerance, witness)
    }

    pub fn numeric(name: &str, value: f64, tolerance: f64, ok: bool, witness: impl FnOnce() -> Value) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::from_bool(ok),
            value: Some(value),
            tolerance: Some(tolerance),
            witness: (!ok).then(witness),
        }
    }

    /// A structural yes/no property.
    pub fn flag(name: &str, ok: bool, witness: impl FnOnce() -> Value) -> Self {
        Self { name: name.into(), verdict: Verdict::from_bool(ok), value: None, tolerance: None, witness: (!ok).then(witness) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs_digest: String,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub data: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_time_ms: f64,
}

impl Report {
    pub fn new(command: &str, inputs_digest: String, checks: Vec<Check>, data: Value, seed: Option<u64>) -> Self {
        let verdict = Verdict::from_bool(checks.iter().all(|c| c.verdict == Verdict::Pass));
        Self { command: command.into(), inputs_digest, verdict, checks, data, seed, wall_time_ms: 0.0 }
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }

    pub fn to_human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}: {}", self.command, self.verdict.as_str());
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = write!(s, "  {:<width$}  {}", c.name, c.verdict.as_str());
            if let Some(v) = c.value {
                let _ = write!(s, "  value {v:.3e}");
            }
            if let Some(t) = c.tolerance {
                let _ = write!(s, "  tol {t:.1e}");
            }
            if let Some(w) = &c.witness {
                let _ = write!(s, "  witness {w}");
            }
            s.push('\n');
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "  seed {seed}");
        }
        let _ = writeln!(s, "  inputs {}", self.inputs_digest);
        let _ = writeln!(s, "  wall time {:.1} ms", self.wall_time_ms);
        s
    }
}
