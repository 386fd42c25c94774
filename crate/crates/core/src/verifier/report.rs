use serde::Serialize;
use serde_json::Value;

use super::ehrenfest::STENCIL;
use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckOutcome {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            tolerance: 1.0,
            detail: detail.into(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl Verdict {
    pub fn new(checks: Vec<CheckOutcome>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One line per check, for terminal output.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                let mut line = format!("{mark} {:<28} {:.3e} (tol {:.1e})", c.name, c.value, c.tolerance);
                if !c.detail.is_empty() {
                    line.push_str("  ");
                    line.push_str(&c.detail);
                }
                line
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub stencil: &'static str,
    pub default_tolerances: Tolerances,
    pub manifest_hash: Option<String>,
}

impl Provenance {
    pub fn new(manifest_hash: Option<String>) -> Self {
        Self {
            tool: "qlab",
            version: env!("CARGO_PKG_VERSION"),
            stencil: STENCIL,
            default_tolerances: Tolerances::default(),
            manifest_hash,
        }
    }
}

/// Top-level JSON document shared by every report type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub report_type: String,
    pub inputs: Value,
    pub tolerances: Tolerances,
    pub per_axis: Value,
    pub verdict: Verdict,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(
        report_type: &str,
        inputs: Value,
        tolerances: Tolerances,
        per_axis: Value,
        verdict: Verdict,
        provenance: Provenance,
    ) -> Self {
        Self {
            report_type: report_type.to_string(),
            inputs,
            tolerances,
            per_axis,
            verdict,
            provenance,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidSeries(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Serialize any report section to a JSON value.
pub fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidSeries(format!("report serialization: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn schema_keys() {
        let v = Verdict::new(vec![
            CheckOutcome::at_most("residual", 1e-7, 1e-6),
            CheckOutcome::at_most("identity", 1e-5, 1e-6),
        ]);
        assert!(!v.passed);
        assert_eq!(v.failures().count(), 1);
        let r = Report::new(
            "residuals",
            json!({"dt": 1e-3}),
            Tolerances::default(),
            json!([]),
            v,
            Provenance::new(Some("abc".into())),
        );
        let parsed: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for k in ["report_type", "inputs", "tolerances", "per_axis", "verdict", "provenance"] {
            assert!(parsed.get(k).is_some(), "{k}");
        }
        assert_eq!(r.to_json().unwrap(), r.to_json().unwrap());
    }
}
