//! Structured results of inequality checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    HypothesisNotMet,
}

/// One inequality `lhs ≤ rhs` with its margin `rhs - lhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub status: Status,
    /// Named auxiliary numbers (inputs and intermediate values).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl CheckRecord {
    /// Passes when `lhs ≤ rhs + tolerance`.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        CheckRecord {
            name: name.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            status: if margin >= -tolerance && margin.is_finite() {
                Status::Pass
            } else {
                Status::Fail
            },
            details: BTreeMap::new(),
        }
    }

    /// Records both sides without a verdict.
    pub fn not_applicable(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        CheckRecord {
            status: Status::HypothesisNotMet,
            ..CheckRecord::le(name, lhs, rhs, 0.0)
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub title: String,
    pub checks: Vec<CheckRecord>,
    /// Named scalar outputs.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(title: impl Into<String>) -> Self {
        ExperimentReport {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
    }

    pub fn value(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        let prefix = other.title;
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.checks.push(c);
        }
        for (k, v) in other.values {
            self.values.insert(format!("{prefix}/{k}"), v);
        }
        self.notes.extend(other.notes);
    }

    /// No check failed (hypothesis-not-met records do not count as failures).
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn count(&self, status: Status) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(CheckRecord::le("a", 1.0, 2.0, 0.0).passed());
        assert!(CheckRecord::le("b", 1.0, 1.0 - 1e-12, 1e-10).passed());
        assert_eq!(CheckRecord::le("c", 2.0, 1.0, 1e-10).status, Status::Fail);
        assert_eq!(CheckRecord::le("d", f64::NAN, 1.0, 1.0).status, Status::Fail);
        let mut r = ExperimentReport::new("t");
        r.push(CheckRecord::not_applicable("e", 5.0, 1.0));
        assert!(r.all_passed());
        r.push(CheckRecord::le("f", 2.0, 1.0, 0.0));
        assert!(!r.all_passed());
        let json = serde_json::to_string(&r.checks[0]).unwrap();
        assert!(json.contains("\"hypothesis-not-met\""));
    }
}
