//! Structured pass/fail results with witnesses.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Outcome of a single numerical check.
///
/// `residual` is the worst residual for form checks and the worst margin
/// for separation checks; failing checks carry concrete witnesses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<Point>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckResult {
    pub fn pass(name: impl Into<String>, residual: f64) -> Self {
        CheckResult {
            name: name.into(),
            pass: true,
            residual,
            witness: Vec::new(),
            witness_indices: Vec::new(),
            note: String::new(),
        }
    }

    pub fn fail(name: impl Into<String>, residual: f64) -> Self {
        CheckResult {
            pass: false,
            ..CheckResult::pass(name, residual)
        }
    }

    pub fn with_witness(mut self, points: Vec<Point>) -> Self {
        self.witness = points;
        self
    }

    pub fn with_indices(mut self, indices: Vec<usize>) -> Self {
        self.witness_indices = indices;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Conjunction of individual checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn new() -> Self {
        VerificationReport {
            checks: Vec::new(),
            overall: true,
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.overall &= check.pass;
        self.checks.push(check);
    }

    pub fn find(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl Default for VerificationReport {
    fn default() -> Self {
        Self::new()
    }
}
