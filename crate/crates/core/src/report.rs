//! Pass/fail bookkeeping shared by all verification suites.

use serde::{Deserialize, Serialize};

/// Outcome of one named check, aggregated over every inequality it evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Smallest `bound - value` seen; `None` when nothing numeric was compared.
    pub worst_slack: Option<f64>,
    pub evaluated: usize,
    pub failures: usize,
    /// Description of the first failure, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Ordered list of checks, kept in execution order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: CheckReport) {
        self.checks.extend(other.checks);
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// First failing check in execution order.
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    /// Checks sorted by name.
    pub fn canonical(&self) -> Vec<Check> {
        let mut v = self.checks.clone();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v
    }
}

/// Accumulates the inequalities belonging to one check.
#[derive(Debug)]
pub struct Tally {
    name: String,
    rel_tol: f64,
    evaluated: usize,
    failures: usize,
    worst_slack: Option<f64>,
    detail: Option<String>,
}

impl Tally {
    pub fn new(name: impl Into<String>, rel_tol: f64) -> Self {
        Self {
            name: name.into(),
            rel_tol,
            evaluated: 0,
            failures: 0,
            worst_slack: None,
            detail: None,
        }
    }

    /// Records `value <= bound`, allowing `rel_tol * max(|value|, |bound|)`.
    pub fn le(&mut self, value: f64, bound: f64, context: impl FnOnce() -> String) -> bool {
        self.evaluated += 1;
        let slack = bound - value;
        self.worst_slack = Some(match self.worst_slack {
            Some(w) => w.min(slack),
            None => slack,
        });
        let allowance = self.rel_tol * value.abs().max(bound.abs());
        let ok = value <= bound || value - bound <= allowance;
        if !ok {
            self.fail(|| format!("{}: {value} > {bound}", context()));
        }
        ok
    }

    /// Records `value >= bound`.
    pub fn ge(&mut self, value: f64, bound: f64, context: impl FnOnce() -> String) -> bool {
        self.le(bound, value, || {
            let c = context();
            format!("{c} (reversed)")
        })
    }

    /// Records a non-numeric condition.
    pub fn holds(&mut self, ok: bool, context: impl Into<String>) -> bool {
        self.evaluated += 1;
        if !ok {
            let c = context.into();
            self.fail(|| c);
        }
        ok
    }

    fn fail(&mut self, detail: impl FnOnce() -> String) {
        self.failures += 1;
        if self.detail.is_none() {
            self.detail = Some(detail());
        }
    }

    pub fn finish(self) -> Check {
        Check {
            name: self.name,
            pass: self.failures == 0,
            worst_slack: self.worst_slack,
            evaluated: self.evaluated,
            failures: self.failures,
            detail: self.detail,
        }
    }
}
