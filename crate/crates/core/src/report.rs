//! Outcome records shared by every check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{State, TimeGrid};
use crate::time::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn combine(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

/// A named number, optionally bracketed, with the tolerance it is judged at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tolerance: f64,
}

/// What triggered a failure (or, for passes, the extremal case).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub description: String,
    pub grid: Option<TimeGrid>,
    pub other_grid: Option<TimeGrid>,
    pub time: Option<Time>,
    pub tuple: Option<Vec<State>>,
    pub gap: Option<f64>,
}

impl Witness {
    pub fn new(description: impl Into<String>) -> Self {
        Witness { description: description.into(), ..Default::default() }
    }

    pub fn grid(mut self, grid: &TimeGrid) -> Self {
        self.grid = Some(grid.clone());
        self
    }

    pub fn other_grid(mut self, grid: &TimeGrid) -> Self {
        self.other_grid = Some(grid.clone());
        self
    }

    pub fn time(mut self, t: Time) -> Self {
        self.time = Some(t);
        self
    }

    pub fn tuple(mut self, states: &[State]) -> Self {
        self.tuple = Some(states.to_vec());
        self
    }

    pub fn gap(mut self, gap: f64) -> Self {
        self.gap = Some(gap);
        self
    }
}

/// A table of numbers, written out as CSV by the command line front-end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Trace { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub verdict: Verdict,
    pub estimates: Vec<Estimate>,
    pub witnesses: Vec<Witness>,
    pub tolerances: BTreeMap<String, f64>,
    pub traces: Vec<Trace>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>) -> Self {
        CheckReport {
            check: check.into(),
            verdict: Verdict::Pass,
            estimates: Vec::new(),
            witnesses: Vec::new(),
            tolerances: BTreeMap::new(),
            traces: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn tolerance(&mut self, name: &str, value: f64) -> &mut Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn estimate(&mut self, name: &str, value: f64, tolerance: f64) -> &mut Self {
        self.estimates.push(Estimate { name: name.to_string(), value, lo: None, hi: None, tolerance });
        self
    }

    pub fn interval(&mut self, name: &str, lo: f64, hi: f64, tolerance: f64) -> &mut Self {
        self.estimates.push(Estimate {
            name: name.to_string(),
            value: 0.5 * (lo + hi),
            lo: Some(lo),
            hi: Some(hi),
            tolerance,
        });
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn trace(&mut self, trace: Trace) -> &mut Self {
        self.traces.push(trace);
        self
    }

    pub fn witness(&mut self, witness: Witness) -> &mut Self {
        self.witnesses.push(witness);
        self
    }

    /// Marks the report failed; a failure always names its witness.
    pub fn fail(&mut self, witness: Witness) -> &mut Self {
        self.verdict = Verdict::Fail;
        self.witnesses.push(witness);
        self
    }

    pub fn inconclusive(&mut self, reason: impl Into<String>) -> &mut Self {
        self.verdict = self.verdict.combine(Verdict::Inconclusive);
        self.notes.push(reason.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|e| e.value)
    }

    pub fn trace_named(&self, name: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.name == name)
    }
}

pub fn overall(reports: &[CheckReport]) -> Verdict {
    reports.iter().fold(Verdict::Pass, |v, r| v.combine(r.verdict))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_combine_by_severity() {
        assert_eq!(Verdict::Pass.combine(Verdict::Inconclusive), Verdict::Inconclusive);
        assert_eq!(Verdict::Fail.combine(Verdict::Inconclusive), Verdict::Fail);
        assert_eq!(Verdict::Inconclusive.exit_code(), 2);
    }

    #[test]
    fn failing_records_a_witness() {
        let mut r = CheckReport::new("demo");
        r.fail(Witness::new("broken").gap(0.5));
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.witnesses.len(), 1);
        r.inconclusive("late");
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn serialization_keeps_every_key() {
        let mut r = CheckReport::new("demo");
        r.witness(Witness::new("none"));
        let json = serde_json::to_value(&r).unwrap();
        for key in ["check", "verdict", "estimates", "witnesses", "tolerances", "traces", "notes"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json["witnesses"][0].get("gap").is_some());
    }
}
