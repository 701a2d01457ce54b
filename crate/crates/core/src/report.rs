//! Pass/fail summaries.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Direction of a threshold comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl CriterionResult {
    /// `measured <= threshold`; NaN fails.
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        CriterionResult { name: name.into(), measured, threshold, bound: Bound::AtMost, pass: measured <= threshold }
    }

    /// `measured >= threshold`; NaN fails.
    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        CriterionResult { name: name.into(), measured, threshold, bound: Bound::AtLeast, pass: measured >= threshold }
    }

    /// A yes/no check reported as 1/0 against 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn threshold_text(&self) -> String {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        format!("{op} {:e}", self.threshold)
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.6e}, threshold {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold_text()
        )
    }
}

pub fn overall_pass(results: &[CriterionResult]) -> bool {
    results.iter().all(|r| r.pass)
}

/// Write `criterion,measured,threshold,result` rows plus an `OVERALL` row;
/// an empty result set gives a header-only file. Returns the overall flag.
pub fn emit_report(results: &[CriterionResult], path: &Path) -> Result<bool> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["criterion", "measured", "threshold", "result"])?;
    for r in results {
        w.write_record([
            r.name.clone(),
            format!("{:.10e}", r.measured),
            r.threshold_text(),
            if r.pass { "PASS" } else { "FAIL" }.to_string(),
        ])?;
    }
    let pass = overall_pass(results);
    if !results.is_empty() {
        w.write_record(["OVERALL", "", "", if pass { "PASS" } else { "FAIL" }])?;
    }
    w.flush()?;
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        assert!(emit_report(&[], &p).unwrap());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "criterion,measured,threshold,result\n");
    }

    #[test]
    fn one_failure_fails_overall() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rs = [CriterionResult::at_most("a", 0.1, 1.0), CriterionResult::at_least("b", 0.1, 1.0)];
        assert!(!emit_report(&rs, &p).unwrap());
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.ends_with("OVERALL,,,FAIL\n"), "{text}");
        assert!(emit_report(&rs[..1], &p).unwrap());
        assert!(!CriterionResult::at_most("nan", f64::NAN, 1.0).pass);
    }
}
