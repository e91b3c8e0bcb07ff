//! Test reports: every comparison carries its error bar, tolerance and verdict.

use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;

use crate::stats::Estimate;

pub const HEADER: &str = "\
Two-sided gates default to 4 standard errors: a suite of about 100 comparisons then has\n\
under 1% family-wise false-failure probability in the normal approximation. SOFT rows\n\
report trends and are never pass/fail.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gate {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// `|value - target| ≤ tolerance`
    Within,
    /// `value ≥ target - tolerance`
    AtLeast,
    /// `value ≤ target + tolerance`
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
    pub target: f64,
    pub tolerance: f64,
    pub rule: Rule,
    pub gate: Gate,
}

impl Comparison {
    pub fn within(statistic: impl Into<String>, est: Estimate, target: f64, sigmas: f64) -> Self {
        Self::new(statistic, est, target, sigmas * est.stderr, Rule::Within)
    }

    pub fn at_least(statistic: impl Into<String>, est: Estimate, target: f64, sigmas: f64) -> Self {
        Self::new(statistic, est, target, sigmas * est.stderr, Rule::AtLeast)
    }

    pub fn at_most(statistic: impl Into<String>, est: Estimate, target: f64, sigmas: f64) -> Self {
        Self::new(statistic, est, target, sigmas * est.stderr, Rule::AtMost)
    }

    /// Deterministic check with an absolute tolerance.
    pub fn exact(statistic: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(statistic, Estimate { value, stderr: 0.0 }, target, tolerance, Rule::Within)
    }

    pub fn new(statistic: impl Into<String>, est: Estimate, target: f64, tolerance: f64, rule: Rule) -> Self {
        Comparison {
            statistic: statistic.into(),
            value: est.value,
            stderr: est.stderr,
            target,
            tolerance,
            rule,
            gate: Gate::Hard,
        }
    }

    pub fn soft(mut self) -> Self {
        self.gate = Gate::Soft;
        self
    }

    pub fn holds(&self) -> bool {
        match self.rule {
            Rule::Within => (self.value - self.target).abs() <= self.tolerance,
            Rule::AtLeast => self.value >= self.target - self.tolerance,
            Rule::AtMost => self.value <= self.target + self.tolerance,
        }
    }

    pub fn verdict(&self) -> &'static str {
        match (self.gate, self.holds()) {
            (Gate::Hard, true) => "PASS",
            (Gate::Hard, false) => "FAIL",
            (Gate::Soft, true) => "SOFT-PASS",
            (Gate::Soft, false) => "SOFT-FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub samples: usize,
    pub seed: u64,
    pub runtime: Duration,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    test: &'a str,
    statistic: &'a str,
    value: f64,
    stderr: f64,
    target: f64,
    tolerance: f64,
    pass: &'a str,
}

impl TestReport {
    pub fn new(name: impl Into<String>, samples: usize, seed: u64) -> Self {
        TestReport {
            name: name.into(),
            samples,
            seed,
            runtime: Duration::ZERO,
            comparisons: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Comparison) {
        self.comparisons.push(c);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.comparisons.iter().filter(|c| c.gate == Gate::Hard).all(Comparison::holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| c.gate == Gate::Hard && !c.holds())
    }

    pub fn hard_count(&self) -> usize {
        self.comparisons.iter().filter(|c| c.gate == Gate::Hard).count()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} [{}] samples={} seed={} runtime={:.2}s hard={}/{}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.samples,
            self.seed,
            self.runtime.as_secs_f64(),
            self.hard_count() - self.failures().count(),
            self.hard_count(),
        );
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "  {:<10} {:<32} value={:<14.6e} se={:<11.3e} target={:<12.6e} tol={:.3e}",
                c.verdict(),
                c.statistic,
                c.value,
                c.stderr,
                c.target,
                c.tolerance
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        s
    }
}

pub fn write_csv<W: std::io::Write>(reports: &[TestReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for c in &r.comparisons {
            w.serialize(CsvRow {
                test: &r.name,
                statistic: &c.statistic,
                value: c.value,
                stderr: c.stderr,
                target: c.target,
                tolerance: c.tolerance,
                pass: c.verdict(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn text_summary(reports: &[TestReport]) -> String {
    let mut s = String::from(HEADER);
    s.push_str("\n\n");
    for r in reports {
        s.push_str(&r.summary());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_follow_the_numbers() {
        let est = Estimate { value: 1.0, stderr: 0.1 };
        assert!(Comparison::within("a", est, 1.35, 4.0).holds());
        assert!(!Comparison::within("a", est, 1.45, 4.0).holds());
        assert!(Comparison::at_least("b", est, 1.2, 4.0).holds());
        assert!(!Comparison::at_most("c", est, 0.5, 4.0).holds());
        let mut r = TestReport::new("t", 10, 1);
        r.push(Comparison::exact("x", 0.0, 1.0, 0.0).soft());
        assert!(r.passed());
        assert_eq!(r.comparisons[0].verdict(), "SOFT-FAIL");
        r.push(Comparison::exact("y", 0.0, 1.0, 0.5));
        assert!(!r.passed());
    }

    #[test]
    fn csv_header_and_rows() {
        let mut r = TestReport::new("t", 10, 1);
        r.push(Comparison::exact("x", 1.0, 1.0, 0.0));
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "test,statistic,value,stderr,target,tolerance,pass\nt,x,1.0,0.0,1.0,0.0,PASS\n");
    }
}
