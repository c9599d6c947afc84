//! Batch helpers and a small pass/fail reporter for the acceptance checks.

use std::fmt::Write as _;
use std::thread;

use incentiveledger::{sweep, Period, Scenario, SimConfig, SimResult};

/// One acceptance line.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        format!(
            "[{tag}] criterion {}: {} ({})",
            self.id, self.title, self.detail
        )
    }
}

/// Collects named sub-checks for one criterion.
#[derive(Debug, Default)]
pub struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn finish(self, id: &str, title: &str) -> Outcome {
        let mut detail = String::new();
        if !self.failures.is_empty() {
            let _ = write!(detail, "failed: {}", self.failures.join("; "));
            if !self.notes.is_empty() {
                detail.push_str(" | ");
            }
        }
        detail.push_str(&self.notes.join("; "));
        Outcome {
            id: id.to_string(),
            title: title.to_string(),
            pass: self.failures.is_empty(),
            detail,
        }
    }
}

/// Median where `None` (never) sorts above every period and counts as
/// infinite. Even-sized samples average the two middle values.
pub fn median_period(values: &[Option<Period>]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values
        .iter()
        .map(|p| p.map_or(f64::INFINITY, f64::from))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            f64::INFINITY
        } else {
            (a + b) / 2.0
        }
    }
}

/// `period` with `None` shown as "never".
pub fn show(p: Option<Period>) -> String {
    p.map_or_else(|| "never".to_string(), |p| p.to_string())
}

pub fn jobs() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Default configuration for `scenario` on each seed, run in parallel.
pub fn batch(scenario: Scenario, seeds: &[u64], tweak: impl Fn(&mut SimConfig)) -> Vec<SimResult> {
    let cfgs: Vec<SimConfig> = seeds
        .iter()
        .map(|s| {
            let mut c = SimConfig::new(scenario).with_seed(*s);
            tweak(&mut c);
            c
        })
        .collect();
    sweep(&cfgs, jobs())
        .into_iter()
        .map(|r| r.expect("default configuration runs"))
        .collect()
}
