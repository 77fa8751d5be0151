//! Plain-text run reports.

use std::path::Path;
use std::time::Duration;

use crate::error::Result;

use super::config::ExperimentConfig;
use super::csv::write_text;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub tolerance: String,
    pub passed: bool,
    /// Report-only; never feeds back into any decision.
    pub wall_time: Duration,
}

/// Checks, notes and provenance of one recipe run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub recipe: String,
    pub config_hash: String,
    pub seed: u64,
    pub parallel: bool,
    pub checks: Vec<CheckResult>,
    /// Diagnostics that carry no pass/fail meaning.
    pub notes: Vec<(String, String)>,
    pub defaults: Vec<String>,
    pub artifacts: Vec<String>,
    /// Set when the recipe aborted.
    pub error: Option<String>,
}

impl RunReport {
    pub fn new(recipe: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            recipe: recipe.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.run.seed,
            parallel: cfg.execution().is_parallel(),
            checks: Vec::new(),
            notes: Vec::new(),
            defaults: cfg
                .defaults()
                .map(|s| format!("{} = {}", s.key, s.value))
                .collect(),
            artifacts: Vec::new(),
            error: None,
        }
    }

    /// Records a check. Check names are unique within a report.
    pub fn check(
        &mut self,
        name: &str,
        value: f64,
        tolerance: impl Into<String>,
        passed: bool,
        wall_time: Duration,
    ) {
        assert!(
            self.checks.iter().all(|c| c.name != name),
            "check `{name}` recorded twice"
        );
        self.checks.push(CheckResult {
            name: name.to_string(),
            value,
            tolerance: tolerance.into(),
            passed,
            wall_time,
        });
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn artifact(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when the recipe finished and every check passed.
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// Pass/fail per check, in recording order.
    pub fn verdicts(&self) -> Vec<(String, bool)> {
        self.checks
            .iter()
            .map(|c| (c.name.clone(), c.passed))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("recipe: {}\n", self.recipe));
        s.push_str(&format!(
            "result: {}\n",
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        s.push_str(&format!("config_hash: {}\n", self.config_hash));
        s.push_str(&format!("seed: {}\n", self.seed));
        s.push_str(&format!(
            "execution: {}\n",
            if self.parallel {
                "parallel"
            } else {
                "sequential"
            }
        ));
        if let Some(e) = &self.error {
            s.push_str(&format!("error: {e}\n"));
        }
        s.push_str("checks:\n");
        for c in &self.checks {
            s.push_str(&format!(
                "  {} {}: value = {:e}, require {}, wall = {:.3}s\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance,
                c.wall_time.as_secs_f64()
            ));
        }
        if !self.notes.is_empty() {
            s.push_str("notes:\n");
            for (k, v) in &self.notes {
                s.push_str(&format!("  {k} = {v}\n"));
            }
        }
        if !self.artifacts.is_empty() {
            s.push_str("artifacts:\n");
            for a in &self.artifacts {
                s.push_str(&format!("  {a}\n"));
            }
        }
        if !self.defaults.is_empty() {
            s.push_str("defaults used:\n");
            for d in &self.defaults {
                s.push_str(&format!("  {d}\n"));
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }
}
