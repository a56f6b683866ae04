//! Check results and suite reports.

use serde::{Deserialize, Serialize};

/// One named residual compared against a tolerance.
///
/// Most checks pass when the residual is at most the tolerance. Checks built
/// with [`Check::at_least`] pass when the recorded value is at least the bound
/// (pseudoconvexity margins, positive-definiteness, negative controls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> Check {
        Check { name: name.into(), max_residual: residual, tolerance, pass: residual <= tolerance }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check { name: name.into(), max_residual: value, tolerance: bound, pass: value >= bound }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, why: &str) -> Check {
        Check { name: format!("{} ({why})", name.into()), max_residual: f64::NAN, tolerance: 0.0, pass: false }
    }
}

/// Running maximum that treats NaN as worse than anything.
#[derive(Debug, Clone, Copy)]
pub struct Max(pub f64);

impl Default for Max {
    fn default() -> Self {
        Max(0.0)
    }
}

impl Max {
    pub fn push(&mut self, v: f64) {
        if !self.0.is_nan() && (v.is_nan() || v > self.0) {
            self.0 = v;
        }
    }
}

/// Running minimum, NaN-poisoning like [`Max`].
#[derive(Debug, Clone, Copy)]
pub struct Min(pub f64);

impl Default for Min {
    fn default() -> Self {
        Min(f64::INFINITY)
    }
}

impl Min {
    pub fn push(&mut self, v: f64) {
        if !self.0.is_nan() && (v.is_nan() || v < self.0) {
            self.0 = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_poisons_running_max() {
        let mut m = Max::default();
        m.push(1.0);
        m.push(f64::NAN);
        m.push(2.0);
        assert!(m.0.is_nan());
        assert!(!Check::at_most("x", m.0, 1.0).pass);
    }

    #[test]
    fn bounds() {
        assert!(Check::at_most("a", 1e-10, 1e-9).pass);
        assert!(!Check::at_least("b", 1e-4, 1e-3).pass);
    }
}
