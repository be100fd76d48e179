//! Identity-check records and the JSON report they are collected into.

use serde::{Serialize, Serializer};

use crate::error::Error;

/// Accepts `|lhs - rhs| <= abs + rel * |lhs|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn absolute(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    /// `eps * (1 + |lhs|)`.
    pub const fn mixed(eps: f64) -> Self {
        Self { abs: eps, rel: eps }
    }

    pub fn bound(&self, lhs: f64) -> f64 {
        self.abs + self.rel * lhs.abs()
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::mixed(1e-6)
    }
}

/// Rounds to 12 significant digits so reports are stable across runs.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn ser_round<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(round12(*x))
    } else {
        s.serialize_none()
    }
}

fn ser_round_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_round(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "ser_round")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_round")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_round")]
    pub abs_diff: f64,
    #[serde(serialize_with = "ser_round")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Check {
    pub fn compare(name: impl Into<String>, lhs: f64, rhs: f64, tol: Tolerance) -> Self {
        let abs_diff = (lhs - rhs).abs();
        let tolerance = tol.bound(lhs);
        Self {
            name: name.into(),
            lhs,
            rhs,
            abs_diff,
            tolerance,
            pass: abs_diff <= tolerance,
            error: None,
        }
    }

    /// Passes when `value >= bound`; the tolerance is zero.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            lhs: value,
            rhs: bound,
            abs_diff: (bound - value).max(0.0),
            tolerance: 0.0,
            pass: value >= bound,
            error: None,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, err: &Error, tol: Tolerance) -> Self {
        Self {
            name: name.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            abs_diff: f64::NAN,
            tolerance: tol.abs,
            pass: false,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn new(checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { checks, pass }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let mut out = format!(
            "{:<width$}  {:>20}  {:>20}  {:>12}  {:>12}  result\n",
            "name", "lhs", "rhs", "abs_diff", "tolerance"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<width$}  {:>20.12e}  {:>20.12e}  {:>12.3e}  {:>12.3e}  {}\n",
                c.name,
                c.lhs,
                c.rhs,
                c.abs_diff,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            ));
            if let Some(e) = &c.error {
                out.push_str(&format!("    {e}\n"));
            }
        }
        out.push_str(if self.pass { "all checks passed\n" } else { "some checks failed\n" });
        out
    }
}

/// Serializes an optional float rounded like the report fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rounded(#[serde(serialize_with = "ser_round_opt")] pub Option<f64>);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_twelve_digits() {
        assert_eq!(round12(2.0 / 3.0), 0.666666666667);
        assert_eq!(round12(0.0), 0.0);
        assert_eq!(round12(-1.23456789012345e-7), -1.23456789012e-7);
    }

    #[test]
    fn compare_uses_mixed_bound() {
        let c = Check::compare("x", 2.0, 2.0 + 2e-6, Tolerance::mixed(1e-6));
        assert!(c.pass);
        let c = Check::compare("x", 2.0, 2.0 + 4e-6, Tolerance::mixed(1e-6));
        assert!(!c.pass);
        let json = serde_json::to_string(&Report::new(vec![c])).unwrap();
        assert!(json.contains("\"pass\":false"));
    }

    #[test]
    fn failed_checks_serialize_nulls() {
        let c = Check::failed("y", &Error::Invalid("boom".into()), Tolerance::default());
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"lhs\":null") && json.contains("boom"));
    }
}
