//! Run manifest: config echo, computed residuals and fitted constants, plus
//! the named pass/fail checks that drive the exit code. No timestamps, so a
//! fixed seed and single-threaded run produce a byte-identical file.

use crate::config::RunConfig;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub op: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub results: Map<String, Value>,
    pub checks: Vec<CheckResult>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            results: Map::new(),
            checks: Vec::new(),
        }
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable result"),
        );
    }

    pub fn check_le(&mut self, name: &str, value: f64, threshold: f64) -> bool {
        let pass = value <= threshold;
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass,
            value,
            threshold,
            op: "<=".into(),
        });
        pass
    }

    pub fn check_ge(&mut self, name: &str, value: f64, threshold: f64) -> bool {
        let pass = value >= threshold;
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass,
            value,
            threshold,
            op: ">=".into(),
        });
        pass
    }

    pub fn check_bool(&mut self, name: &str, pass: bool) -> bool {
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass,
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            op: "==".into(),
        });
        pass
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
