//! Aggregated experiment results serialized as JSON next to the traces.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub nmi_mean: Option<f64>,
    pub nmi_std: Option<f64>,
    pub ari_mean: Option<f64>,
    pub ari_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StructuralChecks {
    pub v_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_counts: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex_violation_max: Option<f64>,
}

/// One pass/fail gate evaluated when the block runs with --check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub block: String,
    pub seeds: usize,
    pub methods: Vec<MethodSummary>,
    pub structural: StructuralChecks,
    pub checks: Vec<CheckResult>,
}

impl ExperimentSummary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn print_checks(&self) {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("[{tag}] {}: {}", c.name, c.detail);
        }
    }
}

pub fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn method_summary(method: &str, accs: &[f64], nmis: &[f64], aris: &[f64]) -> MethodSummary {
    let ms = |vals: &[f64]| -> (Option<f64>, Option<f64>) {
        if vals.is_empty() {
            (None, None)
        } else {
            let (m, s) = crate::common::mean_std(vals);
            (Some(m), Some(s))
        }
    };
    let (acc_mean, acc_std) = ms(accs);
    let (nmi_mean, nmi_std) = ms(nmis);
    let (ari_mean, ari_std) = ms(aris);
    MethodSummary {
        method: method.to_string(),
        acc_mean,
        acc_std,
        nmi_mean,
        nmi_std,
        ari_mean,
        ari_std,
        extra: None,
    }
}
