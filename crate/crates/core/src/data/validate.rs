//! Empirical checks of the identification assumptions that data can speak
//! to: treatment positivity within studies, config consistency, cell counts.

use super::{ProxyConfig, StudyDataset};
use crate::numeric::{sorted_copy, sorted_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// Structural failures block estimation; heuristic ones only inform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Structural,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub kind: CheckKind,
    pub status: CheckStatus,
    pub offending: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// Smallest (study, arm) cell.
    pub min_cell_count: usize,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn blocks_estimation(&self) -> bool {
        self.checks
            .iter()
            .any(|c| c.kind == CheckKind::Structural && c.status == CheckStatus::Fail)
    }

    pub fn worst(&self) -> CheckStatus {
        self.checks.iter().map(|c| c.status).max().unwrap_or(CheckStatus::Pass)
    }
}

fn result(name: &'static str, kind: CheckKind, bad: CheckStatus, offending: Vec<String>) -> CheckResult {
    let status = if offending.is_empty() { CheckStatus::Pass } else { bad };
    CheckResult {
        name,
        kind,
        status,
        offending,
    }
}

pub fn validate_assumptions(data: &StudyDataset, cfg: &ProxyConfig) -> ValidationReport {
    let mut checks = Vec::new();

    let mut missing_arm = Vec::new();
    let mut min_cell_count = usize::MAX;
    let mut small_cells = Vec::new();
    for s in 0..data.n_studies() {
        for arm in 0..=1u8 {
            let n = data.arm_count(s, arm);
            min_cell_count = min_cell_count.min(n);
            if n == 0 {
                missing_arm.push(format!("study {} has no rows with arm {arm}", data.label(s)));
            } else if n < 2 {
                small_cells.push(format!("study {}, arm {arm}: {n} row", data.label(s)));
            }
        }
    }
    checks.push(result(
        "positivity.study_arm",
        CheckKind::Structural,
        CheckStatus::Fail,
        missing_arm,
    ));
    checks.push(result(
        "positivity.covariate_bins",
        CheckKind::Heuristic,
        CheckStatus::Warn,
        binned_positivity(data),
    ));
    checks.push(result(
        "config.consistency",
        CheckKind::Structural,
        CheckStatus::Fail,
        cfg.problems(data),
    ));
    checks.push(result(
        "cell_counts",
        CheckKind::Heuristic,
        CheckStatus::Warn,
        small_cells,
    ));

    ValidationReport {
        checks,
        min_cell_count: if data.n_rows() == 0 { 0 } else { min_cell_count },
    }
}

/// Both arms within each (study, quartile bin of the first covariate).
fn binned_positivity(data: &StudyDataset) -> Vec<String> {
    if data.n_covariates() == 0 || data.n_rows() == 0 {
        return Vec::new();
    }
    let first: Vec<f64> = (0..data.n_rows()).map(|i| data.covariates(i)[0]).collect();
    let sorted = sorted_copy(&first);
    let cuts = [0.25, 0.5, 0.75].map(|q| sorted_quantile(&sorted, q));
    let bin = |x: f64| cuts.iter().filter(|&&c| x > c).count();

    let mut offending = Vec::new();
    for s in 0..data.n_studies() {
        let mut seen = [[false; 2]; 4];
        for &i in data.study_rows(s) {
            seen[bin(first[i])][data.arm(i) as usize] = true;
        }
        for (b, arms) in seen.iter().enumerate() {
            if arms[0] != arms[1] {
                let only = if arms[1] { 1 } else { 0 };
                offending.push(format!(
                    "study {}, {} quartile bin {}: only arm {only}",
                    data.label(s),
                    data.covariate_names()[0],
                    b + 1
                ));
            }
        }
    }
    offending
}
