//! Study-stratified nonparametric bootstrap.
//!
//! Studies are design, not sampled: each replicate redraws `n_s` rows with
//! replacement inside every study (optionally inside every study and arm),
//! refits the whole estimator and records its output. Replicate `b` draws
//! stratum `h` from its own stream keyed by `(seed, b, h)`, so the result is
//! identical for any thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{ProxyConfig, StudyDataset};
use crate::error::{Error, Result};
use crate::numeric::{percentile_interval, sample_sd};
use crate::rng::{stream, Domain};
use crate::transport::{estimate, AteEstimate, ModelSpec, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratification {
    Study,
    StudyArm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: u64,
    pub stratification: Stratification,
    pub level: f64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
            stratification: Stratification::Study,
            level: 0.95,
        }
    }
}

impl BootstrapPlan {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Bootstrap distribution of one scalar target.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub estimate: f64,
    /// Successful replicate values in replicate order.
    pub replicates: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
}

impl BootstrapSummary {
    fn new(estimate: f64, replicates: Vec<f64>, level: f64) -> Self {
        let (lower, upper) = percentile_interval(&replicates, level);
        let std_error = sample_sd(&replicates);
        Self {
            estimate,
            replicates,
            lower,
            upper,
            std_error,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub point: AteEstimate,
    pub overall: BootstrapSummary,
    /// Per study, by internal index.
    pub studies: Vec<BootstrapSummary>,
    /// Indices of replicates whose refit failed; they are excluded above.
    pub failed: Vec<usize>,
    pub seed: u64,
    pub level: f64,
}

/// Strata as lists of row indices, in a fixed order.
fn strata(data: &StudyDataset, how: Stratification) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in 0..data.n_studies() {
        match how {
            Stratification::Study => out.push(data.study_rows(s).to_vec()),
            Stratification::StudyArm => {
                for arm in 0..=1 {
                    out.push(data.rows_with_arm(s, arm).collect());
                }
            }
        }
    }
    out
}

pub fn resample(data: &StudyDataset, plan: &BootstrapPlan, replicate: usize) -> Result<StudyDataset> {
    let strata = strata(data, plan.stratification);
    let mut rows = Vec::with_capacity(data.n_rows());
    for (h, stratum) in strata.iter().enumerate() {
        if stratum.is_empty() {
            return Err(Error::Structural(format!("bootstrap stratum {h} is empty")));
        }
        let mut rng = stream(plan.seed, Domain::Bootstrap, replicate as u64, h as u64);
        rows.extend((0..stratum.len()).map(|_| stratum[rng.random_range(0..stratum.len())]));
    }
    data.select_rows(&rows)
}

/// Bootstraps an arbitrary estimator. `estimator` must be deterministic.
pub fn bootstrap_with<F>(data: &StudyDataset, plan: &BootstrapPlan, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&StudyDataset) -> Result<AteEstimate> + Sync,
{
    plan.validate()?;
    let point = estimator(data)?;
    let outcomes: Vec<Result<AteEstimate>> = (0..plan.replicates)
        .into_par_iter()
        .map(|b| resample(data, plan, b).and_then(|d| estimator(&d)))
        .collect();

    let mut failed = Vec::new();
    let mut overall = Vec::with_capacity(plan.replicates);
    let mut per_study = vec![Vec::with_capacity(plan.replicates); point.studies.len()];
    for (b, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(est) => {
                overall.push(est.overall);
                for (acc, s) in per_study.iter_mut().zip(&est.studies) {
                    acc.push(s.ate);
                }
            }
            Err(_) => failed.push(b),
        }
    }
    if failed.len() * 20 > plan.replicates || overall.len() < 2 {
        return Err(Error::UnstableBootstrap {
            failed: failed.len(),
            total: plan.replicates,
        });
    }
    let studies = per_study
        .into_iter()
        .zip(&point.studies)
        .map(|(reps, s)| BootstrapSummary::new(s.ate, reps, plan.level))
        .collect();
    Ok(BootstrapResult {
        overall: BootstrapSummary::new(point.overall, overall, plan.level),
        studies,
        point,
        failed,
        seed: plan.seed,
        level: plan.level,
    })
}

pub fn bootstrap_estimate(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
    variant: Variant,
    plan: &BootstrapPlan,
) -> Result<BootstrapResult> {
    bootstrap_with(data, plan, |d| estimate(d, cfg, spec, variant))
}
