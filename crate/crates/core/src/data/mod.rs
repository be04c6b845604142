//! Multi-study data model.
//!
//! A [`StudyDataset`] holds rows from several studies. The primary outcome is
//! either observed for every row of a study or missing for every row of it,
//! and each study observes a fixed subset of the proxy columns. Studies are
//! re-indexed at build time so that outcome-observed studies come first:
//! internal indices `0..s_star` observe `y`, indices `s_star..` do not. The
//! original integer labels are kept for reporting.

mod config;
mod io;
mod validate;

pub use config::{default_weights, ProxyConfig};
pub use io::{load_dataset, read_dataset, Schema};
pub use validate::{validate_assumptions, CheckKind, CheckResult, CheckStatus, ValidationReport};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::regression::Observation;

/// One input row before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub study: i64,
    pub arm: u8,
    pub covariates: Vec<f64>,
    pub proxies: Vec<Option<f64>>,
    pub outcome: Option<f64>,
}

/// Accumulates rows and validates them into a [`StudyDataset`].
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    covariate_names: Vec<String>,
    proxy_names: Vec<String>,
    rows: Vec<RawRow>,
}

impl DatasetBuilder {
    pub fn new(covariate_names: Vec<String>, proxy_names: Vec<String>) -> Self {
        Self {
            covariate_names,
            proxy_names,
            rows: Vec::new(),
        }
    }

    pub fn with_capacity(mut self, rows: usize) -> Self {
        self.rows.reserve(rows);
        self
    }

    pub fn push(&mut self, row: RawRow) -> Result<()> {
        if row.arm > 1 {
            return Err(Error::InvalidArgument(format!(
                "treatment must be 0 or 1, got {}",
                row.arm
            )));
        }
        if row.covariates.len() != self.covariate_names.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covariates, got {}",
                self.covariate_names.len(),
                row.covariates.len()
            )));
        }
        if row.proxies.len() != self.proxy_names.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} proxies, got {}",
                self.proxy_names.len(),
                row.proxies.len()
            )));
        }
        if let Some(j) = row.covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.covariate_names[j].clone()));
        }
        if let Some(j) = row
            .proxies
            .iter()
            .position(|v| v.is_some_and(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite(self.proxy_names[j].clone()));
        }
        if row.outcome.is_some_and(|y| !y.is_finite()) {
            return Err(Error::NonFinite("y".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn build(self) -> Result<StudyDataset> {
        let Self {
            covariate_names,
            proxy_names,
            rows,
        } = self;
        let k = proxy_names.len();

        // label -> (outcome observed, proxy mask)
        let mut studies: BTreeMap<i64, (bool, Vec<bool>)> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            let mask: Vec<bool> = row.proxies.iter().map(Option::is_some).collect();
            let observed = row.outcome.is_some();
            match studies.get(&row.study) {
                None => {
                    studies.insert(row.study, (observed, mask));
                }
                Some((obs, first_mask)) => {
                    if *obs != observed {
                        return Err(Error::Structural(format!(
                            "study {} mixes observed and missing outcomes (row {})",
                            row.study,
                            i + 1
                        )));
                    }
                    if let Some(j) = (0..k).find(|&j| first_mask[j] != mask[j]) {
                        return Err(Error::Structural(format!(
                            "study {} has an inconsistent availability mask for proxy {} (row {})",
                            row.study,
                            proxy_names[j],
                            i + 1
                        )));
                    }
                }
            }
        }

        let mut labels: Vec<i64> = studies
            .iter()
            .filter(|(_, (obs, _))| *obs)
            .map(|(l, _)| *l)
            .collect();
        let s_star = labels.len();
        if s_star == 0 {
            return Err(Error::Structural(
                "no study observes the outcome".into(),
            ));
        }
        labels.extend(studies.iter().filter(|(_, (obs, _))| !*obs).map(|(l, _)| *l));
        let index_of: BTreeMap<i64, usize> =
            labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let proxy_masks: Vec<Vec<bool>> = labels.iter().map(|l| studies[l].1.clone()).collect();

        let n = rows.len();
        let p = covariate_names.len();
        let mut data = StudyDataset {
            labels,
            s_star,
            covariate_names,
            proxy_names,
            proxy_masks,
            study: Vec::with_capacity(n),
            arm: Vec::with_capacity(n),
            covariates: Vec::with_capacity(n * p),
            proxies: Vec::with_capacity(n * k),
            outcome: Vec::with_capacity(n),
            study_rows: Vec::new(),
        };
        for row in rows {
            data.study.push(index_of[&row.study]);
            data.arm.push(row.arm);
            data.covariates.extend_from_slice(&row.covariates);
            data.proxies
                .extend(row.proxies.iter().map(|v| v.unwrap_or(f64::NAN)));
            data.outcome.push(row.outcome);
        }
        data.index_rows();
        Ok(data)
    }
}

/// Immutable multi-study table. See the module docs for the ordering
/// convention.
#[derive(Debug, Clone)]
pub struct StudyDataset {
    labels: Vec<i64>,
    s_star: usize,
    covariate_names: Vec<String>,
    proxy_names: Vec<String>,
    proxy_masks: Vec<Vec<bool>>,
    study: Vec<usize>,
    arm: Vec<u8>,
    covariates: Vec<f64>,
    /// NaN where the study does not observe the proxy.
    proxies: Vec<f64>,
    outcome: Vec<Option<f64>>,
    study_rows: Vec<Vec<usize>>,
}

// Unavailable proxies are NaN on both sides.
impl PartialEq for StudyDataset {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.s_star == other.s_star
            && self.covariate_names == other.covariate_names
            && self.proxy_names == other.proxy_names
            && self.proxy_masks == other.proxy_masks
            && self.study == other.study
            && self.arm == other.arm
            && self.covariates == other.covariates
            && self.outcome == other.outcome
            && self.proxies.len() == other.proxies.len()
            && self
                .proxies
                .iter()
                .zip(&other.proxies)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl StudyDataset {
    fn index_rows(&mut self) {
        let mut study_rows = vec![Vec::new(); self.labels.len()];
        for (i, &s) in self.study.iter().enumerate() {
            study_rows[s].push(i);
        }
        self.study_rows = study_rows;
    }

    pub fn n_rows(&self) -> usize {
        self.study.len()
    }

    pub fn n_studies(&self) -> usize {
        self.labels.len()
    }

    /// Number of outcome-observed studies; they occupy indices `0..s_star`.
    pub fn s_star(&self) -> usize {
        self.s_star
    }

    pub fn outcome_observed(&self, study: usize) -> bool {
        study < self.s_star
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn label(&self, study: usize) -> i64 {
        self.labels[study]
    }

    pub fn study_index(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn proxy_names(&self) -> &[String] {
        &self.proxy_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_proxies(&self) -> usize {
        self.proxy_names.len()
    }

    pub fn proxy_index(&self, name: &str) -> Option<usize> {
        self.proxy_names.iter().position(|n| n == name)
    }

    /// Availability mask `J_s` of the given study.
    pub fn proxy_mask(&self, study: usize) -> &[bool] {
        &self.proxy_masks[study]
    }

    pub fn proxies_available(&self, study: usize, proxies: &[usize]) -> bool {
        proxies.iter().all(|&j| self.proxy_masks[study][j])
    }

    /// Row indices belonging to a study, in input order.
    pub fn study_rows(&self, study: usize) -> &[usize] {
        &self.study_rows[study]
    }

    pub fn study_size(&self, study: usize) -> usize {
        self.study_rows[study].len()
    }

    pub fn study_of(&self, row: usize) -> usize {
        self.study[row]
    }

    pub fn arm(&self, row: usize) -> u8 {
        self.arm[row]
    }

    pub fn outcome(&self, row: usize) -> Option<f64> {
        self.outcome[row]
    }

    pub fn covariates(&self, row: usize) -> &[f64] {
        let p = self.covariate_names.len();
        &self.covariates[row * p..(row + 1) * p]
    }

    pub fn proxies(&self, row: usize) -> &[f64] {
        let k = self.proxy_names.len();
        &self.proxies[row * k..(row + 1) * k]
    }

    pub fn observation(&self, row: usize) -> Observation<'_> {
        Observation {
            covariates: self.covariates(row),
            proxies: self.proxies(row),
        }
    }

    /// Rows of the given study with the given treatment, in input order.
    pub fn rows_with_arm(&self, study: usize, arm: u8) -> impl Iterator<Item = usize> + '_ {
        self.study_rows[study]
            .iter()
            .copied()
            .filter(move |&i| self.arm[i] == arm)
    }

    pub fn arm_count(&self, study: usize, arm: u8) -> usize {
        self.rows_with_arm(study, arm).count()
    }

    /// A dataset made of the given rows (repetition allowed), keeping the
    /// study index, labels and masks of `self`. Every study must keep at
    /// least one row.
    pub fn select_rows(&self, rows: &[usize]) -> Result<StudyDataset> {
        let p = self.covariate_names.len();
        let k = self.proxy_names.len();
        let mut out = StudyDataset {
            labels: self.labels.clone(),
            s_star: self.s_star,
            covariate_names: self.covariate_names.clone(),
            proxy_names: self.proxy_names.clone(),
            proxy_masks: self.proxy_masks.clone(),
            study: Vec::with_capacity(rows.len()),
            arm: Vec::with_capacity(rows.len()),
            covariates: Vec::with_capacity(rows.len() * p),
            proxies: Vec::with_capacity(rows.len() * k),
            outcome: Vec::with_capacity(rows.len()),
            study_rows: Vec::new(),
        };
        for &i in rows {
            out.study.push(self.study[i]);
            out.arm.push(self.arm[i]);
            out.covariates.extend_from_slice(self.covariates(i));
            out.proxies.extend_from_slice(self.proxies(i));
            out.outcome.push(self.outcome[i]);
        }
        out.index_rows();
        if let Some(s) = out.study_rows.iter().position(Vec::is_empty) {
            return Err(Error::Structural(format!(
                "study {} has no rows",
                self.labels[s]
            )));
        }
        Ok(out)
    }

    /// The dataset as input rows, in stored order with original labels.
    pub fn raw_rows(&self) -> Vec<RawRow> {
        (0..self.n_rows())
            .map(|i| RawRow {
                study: self.labels[self.study[i]],
                arm: self.arm[i],
                covariates: self.covariates(i).to_vec(),
                proxies: self
                    .proxies(i)
                    .iter()
                    .zip(&self.proxy_masks[self.study[i]])
                    .map(|(&v, &m)| m.then_some(v))
                    .collect(),
                outcome: self.outcome[i],
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two studies; study 1 observes y, study 2 does not. One covariate and
    /// one proxy observed everywhere.
    pub fn two_study(rows: &[(i64, u8, f64, f64, Option<f64>)]) -> StudyDataset {
        let mut b = DatasetBuilder::new(vec!["w1".into()], vec!["t1".into()]);
        for &(s, a, w, t, y) in rows {
            b.push(RawRow {
                study: s,
                arm: a,
                covariates: vec![w],
                proxies: vec![Some(t)],
                outcome: y,
            })
            .unwrap();
        }
        b.build().unwrap()
    }
}
