//! Substitution estimators of the transported average treatment effect.
//!
//! For an outcome-observed study `s` the study effect is the mean over its
//! rows of `m1(W) - m0(W)`, where `ma` regresses `Y` on `W` within the
//! study and arm. For an outcome-missing study the estimators differ:
//!
//! * [`Variant::ProxyAware`]: an inner regression of `Y` on `(T_s, W)` is fit
//!   on the donor studies `sigma_s` within arm `a`, evaluated on the study's
//!   own arm-`a` rows, and an outer regression of those predictions on `W` is
//!   fit within the study. The outer fits are then averaged over all rows of
//!   the study.
//! * [`Variant::Pooled`]: as above, but the outer regression pools the
//!   arm-`a` rows of every study that observes `T_s` (valid when the
//!   proxies share one conditional law across studies).
//! * [`Variant::Blind`]: regress `Y` on `W` alone in the donor studies and
//!   average those fits over the study's rows.
//!
//! The overall effect is `sum_s pi_s * ATE(s)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::data::{ProxyConfig, StudyDataset};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::regression::{fit, DesignSpec, FitDiagnostics, FittedRegression, Observation, RegressionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    ProxyAware,
    Pooled,
    Blind,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::ProxyAware, Variant::Pooled, Variant::Blind];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::ProxyAware => "proxy",
            Variant::Pooled => "pooled",
            Variant::Blind => "blind",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy" => Ok(Variant::ProxyAware),
            "pooled" => Ok(Variant::Pooled),
            "blind" => Ok(Variant::Blind),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?} (expected proxy, pooled or blind)"
            ))),
        }
    }
}

/// Working-model choices shared by every regression in a transport fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Covariate columns entering every regression; `None` means all.
    pub covariates: Option<Vec<usize>>,
    pub intercept: bool,
    pub interaction_order: u8,
    pub mode: RegressionMode,
}

impl Default for ModelSpec {
    /// Main-effects least squares with intercept on all covariates.
    fn default() -> Self {
        Self {
            covariates: None,
            intercept: true,
            interaction_order: 1,
            mode: RegressionMode::default(),
        }
    }
}

impl ModelSpec {
    pub fn saturated(max_levels: usize) -> Self {
        Self {
            mode: RegressionMode::Saturated { max_levels },
            ..Self::default()
        }
    }

    fn covariate_columns(&self, data: &StudyDataset) -> Vec<usize> {
        match &self.covariates {
            Some(c) => c.clone(),
            None => (0..data.n_covariates()).collect(),
        }
    }

    fn design(&self, data: &StudyDataset, proxies: &[usize]) -> Result<DesignSpec> {
        DesignSpec::for_dataset(
            data,
            &self.covariate_columns(data),
            proxies,
            self.intercept,
            self.interaction_order,
        )
    }
}

/// The W-only regression whose average over a study's rows gives the arm
/// mean for that study.
#[derive(Debug, Clone)]
enum ArmModel {
    Direct(FittedRegression),
    Nested {
        inner: Arc<FittedRegression>,
        outer: FittedRegression,
    },
    Donor(Arc<FittedRegression>),
}

impl ArmModel {
    fn final_stage(&self) -> &FittedRegression {
        match self {
            ArmModel::Direct(f) | ArmModel::Nested { outer: f, .. } => f,
            ArmModel::Donor(f) => f,
        }
    }
}

/// All nested regressions of one transport fit, indexed by internal study
/// index and arm.
#[derive(Debug, Clone)]
pub struct FittedTransportModel {
    variant: Variant,
    arms: Vec<[ArmModel; 2]>,
    weights: Vec<f64>,
    s_star: usize,
    n_proxies: usize,
}

impl FittedTransportModel {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Final-stage (W-only) regression for a study and arm.
    pub fn arm_model(&self, study: usize, arm: u8) -> &FittedRegression {
        self.arms[study][arm as usize].final_stage()
    }

    /// Inner donor regression for a missing-outcome study, if the variant
    /// has one.
    pub fn inner_model(&self, study: usize, arm: u8) -> Option<&FittedRegression> {
        match &self.arms[study][arm as usize] {
            ArmModel::Nested { inner, .. } => Some(inner),
            ArmModel::Donor(f) => Some(f),
            ArmModel::Direct(_) => None,
        }
    }

    pub fn diagnostics(&self) -> Vec<FitDiagnostics> {
        let mut out = Vec::new();
        for arms in &self.arms {
            for m in arms {
                if let ArmModel::Nested { inner, .. } = m {
                    out.push(inner.diagnostics().clone());
                }
                out.push(m.final_stage().diagnostics().clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyEffect {
    /// Internal study index.
    pub study: usize,
    pub label: i64,
    pub ate: f64,
    pub weight: f64,
    pub n_rows: usize,
    pub outcome_observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimate {
    pub variant: Variant,
    /// `sum_s weight_s * ate_s`.
    pub overall: f64,
    pub studies: Vec<StudyEffect>,
    pub diagnostics: Vec<FitDiagnostics>,
}

impl AteEstimate {
    /// Total weight of the outcome-missing studies.
    pub fn missing_mass(&self) -> f64 {
        compensated_sum(
            self.studies
                .iter()
                .filter(|s| !s.outcome_observed)
                .map(|s| s.weight),
        )
    }

    pub fn study(&self, study: usize) -> &StudyEffect {
        &self.studies[study]
    }

    pub fn recompute_overall(&mut self) {
        self.overall = compensated_sum(self.studies.iter().map(|s| s.weight * s.ate));
    }
}

fn arm_rows(data: &StudyDataset, studies: &[usize], arm: u8) -> Vec<usize> {
    let mut rows: Vec<usize> = studies
        .iter()
        .flat_map(|&s| data.rows_with_arm(s, arm))
        .collect();
    rows.sort_unstable();
    rows
}

fn observations<'a>(data: &'a StudyDataset, rows: &[usize]) -> Vec<Observation<'a>> {
    rows.iter().map(|&i| data.observation(i)).collect()
}

fn outcomes(data: &StudyDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| data.outcome(i).expect("donor rows observe the outcome"))
        .collect()
}

fn labels(data: &StudyDataset, studies: &[usize]) -> String {
    let l: Vec<String> = studies.iter().map(|&s| data.label(s).to_string()).collect();
    format!("{{{}}}", l.join(","))
}

type InnerKey = (Vec<usize>, Vec<usize>, u8);

struct Fitter<'a> {
    data: &'a StudyDataset,
    cfg: &'a ProxyConfig,
    spec: &'a ModelSpec,
    w_design: DesignSpec,
    inner_cache: HashMap<InnerKey, Arc<FittedRegression>>,
}

impl<'a> Fitter<'a> {
    fn new(data: &'a StudyDataset, cfg: &'a ProxyConfig, spec: &'a ModelSpec) -> Result<Self> {
        cfg.check(data)?;
        for s in 0..data.n_studies() {
            for arm in 0..=1 {
                if data.arm_count(s, arm) == 0 {
                    return Err(Error::Structural(format!(
                        "study {} has no rows with arm {arm}",
                        data.label(s)
                    )));
                }
            }
        }
        Ok(Self {
            data,
            cfg,
            spec,
            w_design: spec.design(data, &[])?,
            inner_cache: HashMap::new(),
        })
    }

    fn fit_rows(
        &self,
        rows: &[usize],
        response: &[f64],
        design: &DesignSpec,
        subset: String,
    ) -> Result<FittedRegression> {
        fit(&observations(self.data, rows), response, design, self.spec.mode)
            .map(|f| f.with_subset(subset.clone()))
            .map_err(|e| Error::in_stratum(subset, e))
    }

    fn direct(&self, s: usize, arm: u8) -> Result<ArmModel> {
        let rows: Vec<usize> = self.data.rows_with_arm(s, arm).collect();
        let y = outcomes(self.data, &rows);
        let subset = format!("study {}, arm {arm}, direct", self.data.label(s));
        Ok(ArmModel::Direct(self.fit_rows(&rows, &y, &self.w_design, subset)?))
    }

    /// Donor regression of Y on (proxies, W), shared across missing studies
    /// with the same donor set, proxy subset and arm.
    fn inner(&mut self, donors: &[usize], proxies: &[usize], arm: u8) -> Result<Arc<FittedRegression>> {
        let key = (donors.to_vec(), proxies.to_vec(), arm);
        if let Some(f) = self.inner_cache.get(&key) {
            return Ok(Arc::clone(f));
        }
        let rows = arm_rows(self.data, donors, arm);
        let y = outcomes(self.data, &rows);
        let design = self.spec.design(self.data, proxies)?;
        let subset = format!("donors {}, arm {arm}, inner", labels(self.data, donors));
        let fitted = Arc::new(self.fit_rows(&rows, &y, &design, subset)?);
        self.inner_cache.insert(key, Arc::clone(&fitted));
        Ok(fitted)
    }

    fn nested(&mut self, s: usize, arm: u8, pooled: bool) -> Result<ArmModel> {
        let proxies = self.cfg.proxy_subsets[s].clone();
        let inner = self.inner(&self.cfg.donor_sets[s].clone(), &proxies, arm)?;
        let (rows, scope) = if pooled {
            let studies: Vec<usize> = (0..self.data.n_studies())
                .filter(|&o| self.data.proxies_available(o, &proxies))
                .collect();
            (arm_rows(self.data, &studies, arm), format!("studies {}", labels(self.data, &studies)))
        } else {
            (
                self.data.rows_with_arm(s, arm).collect(),
                format!("study {}", self.data.label(s)),
            )
        };
        let label = self.data.label(s);
        let response = inner
            .predict(&observations(self.data, &rows))
            .map_err(|e| Error::in_stratum(format!("study {label}, arm {arm}, inner prediction"), e))?;
        let subset = format!("{scope}, arm {arm}, outer for study {label}");
        let outer = self.fit_rows(&rows, &response, &self.w_design, subset)?;
        Ok(ArmModel::Nested { inner, outer })
    }

    fn blind(&mut self, s: usize, arm: u8) -> Result<ArmModel> {
        Ok(ArmModel::Donor(self.inner(&self.cfg.donor_sets[s].clone(), &[], arm)?))
    }

    fn arm_model(&mut self, s: usize, arm: u8, variant: Variant) -> Result<ArmModel> {
        if s < self.cfg.s_star {
            return self.direct(s, arm);
        }
        match variant {
            Variant::ProxyAware => self.nested(s, arm, false),
            Variant::Pooled => self.nested(s, arm, true),
            Variant::Blind => self.blind(s, arm),
        }
    }
}

/// Fits the proxy-aware transport model.
pub fn fit_transport(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
) -> Result<FittedTransportModel> {
    fit_variant(data, cfg, spec, Variant::ProxyAware)
}

pub fn fit_variant(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
    variant: Variant,
) -> Result<FittedTransportModel> {
    let mut fitter = Fitter::new(data, cfg, spec)?;
    let mut arms = Vec::with_capacity(data.n_studies());
    for s in 0..data.n_studies() {
        arms.push([
            fitter.arm_model(s, 0, variant)?,
            fitter.arm_model(s, 1, variant)?,
        ]);
    }
    Ok(FittedTransportModel {
        variant,
        arms,
        weights: cfg.weights.clone(),
        s_star: cfg.s_star,
        n_proxies: data.n_proxies(),
    })
}

/// Study and overall effects from a fitted model.
pub fn estimate_ate(
    model: &FittedTransportModel,
    data: &StudyDataset,
    cfg: &ProxyConfig,
) -> Result<AteEstimate> {
    if model.arms.len() != data.n_studies() || model.s_star != cfg.s_star {
        return Err(Error::InvalidArgument(
            "model was fitted on a different study layout".into(),
        ));
    }
    let mut studies = Vec::with_capacity(data.n_studies());
    for s in 0..data.n_studies() {
        let [m0, m1] = &model.arms[s];
        let (m0, m1) = (m0.final_stage(), m1.final_stage());
        let rows = data.study_rows(s);
        let mut sum = 0.0;
        for &i in rows {
            let obs = data.observation(i);
            let contrast = m1.predict_one(&obs)? - m0.predict_one(&obs)?;
            sum += contrast;
        }
        studies.push(StudyEffect {
            study: s,
            label: data.label(s),
            ate: sum / rows.len() as f64,
            weight: cfg.weights[s],
            n_rows: rows.len(),
            outcome_observed: data.outcome_observed(s),
        });
    }
    let mut est = AteEstimate {
        variant: model.variant,
        overall: 0.0,
        studies,
        diagnostics: model.diagnostics(),
    };
    est.recompute_overall();
    Ok(est)
}

/// Fit and estimate in one step for any variant.
pub fn estimate(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
    variant: Variant,
) -> Result<AteEstimate> {
    let model = fit_variant(data, cfg, spec, variant)?;
    estimate_ate(&model, data, cfg)
}

pub fn estimate_ate_pooled(data: &StudyDataset, cfg: &ProxyConfig, spec: &ModelSpec) -> Result<AteEstimate> {
    estimate(data, cfg, spec, Variant::Pooled)
}

pub fn estimate_ate_blind(data: &StudyDataset, cfg: &ProxyConfig, spec: &ModelSpec) -> Result<AteEstimate> {
    estimate(data, cfg, spec, Variant::Blind)
}

/// Plug-in conditional effect at covariate vector `w` for a study.
pub fn estimate_cate(model: &FittedTransportModel, w: &[f64], study: usize) -> Result<f64> {
    if study >= model.arms.len() {
        return Err(Error::InvalidArgument(format!("no study with index {study}")));
    }
    let proxies = vec![f64::NAN; model.n_proxies];
    let obs = Observation {
        covariates: w,
        proxies: &proxies,
    };
    Ok(model.arm_model(study, 1).predict_one(&obs)? - model.arm_model(study, 0).predict_one(&obs)?)
}

impl FittedTransportModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
