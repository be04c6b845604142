//! Sensitivity of the transported effect to violations of the proxy-aware
//! common-outcome-regression assumption.
//!
//! Two analyses:
//!
//! * **Constant bias.** If the bias functions are constants `u1`, `u0`, the
//!   true effect is `Psi + M * delta` with `delta = u1 - u0` and `M` the total
//!   weight of the outcome-missing studies. Each missing study's own effect
//!   shifts by `delta`. The bootstrap interval shifts with the estimate.
//! * **Bounded bias.** If `|u1| <= gamma1` and `|u0| <= gamma0` everywhere,
//!   the effect lies within `Psi -/+ (gamma1 + gamma0)`; with one scalar
//!   `gamma` that is `Psi -/+ 2 gamma`. The weighted form scales the margin by
//!   `M`. Confidence limits widen the bounds by `z * SE` from a single
//!   bootstrap run.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{bootstrap_estimate, BootstrapPlan, BootstrapResult, BootstrapSummary};
use crate::data::{ProxyConfig, StudyDataset};
use crate::error::{Error, Result};
use crate::transport::{AteEstimate, ModelSpec, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundForm {
    /// `Psi -/+ 2 gamma`, ignoring the missing-study weight mass. Spelled
    /// `paper` on the command line and in output tables.
    #[default]
    Unweighted,
    /// `Psi -/+ 2 gamma M`, the tighter bound implied by the weighted sum.
    Weighted,
}

impl BoundForm {
    pub fn tag(self) -> &'static str {
        match self {
            BoundForm::Unweighted => "paper",
            BoundForm::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for BoundForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(BoundForm::Unweighted),
            "weighted" => Ok(BoundForm::Weighted),
            other => Err(Error::InvalidArgument(format!(
                "unknown bound form {other:?} (expected paper or weighted)"
            ))),
        }
    }
}

/// Bound on the bias functions: one scalar for both arms, or one per arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasBound {
    Symmetric(f64),
    PerArm { treated: f64, control: f64 },
}

impl BiasBound {
    /// Largest possible `|u1 - u0|`.
    pub fn margin(self) -> f64 {
        match self {
            BiasBound::Symmetric(g) => 2.0 * g,
            BiasBound::PerArm { treated, control } => treated + control,
        }
    }

    fn validate(self) -> Result<()> {
        let ok = match self {
            BiasBound::Symmetric(g) => g >= 0.0,
            BiasBound::PerArm { treated, control } => treated >= 0.0 && control >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bias bounds must be >= 0, got {self:?}")))
        }
    }
}

/// A strictly increasing, nonempty list of sensitivity-parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// Parses `start:stop:step`, inclusive of `stop` up to rounding.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || Error::InvalidArgument(format!("grid {spec:?} is not start:stop:step"));
        let [a, b, step] = parts.as_slice() else {
            return Err(bad());
        };
        let (a, b, step): (f64, f64, f64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(Error::InvalidArgument(format!("grid {spec:?} has too many points")));
        }
        Self::new((0..count).map(|i| a + i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn non_negative(&self) -> Result<()> {
        if self.0[0] < 0.0 {
            return Err(Error::InvalidArgument("gamma grid values must be >= 0".into()));
        }
        Ok(())
    }
}

/// What a sensitivity analysis varies.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasSpec {
    Constant { deltas: Grid },
    Bounded { gammas: Grid, form: BoundForm },
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BiasSpec::Constant { .. } => Ok(()),
            BiasSpec::Bounded { gammas, .. } => gammas.non_negative(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self {
            lower: self.lower + by,
            upper: self.upper + by,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Overall,
    /// Internal study index.
    Study(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityKind {
    Constant,
    Bounded(BoundForm),
}

impl fmt::Display for SensitivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensitivityKind::Constant => f.write_str("constant"),
            SensitivityKind::Bounded(form) => write!(f, "bounded-{}", form.tag()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityValue {
    Point(f64),
    Bounds(Interval),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCell {
    pub parameter: f64,
    pub target: Target,
    pub value: SensitivityValue,
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub kind: SensitivityKind,
    pub base: AteEstimate,
    pub missing_mass: f64,
    /// Ordered by parameter, then overall before studies.
    pub cells: Vec<SensitivityCell>,
    /// Bootstrap standard error of the base overall estimate, when run.
    pub std_error: Option<f64>,
}

impl SensitivityResult {
    pub fn cells_for(&self, target: Target) -> impl Iterator<Item = &SensitivityCell> {
        self.cells.iter().filter(move |c| c.target == target)
    }
}

/// Adds a constant bias contrast `delta` to every outcome-missing study.
pub fn adjust_constant(est: &AteEstimate, delta: f64, cfg: &ProxyConfig) -> AteEstimate {
    let mut out = est.clone();
    for s in out.studies.iter_mut().filter(|s| s.study >= cfg.s_star) {
        s.ate += delta;
    }
    out.overall = est.overall + delta * est.missing_mass();
    out
}

/// Partial-identification interval around the estimate for a bias bound.
pub fn bound_ate(est: &AteEstimate, bound: BiasBound, form: BoundForm) -> Result<Interval> {
    bound.validate()?;
    let margin = match form {
        BoundForm::Unweighted => bound.margin(),
        BoundForm::Weighted => bound.margin() * est.missing_mass(),
    };
    Ok(Interval {
        lower: est.overall - margin,
        upper: est.overall + margin,
    })
}

/// Interval for one missing study's own effect. The study carries its full
/// bias contrast, so both forms coincide.
pub fn bound_study(est: &AteEstimate, study: usize, bound: BiasBound) -> Result<Interval> {
    bound.validate()?;
    let ate = est.studies[study].ate;
    let margin = if est.studies[study].outcome_observed { 0.0 } else { bound.margin() };
    Ok(Interval {
        lower: ate - margin,
        upper: ate + margin,
    })
}

fn targets(est: &AteEstimate) -> Vec<Target> {
    let mut t = vec![Target::Overall];
    t.extend(est.studies.iter().filter(|s| !s.outcome_observed).map(|s| Target::Study(s.study)));
    t
}

fn summary_for(boot: &BootstrapResult, target: Target) -> &BootstrapSummary {
    match target {
        Target::Overall => &boot.overall,
        Target::Study(s) => &boot.studies[s],
    }
}

/// Constant-bias scan from an already computed estimate and, optionally,
/// its bootstrap.
pub fn scan_delta_from(
    est: &AteEstimate,
    cfg: &ProxyConfig,
    deltas: &Grid,
    boot: Option<&BootstrapResult>,
) -> SensitivityResult {
    let mass = est.missing_mass();
    let mut cells = Vec::new();
    for &delta in deltas.values() {
        let adjusted = adjust_constant(est, delta, cfg);
        for target in targets(est) {
            let (value, shift) = match target {
                Target::Overall => (adjusted.overall, mass * delta),
                Target::Study(s) => (adjusted.studies[s].ate, delta),
            };
            let ci = boot.map(|b| {
                let sm = summary_for(b, target);
                Interval {
                    lower: sm.lower,
                    upper: sm.upper,
                }
                .shifted(shift)
            });
            cells.push(SensitivityCell {
                parameter: delta,
                target,
                value: SensitivityValue::Point(value),
                ci,
            });
        }
    }
    SensitivityResult {
        kind: SensitivityKind::Constant,
        base: est.clone(),
        missing_mass: mass,
        cells,
        std_error: boot.map(|b| b.overall.std_error),
    }
}

/// Estimates once, bootstraps once, then applies each `delta`.
pub fn scan_delta(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
    variant: Variant,
    deltas: &Grid,
    plan: &BootstrapPlan,
) -> Result<SensitivityResult> {
    let boot = bootstrap_estimate(data, cfg, spec, variant, plan)?;
    Ok(scan_delta_from(&boot.point, cfg, deltas, Some(&boot)))
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Bounded-bias scan from an estimate and optional bootstrap.
pub fn scan_gamma_from(
    est: &AteEstimate,
    gammas: &Grid,
    form: BoundForm,
    boot: Option<&BootstrapResult>,
) -> Result<SensitivityResult> {
    gammas.non_negative()?;
    let z = boot.map(|b| normal_quantile(1.0 - (1.0 - b.level) / 2.0));
    let mut cells = Vec::new();
    for &gamma in gammas.values() {
        let bound = BiasBound::Symmetric(gamma);
        for target in targets(est) {
            let interval = match target {
                Target::Overall => bound_ate(est, bound, form)?,
                Target::Study(s) => bound_study(est, s, bound)?,
            };
            let ci = boot.zip(z).map(|(b, z)| {
                let margin = z * summary_for(b, target).std_error;
                Interval {
                    lower: interval.lower - margin,
                    upper: interval.upper + margin,
                }
            });
            cells.push(SensitivityCell {
                parameter: gamma,
                target,
                value: SensitivityValue::Bounds(interval),
                ci,
            });
        }
    }
    Ok(SensitivityResult {
        kind: SensitivityKind::Bounded(form),
        base: est.clone(),
        missing_mass: est.missing_mass(),
        cells,
        std_error: boot.map(|b| b.overall.std_error),
    })
}

pub fn scan_gamma(
    data: &StudyDataset,
    cfg: &ProxyConfig,
    spec: &ModelSpec,
    variant: Variant,
    gammas: &Grid,
    form: BoundForm,
    plan: &BootstrapPlan,
) -> Result<SensitivityResult> {
    gammas.non_negative()?;
    let boot = bootstrap_estimate(data, cfg, spec, variant, plan)?;
    scan_gamma_from(&boot.point, gammas, form, Some(&boot))
}

/// Smallest-magnitude `delta` whose overall interval contains zero.
pub fn critical_delta(result: &SensitivityResult) -> Result<Option<f64>> {
    critical_delta_for(result, Target::Overall)
}

/// Smallest-magnitude grid `delta` whose interval for `target` contains
/// zero, scanning outward from zero; ties go to the negative value.
pub fn critical_delta_for(result: &SensitivityResult, target: Target) -> Result<Option<f64>> {
    if result.kind != SensitivityKind::Constant {
        return Err(Error::InvalidArgument(
            "critical delta needs a constant-bias scan".into(),
        ));
    }
    let mut cells: Vec<(f64, Interval)> = Vec::new();
    for c in result.cells_for(target) {
        let ci = c.ci.ok_or_else(|| {
            Error::InvalidArgument("critical delta needs confidence intervals".into())
        })?;
        cells.push((c.parameter, ci));
    }
    cells.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
    Ok(cells.into_iter().find(|(_, ci)| ci.contains(0.0)).map(|(d, _)| d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::StudyEffect;

    fn two_equal(psi_observed: f64, psi_missing: f64) -> (AteEstimate, ProxyConfig) {
        let est = AteEstimate {
            variant: Variant::ProxyAware,
            overall: 0.5 * psi_observed + 0.5 * psi_missing,
            studies: vec![
                StudyEffect { study: 0, label: 1, ate: psi_observed, weight: 0.5, n_rows: 10, outcome_observed: true },
                StudyEffect { study: 1, label: 2, ate: psi_missing, weight: 0.5, n_rows: 10, outcome_observed: false },
            ],
            diagnostics: vec![],
        };
        let cfg = ProxyConfig {
            s_star: 1,
            proxy_subsets: vec![vec![], vec![]],
            donor_sets: vec![vec![], vec![0]],
            weights: vec![0.5, 0.5],
        };
        (est, cfg)
    }

    #[test]
    fn adjust_constant_arithmetic() {
        let (est, cfg) = two_equal(3.0, 3.0);
        assert_eq!(adjust_constant(&est, 0.0, &cfg), est);
        let adj = adjust_constant(&est, 2.0, &cfg);
        assert_eq!(adj.overall, 4.0);
        assert_eq!(adj.studies[1].ate, 5.0);
        assert_eq!(adj.studies[0].ate, 3.0);
        let weighted: f64 = adj.studies.iter().map(|s| s.weight * s.ate).sum();
        assert!((adj.overall - weighted).abs() < 1e-10);
    }

    #[test]
    fn adjustments_compose() {
        let (est, cfg) = two_equal(1.3, -0.4);
        for (d1, d2) in [(0.5, 1.25), (-2.0, 0.75), (3.0, -3.0)] {
            let twice = adjust_constant(&adjust_constant(&est, d1, &cfg), d2, &cfg);
            let once = adjust_constant(&est, d1 + d2, &cfg);
            assert!((twice.overall - once.overall).abs() < 1e-12);
            assert!((twice.studies[1].ate - once.studies[1].ate).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds() {
        let (est, _) = two_equal(4.0, 4.0);
        let i = bound_ate(&est, BiasBound::Symmetric(0.0), BoundForm::Unweighted).unwrap();
        assert_eq!((i.lower, i.upper), (4.0, 4.0));
        let i = bound_ate(&est, BiasBound::Symmetric(1.0), BoundForm::Unweighted).unwrap();
        assert_eq!((i.lower, i.upper), (2.0, 6.0));
        let i = bound_ate(&est, BiasBound::Symmetric(1.0), BoundForm::Weighted).unwrap();
        assert_eq!((i.lower, i.upper), (3.0, 5.0));
        let i = bound_ate(&est, BiasBound::PerArm { treated: 1.0, control: 0.5 }, BoundForm::Unweighted).unwrap();
        assert_eq!((i.lower, i.upper), (2.5, 5.5));
        assert!(bound_ate(&est, BiasBound::Symmetric(-0.1), BoundForm::Unweighted).is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(Grid::parse("-3:3:1").unwrap().values(), &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(Grid::parse("0:1:0.5").unwrap().values(), &[0.0, 0.5, 1.0]);
        assert_eq!(Grid::parse("0:0.3:0.1").unwrap().values().len(), 4);
        assert!(Grid::parse("1:0:1").is_err());
        assert!(Grid::parse("0:1:0").is_err());
        assert!(Grid::parse("0:1").is_err());
        assert!(Grid::new(vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![]).is_err());
        let spec = BiasSpec::Bounded { gammas: Grid::new(vec![-1.0, 0.0]).unwrap(), form: BoundForm::Unweighted };
        assert!(spec.validate().is_err());
    }

    fn fake_boot(est: &AteEstimate, lo: f64, hi: f64, se: f64) -> BootstrapResult {
        let summary = |e: f64| BootstrapSummary { estimate: e, replicates: vec![], lower: lo, upper: hi, std_error: se };
        BootstrapResult {
            point: est.clone(),
            overall: summary(est.overall),
            studies: est.studies.iter().map(|s| summary(s.ate)).collect(),
            failed: vec![],
            seed: 0,
            level: 0.95,
        }
    }

    #[test]
    fn delta_scan_is_affine_with_shifted_intervals() {
        let (est, cfg) = two_equal(2.0, 2.0);
        let boot = fake_boot(&est, 1.0, 3.0, 0.5);
        let grid = Grid::parse("-2:2:1").unwrap();
        let res = scan_delta_from(&est, &cfg, &grid, Some(&boot));
        assert_eq!(res.missing_mass, 0.5);
        for c in res.cells_for(Target::Overall) {
            let SensitivityValue::Point(v) = c.value else { panic!() };
            assert!((v - (2.0 + 0.5 * c.parameter)).abs() < 1e-12);
            let ci = c.ci.unwrap();
            assert!((ci.width() - 2.0).abs() < 1e-12);
            assert!((ci.lower - (1.0 + 0.5 * c.parameter)).abs() < 1e-12);
        }
        for c in res.cells_for(Target::Study(1)) {
            let SensitivityValue::Point(v) = c.value else { panic!() };
            assert!((v - (2.0 + c.parameter)).abs() < 1e-12);
        }
    }

    #[test]
    fn critical_delta_cases() {
        let (est, cfg) = two_equal(2.0, 2.0);
        // intervals [1, 3] at delta = 0, shifted by 0.5 * delta
        let boot = fake_boot(&est, 1.0, 3.0, 0.5);
        let wide = Grid::parse("-4:4:1").unwrap();
        let res = scan_delta_from(&est, &cfg, &wide, Some(&boot));
        assert_eq!(critical_delta(&res).unwrap(), Some(-2.0));

        let narrow = Grid::parse("-1:4:1").unwrap();
        let res = scan_delta_from(&est, &cfg, &narrow, Some(&boot));
        assert_eq!(critical_delta(&res).unwrap(), None);

        let straddle = fake_boot(&est, -1.0, 3.0, 0.5);
        let res = scan_delta_from(&est, &cfg, &wide, Some(&straddle));
        assert_eq!(critical_delta(&res).unwrap(), Some(0.0));

        let no_ci = scan_delta_from(&est, &cfg, &wide, None);
        assert!(critical_delta(&no_ci).is_err());
        let gamma = scan_gamma_from(&est, &Grid::parse("0:1:1").unwrap(), BoundForm::Unweighted, None).unwrap();
        assert!(critical_delta(&gamma).is_err());
    }

    #[test]
    fn gamma_scan_nested_and_widening() {
        let (est, _) = two_equal(1.0, 3.0);
        let boot = fake_boot(&est, 0.0, 0.0, 0.4);
        let grid = Grid::parse("0:3:0.5").unwrap();
        let res = scan_gamma_from(&est, &grid, BoundForm::Unweighted, Some(&boot)).unwrap();
        let overall: Vec<&SensitivityCell> = res.cells_for(Target::Overall).collect();
        let SensitivityValue::Bounds(at0) = overall[0].value else { panic!() };
        assert_eq!(at0.width(), 0.0);
        let z = normal_quantile(0.975);
        assert!((z - 1.959963984540054).abs() < 1e-9);
        for pair in overall.windows(2) {
            let (SensitivityValue::Bounds(a), SensitivityValue::Bounds(b)) = (pair[0].value, pair[1].value) else { panic!() };
            assert!(b.lower <= a.lower && a.upper <= b.upper);
        }
        for c in &overall {
            let SensitivityValue::Bounds(i) = c.value else { panic!() };
            assert!((i.width() - at0.width() - 4.0 * c.parameter).abs() < 1e-12);
            assert!(((i.lower + i.upper) / 2.0 - est.overall).abs() < 1e-12);
            let ci = c.ci.unwrap();
            assert!((ci.lower - (i.lower - z * 0.4)).abs() < 1e-12);
        }
    }
}
