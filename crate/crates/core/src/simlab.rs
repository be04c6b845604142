//! Simulation laboratory: the two-study data-generating process, its ground
//! truth, and the replication runs behind the figure reproductions.
//!
//! Study 1 observes the outcome, study 2 does not. In both,
//!
//! ```text
//! W, T0 ~ N(0, 1),  T1 ~ N(1, 1),  A ~ Bernoulli(1/2)
//! Y0 = -4 T0 + W + e0,  Y1 = 4 T1 + W + e1,  e0, e1 ~ N(0, 1)
//! T = T_A,  Y = Y_A
//! ```
//!
//! so `T` fully mediates the effect of `A` and the base effect is 4.
//!
//! Bias is injected into study 2's potential outcomes, so correcting the
//! transported estimate by `+delta` recovers the truth:
//!
//! * constant: `Y0 += u0`, `Y1 += u0 + delta`;
//! * functional: `Y0 += b0 sin(T0 + W)`, `Y1 += b1 expit(T1 + W)`. Each
//!   potential outcome is shifted through its own potential proxy, which for
//!   the realized arm is the observed `T`. That keeps treatment independent
//!   of the potential outcomes within the study.
//!
//! Study 2's outcomes are masked in the emitted dataset; the potential
//! outcomes survive only in the [`Counterfactual`] sidecar.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bootstrap::{bootstrap_estimate, BootstrapPlan};
use crate::data::{DatasetBuilder, ProxyConfig, RawRow, StudyDataset};
use crate::error::{Error, Result};
use crate::numeric::{expit, mean, sorted_copy, sorted_quantile};
use crate::rng::{stream, Domain};
use crate::sensitivity::{bound_ate, BiasBound, BoundForm, Grid, Interval, Target};
use crate::transport::{estimate, ModelSpec, Variant};

pub const OBSERVED_STUDY: i64 = 1;
pub const MISSING_STUDY: i64 = 2;
pub const BASE_ATE: f64 = 4.0;
/// Draws used by [`truth`] for functional bias.
pub const TRUTH_DRAWS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasKind {
    None,
    Constant { u0: f64, delta: f64 },
    Functional { b0: f64, b1: f64 },
}

impl BiasKind {
    /// Shift applied to study 2's potential outcome under `arm`, given that
    /// arm's potential proxy and the covariate.
    pub fn shift(self, arm: u8, proxy: f64, w: f64) -> f64 {
        match (self, arm) {
            (BiasKind::None, _) => 0.0,
            (BiasKind::Constant { u0, .. }, 0) => u0,
            (BiasKind::Constant { u0, delta }, _) => u0 + delta,
            (BiasKind::Functional { b0, .. }, 0) => b0 * (proxy + w).sin(),
            (BiasKind::Functional { b1, .. }, _) => b1 * expit(proxy + w),
        }
    }

    pub fn label(self) -> String {
        match self {
            BiasKind::None => "none".into(),
            BiasKind::Constant { u0, delta } => format!("u0={u0};delta={delta}"),
            BiasKind::Functional { b0, b1 } => format!("b0={b0};b1={b1}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    /// Rows per study.
    pub n: usize,
    pub bias: BiasKind,
    pub seed: u64,
    pub reps: usize,
    pub delta_grid: Grid,
    pub gamma_grid: Grid,
}

impl SimScenario {
    pub fn new(n: usize, bias: BiasKind, seed: u64) -> Self {
        Self {
            n,
            bias,
            seed,
            reps: 1000,
            delta_grid: Grid::parse("-3:3:1").expect("static grid"),
            gamma_grid: Grid::parse("0:5:1").expect("static grid"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        match self.bias {
            BiasKind::Constant { u0, delta } if !(u0.is_finite() && delta.is_finite()) => {
                Err(Error::InvalidArgument("u0 and delta must be finite".into()))
            }
            BiasKind::Functional { b0, b1 } if !(b0 >= 0.0 && b1 >= 0.0 && b0.is_finite() && b1.is_finite()) => {
                Err(Error::InvalidArgument("b0 and b1 must be finite and >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Parses the scenario file:
    ///
    /// ```text
    /// n = 100
    /// reps = 1000
    /// seed = 7
    /// bias.kind = "constant"     # none | constant | functional
    /// bias.u0 = -3
    /// bias.delta = 2
    /// grids.delta = "-3:3:1"
    /// grids.gamma = "0:5:1"
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut sc = SimScenario::new(100, BiasKind::None, 0);
        let number = |v: &toml::Value, key: &str| {
            v.as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::Config(format!("{key} must be a number")))
        };
        let count = |v: &toml::Value, key: &str| {
            v.as_integer()
                .filter(|i| *i >= 0)
                .map(|i| i as u64)
                .ok_or_else(|| Error::Config(format!("{key} must be a non-negative integer")))
        };
        for (key, value) in &table {
            match key.as_str() {
                "n" => sc.n = count(value, "n")? as usize,
                "reps" => sc.reps = count(value, "reps")? as usize,
                "seed" => sc.seed = count(value, "seed")?,
                "bias" => {
                    let t = value
                        .as_table()
                        .ok_or_else(|| Error::Config("bias must be a table".into()))?;
                    let get = |k: &str| -> Result<f64> {
                        t.get(k)
                            .map(|v| number(v, &format!("bias.{k}")))
                            .unwrap_or(Ok(0.0))
                    };
                    for k in t.keys() {
                        if !["kind", "u0", "delta", "b0", "b1"].contains(&k.as_str()) {
                            return Err(Error::Config(format!("unknown key bias.{k}")));
                        }
                    }
                    sc.bias = match t.get("kind").and_then(|v| v.as_str()).unwrap_or("none") {
                        "none" => BiasKind::None,
                        "constant" => BiasKind::Constant { u0: get("u0")?, delta: get("delta")? },
                        "functional" => BiasKind::Functional { b0: get("b0")?, b1: get("b1")? },
                        other => return Err(Error::Config(format!("unknown bias.kind {other:?}"))),
                    };
                }
                "grids" => {
                    let t = value
                        .as_table()
                        .ok_or_else(|| Error::Config("grids must be a table".into()))?;
                    for (k, v) in t {
                        let spec = v
                            .as_str()
                            .ok_or_else(|| Error::Config(format!("grids.{k} must be a string")))?;
                        match k.as_str() {
                            "delta" => sc.delta_grid = Grid::parse(spec)?,
                            "gamma" => sc.gamma_grid = Grid::parse(spec)?,
                            other => return Err(Error::Config(format!("unknown key grids.{other}"))),
                        }
                    }
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        sc.validate()?;
        Ok(sc)
    }
}

/// Potential outcomes of one generated row, after bias injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub study: i64,
    pub arm: u8,
    pub w: f64,
    pub t0: f64,
    pub t1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Counterfactual {
    pub fn observed_outcome(&self) -> f64 {
        if self.arm == 1 {
            self.y1
        } else {
            self.y0
        }
    }

    pub fn observed_proxy(&self) -> f64 {
        if self.arm == 1 {
            self.t1
        } else {
            self.t0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    pub data: StudyDataset,
    /// One entry per dataset row, same order.
    pub sidecar: Vec<Counterfactual>,
}

pub fn simulate(scenario: &SimScenario, replicate: usize) -> Result<StudyDataset> {
    Ok(simulate_with_truth(scenario, replicate)?.data)
}

pub fn simulate_with_truth(scenario: &SimScenario, replicate: usize) -> Result<SimDraw> {
    scenario.validate()?;
    let mut builder =
        DatasetBuilder::new(vec!["w1".into()], vec!["t1".into()]).with_capacity(2 * scenario.n);
    let mut sidecar = Vec::with_capacity(2 * scenario.n);
    for (sub, study) in [OBSERVED_STUDY, MISSING_STUDY].into_iter().enumerate() {
        let mut rng = stream(scenario.seed, Domain::Simulation, replicate as u64, sub as u64);
        for _ in 0..scenario.n {
            let w: f64 = rng.sample(StandardNormal);
            let t0: f64 = rng.sample(StandardNormal);
            let t1: f64 = 1.0 + rng.sample::<f64, _>(StandardNormal);
            let arm = u8::from(rng.random_bool(0.5));
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            let mut y0 = -4.0 * t0 + w + e0;
            let mut y1 = 4.0 * t1 + w + e1;
            if study == MISSING_STUDY {
                y0 += scenario.bias.shift(0, t0, w);
                y1 += scenario.bias.shift(1, t1, w);
            }
            let cf = Counterfactual { study, arm, w, t0, t1, y0, y1 };
            builder.push(RawRow {
                study,
                arm,
                covariates: vec![w],
                proxies: vec![Some(cf.observed_proxy())],
                outcome: (study == OBSERVED_STUDY).then(|| cf.observed_outcome()),
            })?;
            sidecar.push(cf);
        }
    }
    Ok(SimDraw {
        data: builder.build()?,
        sidecar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueBias {
    None,
    Constant { delta: f64 },
    /// Uniform bounds on the control and treated bias functions.
    Bounded { gamma0: f64, gamma1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub overall: f64,
    /// Effects of study 1 and study 2.
    pub studies: [f64; 2],
    pub bias: TrueBias,
    pub method: OracleMethod,
    /// Monte Carlo standard error of `overall`; zero when analytic.
    pub mc_std_error: f64,
}

impl TruthRecord {
    pub fn missing(&self) -> f64 {
        self.studies[1]
    }

    pub fn target(&self, target: Target) -> f64 {
        match target {
            Target::Overall => self.overall,
            Target::Study(s) => self.studies[s],
        }
    }
}

fn true_bias(bias: BiasKind) -> TrueBias {
    match bias {
        BiasKind::None => TrueBias::None,
        BiasKind::Constant { delta, .. } => TrueBias::Constant { delta },
        BiasKind::Functional { b0, b1 } => TrueBias::Bounded { gamma0: b0, gamma1: b1 },
    }
}

const MC_CHUNKS: usize = 100;

/// Mean and standard error of `f(W, T0, T1, e0, e1)` over `draws` draws from
/// the base distribution, chunked over independent streams.
fn monte_carlo<F>(draws: usize, seed: u64, domain: Domain, f: F) -> (f64, f64)
where
    F: Fn(f64, f64, f64, f64, f64) -> f64 + Sync,
{
    let per_chunk = draws.div_ceil(MC_CHUNKS);
    let partial: Vec<(f64, f64, usize)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let n = per_chunk.min(draws.saturating_sub(c * per_chunk));
            let mut rng = stream(seed, domain, c as u64, 0);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let w: f64 = rng.sample(StandardNormal);
                let t0: f64 = rng.sample(StandardNormal);
                let t1: f64 = 1.0 + rng.sample::<f64, _>(StandardNormal);
                let e0: f64 = rng.sample(StandardNormal);
                let e1: f64 = rng.sample(StandardNormal);
                let v = f(w, t0, t1, e0, e1);
                sum += v;
                sq += v * v;
            }
            (sum, sq, n)
        })
        .collect();
    let (sum, sq, n) = partial
        .into_iter()
        .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = n as f64;
    let m = sum / n;
    let var = (sq / n - m * m).max(0.0) * n / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Ground truth. Constant and no-bias cases are analytic; functional bias
/// integrates the shifts by Monte Carlo over [`TRUTH_DRAWS`] draws.
pub fn truth(scenario: &SimScenario) -> TruthRecord {
    let (missing, se, method) = match scenario.bias {
        BiasKind::None => (BASE_ATE, 0.0, OracleMethod::Analytic),
        BiasKind::Constant { delta, .. } => (BASE_ATE + delta, 0.0, OracleMethod::Analytic),
        BiasKind::Functional { .. } => {
            let bias = scenario.bias;
            let (m, se) = monte_carlo(TRUTH_DRAWS, scenario.seed, Domain::Truth, |w, t0, t1, _, _| {
                bias.shift(1, t1, w) - bias.shift(0, t0, w)
            });
            (BASE_ATE + m, se, OracleMethod::MonteCarlo)
        }
    };
    // Both studies have n rows, so the empirical weights are 1/2 each.
    TruthRecord {
        overall: 0.5 * BASE_ATE + 0.5 * missing,
        studies: [BASE_ATE, missing],
        bias: true_bias(scenario.bias),
        method,
        mc_std_error: 0.5 * se,
    }
}

/// Truth by brute-force Monte Carlo over full potential-outcome pairs,
/// independent of the analytic shortcuts in [`truth`].
pub fn truth_monte_carlo(scenario: &SimScenario, draws: usize) -> TruthRecord {
    let bias = scenario.bias;
    let observed = monte_carlo(draws, scenario.seed, Domain::Truth, |w, t0, t1, e0, e1| {
        (4.0 * t1 + w + e1) - (-4.0 * t0 + w + e0)
    });
    let missing = monte_carlo(draws, scenario.seed, Domain::Truth, |w, t0, t1, e0, e1| {
        (4.0 * t1 + w + e1 + bias.shift(1, t1, w)) - (-4.0 * t0 + w + e0 + bias.shift(0, t0, w))
    });
    let overall = monte_carlo(draws, scenario.seed, Domain::Truth, |w, t0, t1, e0, e1| {
        let base = (4.0 * t1 + w + e1) - (-4.0 * t0 + w + e0);
        base + 0.5 * (bias.shift(1, t1, w) - bias.shift(0, t0, w))
    });
    TruthRecord {
        overall: overall.0,
        studies: [observed.0, missing.0],
        bias: true_bias(bias),
        method: OracleMethod::MonteCarlo,
        mc_std_error: overall.1,
    }
}

/// Study-2 bias terms `E[u1 | A = 1]`, `E[u0 | A = 0]` and their contrast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedBias {
    pub treated: f64,
    pub control: f64,
    pub contrast: f64,
    pub std_error: f64,
}

/// Realized study-specific bias under the known data-generating process.
/// Treatment is randomized, so conditioning on the arm leaves the law of
/// `(T_a, W)` unchanged.
pub fn realized_bias(scenario: &SimScenario, draws: usize) -> RealizedBias {
    let bias = scenario.bias;
    match bias {
        BiasKind::None => RealizedBias { treated: 0.0, control: 0.0, contrast: 0.0, std_error: 0.0 },
        BiasKind::Constant { u0, delta } => RealizedBias {
            treated: u0 + delta,
            control: u0,
            contrast: delta,
            std_error: 0.0,
        },
        BiasKind::Functional { .. } => {
            let seed = scenario.seed;
            let d = Domain::RealizedBias;
            let (treated, _) = monte_carlo(draws, seed, d, |w, _, t1, _, _| bias.shift(1, t1, w));
            let (control, _) = monte_carlo(draws, seed, d, |w, t0, _, _, _| bias.shift(0, t0, w));
            let (contrast, se) =
                monte_carlo(draws, seed, d, |w, t0, t1, _, _| bias.shift(1, t1, w) - bias.shift(0, t0, w));
            RealizedBias { treated, control, contrast, std_error: se }
        }
    }
}

/// What to run for a set of scenarios.
#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub scenarios: Vec<SimScenario>,
    pub variants: Vec<Variant>,
    pub spec: ModelSpec,
    /// Bootstrap per replication when set; the plan's seed is offset by the
    /// replication index.
    pub bootstrap: Option<BootstrapPlan>,
}

/// Percentile interval and standard error of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiSummary {
    pub interval: Interval,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub variant: Variant,
    pub overall: f64,
    pub missing: f64,
    pub missing_mass: f64,
    pub overall_ci: Option<CiSummary>,
    pub missing_ci: Option<CiSummary>,
}

impl ReplicateRecord {
    pub fn value(&self, target: Target) -> f64 {
        match target {
            Target::Overall => self.overall,
            Target::Study(_) => self.missing,
        }
    }

    /// Estimate after a constant-bias adjustment of `delta`.
    pub fn adjusted(&self, target: Target, delta: f64) -> f64 {
        self.value(target) + self.shift(target, delta)
    }

    fn shift(&self, target: Target, delta: f64) -> f64 {
        match target {
            Target::Overall => self.missing_mass * delta,
            Target::Study(_) => delta,
        }
    }

    pub fn ci(&self, target: Target) -> Option<CiSummary> {
        match target {
            Target::Overall => self.overall_ci,
            Target::Study(_) => self.missing_ci,
        }
    }

    pub fn adjusted_ci(&self, target: Target, delta: f64) -> Option<Interval> {
        self.ci(target).map(|c| c.interval.shifted(self.shift(target, delta)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub variance: f64,
    pub count: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let sorted = sorted_copy(values);
        Self {
            mean: mean(values),
            q025: sorted_quantile(&sorted, 0.025),
            q975: sorted_quantile(&sorted, 0.975),
            variance: crate::numeric::sample_variance(values),
            count: values.len(),
        }
    }

    pub fn range(&self) -> f64 {
        self.q975 - self.q025
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResults {
    pub scenario: SimScenario,
    pub truth: TruthRecord,
    /// Ordered by replicate, then variant.
    pub records: Vec<ReplicateRecord>,
    /// `(replicate, message)` for replications that failed.
    pub failures: Vec<(usize, String)>,
}

impl ScenarioResults {
    pub fn records_for(&self, variant: Variant) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(move |r| r.variant == variant)
    }

    /// Distribution of the `delta`-adjusted estimate across replications.
    pub fn spread(&self, variant: Variant, target: Target, delta: f64) -> Spread {
        let v: Vec<f64> = self.records_for(variant).map(|r| r.adjusted(target, delta)).collect();
        Spread::of(&v)
    }

    /// `(covered, total)` of adjusted bootstrap intervals covering the truth.
    pub fn coverage(&self, variant: Variant, target: Target, delta: f64) -> (usize, usize) {
        let truth = self.truth.target(target);
        let cis: Vec<Interval> = self
            .records_for(variant)
            .filter_map(|r| r.adjusted_ci(target, delta))
            .collect();
        (cis.iter().filter(|c| c.contains(truth)).count(), cis.len())
    }

    /// `(contained, total)` of overall bounds containing the overall truth.
    pub fn bound_containment(&self, variant: Variant, gamma: f64, form: BoundForm) -> (usize, usize) {
        let truth = self.truth.overall;
        let mut hit = 0;
        let mut total = 0;
        for r in self.records_for(variant) {
            let margin = match form {
                BoundForm::Unweighted => 2.0 * gamma,
                BoundForm::Weighted => 2.0 * gamma * r.missing_mass,
            };
            total += 1;
            if (r.overall - margin..=r.overall + margin).contains(&truth) {
                hit += 1;
            }
        }
        (hit, total)
    }

    /// Mean absolute error of the unadjusted estimate of `target`.
    pub fn mean_abs_error(&self, variant: Variant, target: Target) -> f64 {
        let truth = self.truth.target(target);
        let e: Vec<f64> = self.records_for(variant).map(|r| (r.value(target) - truth).abs()).collect();
        mean(&e)
    }
}

fn run_replicate(
    scenario: &SimScenario,
    plan: &StudyPlan,
    replicate: usize,
) -> Result<Vec<ReplicateRecord>> {
    let data = simulate(scenario, replicate)?;
    let cfg = ProxyConfig::default_for(&data)?;
    let missing = cfg.s_star;
    plan.variants
        .iter()
        .map(|&variant| {
            let (est, overall_ci, missing_ci) = match &plan.bootstrap {
                None => (estimate(&data, &cfg, &plan.spec, variant)?, None, None),
                Some(bp) => {
                    let bp = BootstrapPlan {
                        seed: bp.seed.wrapping_add(replicate as u64),
                        ..bp.clone()
                    };
                    let b = bootstrap_estimate(&data, &cfg, &plan.spec, variant, &bp)?;
                    let ci = |s: &crate::bootstrap::BootstrapSummary| CiSummary {
                        interval: Interval { lower: s.lower, upper: s.upper },
                        std_error: s.std_error,
                    };
                    let (o, m) = (ci(&b.overall), ci(&b.studies[missing]));
                    (b.point, Some(o), Some(m))
                }
            };
            Ok(ReplicateRecord {
                replicate,
                variant,
                overall: est.overall,
                missing: est.studies[missing].ate,
                missing_mass: est.missing_mass(),
                overall_ci,
                missing_ci,
            })
        })
        .collect()
}

/// Runs every scenario for `scenario.reps` replications. Replications run in
/// parallel; results are assembled in replicate order.
pub fn run_study(plan: &StudyPlan) -> Result<Vec<ScenarioResults>> {
    if plan.variants.is_empty() {
        return Err(Error::InvalidArgument("no estimator variants requested".into()));
    }
    plan.scenarios
        .iter()
        .map(|scenario| {
            scenario.validate()?;
            let outcomes: Vec<Result<Vec<ReplicateRecord>>> = (0..scenario.reps)
                .into_par_iter()
                .map(|r| run_replicate(scenario, plan, r))
                .collect();
            let mut records = Vec::new();
            let mut failures = Vec::new();
            for (r, o) in outcomes.into_iter().enumerate() {
                match o {
                    Ok(recs) => records.extend(recs),
                    Err(e) => failures.push((r, format!("scenario {}, replicate {r}: {e}", scenario.bias.label()))),
                }
            }
            Ok(ScenarioResults {
                scenario: scenario.clone(),
                truth: truth(scenario),
                records,
                failures,
            })
        })
        .collect()
}

/// The nine constant-bias cells `u0 x delta`.
pub fn constant_cells() -> Vec<BiasKind> {
    let mut out = Vec::new();
    for u0 in [-3.0, 0.0, 3.0] {
        for delta in [-2.0, 0.0, 2.0] {
            out.push(BiasKind::Constant { u0, delta });
        }
    }
    out
}

/// The nine functional-bias cells `b0 x b1`.
pub fn functional_cells() -> Vec<BiasKind> {
    let mut out = Vec::new();
    for b0 in [2.0, 3.0, 4.0] {
        for b1 in [1.0, 2.0, 3.0] {
            out.push(BiasKind::Functional { b0, b1 });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// One simulated dataset per cell, bootstrap intervals over a delta grid.
    SingleDelta,
    /// Mean and 2.5/97.5 quantiles over replications, delta grid.
    RepeatedDelta,
    /// As `RepeatedDelta`, proxy-aware against proxy-blind.
    Comparison,
    /// One dataset per functional-bias cell, bounds over a gamma grid.
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Figure {
    pub id: u8,
    pub n: usize,
    pub kind: FigureKind,
    pub target: Target,
}

impl Figure {
    pub fn get(id: u8) -> Result<Self> {
        let missing = Target::Study(1);
        let (n, kind, target) = match id {
            1 => (100, FigureKind::SingleDelta, Target::Overall),
            2 => (100, FigureKind::SingleDelta, missing),
            3 => (100, FigureKind::RepeatedDelta, Target::Overall),
            4 => (100, FigureKind::RepeatedDelta, missing),
            5 => (100, FigureKind::Comparison, Target::Overall),
            6 => (100, FigureKind::Bounds, Target::Overall),
            7 => (200, FigureKind::SingleDelta, Target::Overall),
            8 => (200, FigureKind::SingleDelta, missing),
            9 => (500, FigureKind::SingleDelta, Target::Overall),
            10 => (500, FigureKind::SingleDelta, missing),
            other => return Err(Error::InvalidArgument(format!("no figure {other} (expected 1-10)"))),
        };
        Ok(Self { id, n, kind, target })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceOptions {
    pub reps: usize,
    pub seed: u64,
    pub n_boot: usize,
    pub level: f64,
    pub delta_grid: Grid,
    pub gamma_grid: Grid,
    pub bound_form: BoundForm,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            reps: 1000,
            seed: 0,
            n_boot: 1000,
            level: 0.95,
            delta_grid: Grid::parse("-3:3:1").expect("static grid"),
            gamma_grid: Grid::parse("0:5:1").expect("static grid"),
            bound_form: BoundForm::Unweighted,
        }
    }
}

/// One line of a figure's tidy table.
#[derive(Debug, Clone, PartialEq)]
pub struct TidyRow {
    pub scenario: String,
    /// `None` for rows summarizing all replications.
    pub replicate: Option<usize>,
    pub parameter: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    /// Panel the row belongs to and its series within the panel.
    pub panel: String,
    pub series: Variant,
    /// True value of the sensitivity parameter, drawn as a reference line.
    pub reference: Option<f64>,
}

/// Simulates and tabulates one figure.
pub fn reproduce(figure: Figure, opts: &ReproduceOptions) -> Result<Vec<TidyRow>> {
    let cells = match figure.kind {
        FigureKind::Bounds => functional_cells(),
        _ => constant_cells(),
    };
    let single = matches!(figure.kind, FigureKind::SingleDelta | FigureKind::Bounds);
    let scenarios = cells
        .iter()
        .map(|&bias| SimScenario {
            reps: if single { 1 } else { opts.reps },
            delta_grid: opts.delta_grid.clone(),
            gamma_grid: opts.gamma_grid.clone(),
            ..SimScenario::new(figure.n, bias, opts.seed)
        })
        .collect();
    let variants = match figure.kind {
        FigureKind::Comparison => vec![Variant::ProxyAware, Variant::Blind],
        _ => vec![Variant::ProxyAware],
    };
    let bootstrap = (figure.kind == FigureKind::SingleDelta).then(|| BootstrapPlan {
        replicates: opts.n_boot,
        seed: opts.seed,
        level: opts.level,
        ..BootstrapPlan::default()
    });
    let results = run_study(&StudyPlan {
        scenarios,
        variants: variants.clone(),
        spec: ModelSpec::default(),
        bootstrap,
    })?;

    let mut rows = Vec::new();
    for res in &results {
        if let Some((_, msg)) = res.failures.first() {
            return Err(Error::Structural(msg.clone()));
        }
        let panel = res.scenario.bias.label();
        let truth = res.truth.target(figure.target);
        let reference = match res.scenario.bias {
            BiasKind::Constant { delta, .. } => Some(delta),
            BiasKind::Functional { b0, b1 } => Some(b0.max(b1)),
            BiasKind::None => None,
        };
        for &variant in &variants {
            let scenario = if figure.kind == FigureKind::Comparison {
                format!("{panel};variant={variant}")
            } else {
                panel.clone()
            };
            let row = |replicate, parameter, estimate, lower, upper| TidyRow {
                scenario: scenario.clone(),
                replicate,
                parameter,
                estimate,
                lower,
                upper,
                truth,
                panel: panel.clone(),
                series: variant,
                reference,
            };
            match figure.kind {
                FigureKind::SingleDelta => {
                    let rec = res.records_for(variant).next().expect("one replication");
                    for &delta in opts.delta_grid.values() {
                        let ci = rec.adjusted_ci(figure.target, delta).expect("bootstrapped");
                        rows.push(row(Some(0), delta, rec.adjusted(figure.target, delta), ci.lower, ci.upper));
                    }
                }
                FigureKind::RepeatedDelta | FigureKind::Comparison => {
                    for &delta in opts.delta_grid.values() {
                        let s = res.spread(variant, figure.target, delta);
                        rows.push(row(None, delta, s.mean, s.q025, s.q975));
                    }
                }
                FigureKind::Bounds => {
                    let rec = res.records_for(variant).next().expect("one replication");
                    let est = point_estimate(rec);
                    for &gamma in opts.gamma_grid.values() {
                        let b = bound_ate(&est, BiasBound::Symmetric(gamma), opts.bound_form)?;
                        rows.push(row(Some(0), gamma, rec.overall, b.lower, b.upper));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Minimal estimate carrying what [`bound_ate`] reads.
fn point_estimate(rec: &ReplicateRecord) -> crate::transport::AteEstimate {
    use crate::transport::{AteEstimate, StudyEffect};
    AteEstimate {
        variant: rec.variant,
        overall: rec.overall,
        studies: vec![
            StudyEffect {
                study: 0,
                label: OBSERVED_STUDY,
                ate: f64::NAN,
                weight: 1.0 - rec.missing_mass,
                n_rows: 0,
                outcome_observed: true,
            },
            StudyEffect {
                study: 1,
                label: MISSING_STUDY,
                ate: rec.missing,
                weight: rec.missing_mass,
                n_rows: 0,
                outcome_observed: false,
            },
        ],
        diagnostics: vec![],
    }
}
