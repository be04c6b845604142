//! Batch workflows behind the `proxyport` binary.
//!
//! Every file written carries a `# proxyport version=.. seed=.. config_hash=..`
//! first line and every run leaves a `run.json` beside its outputs. Errors
//! end the process with one `error: kind=.. message=..` line on stderr and a
//! kind-specific exit code.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use proxyport::bootstrap::{bootstrap_estimate, BootstrapPlan, BootstrapResult, Stratification};
use proxyport::data::{load_dataset, validate_assumptions, CheckStatus, ProxyConfig, StudyDataset};
use proxyport::regression::RegressionMode;
use proxyport::report;
use proxyport::sensitivity::{critical_delta, scan_delta_from, scan_gamma_from, BoundForm, Grid};
use proxyport::simlab::{self, Figure, ReproduceOptions, SimScenario};
use proxyport::transport::{estimate, ModelSpec, Variant};
use proxyport::Error;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;
pub const EXIT_ESTIMATION: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "proxyport", version, about = "Transport treatment effects through outcome proxies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    /// Suppress warnings.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate study-specific and overall effects.
    Estimate(EstimateArgs),
    /// Constant-bias scan over a delta grid.
    Sensitivity(SensitivityArgs),
    /// Bounded-bias intervals over a gamma grid.
    Bounds(BoundsArgs),
    /// Generate one simulated dataset from a scenario file.
    Simulate(SimulateArgs),
    /// Recompute one simulation figure as a tidy table.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelKind {
    Linear,
    Saturated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrataArg {
    Study,
    StudyArm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    Paper,
    Weighted,
}

impl From<FormArg> for BoundForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Paper => BoundForm::Unweighted,
            FormArg::Weighted => BoundForm::Weighted,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Long-format CSV: study, arm, y, w1.., t1..
    #[arg(long)]
    data: PathBuf,

    /// Proxy configuration; defaults to all shared proxies and all donors.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, default_value = ".")]
    out: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Bootstrap replicates; 0 skips the bootstrap.
    #[arg(long, default_value_t = 1000)]
    n_boot: usize,

    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[arg(long, value_enum, default_value = "study")]
    strata: StrataArg,

    #[arg(long, value_parser = parse_variant, default_value = "proxy")]
    variant: Variant,

    #[arg(long, value_enum, default_value = "linear")]
    model: ModelKind,

    /// Highest order of covariate/proxy products in linear models.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    interactions: u8,

    /// Distinct-level limit per predictor in saturated models.
    #[arg(long, default_value_t = 64)]
    max_levels: usize,

    /// Ridge penalty on non-intercept coefficients in linear models.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long, default_value = "-3:3:1", allow_hyphen_values = true)]
    delta_grid: String,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long, default_value = "0:5:1", allow_hyphen_values = true)]
    gamma_grid: String,

    #[arg(long, value_enum, default_value = "paper")]
    bound_form: FormArg,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,

    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value_t = 0)]
    replicate: usize,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
    figure: u8,

    #[arg(long, default_value = ".")]
    out: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 1000)]
    reps: usize,

    #[arg(long, default_value_t = 1000)]
    n_boot: usize,

    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[arg(long, default_value = "-3:3:1", allow_hyphen_values = true)]
    delta_grid: String,

    #[arg(long, default_value = "0:5:1", allow_hyphen_values = true)]
    gamma_grid: String,

    #[arg(long, value_enum, default_value = "paper")]
    bound_form: FormArg,

    /// Also render an SVG next to the CSV.
    #[arg(long)]
    plot: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code and machine-readable kind.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, kind: "io", message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e.root() {
            Error::Io(_) => (EXIT_IO, "io"),
            Error::Parse { .. } => (EXIT_DATA, "parse"),
            Error::Structural(_) | Error::MissingColumn(_) | Error::NonFinite(_) => (EXIT_DATA, "data"),
            Error::Config(_) => (EXIT_DATA, "config"),
            Error::InvalidArgument(_) => (EXIT_USAGE, "usage"),
            Error::RankDeficient { .. }
            | Error::TooFewRows { .. }
            | Error::TooManyLevels { .. }
            | Error::UnseenCell { .. }
            | Error::UnstableBootstrap { .. } => (EXIT_ESTIMATION, "estimation"),
            Error::Stratum { .. } => unreachable!("root strips strata"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

struct Ctx {
    verbose: bool,
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    fn warn(&self, msg: &str) {
        if !self.quiet {
            eprintln!("warning: {msg}");
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            return report_failure(&Failure::usage(first_line(&e.to_string())));
        }
    };
    let ctx = Ctx { verbose: cli.verbose, quiet: cli.quiet };
    let result = match cli.threads {
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &ctx)),
            Err(e) => Err(Failure::usage(e.to_string())),
        },
        None => dispatch(cli.command, &ctx),
    };
    match result {
        Ok(()) => 0,
        Err(f) => report_failure(&f),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string()
}

fn report_failure(f: &Failure) -> i32 {
    let message = f.message.replace(['\n', '\r'], " ");
    eprintln!("error: kind={} message={message}", f.kind);
    f.code
}

fn dispatch(cmd: Command, ctx: &Ctx) -> Outcome<()> {
    match cmd {
        Command::Estimate(a) => cmd_estimate(a, ctx),
        Command::Sensitivity(a) => cmd_sensitivity(a, ctx),
        Command::Bounds(a) => cmd_bounds(a, ctx),
        Command::Simulate(a) => cmd_simulate(a, ctx),
        Command::Reproduce(a) => cmd_reproduce(a, ctx),
    }
}

fn read_file(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn prepare_out(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

/// Writes `path` through `body`, creating or truncating it.
fn write_file<F>(path: &Path, body: F) -> Outcome<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> proxyport::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Failure::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| match e {
        Error::Io(io) => Failure::io(path, io),
        other => other.into(),
    })?;
    w.flush().map_err(|e| Failure::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run provenance shared by every output file of one invocation.
struct Meta {
    seed: u64,
    config_hash: String,
}

impl Meta {
    /// `canonical` lists every resolved setting; input files enter through
    /// their digests.
    fn new(seed: u64, canonical: &[String]) -> Self {
        let mut h = Sha256::new();
        for line in canonical {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        Self { seed, config_hash: hex(&h.finalize()) }
    }

    fn header(&self) -> Vec<String> {
        vec![format!(
            "proxyport version={} seed={} config_hash={}",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.config_hash
        )]
    }

    fn write_json(&self, dir: &Path, command: &str, outputs: &[&str], extra: serde_json::Value) -> Outcome<()> {
        let mut doc = json!({
            "tool": "proxyport",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "outputs": outputs,
        });
        if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
            obj.extend(more);
        }
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(&doc).expect("plain json") + "\n";
        fs::write(&path, text).map_err(|e| Failure::io(&path, e))
    }
}

fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

struct Inputs {
    data: StudyDataset,
    cfg: ProxyConfig,
    spec: ModelSpec,
    plan: Option<BootstrapPlan>,
    canonical: Vec<String>,
}

fn load_inputs(c: &Common, command: &str, ctx: &Ctx) -> Outcome<Inputs> {
    let raw = read_file(&c.data)?;
    let data = load_dataset(raw.as_slice(), None)?;
    ctx.progress(&format!("loaded {} rows in {} studies", data.n_rows(), data.n_studies()));
    let cfg = match &c.config {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?)
                .map_err(|_| Failure { code: EXIT_DATA, kind: "config", message: format!("{} is not UTF-8", p.display()) })?;
            ProxyConfig::parse(&text, &data)?
        }
        None => ProxyConfig::default_for(&data)?,
    };
    let report = validate_assumptions(&data, &cfg);
    for check in report.checks.iter().filter(|c| c.status == CheckStatus::Warn) {
        ctx.warn(&format!("{}: {}", check.name, check.offending.join("; ")));
    }
    if report.blocks_estimation() {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| format!("{} ({})", c.name, c.offending.join("; ")))
            .collect();
        return Err(Failure { code: EXIT_VALIDATION, kind: "validation", message: failed.join(", ") });
    }
    let mode = match c.model {
        ModelKind::Linear => {
            if !(c.ridge >= 0.0 && c.ridge.is_finite()) {
                return Err(Failure::usage("--ridge must be finite and >= 0"));
            }
            RegressionMode::LeastSquares { ridge: c.ridge }
        }
        ModelKind::Saturated => RegressionMode::Saturated { max_levels: c.max_levels },
    };
    let spec = ModelSpec { interaction_order: c.interactions, mode, ..ModelSpec::default() };
    let plan = (c.n_boot > 0).then_some(BootstrapPlan {
        replicates: c.n_boot,
        seed: c.seed,
        level: c.level,
        stratification: match c.strata {
            StrataArg::Study => Stratification::Study,
            StrataArg::StudyArm => Stratification::StudyArm,
        },
    });
    if let Some(p) = &plan {
        p.validate()?;
    }
    let canonical = vec![
        format!("command={command}"),
        format!("data_sha256={}", digest(&raw)),
        format!("config={}", cfg.to_text(&data).replace('\n', ";")),
        format!("variant={}", c.variant),
        format!("model={spec:?}"),
        format!("bootstrap={plan:?}"),
    ];
    prepare_out(&c.out)?;
    let out_report = c.out.join("validation.csv");
    let meta = Meta::new(c.seed, &canonical);
    write_file(&out_report, |w| report::write_validation(w, &meta.header(), &report))?;
    Ok(Inputs { data, cfg, spec, plan, canonical })
}

fn fit_and_bootstrap(inp: &Inputs, variant: Variant, ctx: &Ctx) -> Outcome<(proxyport::AteEstimate, Option<BootstrapResult>)> {
    match &inp.plan {
        None => Ok((estimate(&inp.data, &inp.cfg, &inp.spec, variant)?, None)),
        Some(plan) => {
            ctx.progress(&format!("bootstrapping {} replicates", plan.replicates));
            let b = bootstrap_estimate(&inp.data, &inp.cfg, &inp.spec, variant, plan)?;
            if !b.failed.is_empty() {
                ctx.warn(&format!("{} bootstrap replicates failed and were dropped", b.failed.len()));
            }
            Ok((b.point.clone(), Some(b)))
        }
    }
}

fn cmd_estimate(a: EstimateArgs, ctx: &Ctx) -> Outcome<()> {
    let c = &a.common;
    let inp = load_inputs(c, "estimate", ctx)?;
    let meta = Meta::new(c.seed, &inp.canonical);
    let (est, boot) = fit_and_bootstrap(&inp, c.variant, ctx)?;
    write_file(&c.out.join("ate.csv"), |w| {
        report::write_estimates(w, &meta.header(), &inp.data, &[(&est, boot.as_ref())])
    })?;
    meta.write_json(&c.out, "estimate", &["ate.csv", "validation.csv"], json!({ "overall": est.overall }))
}

fn cmd_sensitivity(a: SensitivityArgs, ctx: &Ctx) -> Outcome<()> {
    let c = &a.common;
    let grid = Grid::parse(&a.delta_grid)?;
    let mut inp = load_inputs(c, "sensitivity", ctx)?;
    inp.canonical.push(format!("delta_grid={:?}", grid.values()));
    let meta = Meta::new(c.seed, &inp.canonical);
    let (est, boot) = fit_and_bootstrap(&inp, c.variant, ctx)?;
    let result = scan_delta_from(&est, &inp.cfg, &grid, boot.as_ref());
    write_file(&c.out.join("ate.csv"), |w| {
        report::write_estimates(w, &meta.header(), &inp.data, &[(&est, boot.as_ref())])
    })?;
    write_file(&c.out.join("sensitivity.csv"), |w| {
        report::write_sensitivity(w, &meta.header(), &inp.data, std::slice::from_ref(&result))
    })?;
    let critical = boot.as_ref().map(|_| critical_delta(&result)).transpose()?.flatten();
    meta.write_json(
        &c.out,
        "sensitivity",
        &["ate.csv", "sensitivity.csv", "validation.csv"],
        json!({ "missing_mass": result.missing_mass, "critical_delta": critical }),
    )
}

fn cmd_bounds(a: BoundsArgs, ctx: &Ctx) -> Outcome<()> {
    let c = &a.common;
    let grid = Grid::parse(&a.gamma_grid)?;
    let form = BoundForm::from(a.bound_form);
    let mut inp = load_inputs(c, "bounds", ctx)?;
    inp.canonical.push(format!("gamma_grid={:?}", grid.values()));
    inp.canonical.push(format!("bound_form={}", form.tag()));
    let meta = Meta::new(c.seed, &inp.canonical);
    let (est, boot) = fit_and_bootstrap(&inp, c.variant, ctx)?;
    let result = scan_gamma_from(&est, &grid, form, boot.as_ref())?;
    write_file(&c.out.join("ate.csv"), |w| {
        report::write_estimates(w, &meta.header(), &inp.data, &[(&est, boot.as_ref())])
    })?;
    write_file(&c.out.join("bounds.csv"), |w| {
        report::write_sensitivity(w, &meta.header(), &inp.data, std::slice::from_ref(&result))
    })?;
    meta.write_json(
        &c.out,
        "bounds",
        &["ate.csv", "bounds.csv", "validation.csv"],
        json!({ "missing_mass": result.missing_mass }),
    )
}

fn cmd_simulate(a: SimulateArgs, ctx: &Ctx) -> Outcome<()> {
    let raw = read_file(&a.scenario)?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| Failure { code: EXIT_DATA, kind: "config", message: "scenario is not UTF-8".into() })?;
    let mut sc = SimScenario::parse(&text)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    let meta = Meta::new(
        sc.seed,
        &[
            "command=simulate".into(),
            format!("scenario_sha256={}", digest(&raw)),
            format!("scenario={sc:?}"),
            format!("replicate={}", a.replicate),
        ],
    );
    prepare_out(&a.out)?;
    ctx.progress(&format!("simulating {} rows per study", sc.n));
    let draw = simlab::simulate_with_truth(&sc, a.replicate)?;
    let truth = simlab::truth(&sc);
    write_file(&a.out.join("data.csv"), |w| {
        for line in meta.header() {
            writeln!(w, "# {line}")?;
        }
        draw.data.write_csv(w)
    })?;
    write_file(&a.out.join("counterfactuals.csv"), |w| {
        report::write_counterfactuals(w, &meta.header(), &draw.sidecar)
    })?;
    write_file(&a.out.join("truth.csv"), |w| report::write_truth(w, &meta.header(), &truth))?;
    meta.write_json(
        &a.out,
        "simulate",
        &["data.csv", "counterfactuals.csv", "truth.csv"],
        json!({ "replicate": a.replicate, "truth_overall": truth.overall }),
    )
}

fn cmd_reproduce(a: ReproduceArgs, ctx: &Ctx) -> Outcome<()> {
    let figure = Figure::get(a.figure)?;
    let opts = ReproduceOptions {
        reps: a.reps,
        seed: a.seed,
        n_boot: a.n_boot,
        level: a.level,
        delta_grid: Grid::parse(&a.delta_grid)?,
        gamma_grid: Grid::parse(&a.gamma_grid)?,
        bound_form: a.bound_form.into(),
    };
    if opts.reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    let meta = Meta::new(a.seed, &["command=reproduce".into(), format!("figure={figure:?}"), format!("options={opts:?}")]);
    prepare_out(&a.out)?;
    ctx.progress(&format!("reproducing figure {}", figure.id));
    let rows = simlab::reproduce(figure, &opts)?;
    let csv_name = format!("figure{}.csv", figure.id);
    write_file(&a.out.join(&csv_name), |w| report::write_tidy(w, &meta.header(), &rows))?;
    let mut outputs = vec![csv_name];
    if a.plot {
        let svg_name = format!("figure{}.svg", figure.id);
        let x_label = if figure.kind == simlab::FigureKind::Bounds { "gamma" } else { "delta" };
        let svg = report::render_svg(&format!("Figure {} (n = {} per study)", figure.id, figure.n), x_label, &rows);
        let path = a.out.join(&svg_name);
        fs::write(&path, svg).map_err(|e| Failure::io(&path, e))?;
        outputs.push(svg_name);
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    meta.write_json(&a.out, "reproduce", &names, json!({ "figure": figure.id }))
}
