//! Command-line front end: `fit`, `profile`, `diagnose`, `simulate`,
//! `describe` and `run`.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vbgrowth::diagnostics::{self, RcEntry};
use vbgrowth::estimator::{self, nu_grid};
use vbgrowth::io::{self, SyntheticOptions};
use vbgrowth::report::{self, FamilyFailure, FitSummary, ProfileSummary, RunConfig, SCHEMA_VERSION};
use vbgrowth::{CurvatureMode, Family, GrowthDataset, InfluenceReport, ModelSpec, ThetaVB};

/// Von Bertalanffy growth curves under scale-mixture skew-normal errors,
/// with local-influence diagnostics.
#[derive(Debug, Parser)]
#[command(name = "vbgrowth", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for multi-start perturbations and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Benchmark multiplier: c = mean(B) + tau * sd(B).
    #[arg(long, global = true, default_value_t = 2.0)]
    tau: f64,
    #[arg(long, global = true, default_value_t = 3.0)]
    nu_min: f64,
    #[arg(long, global = true, default_value_t = 60.0)]
    nu_max: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    nu_step: f64,
    /// Confidence-band level is 1 - alpha.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated subset of N, SN, T, ST.
    #[arg(long, global = true, value_delimiter = ',', default_value = "N,SN,T,ST")]
    families: Vec<Family>,
    /// Per-observation curvature: along basis vectors or from d_max.
    #[arg(long, global = true, value_enum, default_value_t = Curvature::Basis)]
    curvature: Curvature,
    /// Optimizer starts per fit.
    #[arg(long, global = true, default_value_t = 5)]
    n_starts: usize,
    /// Suppress the human-readable summary on stdout.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Curvature {
    Basis,
    Dmax,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit each family; mixture families are profiled over ν unless --nu is given.
    Fit {
        input: PathBuf,
        /// Fixed ν for T and ST.
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Profile log-likelihood over the ν grid for T and ST.
    Profile { input: PathBuf },
    /// Fit, flag influential observations, refit without them and report relative changes.
    Diagnose { input: PathBuf },
    /// Simulate an age,length CSV from a VB model with SMSN errors.
    Simulate(SimulateArgs),
    /// Length statistics by age category.
    Describe { input: PathBuf },
    /// Full protocol: profile, fit, diagnose, refit, rank by AIC.
    Run { input: PathBuf },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "ST")]
    family: Family,
    /// Degrees of freedom for T and ST.
    #[arg(long, default_value_t = 51.0)]
    nu: f64,
    #[arg(long, default_value_t = 2687)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    age_min: f64,
    #[arg(long, default_value_t = 61.0)]
    age_max: f64,
    #[arg(long, default_value_t = 35.137)]
    l_inf: f64,
    #[arg(long, default_value_t = 0.083)]
    k: f64,
    #[arg(long, default_value_t = -3.075, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 38.087)]
    sigma2: f64,
    #[arg(long, default_value_t = -0.705, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 0.873, allow_hyphen_values = true)]
    lambda: f64,
    /// Clip simulated lengths at this positive floor.
    #[arg(long)]
    length_floor: Option<f64>,
    /// Output file; defaults to <out>/synthetic.csv.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// `print!` unless `--quiet`.
macro_rules! say {
    ($g:expr, $($arg:tt)*) => {
        if !$g.quiet {
            print!($($arg)*);
        }
    };
}

macro_rules! sayln {
    ($g:expr, $($arg:tt)*) => {
        if !$g.quiet {
            println!($($arg)*);
        }
    };
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn invalid(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        err: err.into(),
    }
}

fn failed(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        err: err.into(),
    }
}

/// `Ok(true)` when every family succeeded.
type Outcome = Result<bool, Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 partial or runtime failure, 2 invalid
/// input or configuration.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    // a second call in the same process keeps the first logger
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(f) => {
            eprintln!("error: {}", chain(&f.err));
            f.code
        }
    }
}

/// Error chain joined by `: `, skipping causes the previous message already quotes.
fn chain(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if prev.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}

fn dispatch(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Fit { input, nu } => cmd_fit(g, input, *nu),
        Command::Profile { input } => cmd_profile(g, input),
        Command::Diagnose { input } => cmd_diagnose(g, input),
        Command::Simulate(args) => cmd_simulate(g, args),
        Command::Describe { input } => cmd_describe(g, input),
        Command::Run { input } => cmd_run(g, input),
    }
}

fn run_config(g: &Global, input: &Path) -> Result<RunConfig, Failure> {
    if !(g.nu_step > 0.0) || !(g.nu_min <= g.nu_max) {
        return Err(invalid(anyhow!(
            "nu grid needs nu-min <= nu-max and a positive step (got {}..{} by {})",
            g.nu_min,
            g.nu_max,
            g.nu_step
        )));
    }
    let mut families: Vec<Family> = Vec::new();
    for &f in &g.families {
        if !families.contains(&f) {
            families.push(f);
        }
    }
    let mut cfg = RunConfig::new(input);
    cfg.families = families;
    cfg.tau = g.tau;
    cfg.alpha = g.alpha;
    cfg.curvature = match g.curvature {
        Curvature::Basis => CurvatureMode::Basis,
        Curvature::Dmax => CurvatureMode::DMax,
    };
    cfg.fit.nu_grid = nu_grid(g.nu_min, g.nu_max, g.nu_step);
    cfg.fit.seed = g.seed;
    cfg.fit.n_starts = g.n_starts;
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn load(g: &Global, input: &Path) -> Result<(RunConfig, GrowthDataset), Failure> {
    let cfg = run_config(g, input)?;
    Ok((cfg, read_input(input)?))
}

fn read_input(input: &Path) -> Result<GrowthDataset, Failure> {
    io::load_csv(input).map_err(invalid)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(failed)?;
    let path = dir.join(name);
    fs::write(&path, body)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(failed)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let body = serde_json::to_string_pretty(value).map_err(failed)? + "\n";
    write_file(dir, name, &body)
}

fn record_failure(failures: &mut Vec<FamilyFailure>, family: Family, err: impl std::fmt::Display) {
    eprintln!("{family}: {err}");
    failures.push(FamilyFailure {
        family,
        error: err.to_string(),
    });
}

fn finish(n_ok: usize, failures: &[FamilyFailure]) -> Outcome {
    if n_ok == 0 {
        return Err(failed(anyhow!("every family failed")));
    }
    Ok(failures.is_empty())
}

#[derive(Serialize)]
struct FitOutput {
    schema_version: u32,
    n: usize,
    fits: Vec<FitSummary>,
    failures: Vec<FamilyFailure>,
}

fn cmd_fit(g: &Global, input: &Path, nu: Option<f64>) -> Outcome {
    let (cfg, data) = load(g, input)?;
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for &family in &cfg.families {
        let fitted = match (family.is_mixture(), nu) {
            (true, Some(v)) => {
                let spec = ModelSpec::new(family, Some(v)).map_err(invalid)?;
                estimator::fit(&spec, &data, &cfg.fit)
            }
            _ => report::fit_family(family, &data, &cfg.fit).map(|(f, _)| f),
        };
        let fit = match fitted {
            Ok(f) => f,
            Err(e) => {
                record_failure(&mut failures, family, e);
                continue;
            }
        };
        match estimator::confidence_band(&fit, &report::band_ages(&data, cfg.curve_points), cfg.alpha) {
            Ok(band) => {
                write_file(
                    &g.out,
                    &format!("curve_{}.tsv", family.label()),
                    &report::curve_table(&band),
                )?;
            }
            Err(e) => log::warn!("{family}: confidence band: {e}"),
        }
        let residuals = report::residuals(&fit.theta_hat, &data);
        write_file(
            &g.out,
            &format!("residuals_{}.tsv", family.label()),
            &report::residual_table(&residuals),
        )?;
        fits.push(FitSummary::from_fit(&fit).map_err(failed)?);
    }
    say!(g, "{}", fit_text(&fits));
    let n_ok = fits.len();
    let out = FitOutput {
        schema_version: SCHEMA_VERSION,
        n: data.len(),
        fits,
        failures,
    };
    write_json(&g.out, "fits.json", &out)?;
    finish(n_ok, &out.failures)
}

fn fit_text(fits: &[FitSummary]) -> String {
    let mut s = String::new();
    for f in fits {
        let nu = f.nu.map(|v| format!(" (nu = {v})")).unwrap_or_default();
        let _ = writeln!(s, "[{}]{nu}", f.family);
        for e in &f.estimates {
            let se = e.std_error.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "  {:<7} {:>12.4}  se {se}", e.param.name(), e.estimate);
        }
        let _ = writeln!(s, "  loglik {:.3}  q {}  AIC {:.3}", f.loglik, f.q, f.aic);
    }
    s
}

#[derive(Serialize)]
struct ProfileEntry {
    family: Family,
    profile: ProfileSummary,
    fit: FitSummary,
}

#[derive(Serialize)]
struct ProfileOutput {
    schema_version: u32,
    n: usize,
    profiles: Vec<ProfileEntry>,
    failures: Vec<FamilyFailure>,
}

fn cmd_profile(g: &Global, input: &Path) -> Outcome {
    let (cfg, data) = load(g, input)?;
    let families: Vec<Family> = cfg.families.iter().copied().filter(|f| f.is_mixture()).collect();
    if families.is_empty() {
        return Err(invalid(anyhow!("profiling needs T or ST among --families")));
    }
    let mut profiles = Vec::new();
    let mut failures = Vec::new();
    for family in families {
        match estimator::profile_nu(family, &data, &cfg.fit) {
            Ok(p) => {
                let summary = ProfileSummary::from(&p);
                write_file(
                    &g.out,
                    &format!("profile_{}.tsv", family.label()),
                    &report::profile_table(&summary),
                )?;
                sayln!(g, "{family}: best nu = {} (loglik {:.3})", p.best_nu, p.best_fit.loglik);
                profiles.push(ProfileEntry {
                    family,
                    profile: summary,
                    fit: FitSummary::from_fit(&p.best_fit).map_err(failed)?,
                });
            }
            Err(e) => record_failure(&mut failures, family, e),
        }
    }
    let n_ok = profiles.len();
    let out = ProfileOutput {
        schema_version: SCHEMA_VERSION,
        n: data.len(),
        profiles,
        failures,
    };
    write_json(&g.out, "profile.json", &out)?;
    finish(n_ok, &out.failures)
}

#[derive(Serialize)]
struct DiagnoseEntry {
    family: Family,
    fit: FitSummary,
    influence: InfluenceReport,
    filtered_fit: FitSummary,
    rc: Vec<RcEntry>,
    n_filtered: usize,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    schema_version: u32,
    n: usize,
    tau: f64,
    families: Vec<DiagnoseEntry>,
    failures: Vec<FamilyFailure>,
}

fn cmd_diagnose(g: &Global, input: &Path) -> Outcome {
    let (cfg, data) = load(g, input)?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for &family in &cfg.families {
        let result = report::fit_family(family, &data, &cfg.fit).and_then(|(fit, _)| {
            let inf = diagnostics::influence_analysis_with(&fit, &data, cfg.tau, cfg.curvature)?;
            let (filtered, rc) = diagnostics::filter_and_refit(&fit, &data, &inf, &cfg.fit)?;
            Ok((fit, inf, filtered, rc))
        });
        let (fit, inf, filtered, rc) = match result {
            Ok(r) => r,
            Err(e) => {
                record_failure(&mut failures, family, e);
                continue;
            }
        };
        write_file(
            &g.out,
            &format!("influence_{}.tsv", family.label()),
            &report::influence_table(&inf),
        )?;
        let rc_text: Vec<String> = rc
            .entries
            .iter()
            .map(|e| format!("{} {:.2}%", e.param.name(), e.rc_percent))
            .collect();
        sayln!(
            g,
            "{family}: {} influential (benchmark {:.5}); RC {}",
            inf.influential.len(),
            inf.benchmark,
            rc_text.join(", ")
        );
        entries.push(DiagnoseEntry {
            family,
            fit: FitSummary::from_fit(&fit).map_err(failed)?,
            influence: inf,
            filtered_fit: FitSummary::from_fit(&filtered).map_err(failed)?,
            rc: rc.entries,
            n_filtered: rc.n_filtered,
        });
    }
    let n_ok = entries.len();
    let out = DiagnoseOutput {
        schema_version: SCHEMA_VERSION,
        n: data.len(),
        tau: cfg.tau,
        families: entries,
        failures,
    };
    write_json(&g.out, "diagnostics.json", &out)?;
    finish(n_ok, &out.failures)
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> Outcome {
    if a.n == 0 {
        return Err(invalid(anyhow!("--n must be positive")));
    }
    if !(a.age_min > 0.0 && a.age_min <= a.age_max) {
        return Err(invalid(anyhow!("ages must satisfy 0 < age-min <= age-max")));
    }
    let spec = ModelSpec::new(a.family, a.family.is_mixture().then_some(a.nu)).map_err(invalid)?;
    let theta = ThetaVB::new(a.l_inf, a.k, a.t0, a.sigma2, a.rho, a.lambda).map_err(invalid)?;
    let ages = io::uniform_ages(a.n, a.age_min, a.age_max, g.seed);
    let opts = SyntheticOptions {
        length_floor: a.length_floor,
    };
    let data = io::generate_synthetic_with(&theta, &spec, &ages, g.seed.wrapping_add(1), &opts).map_err(invalid)?;
    let path = a.output.clone().unwrap_or_else(|| g.out.join("synthetic.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(failed)?;
    }
    io::save_csv(&data, &path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(failed)?;
    sayln!(g, "wrote {} observations from {spec} to {}", data.len(), path.display());
    Ok(true)
}

fn cmd_describe(g: &Global, input: &Path) -> Outcome {
    let data = read_input(input)?;
    let bins = io::describe(&data);
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"));
    let mut table = String::from("age\tn\tmin\tmax\tmean\tsd\tproportion\n");
    sayln!(
        g,
        "{:<9} {:>6} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "age",
        "n",
        "min",
        "max",
        "mean",
        "sd",
        "prop"
    );
    for b in &bins {
        sayln!(
            g,
            "{:<9} {:>6} {:>8} {:>8} {:>8} {:>8} {:>7.4}",
            b.label,
            b.n,
            fmt(b.min),
            fmt(b.max),
            fmt(b.mean),
            fmt(b.sd),
            b.proportion
        );
        let raw = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            b.label,
            b.n,
            raw(b.min),
            raw(b.max),
            raw(b.mean),
            raw(b.sd),
            b.proportion
        );
    }
    sayln!(g, "total {:>12}", data.len());
    write_file(&g.out, "describe.tsv", &table)?;
    Ok(true)
}

fn cmd_run(g: &Global, input: &Path) -> Outcome {
    let (cfg, data) = load(g, input)?;
    let rep = report::run_protocol_on(&data, &cfg).map_err(failed)?;
    let files = report::write_outputs(&rep, &g.out).map_err(failed)?;
    say!(g, "{}", report::summary_text(&rep));
    log::info!("wrote {} files to {}", files.len(), g.out.display());
    finish(rep.families.len(), &rep.failures)
}
