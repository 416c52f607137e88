//! End-to-end protocol: per family, profile ν (mixture families) and fit,
//! run the influence analysis, refit without influential cases, compute
//! relative changes, rank families by AIC, and emit a JSON report plus
//! TSV plot-data sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, CurvatureMode, InfluenceReport, RCReport};
use crate::error::{Error, Result};
use crate::estimator::{self, BandPoint, FitConfig, FitResult, ProfileResult};
use crate::family::{Family, ModelSpec};
use crate::io;
use crate::model::{GrowthDataset, Param, ThetaVB};
use crate::optim::Termination;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub families: Vec<Family>,
    pub tau: f64,
    pub alpha: f64,
    pub curvature: CurvatureMode,
    /// Number of ages at which the confidence band is tabulated.
    pub curve_points: usize,
    pub fit: FitConfig,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            families: Family::ALL.to_vec(),
            tau: 2.0,
            alpha: 0.05,
            curvature: CurvatureMode::Basis,
            curve_points: 101,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::InvalidParameter("no families selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.curve_points < 2 {
            return Err(Error::InvalidParameter("curve_points must be at least 2".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub param: Param,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: Family,
    pub nu: Option<f64>,
    pub theta: ThetaVB,
    pub estimates: Vec<ParamEstimate>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub loglik: f64,
    pub q: usize,
    pub aic: f64,
    pub n_used: usize,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub grad_norm: f64,
    pub info_pd: bool,
    pub at_bound: Vec<Param>,
    pub info_matrix: Vec<Vec<f64>>,
}

impl FitSummary {
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let m = crate::smsn::mix_moments(&fit.spec)?;
        Ok(Self {
            family: fit.spec.family,
            nu: fit.spec.nu,
            theta: fit.theta_hat,
            estimates: fit
                .params
                .iter()
                .map(|&p| ParamEstimate {
                    param: p,
                    estimate: fit.theta_hat.get(p),
                    std_error: fit.std_error(p),
                })
                .collect(),
            kappa1: m.kappa1,
            kappa2: m.kappa2,
            loglik: fit.loglik,
            q: fit.q(),
            aic: fit.aic,
            n_used: fit.n_used,
            converged: fit.converged,
            termination: fit.termination,
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
            info_pd: fit.info_pd,
            at_bound: fit.at_bound.clone(),
            info_matrix: fit.info_matrix.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub grid: Vec<f64>,
    pub logliks: Vec<Option<f64>>,
    pub best_nu: f64,
}

impl From<&ProfileResult> for ProfileSummary {
    fn from(p: &ProfileResult) -> Self {
        Self {
            grid: p.grid.clone(),
            logliks: p.logliks.clone(),
            best_nu: p.best_nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub index: usize,
    pub age: f64,
    pub length: f64,
    pub fitted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    pub profile: Option<ProfileSummary>,
    pub fit: FitSummary,
    pub influence: Option<InfluenceReport>,
    pub filtered_fit: Option<FitSummary>,
    pub rc: Option<RCReport>,
    pub band: Vec<BandPoint>,
    pub residuals: Vec<ResidualRow>,
    /// Stages that could not be completed for this family.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicRow {
    pub family: Family,
    pub nu: Option<f64>,
    pub loglik: f64,
    pub q: usize,
    pub aic: f64,
    pub delta_aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFailure {
    pub family: Family,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub input: String,
    pub families: Vec<Family>,
    pub nu_grid: Vec<f64>,
    pub tau: f64,
    pub alpha: f64,
    pub curvature: CurvatureMode,
    pub seed: u64,
    pub n_starts: usize,
    pub grad_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub n: usize,
    pub settings: RunSettings,
    pub families: Vec<FamilyReport>,
    /// Ascending AIC.
    pub aic_ranking: Vec<AicRow>,
    pub failures: Vec<FamilyFailure>,
}

impl RunReport {
    pub fn family(&self, f: Family) -> Option<&FamilyReport> {
        self.families.iter().find(|r| r.family == f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Loads `config.input` and runs the protocol on it.
pub fn run_protocol(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let data = io::load_csv(&config.input)?;
    run_protocol_on(&data, config)
}

/// Best fit for one family: profile ν for mixture families, direct fit otherwise.
pub fn fit_family(
    family: Family,
    data: &GrowthDataset,
    config: &FitConfig,
) -> Result<(FitResult, Option<ProfileResult>)> {
    if family.is_mixture() {
        let p = estimator::profile_nu(family, data, config)?;
        Ok((p.best_fit.clone(), Some(p)))
    } else {
        let spec = ModelSpec::new(family, None)?;
        Ok((estimator::fit(&spec, data, config)?, None))
    }
}

/// `points` evenly spaced ages spanning the observed range.
pub fn band_ages(data: &GrowthDataset, points: usize) -> Vec<f64> {
    let lo = data.ages().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.ages().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn run_family(family: Family, data: &GrowthDataset, config: &RunConfig) -> Result<FamilyReport> {
    let (fit, profile) = fit_family(family, data, &config.fit)?;
    let mut notes = Vec::new();
    if !fit.at_bound.is_empty() {
        let names: Vec<&str> = fit.at_bound.iter().map(|p| p.name()).collect();
        notes.push(format!("estimate on the search-box boundary for {}", names.join(", ")));
    }

    let influence = match diagnostics::influence_analysis_with(&fit, data, config.tau, config.curvature) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("influence analysis: {e}"));
            None
        }
    };
    let (filtered_fit, rc) = match &influence {
        Some(inf) => match diagnostics::filter_and_refit(&fit, data, inf, &config.fit) {
            Ok((f, rc)) => (Some(FitSummary::from_fit(&f)?), Some(rc)),
            Err(e) => {
                notes.push(format!("filtered refit: {e}"));
                (None, None)
            }
        },
        None => (None, None),
    };
    let band = match estimator::confidence_band(&fit, &band_ages(data, config.curve_points), config.alpha) {
        Ok(b) => b,
        Err(e) => {
            notes.push(format!("confidence band: {e}"));
            Vec::new()
        }
    };
    let residuals = residuals(&fit.theta_hat, data);

    Ok(FamilyReport {
        family,
        profile: profile.as_ref().map(ProfileSummary::from),
        fit: FitSummary::from_fit(&fit)?,
        influence,
        filtered_fit,
        rc,
        band,
        residuals,
        notes,
    })
}

pub fn run_protocol_on(data: &GrowthDataset, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let mut families = Vec::new();
    let mut failures = Vec::new();
    for &family in &config.families {
        match run_family(family, data, config) {
            Ok(r) => families.push(r),
            Err(e) => {
                log::error!("{family}: {e}");
                failures.push(FamilyFailure {
                    family,
                    error: e.to_string(),
                });
            }
        }
    }

    let mut aic_ranking: Vec<AicRow> = families
        .iter()
        .map(|r| AicRow {
            family: r.family,
            nu: r.fit.nu,
            loglik: r.fit.loglik,
            q: r.fit.q,
            aic: r.fit.aic,
            delta_aic: 0.0,
        })
        .collect();
    aic_ranking.sort_by(|a, b| a.aic.total_cmp(&b.aic).then(a.family.cmp(&b.family)));
    if let Some(best) = aic_ranking.first().map(|r| r.aic) {
        aic_ranking.iter_mut().for_each(|r| r.delta_aic = r.aic - best);
    }

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        n: data.len(),
        settings: RunSettings {
            input: config.input.display().to_string(),
            families: config.families.clone(),
            nu_grid: config.fit.nu_grid.clone(),
            tau: config.tau,
            alpha: config.alpha,
            curvature: config.curvature,
            seed: config.fit.seed,
            n_starts: config.fit.n_starts,
            grad_tol: config.fit.grad_tol,
        },
        families,
        aic_ranking,
        failures,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `nu loglik`, one row per grid value; `NA` where the fit failed.
pub fn profile_table(p: &ProfileSummary) -> String {
    let mut s = String::from("nu\tloglik\n");
    for (nu, ll) in p.grid.iter().zip(&p.logliks) {
        let _ = writeln!(s, "{nu}\t{}", fmt_opt(*ll));
    }
    s
}

/// `age lower mean upper`.
pub fn curve_table(band: &[BandPoint]) -> String {
    let mut s = String::from("age\tlower\tmean\tupper\n");
    for b in band {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", b.age, b.lower, b.mean, b.upper);
    }
    s
}

/// `index B benchmark influential`, with `influential` 0 or 1.
pub fn influence_table(inf: &InfluenceReport) -> String {
    let mut s = String::from("index\tB\tbenchmark\tinfluential\n");
    let mut flagged = inf.influential.iter().peekable();
    for (t, b) in inf.b.iter().enumerate() {
        let hit = flagged.peek() == Some(&&t);
        if hit {
            flagged.next();
        }
        let _ = writeln!(s, "{t}\t{b}\t{}\t{}", inf.benchmark, u8::from(hit));
    }
    s
}

/// `index age length fitted residual`.
pub fn residual_table(rows: &[ResidualRow]) -> String {
    let mut s = String::from("index\tage\tlength\tfitted\tresidual\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.index, r.age, r.length, r.fitted, r.residual);
    }
    s
}

/// Observed minus fitted VB mean for every observation.
pub fn residuals(theta: &ThetaVB, data: &GrowthDataset) -> Vec<ResidualRow> {
    data.iter()
        .enumerate()
        .map(|(index, (age, length))| {
            let fitted = theta.vb_mean(age);
            ResidualRow {
                index,
                age,
                length,
                fitted,
                residual: length - fitted,
            }
        })
        .collect()
}

/// Writes `profile_<F>.tsv`, `curve_<F>.tsv`, `influence_<F>.tsv` and
/// `residuals_<F>.tsv` for every fitted family. Returns the files written.
pub fn emit_plot_data(report: &RunReport, outdir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = outdir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    for fr in &report.families {
        let tag = fr.family.label();
        if let Some(p) = &fr.profile {
            put(format!("profile_{tag}.tsv"), profile_table(p))?;
        }
        put(format!("curve_{tag}.tsv"), curve_table(&fr.band))?;
        if let Some(inf) = &fr.influence {
            put(format!("influence_{tag}.tsv"), influence_table(inf))?;
        }
        put(format!("residuals_{tag}.tsv"), residual_table(&fr.residuals))?;
    }
    Ok(written)
}

/// Writes `report.json` and the plot-data sidecars.
pub fn write_outputs(report: &RunReport, outdir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir)?;
    let json = outdir.join("report.json");
    fs::write(&json, report.to_json()?)?;
    let mut files = vec![json];
    files.extend(emit_plot_data(report, outdir)?);
    Ok(files)
}

/// Plain-text summary; every number printed here is also in the JSON report.
pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", report.n);
    for fr in &report.families {
        let f = &fr.fit;
        let nu = f.nu.map(|v| format!(" (nu = {v})")).unwrap_or_default();
        let _ = writeln!(s, "\n[{}]{nu}", fr.family);
        for e in &f.estimates {
            let se = e.std_error.map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "  {:<7} {:>12.4}  se {se}", e.param.name(), e.estimate);
        }
        let _ = writeln!(s, "  loglik {:.3}  q {}  AIC {:.3}", f.loglik, f.q, f.aic);
        if let Some(inf) = &fr.influence {
            let _ = writeln!(
                s,
                "  influence: benchmark {:.5}, {} influential",
                inf.benchmark,
                inf.influential.len()
            );
        }
        if let Some(rc) = &fr.rc {
            let parts: Vec<String> = rc
                .entries
                .iter()
                .map(|e| format!("{} {:.2}%", e.param.name(), e.rc_percent))
                .collect();
            let _ = writeln!(s, "  RC (n {} -> {}): {}", rc.n_full, rc.n_filtered, parts.join(", "));
        }
        for n in &fr.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }
    let _ = writeln!(s, "\nAIC ranking:");
    for (i, r) in report.aic_ranking.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {}. {:<2} AIC {:.3} (dAIC {:.3})",
            i + 1,
            r.family.label(),
            r.aic,
            r.delta_aic
        );
    }
    for f in &report.failures {
        let _ = writeln!(s, "FAILED {}: {}", f.family, f.error);
    }
    s
}
