//! Local influence under case-weight perturbation `ℓ(θ|ω) = Σ ω_t ℓ_t(θ)`.
//!
//! With `ω₀ = 1`, `H = ∂²ℓ(θ|ω)/∂θ∂ωᵀ` is the matrix of per-observation
//! scores, `F = Hᵀ J⁻¹ H`, the normal curvature along a unit direction `d`
//! is `C_d = 2|dᵀFd|`, and the conformal curvature is
//! `B_d = C_d / (2·√tr(F²))`, which lies in `[0, 1]`.
//!
//! `F` has rank at most `q`, so its spectrum is obtained from the `q × q`
//! matrix `G Gᵀ` with `G = L⁻¹H`, `J = LLᵀ`, rather than from the dense
//! `n × n` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{self, FitConfig, FitResult};
use crate::model::{self, GrowthDataset, Param};

/// How the per-observation conformal curvature is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    /// `B` along each standard basis direction `e_t`.
    #[default]
    Basis,
    /// Absolute components of the maximum-curvature direction `d_max`.
    DMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub b: Vec<f64>,
    pub m0_bar: f64,
    pub var_m0: f64,
    pub benchmark: f64,
    pub tau: f64,
    pub influential: Vec<usize>,
    pub d_max: Vec<f64>,
    /// `C` along `d_max`, i.e. `2·λ_max(F)`.
    pub c_max: f64,
    pub mode: CurvatureMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcEntry {
    pub param: Param,
    pub beta_full: f64,
    pub beta_filtered: f64,
    pub rc_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RCReport {
    pub entries: Vec<RcEntry>,
    pub n_full: usize,
    pub n_filtered: usize,
}

/// `|1 − filtered/full|·100`.
pub fn relative_change(full: f64, filtered: f64) -> f64 {
    (1.0 - filtered / full).abs() * 100.0
}

/// Relative change of `(L∞, K, t0)` between two parameter sets.
pub fn rc_from_betas(full: [f64; 3], filtered: [f64; 3], n_full: usize, n_filtered: usize) -> RCReport {
    let entries = [Param::LInf, Param::K, Param::T0]
        .iter()
        .enumerate()
        .map(|(i, &param)| RcEntry {
            param,
            beta_full: full[i],
            beta_filtered: filtered[i],
            rc_percent: relative_change(full[i], filtered[i]),
        })
        .collect();
    RCReport {
        entries,
        n_full,
        n_filtered,
    }
}

/// `q × n` matrix whose column `t` is `∂ℓ_t/∂θ` at `θ̂` over `fit.params`.
pub fn score_matrix(fit: &FitResult, data: &GrowthDataset) -> Result<DMatrix<f64>> {
    let active = Param::active(fit.spec.family);
    let rows = model::loglik_obs_grads(&fit.theta_hat, &fit.spec, data)?;
    let pos: Vec<usize> = fit
        .params
        .iter()
        .map(|p| {
            active
                .iter()
                .position(|a| a == p)
                .expect("fit parameter outside active set")
        })
        .collect();
    Ok(DMatrix::from_fn(fit.q(), data.len(), |i, t| rows[t][pos[i]]))
}

fn cholesky(j: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    j.clone().cholesky().ok_or(Error::SingularInformation)
}

/// `C_d = 2|dᵀ Hᵀ J⁻¹ H d|`.
pub fn normal_curvature(fit: &FitResult, h: &DMatrix<f64>, d: &[f64]) -> Result<f64> {
    if d.len() != h.ncols() {
        return Err(Error::InvalidParameter(format!(
            "direction has {} components for {} observations",
            d.len(),
            h.ncols()
        )));
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() < 1e-8) {
        return Err(Error::InvalidParameter(format!(
            "direction must be unit length, got {norm}"
        )));
    }
    let ch = cholesky(&fit.info())?;
    let hd = h * DVector::from_column_slice(d);
    let x = ch.solve(&hd);
    Ok(2.0 * hd.dot(&x).abs())
}

/// Conformal curvatures, benchmark and `d_max` from a score matrix and an
/// information matrix.
pub fn conformal_curvatures(
    h: &DMatrix<f64>,
    info: &DMatrix<f64>,
    tau: f64,
    mode: CurvatureMode,
) -> Result<InfluenceReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let n = h.ncols();
    if n < 2 {
        return Err(Error::InvalidData(
            "influence analysis needs at least two observations".into(),
        ));
    }
    let ch = cholesky(info)?;
    let g = ch.l().solve_lower_triangular(h).ok_or(Error::SingularInformation)?;
    let ggt = &g * g.transpose();
    let tr_f2 = ggt.iter().map(|v| v * v).sum::<f64>();

    let eig = SymmetricEigen::new(ggt);
    let (imax, lmax) =
        eig.eigenvalues.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    let mut d_max: Vec<f64> = (g.transpose() * eig.eigenvectors.column(imax))
        .iter()
        .copied()
        .collect();
    let dn = d_max.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pivot = d_max
        .iter()
        .copied()
        .fold(0.0, |a: f64, v| if v.abs() > a.abs() { v } else { a });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    if dn > 0.0 {
        d_max.iter_mut().for_each(|v| *v *= sign / dn);
    }

    let b: Vec<f64> = match mode {
        CurvatureMode::Basis => {
            let denom = tr_f2.sqrt();
            (0..n)
                .map(|t| {
                    if denom > 0.0 {
                        g.column(t).norm_squared() / denom
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        CurvatureMode::DMax => d_max.iter().map(|v| v.abs()).collect(),
    };

    // shifted mean: exact when all values coincide
    let b0 = b[0];
    let m0_bar = b0 + b.iter().map(|v| v - b0).sum::<f64>() / n as f64;
    let var_m0 = b.iter().map(|v| (v - m0_bar).powi(2)).sum::<f64>() / (n - 1) as f64;
    let benchmark = m0_bar + tau * var_m0.sqrt();
    let influential = (0..n).filter(|&t| b[t] > benchmark).collect();
    Ok(InfluenceReport {
        b,
        m0_bar,
        var_m0,
        benchmark,
        tau,
        influential,
        d_max,
        c_max: 2.0 * lmax.max(0.0),
        mode,
    })
}

pub fn influence_analysis(fit: &FitResult, data: &GrowthDataset, tau: f64) -> Result<InfluenceReport> {
    influence_analysis_with(fit, data, tau, CurvatureMode::Basis)
}

pub fn influence_analysis_with(
    fit: &FitResult,
    data: &GrowthDataset,
    tau: f64,
    mode: CurvatureMode,
) -> Result<InfluenceReport> {
    let h = score_matrix(fit, data)?;
    conformal_curvatures(&h, &fit.info(), tau, mode)
}

/// `LD(ω) = 2·{ℓ(θ̂) − ℓ(θ̂_ω)}` with `θ̂_ω` the maximizer of `Σ ω_t ℓ_t(θ)`.
pub fn likelihood_displacement(
    fit: &FitResult,
    data: &GrowthDataset,
    omega: &[f64],
    config: &FitConfig,
) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.fixed = fit.fixed;
    let base = model::loglik(&fit.theta_hat, &fit.spec, data)?;
    if omega.iter().all(|&w| w == 1.0) && omega.len() == data.len() {
        return Ok(0.0);
    }
    let perturbed = estimator::fit_weighted(&fit.spec, data, omega, &cfg, &fit.theta_hat)?;
    let at_perturbed = model::loglik(&perturbed.theta_hat, &fit.spec, data)?;
    Ok(2.0 * (base - at_perturbed))
}

/// Refits without the influential observations and reports the relative
/// change of `(L∞, K, t0)`.
pub fn filter_and_refit(
    fit: &FitResult,
    data: &GrowthDataset,
    report: &InfluenceReport,
    config: &FitConfig,
) -> Result<(FitResult, RCReport)> {
    let mut cfg = config.clone();
    cfg.fixed = fit.fixed;
    let filtered = if report.influential.is_empty() {
        fit.clone()
    } else {
        let reduced = data.without(&report.influential)?;
        if reduced.len() <= fit.q() {
            return Err(Error::InvalidData(format!(
                "only {} observations remain after filtering",
                reduced.len()
            )));
        }
        estimator::fit_warm(&fit.spec, &reduced, &cfg, &fit.theta_hat)?
    };
    let beta = |f: &FitResult| [f.theta_hat.l_inf, f.theta_hat.k, f.theta_hat.t0];
    let rc = rc_from_betas(beta(fit), beta(&filtered), data.len(), filtered.n_used);
    Ok((filtered, rc))
}
