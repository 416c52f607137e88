//! Maximum-likelihood estimation: multistart quasi-Newton fits, profiling
//! of the degrees of freedom over a grid, observed information, standard
//! errors, delta-method confidence bands for the growth curve, and AIC.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::family::{Family, ModelSpec};
use crate::model::{GrowthDataset, LogLik, Param, ThetaVB};
use crate::optim::{self, Bounds, Problem, Termination};

/// Parameters held at a fixed value instead of being estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub nu_grid: Vec<f64>,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub param_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Lower bound on σ².
    pub sigma2_floor: f64,
    pub rho_bounds: (f64, f64),
    pub lambda_bounds: (f64, f64),
    pub fixed: FixedParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nu_grid: nu_grid(3.0, 60.0, 1.0),
            max_iter: 500,
            grad_tol: 1e-6,
            param_tol: 1e-8,
            n_starts: 5,
            seed: 0,
            sigma2_floor: 1e-12,
            rho_bounds: (-10.0, 10.0),
            lambda_bounds: (-30.0, 30.0),
            fixed: FixedParams::default(),
        }
    }
}

/// Evenly spaced grid `min, min+step, …` up to and including `max`.
pub fn nu_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| min + step * i as f64).collect()
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu_grid.is_empty() {
            return Err(Error::InvalidParameter("nu grid is empty".into()));
        }
        if self.nu_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("nu grid must be strictly increasing".into()));
        }
        if self.nu_grid[0] <= 2.0 {
            return Err(Error::InvalidParameter("nu grid values must exceed 2".into()));
        }
        if !(self.grad_tol > 0.0 && self.param_tol > 0.0 && self.sigma2_floor > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.n_starts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidParameter("n_starts and max_iter must be positive".into()));
        }
        if !(self.rho_bounds.0 < self.rho_bounds.1 && self.lambda_bounds.0 < self.lambda_bounds.1) {
            return Err(Error::InvalidParameter("empty parameter bounds".into()));
        }
        Ok(())
    }

    /// Estimated parameters for `family` after removing fixed ones.
    pub fn free_params(&self, family: Family) -> Vec<Param> {
        Param::active(family)
            .iter()
            .copied()
            .filter(|p| match p {
                Param::Rho => self.fixed.rho.is_none(),
                Param::Lambda => self.fixed.lambda.is_none(),
                _ => true,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta_hat: ThetaVB,
    pub loglik: f64,
    pub aic: f64,
    /// Estimated parameters, in the order used by `info_matrix` and `std_errors`.
    pub params: Vec<Param>,
    /// Observed information `J(θ̂)`, row-major.
    pub info_matrix: Vec<Vec<f64>>,
    pub info_pd: bool,
    pub std_errors: Option<Vec<f64>>,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// Largest free gradient component at the optimum (natural scale).
    pub grad_norm: f64,
    pub n_used: usize,
    pub fixed: FixedParams,
    /// Free parameters that ended on a bound of the search box; the
    /// quadratic approximations behind SEs and curvatures do not hold there.
    pub at_bound: Vec<Param>,
}

impl FitResult {
    pub fn q(&self) -> usize {
        self.params.len()
    }

    pub fn std_error(&self, p: Param) -> Option<f64> {
        let i = self.params.iter().position(|&x| x == p)?;
        self.std_errors.as_ref().map(|s| s[i])
    }

    pub fn info(&self) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_fn(q, q, |i, j| self.info_matrix[i][j])
    }

    /// `J(θ̂)⁻¹`, or an error when `J` is not positive definite.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        self.info()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::SingularInformation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub family: Family,
    pub grid: Vec<f64>,
    /// Maximized log-likelihood per grid value; `None` where every start failed.
    pub logliks: Vec<Option<f64>>,
    pub best_nu: f64,
    pub best_fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub age: f64,
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

/// `−2·(ℓ̂ − q)`.
pub fn aic(fit: &FitResult) -> f64 {
    aic_value(fit.loglik, fit.q())
}

pub fn aic_value(loglik: f64, q: usize) -> f64 {
    -2.0 * (loglik - q as f64)
}

// ---------------------------------------------------------------------------
// objective in optimizer coordinates

fn log_scaled(p: Param) -> bool {
    matches!(p, Param::LInf | Param::K | Param::Sigma2)
}

struct Objective<'a> {
    ll: LogLik,
    data: &'a GrowthDataset,
    weights: Option<&'a [f64]>,
    free: Vec<Param>,
    base: ThetaVB,
}

impl Objective<'_> {
    fn theta(&self, u: &[f64]) -> ThetaVB {
        let mut th = self.base;
        for (&p, &v) in self.free.iter().zip(u) {
            th.set(p, if log_scaled(p) { v.exp() } else { v });
        }
        th
    }

    fn coords(&self, th: &ThetaVB) -> Vec<f64> {
        self.free
            .iter()
            .map(|&p| {
                let v = th.get(p);
                if log_scaled(p) {
                    v.ln()
                } else {
                    v
                }
            })
            .collect()
    }

    fn bounds(&self, cfg: &FitConfig) -> Bounds {
        let mut lower = vec![f64::NEG_INFINITY; self.free.len()];
        let mut upper = vec![f64::INFINITY; self.free.len()];
        for (i, p) in self.free.iter().enumerate() {
            match p {
                Param::Sigma2 => lower[i] = cfg.sigma2_floor.ln(),
                Param::Rho => (lower[i], upper[i]) = cfg.rho_bounds,
                Param::Lambda => (lower[i], upper[i]) = cfg.lambda_bounds,
                _ => {}
            }
        }
        Bounds { lower, upper }
    }

    /// Weighted log-likelihood and its gradient over the free parameters
    /// in natural coordinates.
    fn natural(&self, th: &ThetaVB) -> Option<(f64, Vec<f64>)> {
        let (l, g) = self.ll.eval(th, self.data, self.weights, true).ok()?;
        Some((l, self.free.iter().map(|p| g[p.index()]).collect()))
    }
}

impl Problem for Objective<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn eval(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let th = self.theta(u);
        if th.validate().is_err() {
            return None;
        }
        let (l, g) = self.natural(&th)?;
        let gu = self
            .free
            .iter()
            .zip(g)
            .map(|(&p, gi)| if log_scaled(p) { -gi * th.get(p) } else { -gi })
            .collect();
        Some((-l, gu))
    }

    fn grad_scale(&self, u: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(u)
            .map(|(&p, &v)| if log_scaled(p) { (-v).exp() } else { 1.0 })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// starting values

/// Ford–Walford-style start: `L∞ = 1.05·max length`, `K` and `t0` from the
/// log-linear regression of `ln(1 − y/L∞)` on age, σ² from residuals.
pub fn initial_guess(data: &GrowthDataset, family: Family) -> ThetaVB {
    let max_len = data.lengths().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l_inf = if max_len > 0.0 { 1.05 * max_len } else { 1.0 };
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|&(_, y)| y < l_inf)
        .map(|(x, y)| (x, (1.0 - y / l_inf).ln()))
        .collect();
    let (mut k, mut t0) = (0.1, 0.0);
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            let slope = sxy / sxx;
            let intercept = my - slope * mx;
            if slope < 0.0 && slope.is_finite() {
                k = -slope;
                t0 = intercept / k;
                if !t0.is_finite() || t0.abs() > 50.0 {
                    t0 = 0.0;
                }
            }
        }
    }
    let mut theta = ThetaVB {
        l_inf,
        k,
        t0,
        sigma2: 1.0,
        rho: 0.0,
        lambda: 0.0,
    };
    let resid: Vec<f64> = data.iter().map(|(x, y)| y - theta.vb_mean(x)).collect();
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    theta.sigma2 = if var > 0.0 && var.is_finite() { var } else { 1.0 };
    if family.has_shape() {
        let m3 = resid.iter().map(|r| (r - mean).powi(3)).sum::<f64>() / n;
        // λ = 0 is a stationary point of the centred likelihood; start off it
        theta.lambda = if m3 < 0.0 { -1.0 } else { 1.0 };
    }
    theta
}

fn perturbed_starts(base: &ThetaVB, family: Family, count: usize, seed: u64) -> Vec<ThetaVB> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![*base];
    for k in 1..count {
        let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut th = *base;
        th.l_inf *= (0.1 * n()).exp();
        th.k *= (0.3 * n()).exp();
        th.t0 += n();
        th.sigma2 *= (0.3 * n()).exp();
        th.rho = 0.2 * n();
        if family.has_shape() {
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            th.lambda = sign * base.lambda * (0.5 * n()).exp();
        }
        out.push(th);
    }
    out
}

fn apply_fixed(theta: &mut ThetaVB, fixed: &FixedParams, family: Family) {
    if let Some(r) = fixed.rho {
        theta.rho = r;
    }
    if let Some(l) = fixed.lambda {
        theta.lambda = l;
    }
    if !family.has_shape() {
        theta.lambda = 0.0;
    }
}

// ---------------------------------------------------------------------------
// fitting

/// Multistart maximum-likelihood fit.
pub fn fit(spec: &ModelSpec, data: &GrowthDataset, config: &FitConfig) -> Result<FitResult> {
    let base = initial_guess(data, spec.family);
    let starts = perturbed_starts(&base, spec.family, config.n_starts, config.seed);
    fit_from_starts(spec, data, None, config, &starts)
}

/// Fit from a single warm start, falling back to the multistart search if
/// that start does not converge.
pub fn fit_warm(spec: &ModelSpec, data: &GrowthDataset, config: &FitConfig, start: &ThetaVB) -> Result<FitResult> {
    match fit_from_starts(spec, data, None, config, std::slice::from_ref(start)) {
        Ok(f) => Ok(f),
        Err(_) => fit(spec, data, config),
    }
}

/// Maximizes the case-weighted log-likelihood `Σ ω_t ℓ_t(θ)` starting at `start`.
pub fn fit_weighted(
    spec: &ModelSpec,
    data: &GrowthDataset,
    weights: &[f64],
    config: &FitConfig,
    start: &ThetaVB,
) -> Result<FitResult> {
    if weights.len() != data.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} observations",
            weights.len(),
            data.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
    }
    fit_from_starts(spec, data, Some(weights), config, std::slice::from_ref(start))
}

pub(crate) fn fit_from_starts(
    spec: &ModelSpec,
    data: &GrowthDataset,
    weights: Option<&[f64]>,
    config: &FitConfig,
    starts: &[ThetaVB],
) -> Result<FitResult> {
    spec.validate()?;
    config.validate()?;
    let free = config.free_params(spec.family);
    let n_used = weights.map_or(data.len(), |w| w.iter().filter(|&&v| v > 0.0).count());
    if n_used < free.len() {
        return Err(Error::InvalidData(format!(
            "{n_used} observations cannot identify {} parameters",
            free.len()
        )));
    }
    let opts = optim::Options {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        param_tol: config.param_tol,
        newton_switch: 1e-2_f64.max(config.grad_tol),
    };

    let mut best: Option<(optim::Outcome, Objective)> = None;
    let mut trace = Vec::new();
    for (i, start) in starts.iter().enumerate() {
        let mut base = *start;
        apply_fixed(&mut base, &config.fixed, spec.family);
        base.sigma2 = base.sigma2.max(config.sigma2_floor);
        let obj = Objective {
            ll: LogLik::new(spec)?,
            data,
            weights,
            free: free.clone(),
            base,
        };
        let u0 = obj.coords(&base);
        let bounds = obj.bounds(config);
        match optim::minimize(&obj, &u0, &bounds, &opts) {
            None => trace.push(format!("start {i}: objective undefined at start")),
            Some(out) if !out.converged() => trace.push(format!(
                "start {i}: {:?} after {} iterations (loglik {:.6}, |grad| {:.3e})",
                out.termination, out.iterations, -out.f, out.grad_norm
            )),
            Some(out) => {
                let better = best.as_ref().is_none_or(|(b, _)| out.f < b.f);
                if better {
                    best = Some((out, obj));
                }
            }
        }
    }
    let Some((out, obj)) = best else {
        return Err(Error::NoConvergence(trace));
    };

    let theta_hat = obj.theta(&out.u);
    let (loglik, _) = obj
        .natural(&theta_hat)
        .ok_or(Error::NonFinite("log-likelihood at optimum".into()))?;
    let info = information(&obj, &theta_hat)?;
    let info_pd = info.clone().cholesky().is_some();
    let std_errors = info
        .clone()
        .cholesky()
        .map(|c| c.inverse().diagonal().iter().map(|v| v.sqrt()).collect::<Vec<_>>())
        .filter(|se| se.iter().all(|v| v.is_finite()));
    if std_errors.is_none() {
        log::warn!("{spec}: observed information not positive definite; standard errors unavailable");
    }
    let bounds = obj.bounds(config);
    let at_bound: Vec<Param> = (0..free.len())
        .filter(|&i| out.u[i] <= bounds.lower[i] || out.u[i] >= bounds.upper[i])
        .map(|i| free[i])
        .collect();
    if !at_bound.is_empty() {
        log::warn!("{spec}: estimate on the boundary for {at_bound:?}");
    }
    let q = free.len();
    Ok(FitResult {
        spec: *spec,
        theta_hat,
        loglik,
        aic: aic_value(loglik, q),
        info_matrix: (0..q).map(|i| (0..q).map(|j| info[(i, j)]).collect()).collect(),
        params: free,
        info_pd: info_pd && std_errors.is_some(),
        std_errors,
        converged: true,
        termination: out.termination,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        n_used,
        fixed: config.fixed,
        at_bound,
    })
}

/// Negated central-difference Jacobian of the analytic gradient, step
/// `1e-5·(1+|θ_k|)`, symmetrized.
fn information(obj: &Objective, theta: &ThetaVB) -> Result<DMatrix<f64>> {
    let non_finite = || Error::NonFinite("gradient near optimum".into());
    let q = obj.free.len();
    let mut j = DMatrix::zeros(q, q);
    for (c, &p) in obj.free.iter().enumerate() {
        let v = theta.get(p);
        let h = 1e-5 * (1.0 + v.abs());
        let mut plus = *theta;
        plus.set(p, v + h);
        let mut minus = *theta;
        minus.set(p, v - h);
        let at = |t: &ThetaVB| obj.natural(t).filter(|_| t.validate().is_ok()).map(|(_, g)| g);
        // one-sided when the central stencil leaves the parameter domain
        // (σ² within h of zero)
        let (gp, gm, width) = match (at(&plus), at(&minus)) {
            (Some(gp), Some(gm)) => (gp, gm, 2.0 * h),
            (Some(gp), None) => (gp, at(theta).ok_or_else(non_finite)?, h),
            (None, Some(gm)) => (at(theta).ok_or_else(non_finite)?, gm, h),
            (None, None) => return Err(non_finite()),
        };
        for r in 0..q {
            j[(r, c)] = -(gp[r] - gm[r]) / width;
        }
    }
    Ok((&j + j.transpose()) * 0.5)
}

/// Observed information over the family's active parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Information {
    pub matrix: DMatrix<f64>,
    pub positive_definite: bool,
}

pub fn observed_information(theta_hat: &ThetaVB, spec: &ModelSpec, data: &GrowthDataset) -> Result<Information> {
    observed_information_for(theta_hat, spec, data, Param::active(spec.family))
}

/// Observed information restricted to `params`.
pub fn observed_information_for(
    theta_hat: &ThetaVB,
    spec: &ModelSpec,
    data: &GrowthDataset,
    params: &[Param],
) -> Result<Information> {
    let obj = Objective {
        ll: LogLik::new(spec)?,
        data,
        weights: None,
        free: params.to_vec(),
        base: *theta_hat,
    };
    let matrix = information(&obj, theta_hat)?;
    let positive_definite = matrix.clone().cholesky().is_some();
    Ok(Information {
        matrix,
        positive_definite,
    })
}

/// Mixture-family profile over `config.nu_grid`, each point warm-started
/// from the previous converged one.
pub fn profile_nu(family: Family, data: &GrowthDataset, config: &FitConfig) -> Result<ProfileResult> {
    if !family.is_mixture() {
        return Err(Error::InvalidParameter(format!(
            "{family} has no degrees of freedom to profile"
        )));
    }
    config.validate()?;
    let mut logliks = Vec::with_capacity(config.nu_grid.len());
    let mut best: Option<(f64, FitResult)> = None;
    let mut warm: Option<ThetaVB> = None;
    for &nu in &config.nu_grid {
        let spec = ModelSpec::new(family, Some(nu))?;
        let res = match &warm {
            Some(start) => fit_warm(&spec, data, config, start),
            None => fit(&spec, data, config),
        };
        match res {
            Ok(f) => {
                logliks.push(Some(f.loglik));
                warm = Some(f.theta_hat);
                if best.as_ref().is_none_or(|(_, b)| f.loglik > b.loglik) {
                    best = Some((nu, f));
                }
            }
            Err(e) => {
                log::warn!("{family} at nu={nu}: {e}");
                logliks.push(None);
            }
        }
    }
    let (best_nu, best_fit) =
        best.ok_or_else(|| Error::NoConvergence(vec![format!("{family}: no grid point converged")]))?;
    Ok(ProfileResult {
        family,
        grid: config.nu_grid.clone(),
        logliks,
        best_nu,
        best_fit,
    })
}

/// Two-sided normal quantile `z_(1−α/2)`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// `η̂ ± z_(1−α/2)·√(gᵀ J⁻¹ g)`, `g = ∂η/∂(L∞, K, t0)`.
pub fn confidence_band(fit: &FitResult, ages: &[f64], alpha: f64) -> Result<Vec<BandPoint>> {
    let z = normal_quantile(alpha)?;
    let cov = fit.covariance()?;
    let pos: Vec<usize> = [Param::LInf, Param::K, Param::T0]
        .iter()
        .map(|p| fit.params.iter().position(|x| x == p).ok_or(Error::SingularInformation))
        .collect::<Result<_>>()?;
    ages.iter()
        .map(|&age| {
            if !(age > 0.0) || !age.is_finite() {
                return Err(Error::InvalidParameter(format!("age must be positive, got {age}")));
            }
            let g = fit.theta_hat.vb_mean_grad(age);
            let mut var = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    var += g[a] * cov[(pos[a], pos[b])] * g[b];
                }
            }
            let half = z * var.max(0.0).sqrt();
            let mean = fit.theta_hat.vb_mean(age);
            Ok(BandPoint {
                age,
                lower: mean - half,
                mean,
                upper: mean + half,
            })
        })
        .collect()
}
