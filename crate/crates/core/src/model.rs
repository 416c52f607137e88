//! Von Bertalanffy mean curve, power-of-age variance model, zero-mean
//! location correction, and the per-observation log-likelihood with its
//! analytic gradient.
//!
//! Parameters are always ordered `(L∞, K, t0, σ², ρ, λ)`; families without
//! a shape parameter use the first five.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::family::{Family, ModelSpec};
use crate::smsn::{self, SQRT_2_OVER_PI};
use crate::special::{self, StudentT};

/// Paired (age, length) observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthDataset {
    ages: Vec<f64>,
    lengths: Vec<f64>,
}

impl GrowthDataset {
    /// Ages must be strictly positive (σ_t² = σ²·age^ρ); lengths must be finite.
    pub fn new(ages: Vec<f64>, lengths: Vec<f64>) -> Result<Self> {
        if ages.len() != lengths.len() {
            return Err(Error::InvalidData(format!(
                "{} ages but {} lengths",
                ages.len(),
                lengths.len()
            )));
        }
        if ages.is_empty() {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        if let Some(i) = ages.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidData(format!(
                "age at row {i} must be positive and finite, got {}",
                ages[i]
            )));
        }
        if let Some(i) = lengths.iter().position(|l| !l.is_finite()) {
            return Err(Error::InvalidData(format!("length at row {i} is not finite")));
        }
        Ok(Self { ages, lengths })
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ages.iter().copied().zip(self.lengths.iter().copied())
    }

    /// Rows whose index is not in `drop` (which must be sorted).
    pub fn without(&self, drop: &[usize]) -> Result<Self> {
        let mut keep_a = Vec::with_capacity(self.len());
        let mut keep_l = Vec::with_capacity(self.len());
        let mut it = drop.iter().peekable();
        for (i, (a, l)) in self.iter().enumerate() {
            if it.peek() == Some(&&i) {
                it.next();
                continue;
            }
            keep_a.push(a);
            keep_l.push(l);
        }
        Self::new(keep_a, keep_l)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.ages[i]).collect(),
            idx.iter().map(|&i| self.lengths[i]).collect(),
        )
    }

    pub fn scale_lengths(&self, c: f64) -> Result<Self> {
        Self::new(self.ages.clone(), self.lengths.iter().map(|l| l * c).collect())
    }
}

/// Model parameter identifiers in their fixed ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    LInf,
    K,
    T0,
    Sigma2,
    Rho,
    Lambda,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::LInf,
        Param::K,
        Param::T0,
        Param::Sigma2,
        Param::Rho,
        Param::Lambda,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::LInf => "L_inf",
            Param::K => "K",
            Param::T0 => "t0",
            Param::Sigma2 => "sigma2",
            Param::Rho => "rho",
            Param::Lambda => "lambda",
        }
    }

    /// Parameters estimated for `family`.
    pub fn active(family: Family) -> &'static [Param] {
        if family.has_shape() {
            &Param::ALL
        } else {
            &Param::ALL[..5]
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Full parameter vector. `lambda` is ignored by the symmetric families;
/// ν lives in [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaVB {
    pub l_inf: f64,
    pub k: f64,
    pub t0: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub lambda: f64,
}

impl ThetaVB {
    pub fn new(l_inf: f64, k: f64, t0: f64, sigma2: f64, rho: f64, lambda: f64) -> Result<Self> {
        let th = Self {
            l_inf,
            k,
            t0,
            sigma2,
            rho,
            lambda,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter vector {self:?}")));
        }
        if self.l_inf <= 0.0 || self.k <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::InvalidParameter("L_inf, K and sigma2 must be positive".into()));
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    pub fn set(&mut self, p: Param, v: f64) {
        let mut a = self.to_array();
        a[p.index()] = v;
        *self = Self::from_array(a);
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.l_inf, self.k, self.t0, self.sigma2, self.rho, self.lambda]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            l_inf: a[0],
            k: a[1],
            t0: a[2],
            sigma2: a[3],
            rho: a[4],
            lambda: a[5],
        }
    }

    pub fn vb_mean(&self, age: f64) -> f64 {
        vb_mean(self.l_inf, self.k, self.t0, age)
    }

    /// `∂η/∂(L∞, K, t0)` at `age`.
    pub fn vb_mean_grad(&self, age: f64) -> [f64; 3] {
        let e = (-self.k * (age - self.t0)).exp();
        [1.0 - e, self.l_inf * (age - self.t0) * e, -self.l_inf * self.k * e]
    }

    fn effective_lambda(&self, family: Family) -> f64 {
        if family.has_shape() {
            self.lambda
        } else {
            0.0
        }
    }
}

/// `L∞·(1 − exp(−K·(age − t0)))`.
pub fn vb_mean(l_inf: f64, k: f64, t0: f64, age: f64) -> f64 {
    -l_inf * (-k * (age - t0)).exp_m1()
}

/// `σ_t = √(σ²·age^ρ)`.
pub fn sigma_t(theta: &ThetaVB, age: f64) -> Result<f64> {
    if !(age > 0.0) || !age.is_finite() {
        return Err(Error::InvalidParameter(format!("age must be positive, got {age}")));
    }
    if !(theta.sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    Ok((theta.sigma2 * age.powf(theta.rho)).sqrt())
}

/// Zero-mean location correction `μ_t = −√(2/π)·κ₁·σ_t·δ`.
pub fn mu_t(theta: &ThetaVB, spec: &ModelSpec, age: f64) -> Result<f64> {
    let kappa1 = smsn::mix_moments(spec)?.kappa1;
    let s = sigma_t(theta, age)?;
    Ok(-SQRT_2_OVER_PI * kappa1 * s * smsn::delta(theta.effective_lambda(spec.family)))
}

/// `Var(y_t) = σ_t²·(κ₂ − (2/π)·κ₁²·δ²)`; for N, SN and T this is
/// `κ₂·σ_t²·(1 − (2/π)·δ²)`, since there either `κ₁² = κ₂` or `δ = 0`.
pub fn response_variance(theta: &ThetaVB, spec: &ModelSpec, age: f64) -> Result<f64> {
    let m = smsn::mix_moments(spec)?;
    let s = sigma_t(theta, age)?;
    let d = smsn::delta(theta.effective_lambda(spec.family));
    let b = SQRT_2_OVER_PI * m.kappa1 * d;
    Ok(s * s * (m.kappa2 - b * b))
}

pub fn loglik(theta: &ThetaVB, spec: &ModelSpec, data: &GrowthDataset) -> Result<f64> {
    Ok(LogLik::new(spec)?.eval(theta, data, None, false)?.0)
}

/// Gradient over the family's active parameters, ordered `(L∞, K, t0, σ², ρ[, λ])`.
pub fn loglik_grad(theta: &ThetaVB, spec: &ModelSpec, data: &GrowthDataset) -> Result<Vec<f64>> {
    let (_, g) = LogLik::new(spec)?.eval(theta, data, None, true)?;
    Ok(Param::active(spec.family).iter().map(|p| g[p.index()]).collect())
}

/// Per-observation log-likelihood contributions `ℓ_t(θ)`.
pub fn loglik_terms(theta: &ThetaVB, spec: &ModelSpec, data: &GrowthDataset) -> Result<Vec<f64>> {
    let ev = LogLik::new(spec)?;
    let ctx = ev.context(theta)?;
    data.iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let o = ev.obs(&ctx, x, y, false);
            if o.ll.is_finite() {
                Ok(o.ll)
            } else {
                Err(Error::NonFiniteTerm { index: i })
            }
        })
        .collect()
}

/// Per-observation gradients over the active parameters (one row per observation).
pub fn loglik_obs_grads(theta: &ThetaVB, spec: &ModelSpec, data: &GrowthDataset) -> Result<Vec<Vec<f64>>> {
    let ev = LogLik::new(spec)?;
    let ctx = ev.context(theta)?;
    let active = Param::active(spec.family);
    data.iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let o = ev.obs(&ctx, x, y, true);
            if !o.ll.is_finite() || o.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteTerm { index: i });
            }
            Ok(active.iter().map(|p| o.grad[p.index()]).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Kernel {
    /// ν = ∞: normal / skew-normal.
    Gaussian,
    Student {
        nu: f64,
        t_nu: StudentT,
        t_nu1: StudentT,
    },
}

/// Quantities that depend on θ only.
pub(crate) struct ThetaCtx {
    theta: ThetaVB,
    lambda: f64,
    /// `√(2/π)·κ₁·δ`: the standardized location shift.
    shift: f64,
    /// `∂shift/∂λ`.
    dshift: f64,
}

pub(crate) struct ObsEval {
    pub ll: f64,
    pub grad: [f64; 6],
}

/// Log-likelihood evaluator with family constants precomputed.
#[derive(Debug, Clone)]
pub(crate) struct LogLik {
    family: Family,
    kappa1: f64,
    kernel: Kernel,
}

impl LogLik {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let kappa1 = smsn::mix_moments(spec)?.kappa1;
        let kernel = match spec.nu {
            Some(nu) if spec.family.is_mixture() => Kernel::Student {
                nu,
                t_nu: StudentT::new(nu),
                t_nu1: StudentT::new(nu + 1.0),
            },
            _ => Kernel::Gaussian,
        };
        Ok(Self {
            family: spec.family,
            kappa1,
            kernel,
        })
    }

    pub fn context(&self, theta: &ThetaVB) -> Result<ThetaCtx> {
        theta.validate()?;
        let lambda = theta.effective_lambda(self.family);
        let c = SQRT_2_OVER_PI * self.kappa1;
        let one_l2 = 1.0 + lambda * lambda;
        Ok(ThetaCtx {
            theta: *theta,
            lambda,
            shift: c * smsn::delta(lambda),
            dshift: c / (one_l2 * one_l2.sqrt()),
        })
    }

    /// Returns `(ln 2 + ln g(z) + ln G(w), ∂/∂z, direct ∂/∂λ)`.
    #[inline]
    fn standardized(&self, z: f64, lambda: f64, want_grad: bool) -> (f64, f64, f64) {
        let skewed = self.family.has_shape();
        match self.kernel {
            Kernel::Gaussian => {
                if !skewed {
                    return (-special::LN_SQRT_2PI - 0.5 * z * z, -z, 0.0);
                }
                let a = lambda * z;
                let ll = std::f64::consts::LN_2 + special::ln_norm_pdf(z) + special::ln_norm_cdf(a);
                if !want_grad {
                    return (ll, 0.0, 0.0);
                }
                let h = special::norm_hazard(a);
                (ll, -z + lambda * h, z * h)
            }
            Kernel::Student { nu, t_nu, t_nu1 } => {
                let q = nu + z * z;
                if !skewed {
                    return (t_nu.ln_pdf(z), -(nu + 1.0) * z / q, 0.0);
                }
                let root = ((nu + 1.0) / q).sqrt();
                let w = lambda * z * root;
                let ll = std::f64::consts::LN_2 + t_nu.ln_pdf(z) + t_nu1.ln_cdf(w);
                if !want_grad {
                    return (ll, 0.0, 0.0);
                }
                let h = t_nu1.hazard(w);
                // d/dz [z·(ν+z²)^(-1/2)] = ν·(ν+z²)^(-3/2)
                let dw_dz = lambda * (nu + 1.0).sqrt() * nu / (q * q.sqrt());
                (ll, -(nu + 1.0) * z / q + h * dw_dz, h * z * root)
            }
        }
    }

    #[inline]
    pub fn obs(&self, ctx: &ThetaCtx, x: f64, y: f64, want_grad: bool) -> ObsEval {
        let th = &ctx.theta;
        let ln_x = x.ln();
        let ln_sigma = 0.5 * (th.sigma2.ln() + th.rho * ln_x);
        let sigma = ln_sigma.exp();
        let e = (-th.k * (x - th.t0)).exp();
        let eta = -th.l_inf * (-th.k * (x - th.t0)).exp_m1();
        let r = (y - eta) / sigma;
        let z = r + ctx.shift;
        let (ll0, dz, dlam) = self.standardized(z, ctx.lambda, want_grad);
        let ll = ll0 - ln_sigma;
        let mut grad = [0.0; 6];
        if want_grad {
            let inv_s = 1.0 / sigma;
            grad[0] = -dz * (1.0 - e) * inv_s;
            grad[1] = -dz * th.l_inf * (x - th.t0) * e * inv_s;
            grad[2] = dz * th.l_inf * th.k * e * inv_s;
            let inv_2s2 = 0.5 / th.sigma2;
            grad[3] = -(dz * r + 1.0) * inv_2s2;
            grad[4] = -(dz * r + 1.0) * 0.5 * ln_x;
            grad[5] = if self.family.has_shape() {
                dz * ctx.dshift + dlam
            } else {
                0.0
            };
        }
        ObsEval { ll, grad }
    }

    /// Weighted total log-likelihood and full 6-component gradient.
    pub fn eval(
        &self,
        theta: &ThetaVB,
        data: &GrowthDataset,
        weights: Option<&[f64]>,
        want_grad: bool,
    ) -> Result<(f64, [f64; 6])> {
        let ctx = self.context(theta)?;
        let mut total = Neumaier::default();
        let mut grad: [Neumaier; 6] = Default::default();
        for (i, (x, y)) in data.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            let o = self.obs(&ctx, x, y, want_grad);
            if !o.ll.is_finite() {
                return Err(Error::NonFiniteTerm { index: i });
            }
            total.add(w * o.ll);
            if want_grad {
                for (acc, g) in grad.iter_mut().zip(o.grad) {
                    acc.add(w * g);
                }
            }
        }
        let g = grad.map(|a| a.sum());
        if want_grad && g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-likelihood gradient".into()));
        }
        Ok((total.sum(), g))
    }
}

/// Compensated summation, so totals do not depend on observation order
/// beyond the last few ulps.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}
