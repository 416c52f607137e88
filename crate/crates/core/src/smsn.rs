//! Skew-normal and skew-t densities, the Student-t distribution function,
//! mixing moments, and sampling from the scale-mixture representation
//! `ε = v^(-1/2)·e + μ` with `e ~ SN(0, σ², λ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ModelSpec;
use crate::special::{self, StudentT};

pub(crate) const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `δ = λ/√(1+λ²)`.
pub fn delta(lambda: f64) -> f64 {
    lambda / (1.0 + lambda * lambda).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewNormalParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl SkewNormalParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self> {
        let p = Self { location, scale, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.location.is_finite() && self.shape.is_finite()) {
            return Err(Error::NonFinite("skew-normal location/shape".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        delta(self.shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewTParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
    pub dof: f64,
}

impl SkewTParams {
    pub fn new(location: f64, scale: f64, shape: f64, dof: f64) -> Result<Self> {
        let p = Self {
            location,
            scale,
            shape,
            dof,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        SkewNormalParams::new(self.location, self.scale, self.shape)?;
        if !(self.dof > 0.0) || self.dof.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom must be positive, got {}",
                self.dof
            )));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        delta(self.shape)
    }
}

/// `κ₁ = E[v^(-1/2)]`, `κ₂ = E[v^(-1)]` of the mixing variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixMoments {
    pub kappa1: f64,
    pub kappa2: f64,
}

pub fn sn_pdf(x: f64, p: &SkewNormalParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("x = {x}")));
    }
    p.validate()?;
    let z = (x - p.location) / p.scale;
    Ok(2.0 / p.scale * special::norm_pdf(z) * special::norm_cdf(p.shape * z))
}

pub fn st_pdf(x: f64, p: &SkewTParams) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite(format!("x = {x}")));
    }
    p.validate()?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let z = (x - p.location) / p.scale;
    let t = StudentT::new(p.dof);
    let skew = if p.shape == 0.0 {
        0.5
    } else {
        let w = p.shape * z * ((p.dof + 1.0) / (p.dof + z * z)).sqrt();
        StudentT::new(p.dof + 1.0).cdf(w)
    };
    Ok(2.0 / p.scale * t.pdf(z) * skew)
}

pub fn student_t_cdf(x: f64, dof: f64) -> Result<f64> {
    if !(dof > 0.0) || dof.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom must be positive, got {dof}"
        )));
    }
    if x.is_nan() {
        return Err(Error::NonFinite("x = NaN".into()));
    }
    Ok(StudentT::new(dof).cdf(x))
}

/// `κ₁ = √(ν/2)·Γ((ν−1)/2)/Γ(ν/2)` for Gamma(ν/2, ν/2) mixing.
pub fn kappa1_gamma(nu: f64) -> f64 {
    (0.5 * nu).sqrt() * (special::ln_gamma(0.5 * (nu - 1.0)) - special::ln_gamma(0.5 * nu)).exp()
}

pub fn mix_moments(spec: &ModelSpec) -> Result<MixMoments> {
    if !spec.family.is_mixture() {
        return Ok(MixMoments {
            kappa1: 1.0,
            kappa2: 1.0,
        });
    }
    let nu = spec
        .nu
        .ok_or_else(|| Error::InvalidParameter(format!("{} requires nu", spec.family)))?;
    if !(nu > 2.0) || !nu.is_finite() {
        return Err(Error::MomentsUndefined(nu));
    }
    Ok(MixMoments {
        kappa1: kappa1_gamma(nu),
        kappa2: nu / (nu - 2.0),
    })
}

/// Draws `n` zero-mean SMSN errors with per-observation scales `sigma_t`
/// (a single scale is broadcast).
pub fn sample_smsn_error(n: usize, sigma_t: &[f64], lambda: f64, spec: &ModelSpec, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_smsn_with(&mut rng, n, sigma_t, lambda, spec)
}

pub(crate) fn sample_smsn_with<R: rand::Rng>(
    rng: &mut R,
    n: usize,
    sigma_t: &[f64],
    lambda: f64,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if sigma_t.len() != n && sigma_t.len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "expected {n} scales (or one), got {}",
            sigma_t.len()
        )));
    }
    if let Some(bad) = sigma_t.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {bad}")));
    }
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda".into()));
    }
    spec.validate()?;
    let moments = mix_moments(spec)?;
    let d = delta(lambda);
    let d_perp = (1.0 - d * d).sqrt();
    let mixing = match spec.nu {
        Some(nu) if spec.family.is_mixture() => {
            Some(Gamma::new(0.5 * nu, 2.0 / nu).map_err(|e| Error::InvalidParameter(format!("mixing law: {e}")))?)
        }
        _ => None,
    };

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let sigma = if sigma_t.len() == 1 { sigma_t[0] } else { sigma_t[i] };
        let u0: f64 = StandardNormal.sample(rng);
        let u1: f64 = StandardNormal.sample(rng);
        let e = sigma * (d * u0.abs() + d_perp * u1);
        let scale = match &mixing {
            Some(g) => {
                let v: f64 = g.sample(rng);
                v.sqrt().recip()
            }
            None => 1.0,
        };
        let mu = -SQRT_2_OVER_PI * moments.kappa1 * sigma * d;
        out.push(scale * e + mu);
    }
    Ok(out)
}
