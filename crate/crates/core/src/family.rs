use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Error-distribution family of the scale-mixture-of-skew-normal class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "N")]
    Normal,
    #[serde(rename = "SN")]
    SkewNormal,
    #[serde(rename = "T")]
    StudentT,
    #[serde(rename = "ST")]
    SkewT,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Normal, Family::SkewNormal, Family::StudentT, Family::SkewT];

    pub fn label(self) -> &'static str {
        match self {
            Family::Normal => "N",
            Family::SkewNormal => "SN",
            Family::StudentT => "T",
            Family::SkewT => "ST",
        }
    }

    /// Gamma-mixed families carry a degrees-of-freedom parameter.
    pub fn is_mixture(self) -> bool {
        matches!(self, Family::StudentT | Family::SkewT)
    }

    pub fn has_shape(self) -> bool {
        matches!(self, Family::SkewNormal | Family::SkewT)
    }

    /// Number of estimated parameters (ν is profiled, not counted).
    pub fn n_params(self) -> usize {
        if self.has_shape() {
            6
        } else {
            5
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" | "NORMAL" => Ok(Family::Normal),
            "SN" | "SKEW-NORMAL" | "SKEWNORMAL" => Ok(Family::SkewNormal),
            "T" | "STUDENT-T" | "STUDENTT" => Ok(Family::StudentT),
            "ST" | "SKEW-T" | "SKEWT" => Ok(Family::SkewT),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

/// Family tag plus the fixed degrees of freedom for the Gamma-mixed members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub nu: Option<f64>,
}

impl ModelSpec {
    pub fn new(family: Family, nu: Option<f64>) -> Result<Self> {
        let spec = Self { family, nu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn normal() -> Self {
        Self {
            family: Family::Normal,
            nu: None,
        }
    }

    pub fn skew_normal() -> Self {
        Self {
            family: Family::SkewNormal,
            nu: None,
        }
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        Self::new(Family::StudentT, Some(nu))
    }

    pub fn skew_t(nu: f64) -> Result<Self> {
        Self::new(Family::SkewT, Some(nu))
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family.is_mixture(), self.nu) {
            (true, Some(nu)) if nu.is_finite() && nu > 2.0 => Ok(()),
            (true, Some(nu)) => Err(Error::InvalidParameter(format!(
                "{} requires nu > 2, got {nu}",
                self.family
            ))),
            (true, None) => Err(Error::InvalidParameter(format!(
                "{} requires a degrees-of-freedom value",
                self.family
            ))),
            (false, Some(_)) => Err(Error::InvalidParameter(format!(
                "{} takes no degrees of freedom",
                self.family
            ))),
            (false, None) => Ok(()),
        }
    }

    /// Same family at a different ν (mixture families only).
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.family, Some(nu))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nu {
            Some(nu) => write!(f, "{}(nu={nu})", self.family),
            None => write!(f, "{}", self.family),
        }
    }
}
