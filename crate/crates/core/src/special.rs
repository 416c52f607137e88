//! Scalar special functions: normal and Student-t densities and distribution
//! functions, and the regularized incomplete beta function they rest on.

use std::f64::consts::{LN_2, PI, SQRT_2};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 2000;

// Below this argument the normal log-CDF switches to its asymptotic series.
const NORM_TAIL: f64 = -35.0;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate in both tails.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x < NORM_TAIL {
        // Φ(x) = φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - ...)
        let r = 1.0 / (x * x);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
        ln_norm_pdf(x) - (-x).ln() + series.ln()
    } else if x > 5.0 {
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, i.e. the derivative of `ln Φ(x)`.
pub fn norm_hazard(x: f64) -> f64 {
    if x > NORM_TAIL {
        norm_pdf(x) / norm_cdf(x)
    } else {
        (ln_norm_pdf(x) - ln_norm_cdf(x)).exp()
    }
}

fn ln_parts(x: f64, y: f64) -> (f64, f64) {
    let lx = if x > 0.5 { (-y).ln_1p() } else { x.ln() };
    let ly = if y > 0.5 { (-x).ln_1p() } else { y.ln() };
    (lx, ly)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
///
/// `y` must equal `1 - x`; callers pass it separately so that arguments
/// close to one keep their precision.
pub fn beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    beta_reg_with(a, b, x, y, ln_beta(a, b))
}

pub(crate) fn beta_reg_with(a: f64, b: f64, x: f64, y: f64, ln_b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let (lx, ly) = ln_parts(x, y);
    let front = (a * lx + b * ly - ln_b).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

/// `ln I_x(a, b)` without underflow for tiny probabilities.
pub(crate) fn ln_beta_reg_with(a: f64, b: f64, x: f64, y: f64, ln_b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if y <= 0.0 {
        return 0.0;
    }
    let (lx, ly) = ln_parts(x, y);
    let ln_front = a * lx + b * ly - ln_b;
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + beta_cf(a, b, x).ln() - a.ln()
    } else {
        (-(ln_front.exp() * beta_cf(b, a, y) / b)).ln_1p()
    }
}

/// Student-t distribution with precomputed normalizing constants.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    nu: f64,
    ln_norm: f64,
    ln_beta_half: f64,
}

impl StudentT {
    pub fn new(nu: f64) -> Self {
        let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * nu).ln();
        Self {
            nu,
            ln_norm,
            ln_beta_half: ln_beta(0.5 * nu, 0.5),
        }
    }

    pub fn dof(&self) -> f64 {
        self.nu
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm - 0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Lower-tail mass `P(T < -|x|)`.
    fn tail(&self, x: f64) -> f64 {
        let t = x * x;
        let xb = self.nu / (self.nu + t);
        let yb = t / (self.nu + t);
        0.5 * beta_reg_with(0.5 * self.nu, 0.5, xb, yb, self.ln_beta_half)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.5;
        }
        if x.is_infinite() {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        let tail = self.tail(x);
        if x < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    pub fn ln_cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return -LN_2;
        }
        if x < 0.0 {
            let t = x * x;
            let xb = self.nu / (self.nu + t);
            let yb = t / (self.nu + t);
            -LN_2 + ln_beta_reg_with(0.5 * self.nu, 0.5, xb, yb, self.ln_beta_half)
        } else {
            (-self.tail(x)).ln_1p()
        }
    }

    /// `pdf(x)/cdf(x)`, the derivative of `ln cdf(x)`.
    pub fn hazard(&self, x: f64) -> f64 {
        (self.ln_pdf(x) - self.ln_cdf(x)).exp()
    }
}
