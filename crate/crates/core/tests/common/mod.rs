//! Test-only oracles, kept independent of the library's evaluation paths.
#![allow(dead_code)]

use vbgrowth::ThetaVB;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Globally adaptive Gauss–Kronrod 7/15: repeatedly bisects the interval
/// with the largest error estimate until the summed estimate meets `tol`
/// (absolute) or relative 1e-15 of the result.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (k, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, k, e)];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol.max(1e-15 * total.abs()) {
            break;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = parts.swap_remove(i);
        let m = 0.5 * (lo + hi);
        let (k1, e1) = gk15(&f, lo, m);
        let (k2, e2) = gk15(&f, m, hi);
        parts.push((lo, m, k1, e1));
        parts.push((m, hi, k2, e2));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    parts.iter().map(|p| p.2).sum()
}

/// Integral over the real line via `x = t/(1−t²)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> f64 {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        let x = t / d;
        let v = f(x) * (1.0 + t * t) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, -1.0, 0.0, 0.5 * tol) + integrate(g, 0.0, 1.0, 0.5 * tol)
}

/// Integral over `(0, ∞)` via `v = s/(1−s)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> f64 {
    let g = |s: f64| {
        let d = 1.0 - s;
        if d <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        let v = f(s / d) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            let pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
                break;
            }
        }
    }
    (x, w)
}

/// Maclaurin series for erf, adequate for |x| ≲ 3.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn big_phi(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

/// Scale-mixture density `(2/σ)∫ √v φ(√v z) Φ(√v λ z) g(v; ν) dv` with
/// Gamma(ν/2, ν/2) mixing, by adaptive quadrature.
pub fn mixture_density(z: f64, sigma: f64, lambda: f64, nu: f64) -> f64 {
    let a = 0.5 * nu;
    let ln_c = a * a.ln() - statrs::function::gamma::ln_gamma(a);
    let g = |v: f64| {
        let sv = v.sqrt();
        let mix = (ln_c + (a - 1.0) * v.ln() - a * v).exp();
        sv * phi(sv * z) * statrs::function::erf::erfc(-sv * lambda * z / std::f64::consts::SQRT_2) * 0.5 * mix
    };
    // integrate around the Gamma mode separately for accuracy
    let mode = ((a - 1.0) / a).max(0.0);
    let spread = 12.0 / a.sqrt();
    let lo = (mode - spread).max(0.0);
    let hi = mode + spread;
    let mid = integrate(g, lo, hi, 1e-16);
    let left = if lo > 0.0 { integrate(g, 0.0, lo, 1e-17) } else { 0.0 };
    let right = integrate_half_line(|u| g(hi + u), 1e-17);
    2.0 / sigma * (mid + left + right)
}

/// Skew-t parameters reported for the full sample.
pub fn reference_theta() -> ThetaVB {
    ThetaVB::new(35.137, 0.083, -3.075, 38.087, -0.705, 0.873).unwrap()
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], rel: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = rel * (1.0 + x[k].abs());
            y[k] = x[k] + h;
            let fp = f(&y);
            y[k] = x[k] - h;
            let fm = f(&y);
            y[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
