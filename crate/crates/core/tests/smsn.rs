mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use vbgrowth::smsn::{self, delta, mix_moments, sn_pdf, st_pdf, student_t_cdf};
use vbgrowth::{Error, ModelSpec, SkewNormalParams, SkewTParams};

fn st(x: f64, lambda: f64, nu: f64) -> f64 {
    st_pdf(x, &SkewTParams::new(0.0, 1.0, lambda, nu).unwrap()).unwrap()
}

fn sn(x: f64, lambda: f64) -> f64 {
    sn_pdf(x, &SkewNormalParams::new(0.0, 1.0, lambda).unwrap()).unwrap()
}

#[test]
fn sn_pdf_at_one_with_shape_two() {
    // Φ(2) by 64-point Gauss–Legendre on φ over [0, 2]
    let (x, w) = common::gauss_legendre(64);
    let phi2 = 0.5 + x.iter().zip(&w).map(|(&t, &wi)| wi * common::phi(1.0 + t)).sum::<f64>();
    let oracle = 2.0 * common::phi(1.0) * phi2;
    assert!((sn(1.0, 2.0) - oracle).abs() < 1e-14, "{} vs {oracle}", sn(1.0, 2.0));
    // the series erf agrees with the quadrature
    assert!((common::big_phi(2.0) - phi2).abs() < 1e-14);
}

#[test]
fn sn_pdf_symmetric_point() {
    assert!((sn(0.0, 3.0) - 0.398_942_280_4).abs() < 1e-10);
    assert!((sn(0.0, 0.0) - 0.398_942_280_4).abs() < 1e-10);
}

#[test]
fn sn_pdf_rejects_bad_input() {
    let p = SkewNormalParams::new(0.0, 1.0, 1.0).unwrap();
    assert!(sn_pdf(f64::NAN, &p).is_err());
    assert!(sn_pdf(f64::INFINITY, &p).is_err());
    assert!(SkewNormalParams::new(0.0, 0.0, 1.0).is_err());
    assert!(SkewTParams::new(0.0, 1.0, 1.0, 0.0).is_err());
}

#[test]
fn st_pdf_reduces_to_student_t_at_origin() {
    assert!((st(0.0, 0.0, 5.0) - 0.379_606_689_8).abs() < 1e-10);
}

#[test]
fn st_pdf_normalizes_for_shape_two_dof_four() {
    let total = common::integrate_real_line(|x| st(x, 2.0, 4.0), 1e-12);
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn sn_pdf_normalizes() {
    for &l in &[0.0, 0.873, -4.0] {
        let total = common::integrate_real_line(|x| sn(x, l), 1e-12);
        assert!((total - 1.0).abs() < 1e-10, "λ={l}: {total}");
    }
}

#[test]
fn st_pdf_matches_sampling_kernel_estimate() {
    // y = v^(-1/2)·(δ|U0| + √(1−δ²)U1), v ~ Gamma(ν/2, rate ν/2)
    let (lambda, nu, x0, h) = (1.0, 10.0, 1.5, 0.03);
    let d = lambda / (1.0f64 + lambda * lambda).sqrt();
    let dp = (1.0 - d * d).sqrt();
    let g = Gamma::new(nu / 2.0, 2.0 / nu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let n = 10_000_000usize;
    let mut hits = 0usize;
    for _ in 0..n {
        let u0: f64 = StandardNormal.sample(&mut rng);
        let u1: f64 = StandardNormal.sample(&mut rng);
        let v: f64 = g.sample(&mut rng);
        let y = (d * u0.abs() + dp * u1) / v.sqrt();
        if (y - x0).abs() < h {
            hits += 1;
        }
    }
    let kde = hits as f64 / (n as f64 * 2.0 * h);
    let exact = st(x0, lambda, nu);
    assert!((kde - exact).abs() < 1e-3, "kde {kde} vs {exact}");
}

#[test]
fn student_t_cdf_anchors() {
    assert_eq!(student_t_cdf(0.0, 7.0).unwrap(), 0.5);
    assert_eq!(student_t_cdf(f64::INFINITY, 3.0).unwrap(), 1.0);
    assert!((student_t_cdf(1e12, 3.0).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(student_t_cdf(1.0, 0.0), Err(Error::InvalidParameter(_))));
    assert!(student_t_cdf(1.0, -2.0).is_err());
}

#[test]
fn student_t_cdf_against_independent_incomplete_beta() {
    // T(x;ν) = 1 − ½·I_{ν/(ν+x²)}(ν/2, ½) for x > 0
    for &(x, nu) in &[(2.0, 10.0), (0.3, 3.0), (5.0, 51.0), (1.7, 4.5), (12.0, 52.0)] {
        let xb: f64 = nu / (nu + x * x);
        let oracle = 1.0 - 0.5 * statrs::function::beta::beta_reg(nu / 2.0, 0.5, xb);
        let got = student_t_cdf(x, nu).unwrap();
        assert!((got - oracle).abs() < 1e-12, "x={x} ν={nu}: {got} vs {oracle}");
    }
}

#[test]
fn student_t_cdf_matches_density_integral() {
    let dens = |t: f64| {
        let nu: f64 = 10.0;
        let c = (statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0) - statrs::function::gamma::ln_gamma(nu / 2.0))
            .exp()
            / (nu * std::f64::consts::PI).sqrt();
        c * (1.0 + t * t / nu).powf(-(nu + 1.0) / 2.0)
    };
    let oracle = 0.5 + common::integrate(dens, 0.0, 2.0, 1e-15);
    assert!((student_t_cdf(2.0, 10.0).unwrap() - oracle).abs() < 1e-13);
}

#[test]
fn mix_moments_degenerate_and_gamma() {
    let m = mix_moments(&ModelSpec::skew_normal()).unwrap();
    assert_eq!((m.kappa1, m.kappa2), (1.0, 1.0));
    let m = mix_moments(&ModelSpec::normal()).unwrap();
    assert_eq!((m.kappa1, m.kappa2), (1.0, 1.0));
    let m = mix_moments(&ModelSpec::skew_t(37.0).unwrap()).unwrap();
    assert!(
        (m.kappa1 - 1.021).abs() < 5e-4 && (m.kappa2 - 1.057).abs() < 5e-4,
        "{m:?}"
    );
    let m = mix_moments(&ModelSpec::skew_t(51.0).unwrap()).unwrap();
    assert!(
        (m.kappa1 - 1.015).abs() < 5e-4 && (m.kappa2 - 1.041).abs() < 5e-4,
        "{m:?}"
    );
}

#[test]
fn kappa1_matches_mixing_integral() {
    // E[v^(-1/2)] under Gamma(ν/2, ν/2) by quadrature
    for &nu in &[4.0, 10.0, 51.0] {
        let a: f64 = nu / 2.0;
        let ln_c = a * a.ln() - statrs::function::gamma::ln_gamma(a);
        let e = common::integrate_half_line(|v: f64| (ln_c + (a - 1.0) * v.ln() - a * v).exp() / v.sqrt(), 1e-14);
        assert!((smsn::kappa1_gamma(nu) - e).abs() < 1e-10, "ν={nu}");
    }
}

#[test]
fn mix_moments_undefined_for_small_nu() {
    let spec = ModelSpec {
        family: vbgrowth::Family::StudentT,
        nu: Some(2.0),
    };
    assert!(matches!(mix_moments(&spec), Err(Error::MomentsUndefined(_))));
}

#[test]
fn sampler_zero_mean_normal() {
    let e = smsn::sample_smsn_error(1_000_000, &[1.0], 0.0, &ModelSpec::normal(), 5).unwrap();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    assert!(mean.abs() < 4.0 / 1000.0, "{mean}");
}

#[test]
fn sampler_variance_skew_t() {
    let spec = ModelSpec::skew_t(10.0).unwrap();
    let e = smsn::sample_smsn_error(1_000_000, &[1.0], 2.0, &spec, 6).unwrap();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // second central moment of the density by quadrature
    let m1 = common::integrate_real_line(|x| x * st(x, 2.0, 10.0), 1e-13);
    let m2 = common::integrate_real_line(|x| x * x * st(x, 2.0, 10.0), 1e-13);
    let expect = m2 - m1 * m1;
    let b = (2.0 / std::f64::consts::PI).sqrt() * smsn::kappa1_gamma(10.0) * delta(2.0);
    assert!((expect - (1.25 - b * b)).abs() < 1e-8, "{expect}");
    assert!((var / expect - 1.0).abs() < 0.01, "{var} vs {expect}");
    // zero mean within 5 Monte-Carlo standard errors
    assert!(mean.abs() < 5.0 * (expect / n).sqrt(), "{mean}");
}

#[test]
fn sampler_is_deterministic() {
    let spec = ModelSpec::skew_t(8.0).unwrap();
    let a = smsn::sample_smsn_error(100, &[2.0], 1.0, &spec, 77).unwrap();
    let b = smsn::sample_smsn_error(100, &[2.0], 1.0, &spec, 77).unwrap();
    let c = smsn::sample_smsn_error(100, &[2.0], 1.0, &spec, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sampler_rejects_bad_input() {
    let spec = ModelSpec::normal();
    assert!(smsn::sample_smsn_error(0, &[1.0], 0.0, &spec, 0).is_err());
    assert!(smsn::sample_smsn_error(3, &[1.0, 2.0], 0.0, &spec, 0).is_err());
    assert!(smsn::sample_smsn_error(1, &[-1.0], 0.0, &spec, 0).is_err());
}

#[test]
fn sn_pdf_reduces_to_normal() {
    for i in -50..=50 {
        let x = i as f64 * 0.2;
        assert!((sn(x, 0.0) - common::phi(x)).abs() < 1e-14);
    }
}

#[test]
fn st_pdf_large_dof_approaches_sn() {
    for i in -100..=100 {
        let x = i as f64 * 0.1;
        assert!((st(x, 1.3, 1e6) - sn(x, 1.3)).abs() < 1e-5, "x={x}");
    }
}

proptest! {
    #[test]
    fn delta_in_open_unit_interval(l in -1e3f64..1e3) {
        let d = delta(l);
        prop_assert!(d > -1.0 && d < 1.0);
        prop_assert!((d * (1.0 + l * l).sqrt() - l).abs() <= 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn student_t_cdf_symmetric_and_monotone(x in 0.0f64..50.0, dx in 0.0f64..5.0, nu in 0.5f64..200.0) {
        let p = student_t_cdf(x, nu).unwrap();
        let m = student_t_cdf(-x, nu).unwrap();
        prop_assert!((p + m - 1.0).abs() <= 1e-13);
        prop_assert!(student_t_cdf(x + dx, nu).unwrap() >= p);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn st_pdf_reduces_to_t_pointwise(x in -30.0f64..30.0, nu in 2.1f64..100.0) {
        let t = vbgrowth::special::StudentT::new(nu);
        prop_assert!((st(x, 0.0, nu) - t.pdf(x)).abs() <= 1e-12);
    }

    #[test]
    fn st_pdf_nonnegative_and_reflects(x in -40.0f64..40.0, l in -10.0f64..10.0, nu in 2.1f64..80.0) {
        let a = st(x, l, nu);
        prop_assert!(a >= 0.0 && a.is_finite());
        prop_assert!((a - st(-x, -l, nu)).abs() <= 1e-14);
    }
}
