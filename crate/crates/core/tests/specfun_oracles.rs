use clockopt_core::specfun::*;
use proptest::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

const SQRT_PI: f64 = 1.772_453_850_905_516;

fn cfg() -> SpecEvalConfig {
    SpecEvalConfig::default()
}

fn h_minus_one_closed_form(x: f64) -> f64 {
    // For large x, e^{x^2} erfc(x) overflows the naive product; the grid stops at 5.
    (x * x).exp() * 0.5 * SQRT_PI * erfc(x)
}

#[test]
fn hermite_order_minus_one_matches_erfc_form() {
    for i in 0..=200 {
        let x = 5.0 * i as f64 / 200.0;
        let want = h_minus_one_closed_form(x);
        let got = hermite_h(-1.0, x, &cfg()).unwrap();
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "x={x}: {got} vs {want}");
    }
}

#[test]
fn hermite_frozen_value_at_one() {
    let got = hermite_h(-1.0, 1.0, &cfg()).unwrap();
    assert!((got - 0.378_936_078).abs() < 1e-9);
}

#[test]
fn hermite_derivative_matches_central_difference() {
    let h = 1e-5;
    for xi in [-0.5, -1.0, -2.0] {
        for i in 0..=16 {
            let x = 4.0 * i as f64 / 16.0;
            let exact = hermite_h_dx(xi, x, &cfg()).unwrap();
            let fd = if x == 0.0 {
                // one-sided second order
                let f0 = hermite_h(xi, 0.0, &cfg()).unwrap();
                let f1 = hermite_h(xi, h, &cfg()).unwrap();
                let f2 = hermite_h(xi, 2.0 * h, &cfg()).unwrap();
                (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
            } else {
                (hermite_h(xi, x + h, &cfg()).unwrap() - hermite_h(xi, x - h, &cfg()).unwrap()) / (2.0 * h)
            };
            assert!(
                (exact - fd).abs() <= 1e-6 * exact.abs(),
                "xi={xi} x={x}: {exact} vs {fd}"
            );
        }
    }
}

#[test]
fn hermite_derivative_at_zero_for_half_order() {
    let want = 2.0 * -0.5 * gamma(0.75) / (2.0 * gamma(1.5));
    assert!((hermite_h_dx(-0.5, 0.0, &cfg()).unwrap() - want).abs() < 1e-11);
}

#[test]
fn psi_matches_duplication_form() {
    // alpha 2^{1+a} Gamma((1+a)/2)^2 / (sqrt(2 pi) Gamma(a)) = 2 sqrt2 alpha Gamma((1+a)/2) / Gamma(a/2)
    for alpha in [0.5, 1.0, 2.0] {
        let p = OuParams::new(alpha).unwrap();
        for lambda in [-0.4 * alpha, 0.01, 0.3, 1.0, 2.5, 7.0] {
            let a = lambda / alpha;
            let want = 2.0 * 2f64.sqrt() * alpha * gamma(0.5 * (1.0 + a)) / gamma(0.5 * a);
            let got = laplace_exponent(lambda, &p).unwrap();
            assert!(
                (got - want).abs() <= 1e-11 * want.abs(),
                "alpha={alpha} lambda={lambda}"
            );
        }
    }
}

#[test]
fn psi_slope_at_origin() {
    let p = OuParams::new(1.0).unwrap();
    let ratio = laplace_exponent(1e-4, &p).unwrap() / 1e-4;
    assert!((ratio - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-3);
}

#[test]
fn psi_increasing_and_sign_correct_on_grid() {
    for alpha in [0.5, 1.0, 2.0] {
        let p = OuParams::new(alpha).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..400 {
            let lambda = -alpha + 0.01 * alpha + i as f64 * 0.02;
            let v = laplace_exponent(lambda, &p).unwrap();
            assert!(v > prev);
            if lambda == 0.0 {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v.signum(), lambda.signum());
            }
            prev = v;
        }
    }
}

#[test]
fn hitting_transform_is_one_at_origin() {
    for alpha in [0.5, 1.0, 2.0] {
        let p = OuParams::new(alpha).unwrap();
        for lambda in [0.25, 1.0, 4.0] {
            let j = hitting_transform(lambda, 0.0, &p, &cfg()).unwrap();
            assert!((j - 1.0).abs() <= 1e-10, "alpha={alpha} lambda={lambda}: {j}");
        }
    }
}

/// Residual of `1/2 f'' - alpha r f' - lambda f` by finite differences.
fn generator_residual(f: impl Fn(f64) -> f64, r: f64, alpha: f64, lambda: f64) -> f64 {
    let h = 1e-3;
    let (fm, f0, fp) = (f(r - h), f(r), f(r + h));
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    let d1 = (fp - fm) / (2.0 * h);
    0.5 * d2 - alpha * r * d1 - lambda * f0
}

#[test]
fn hitting_transform_solves_the_generator_equation() {
    for alpha in [0.5, 1.0, 2.0] {
        let p = OuParams::new(alpha).unwrap();
        for r in [0.3, 1.0, 2.0] {
            let res = generator_residual(|r| hitting_transform(1.0, r, &p, &cfg()).unwrap(), r, alpha, 1.0);
            assert!(res.abs() < 1e-5, "alpha={alpha} r={r}: {res}");
        }
    }
}

#[test]
fn fixed_scale_form_solves_the_equation_only_at_half() {
    let half = OuParams::new(0.5).unwrap();
    let one = OuParams::new(1.0).unwrap();
    let res_half = generator_residual(
        |r| hitting_transform_fixed_scale(1.0, r, &half, &cfg()).unwrap(),
        1.0,
        0.5,
        1.0,
    );
    let res_one = generator_residual(
        |r| hitting_transform_fixed_scale(1.0, r, &one, &cfg()).unwrap(),
        1.0,
        1.0,
        1.0,
    );
    assert!(res_half.abs() < 1e-5);
    assert!(res_one.abs() > 1e-2);
    let a = hitting_transform(1.0, 1.3, &half, &cfg()).unwrap();
    let b = hitting_transform_fixed_scale(1.0, 1.3, &half, &cfg()).unwrap();
    assert!((a - b).abs() < 1e-14);
}

#[test]
fn hitting_transform_decreases_in_distance() {
    let p = OuParams::new(1.0).unwrap();
    assert!(hitting_transform(1.0, 2.0, &p, &cfg()).unwrap() < hitting_transform(1.0, 1.0, &p, &cfg()).unwrap());
    let mut prev = 1.0 + 1e-12;
    for i in 0..40 {
        let j = hitting_transform(1.0, 0.1 * i as f64, &p, &cfg()).unwrap();
        assert!(j > 0.0 && j <= prev);
        prev = j;
    }
}

#[test]
fn hitting_transform_derivative_matches_difference() {
    let p = OuParams::new(1.0).unwrap();
    let h = 1e-5;
    for r in [0.2, 1.0, 2.5] {
        let fd = (hitting_transform(1.0, r + h, &p, &cfg()).unwrap()
            - hitting_transform(1.0, r - h, &p, &cfg()).unwrap())
            / (2.0 * h);
        let exact = hitting_transform_dr(1.0, r, &p, &cfg()).unwrap();
        assert!((fd - exact).abs() < 1e-7 * exact.abs().max(1.0));
    }
}

#[test]
fn beta_potential_reference_and_monotonicity() {
    let p = OuParams::new(1.0).unwrap();
    for beta in [0.5, 1.0, 2.0] {
        let psi = laplace_exponent(beta, &p).unwrap();
        let g = beta_potential(0.0, 0.0, 0.0, beta, &p, &cfg()).unwrap();
        assert!((g - (1.0 - (-psi).exp()) / psi).abs() < 1e-10);
    }
    let mut prev_k = f64::INFINITY;
    for i in 0..=10 {
        let g = beta_potential(0.4, 0.5, 0.1 * i as f64, 1.0, &p, &cfg()).unwrap();
        assert!(g <= prev_k);
        prev_k = g;
    }
    let mut prev_r = f64::INFINITY;
    for i in 0..=10 {
        let g = beta_potential(0.4, -0.3 * i as f64, 0.2, 1.0, &p, &cfg()).unwrap();
        assert!(g <= prev_r);
        prev_r = g;
    }
}

#[test]
fn derived_nu_is_log_derivative_of_hitting_transform() {
    for alpha in [0.5, 1.0, 2.0] {
        let p = OuParams::new(alpha).unwrap();
        for r in [0.1, 0.8, 2.0] {
            let want =
                hitting_transform_dr(1.0, r, &p, &cfg()).unwrap() / hitting_transform(1.0, r, &p, &cfg()).unwrap();
            let got = nu_feedback(r, 1.0, &p, NuVariant::Derived, &cfg()).unwrap();
            assert!((got - want).abs() < 1e-10);
        }
    }
}

#[test]
fn variants_differ_by_sign_and_scale_at_half() {
    // At alpha = 1/2 both use the argument |r|/sqrt2 and differ by the factor -sqrt2.
    let p = OuParams::new(0.5).unwrap();
    for r in [0.3, 1.1, -2.0] {
        let d = nu_feedback(r, 1.0, &p, NuVariant::Derived, &cfg()).unwrap();
        let a = nu_feedback(r, 1.0, &p, NuVariant::Alternate, &cfg()).unwrap();
        assert!((a + 2f64.sqrt() * d).abs() < 1e-12);
    }
}

#[test]
fn nu_decays_and_bound_is_attained_near_origin() {
    let p = OuParams::new(1.0).unwrap();
    for v in NuVariant::ALL {
        let far = nu_feedback(40.0, 1.0, &p, v, &cfg()).unwrap().abs();
        let near = nu_feedback(1e-9, 1.0, &p, v, &cfg()).unwrap().abs();
        assert!(far < 0.1 * near);
        let bound = nu_bound(1.0, &p, v, &cfg()).unwrap();
        assert!(bound.is_finite());
        assert!((bound - near).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let m = nu_feedback(0.1 * i as f64 + 1e-9, 1.0, &p, v, &cfg()).unwrap().abs();
            assert!(m <= prev + 1e-12);
            prev = m;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nu_is_exactly_odd(r in -8.0f64..8.0, beta in 0.1f64..3.0, alpha in 0.3f64..3.0) {
        let p = OuParams::new(alpha).unwrap();
        for v in NuVariant::ALL {
            let a = nu_feedback(r, beta, &p, v, &cfg()).unwrap();
            let b = nu_feedback(-r, beta, &p, v, &cfg()).unwrap();
            prop_assert_eq!(a, -b);
        }
    }

    #[test]
    fn hermite_positive_and_decreasing(xi in -4.0f64..-0.05, x in 0.0f64..6.0) {
        let a = hermite_h(xi, x, &cfg()).unwrap();
        let b = hermite_h(xi, x + 0.1, &cfg()).unwrap();
        prop_assert!(a > 0.0 && b < a);
    }

    #[test]
    fn hitting_transform_in_unit_interval(lambda in 0.05f64..5.0, r in -4.0f64..4.0, alpha in 0.3f64..3.0) {
        let p = OuParams::new(alpha).unwrap();
        let j = hitting_transform(lambda, r, &p, &cfg()).unwrap();
        prop_assert!(j > 0.0 && j <= 1.0 + 1e-10);
    }
}
