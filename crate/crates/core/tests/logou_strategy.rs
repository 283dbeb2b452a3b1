use clockopt_core::logou::Strategy;
use clockopt_core::logou::*;
use clockopt_core::ou_clock::{ClockEstimator, SQRT_2PI};
use clockopt_core::specfun::{laplace_exponent, OuParams};
use clockopt_core::Error;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn cfg(rho: f64, n: usize, dt: f64, seed: u64) -> SimConfig {
    SimConfig {
        x: 1.0,
        market: MarketParams::new(0.1, 0.3, rho, 1.0).unwrap(),
        alpha: 1.0,
        beta: 1.0,
        dt,
        n_paths: n,
        seed,
        norm_const: std::f64::consts::FRAC_1_SQRT_2,
        estimator: ClockEstimator::Tanaka,
        bias_factor: 1.0,
    }
}

fn optimal() -> Strategy {
    Strategy::new(NuChoice::Derived, ConsumptionRule::Derived)
}

#[test]
fn calibrate_y_examples() {
    let ou = OuParams::new(1.0).unwrap();
    let psi = laplace_exponent(1.0, &ou).unwrap();
    assert!((psi - 4.0 / SQRT_2PI).abs() < 1e-10);
    let x = (1.0 - (-psi).exp()) / psi;
    assert!((calibrate_y(x, 1.0, &ou).unwrap() - 1.0).abs() < 1e-12);
    assert!((calibrate_y(1.0, 1.0, &ou).unwrap() - x).abs() < 1e-12);
    assert!((calibrate_y(2.0, 1e-8, &ou).unwrap() - 0.5).abs() < 1e-7);
}

#[test]
fn noarb_examples() {
    let ou1 = OuParams::new(1.0).unwrap();
    let flat = noarb_check(&MarketParams::new(0.0, 0.3, 0.5, 1.0).unwrap(), &ou1);
    assert!(flat.ok);
    assert_eq!(flat.novikov, Some(1.0));
    let m = MarketParams::new(0.3, 0.3, 0.5, 1.0).unwrap();
    let r = noarb_check(&m, &ou1);
    assert!(r.ok);
    let nov = r.novikov.unwrap();
    assert!(nov.is_finite() && nov > 1.0);
    assert!(r.psi_at_minus_half_theta_sq.unwrap() < 0.0);
    let bad = noarb_check(&m, &OuParams::new(0.4).unwrap());
    assert!(!bad.ok);
    let mut c = cfg(0.5, 10, 1e-3, 1);
    c.market = m;
    c.alpha = 0.4;
    match simulate_optimal(&c, &[optimal()]) {
        Err(e @ Error::NoArbitrageGate { .. }) => assert!(e.to_string().contains("theta^2/2")),
        other => panic!("expected the gate, got {other:?}"),
    }
}

#[test]
fn bound_values() {
    assert!((utility_bound(1.0) - 3.006_628_274_631).abs() < 1e-9);
    assert!((utility_bound(0.0) - 1.253_314_137_315_5).abs() < 1e-9);
}

#[test]
fn recorded_path_respects_invariants() {
    let c = cfg(0.7, 10, 1e-3, 3);
    let ou = OuParams::new(1.0).unwrap();
    let y = calibrate_y(1.0, 1.0, &ou).unwrap();
    for idx in 0..5 {
        let p = simulate_strategy_path(&c, optimal(), idx).unwrap();
        let n = p.t.len();
        assert!(n > 1);
        assert!(p.tau1.is_some());
        assert_eq!(*p.kappa.last().unwrap(), 1.0);
        assert_eq!(*p.x.last().unwrap(), 0.0);
        assert!(p.z.iter().all(|z| *z > 0.0));
        assert!((p.z[0] - y).abs() < 1e-15);
        assert!((p.m[0] - 1.0 * y).abs() < 1e-15);
        for i in 1..n {
            assert!(p.kappa[i] >= p.kappa[i - 1]);
            if p.kappa[i] == p.kappa[i - 1] {
                assert_eq!(p.c[i], 0.0, "consumption off the clock support");
            } else {
                assert!(p.c[i] > 0.0);
            }
            assert!(p.x[i] >= 0.0);
        }
        // the same path index drives the ensemble
        let again = simulate_strategy_path(&c, optimal(), idx).unwrap();
        assert_eq!(p, again);
    }
}

#[test]
fn discrimination_selects_the_derived_pair() {
    let d = discriminate(&cfg(0.7, 6_000, 1e-3, 11)).unwrap();
    assert_eq!(
        d.n_passing,
        1,
        "{:#?}",
        d.summaries.iter().map(|s| (&s.label, s.flat)).collect::<Vec<_>>()
    );
    assert_eq!(d.winner, Some(optimal()));
    for s in &d.summaries {
        assert!(s.min_z > 0.0);
        assert_eq!(s.discarded, 0);
        // nu stays within its analytic bound
        if let Some(b) = s.nu_bound {
            assert!(s.nu_sup <= b, "{} > {b}", s.nu_sup);
        }
        // budget is exhausted on every path
        assert_eq!(s.terminal_wealth.estimate, 0.0);
    }
}

#[test]
fn literal_martingale_is_flat_for_every_pair() {
    let c = cfg(0.7, 6_000, 1e-3, 12);
    let paths = simulate_paths(&c, &variant_pairs()).unwrap();
    for s in summarize(&c, &variant_pairs(), &paths).unwrap() {
        for cp in &s.checkpoints {
            assert!(
                (cp.m_literal_mean - s.target_m).abs() <= 3.0 * cp.m_literal_se + c.bias_budget(),
                "{} at t={}: {} ± {}",
                s.label,
                cp.t,
                cp.m_literal_mean,
                cp.m_literal_se
            );
        }
    }
}

#[test]
fn perturbations_are_dominated() {
    let d = dominance_test(&cfg(0.7, 6_000, 1e-3, 13), optimal(), &default_perturbations(optimal())).unwrap();
    for r in &d.rows {
        assert!(r.strictly_dominated, "{r:?}");
        assert_eq!(r.bankrupt_fraction, 0.0);
    }
}

#[test]
fn without_correlation_nu_is_irrelevant() {
    let d = dominance_test(&cfg(0.0, 3_000, 1e-3, 14), optimal(), &default_perturbations(optimal())).unwrap();
    let zero = &d.rows[0];
    assert_eq!(zero.strategy.nu, NuChoice::Zero);
    assert!(zero.diff.abs() <= 3.0 * zero.diff_se);
    assert!(d.rows[1].strictly_dominated && d.rows[2].strictly_dominated);
}

#[test]
fn achieved_utility_respects_the_bound() {
    let b = utility_bound_check(&cfg(0.7, 3_000, 1e-3, 15), optimal()).unwrap();
    assert!(b.pass, "{b:?}");
    assert!((b.bound - utility_bound(1.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn flipping_correlation_leaves_the_law_unchanged() {
    let a = simulate_optimal(&cfg(0.7, 6_000, 1e-3, 21), &[optimal()]).unwrap();
    let b = simulate_optimal(&cfg(-0.7, 6_000, 1e-3, 22), &[optimal()]).unwrap();
    let (sa, sb) = (&a.summaries[0], &b.summaries[0]);
    let se = (sa.utility_se.powi(2) + sb.utility_se.powi(2)).sqrt();
    assert!((sa.utility - sb.utility).abs() <= 3.0 * se);
    for (x, y) in sa.checkpoints.iter().zip(&sb.checkpoints) {
        let se = (x.m_se.powi(2) + y.m_se.powi(2)).sqrt();
        assert!((x.m_mean - y.m_mean).abs() <= 3.0 * se);
    }
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let a = simulate_optimal(&cfg(0.7, 3_000, 2e-3, 31), &[optimal()]).unwrap();
    let b = simulate_optimal(&cfg(0.7, 6_000, 2e-3, 31), &[optimal()]).unwrap();
    let ratio = b.summaries[0].utility_se / a.summaries[0].utility_se;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    for (x, y) in a.summaries[0].checkpoints.iter().zip(&b.summaries[0].checkpoints) {
        let ratio = y.m_se / x.m_se;
        assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }
}

#[test]
fn novikov_estimate_matches_closed_form() {
    let r = simulate_optimal(&cfg(0.7, 6_000, 1e-3, 41), &[optimal()]).unwrap();
    let nov = r.novikov_mc.unwrap();
    assert!(nov.pass, "{nov:?}");
    assert!(nov.target > 1.0);
    assert!((r.mean_tau1 / SQRT_2PI - 1.0).abs() < 0.05);
}

#[test]
fn runs_are_deterministic_and_thread_independent() {
    let c = cfg(0.7, 500, 2e-3, 51);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_optimal(&c, &variant_pairs()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn single_paths_keep_wealth_and_deflator_positive(
        rho in -0.95f64..0.95,
        mu in -0.3f64..0.3,
        scale in 0.5f64..2.0,
        alt in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let mut c = cfg(rho, 2, 5e-3, seed);
        c.market = MarketParams::new(mu, 0.3, rho, 1.0).unwrap();
        let rule = if alt { ConsumptionRule::Alternate } else { ConsumptionRule::Derived };
        let s = Strategy::new(NuChoice::Derived, rule).scaled(scale);
        let p = simulate_strategy_path(&c, s, 0).unwrap();
        prop_assert!(p.z.iter().all(|z| *z > 0.0 && z.is_finite()));
        prop_assert!(p.x.iter().all(|x| *x >= 0.0 && x.is_finite()));
        prop_assert!(p.kappa.windows(2).all(|w| w[1] >= w[0]));
        if p.tau1.is_some() {
            prop_assert_eq!(*p.x.last().unwrap(), 0.0);
        }
    }
}
