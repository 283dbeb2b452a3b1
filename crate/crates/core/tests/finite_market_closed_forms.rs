use clockopt_core::finite_market::*;
use clockopt_core::utility::UtilityField;
use clockopt_core::Error;

fn load(name: &str) -> (EventTree, UtilityField) {
    let text = std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let (tree, spec) = EventTree::from_json(&text).unwrap();
    (tree, spec.unwrap().build().unwrap())
}

#[test]
fn binomial_measure_is_unique() {
    let (tree, _) = load("binomial.json");
    let poly = martingale_polytope(&tree).unwrap();
    let v = poly.vertices.as_ref().unwrap();
    assert_eq!(v.len(), 1);
    assert!((v[0][0] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn trinomial_has_two_vertices() {
    let (tree, _) = load("trinomial.json");
    let poly = martingale_polytope(&tree).unwrap();
    assert_eq!(poly.vertices.as_ref().unwrap().len(), 2);
    assert!(poly.contains(&poly.interior, 1e-14));
    assert!(poly.interior.iter().all(|&q| q > 0.0));
}

#[test]
fn up_only_tree_is_refused() {
    let (tree, _) = load("up_only.json");
    assert!(matches!(martingale_polytope(&tree), Err(Error::Arbitrage(_))));
}

#[test]
fn binomial_log_terminal_closed_form() {
    let (tree, field) = load("binomial.json");
    let poly = martingale_polytope(&tree).unwrap();
    let sol = solve_primal(&tree, &poly, &field, 1.0).unwrap();
    let want = 0.5 * (9.0f64 / 8.0).ln();
    assert!((sol.value - want).abs() < 1e-9, "{}", sol.value);
    assert!((sol.budget_value - want).abs() < 1e-9);
    let leaf_c: Vec<f64> = tree.leaves.iter().map(|&l| sol.c[l]).collect();
    assert!(
        (leaf_c[0] - 1.5).abs() < 1e-8 && (leaf_c[1] - 0.75).abs() < 1e-8,
        "{leaf_c:?}"
    );
    assert!(sol.kkt_residual < 1e-8, "{} {}", sol.kkt_residual, sol.complementarity);
    let dual = solve_dual(&tree, &poly, &field, 1.0).unwrap();
    assert!((dual.value - (want - 1.0)).abs() < 1e-9);
    assert_eq!(dual.measure.xi, 1.0);
    // x = -v'(y) = 1/y for the terminal log clock
    for y in [0.5, 1.0, 4.0] {
        assert!((implied_wealth(&tree, &poly, &field, y).unwrap() - 1.0 / y).abs() < 1e-9);
    }
}

#[test]
fn root_clock_consumes_everything_at_once() {
    let (tree, field) = load("root_clock.json");
    let poly = martingale_polytope(&tree).unwrap();
    let sol = solve_primal(&tree, &poly, &field, 2.0).unwrap();
    assert!((sol.c[0] - 2.3).abs() < 1e-8);
    assert!((sol.value - 2.3f64.ln()).abs() < 1e-9);
}

#[test]
fn trinomial_two_period_routes_agree() {
    for clock in ["terminal", "uniform", "stopping"] {
        for suffix in ["", "_endow"] {
            let (tree, field) = load(&format!("trinomial2_{clock}{suffix}.json"));
            let poly = martingale_polytope(&tree).unwrap();
            let sol = solve_primal(&tree, &poly, &field, 1.0).unwrap();
            assert!(
                (sol.value - sol.budget_value).abs() < 1e-8,
                "{clock}{suffix}: {} vs {}",
                sol.value,
                sol.budget_value
            );
            let y = dual_point_for_wealth(&tree, &poly, &field, 1.0).unwrap();
            let d = solve_dual_full_mass(&tree, &poly, &field, y).unwrap();
            let gap = sol.value - (d.value + y);
            assert!(gap.abs() < 1e-8, "{clock}{suffix}: gap {gap}");
        }
    }
}

#[test]
fn infeasible_below_lower_price() {
    let (tree, field) = load("endowment_trinomial.json");
    let poly = martingale_polytope(&tree).unwrap();
    let hp = hedging_prices(&tree, &poly);
    assert!((hp.lower - (1.0 / 3.0 + 0.2 * 2.0 / 3.0)).abs() < 1e-12);
    assert!((hp.upper - 0.5).abs() < 1e-12);
    let (vl, vu) = hp.vertex_check.unwrap();
    assert!((vl - hp.lower).abs() < 1e-14 && (vu - hp.upper).abs() < 1e-14);
    let x = -hp.lower - 0.01;
    assert!(matches!(
        solve_primal(&tree, &poly, &field, x),
        Err(Error::Infeasible { .. })
    ));
    let cert = infeasibility_certificate(&tree, &poly, x).unwrap();
    assert!(poly.contains(&cert.measure, 1e-12));
}
