use clockopt_core::finite_market::*;
use clockopt_core::utility::{UtilityField, UtilityRandomField};
use proptest::prelude::*;

fn node(id: &str, parent: Option<&str>, prob: f64, price: f64, dk: f64, e: f64) -> NodeSpec {
    NodeSpec {
        id: NodeId::Str(id.into()),
        parent: parent.map(|p| NodeId::Str(p.into())),
        prob: Some(prob),
        price: vec![price],
        dkappa: dk,
        endow: e,
        t: None,
    }
}

fn trinomial(periods: usize) -> EventTree {
    let mut specs = vec![node("r", None, 1.0, 1.0, if periods == 0 { 1.0 } else { 0.0 }, 0.0)];
    let mut frontier = vec![("r".to_string(), 1.0)];
    for depth in 1..=periods {
        let mut next = Vec::new();
        for (id, s) in &frontier {
            for (tag, f, p) in [("u", 2.0, 0.3), ("m", 1.0, 0.4), ("d", 0.5, 0.3)] {
                let cid = format!("{id}{tag}");
                let dk = if depth == periods { 1.0 } else { 0.0 };
                specs.push(node(&cid, Some(id), p, s * f, dk, 0.0));
                next.push((cid, s * f));
            }
        }
        frontier = next;
    }
    EventTree::from_specs(&specs).unwrap()
}

#[test]
fn cut_generation_matches_dual_on_large_tree() {
    let tree = trinomial(3);
    assert_eq!(tree.n_leaves(), 27);
    let poly = martingale_polytope(&tree).unwrap();
    assert!(poly.vertices.is_none());
    let field = UtilityField::log(0.0).unwrap();
    let sol = solve_primal(&tree, &poly, &field, 1.0).unwrap();
    assert!(sol.budget_measures > 2);
    assert!((sol.value - sol.budget_value).abs() < 1e-7);
    let y = dual_point_for_wealth(&tree, &poly, &field, 1.0).unwrap();
    let d = solve_dual_full_mass(&tree, &poly, &field, y).unwrap();
    assert!((sol.value - (d.value + y)).abs() < 1e-7);
    assert!(sol
        .wealth
        .iter()
        .zip(&tree.nodes)
        .filter(|(_, n)| n.is_leaf())
        .all(|(w, _)| *w >= -1e-9));
}

#[test]
fn large_endowment_makes_the_dual_scale_down() {
    // log utility, terminal clock, constant endowment 5: the scaled mass is 1/5
    let specs = [
        node("r", None, 1.0, 1.0, 0.0, 0.0),
        node("u", Some("r"), 0.5, 2.0, 1.0, 5.0),
        node("d", Some("r"), 0.5, 0.5, 1.0, 5.0),
    ];
    let tree = EventTree::from_specs(&specs).unwrap();
    let poly = martingale_polytope(&tree).unwrap();
    let field = UtilityField::log(0.0).unwrap();
    for y in [1.0, 10.0, 100.0] {
        let d = solve_dual(&tree, &poly, &field, y).unwrap();
        assert!((d.measure.xi * y - 0.2).abs() < 1e-9, "y={y} xi={}", d.measure.xi);
        let full = solve_dual_full_mass(&tree, &poly, &field, y).unwrap();
        assert!(d.value < full.value);
    }
    let d = solve_dual(&tree, &poly, &field, 0.1).unwrap();
    assert_eq!(d.measure.xi, 1.0);
}

#[test]
fn boundary_wealth_has_finite_power_utility() {
    let text = std::fs::read_to_string(format!(
        "{}/tests/fixtures/endowment_trinomial.json",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    let tree = EventTree::from_json(&text).unwrap().0;
    let poly = martingale_polytope(&tree).unwrap();
    let lower = hedging_prices(&tree, &poly).lower;
    let field = UtilityField::power(0.5, 0.0).unwrap();
    let edge = solve_primal(&tree, &poly, &field, -lower).unwrap();
    assert!(edge.value.is_finite());
    // consumption is pinned to zero where the cheapest measure charges
    let up = tree.leaves[0];
    let down = tree.leaves[2];
    assert_eq!(edge.c[up], 0.0);
    assert_eq!(edge.c[down], 0.0);
    assert!(edge.c[tree.leaves[1]] > 0.0);
    let near = solve_primal(&tree, &poly, &field, -lower + 1e-8).unwrap();
    assert!(near.value >= edge.value - 1e-9 && near.value - edge.value < 1e-3);
    let log = UtilityField::log(0.0).unwrap();
    assert_eq!(
        solve_primal(&tree, &poly, &log, -lower).unwrap().value,
        f64::NEG_INFINITY
    );
}

#[test]
fn splitting_clock_mass_along_a_trivial_branch_keeps_value() {
    let base = trinomial(1);
    let mut specs = base.to_specs();
    // give every leaf a single child with the same price and half the clock mass
    let leaves: Vec<NodeSpec> = specs.iter().filter(|s| s.id.to_string().len() > 1).cloned().collect();
    for leaf in &leaves {
        let pos = specs.iter().position(|s| s.id == leaf.id).unwrap();
        specs[pos].dkappa = 0.5;
        specs.push(NodeSpec {
            id: NodeId::Str(format!("{}x", leaf.id)),
            parent: Some(leaf.id.clone()),
            prob: Some(1.0),
            price: leaf.price.clone(),
            dkappa: 0.5,
            endow: 0.0,
            t: None,
        });
    }
    let split = EventTree::from_specs(&specs).unwrap();
    let field = UtilityField::power(0.5, 0.0).unwrap();
    let a = solve_primal(&base, &martingale_polytope(&base).unwrap(), &field, 1.0).unwrap();
    let b = solve_primal(&split, &martingale_polytope(&split).unwrap(), &field, 1.0).unwrap();
    assert!((a.value - b.value).abs() < 1e-8);
}

#[test]
fn conjugacy_on_binomial() {
    let text = std::fs::read_to_string(format!("{}/tests/fixtures/binomial.json", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let tree = EventTree::from_json(&text).unwrap().0;
    let poly = martingale_polytope(&tree).unwrap();
    let field = UtilityField::log(0.0).unwrap();
    for y in [0.5, 1.0, 3.0] {
        let v = solve_dual(&tree, &poly, &field, y).unwrap().value;
        let best = (1..=400)
            .map(|k| 0.01 * k as f64)
            .chain(std::iter::once(1.0 / y))
            .map(|x| solve_primal(&tree, &poly, &field, x).unwrap().value - x * y)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best - v).abs() < 1e-6, "y={y}");
    }
}

/// Random one- or two-period trees free of arbitrage: every internal node has
/// one child above and one below its price.
fn arb_tree() -> impl Strategy<Value = EventTree> {
    let step = (
        0.1f64..1.0,
        0.1f64..0.9,
        prop::option::of(0.5f64..1.5),
        0.2f64..0.8,
        0.0f64..1.0,
    );
    (prop::collection::vec(step, 4), any::<bool>(), 0.0f64..1.0).prop_map(|(steps, two, clock_split)| {
        let mut specs = vec![node("r", None, 1.0, 1.0, 0.0, 0.0)];
        let mut k = 0;
        let mut grow = |specs: &mut Vec<NodeSpec>, parent: &str, s0: f64, depth: usize, last: bool| {
            let (up, down, mid, p, e) = steps[k % steps.len()];
            k += 1;
            let mut kids = vec![
                (format!("{parent}u"), s0 * (1.0 + up)),
                (format!("{parent}d"), s0 * (1.0 - down)),
            ];
            if let Some(m) = mid {
                kids.push((format!("{parent}m"), s0 * m.clamp(1.0 - down + 1e-3, 1.0 + up - 1e-3)));
            }
            let n = kids.len() as f64;
            let probs: Vec<f64> = if n == 2.0 {
                vec![p, 1.0 - p]
            } else {
                vec![p * 0.5, 1.0 - p, p * 0.5]
            };
            let dk = if last {
                1.0 - if depth == 2 { clock_split } else { 0.0 }
            } else {
                clock_split
            };
            for ((id, s), q) in kids.iter().zip(probs) {
                specs.push(node(id, Some(parent), q, *s, dk, e * s));
            }
            kids
        };
        let first = grow(&mut specs, "r", 1.0, 1, !two);
        if two {
            for (id, s) in first {
                grow(&mut specs, &id, s, 2, true);
            }
        }
        EventTree::from_specs(&specs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hedging_prices_agree_between_routes(tree in arb_tree()) {
        let poly = martingale_polytope(&tree).unwrap();
        let hp = hedging_prices(&tree, &poly);
        let (vl, vu) = hp.vertex_check.unwrap();
        prop_assert!((vl - hp.lower).abs() < 1e-12 && (vu - hp.upper).abs() < 1e-12);
        prop_assert!(hp.lower <= hp.upper + 1e-15);
        for q in poly.vertices.as_ref().unwrap() {
            prop_assert!(poly.contains(q, 1e-12));
        }
    }

    #[test]
    fn superhedge_dominates_on_every_path(tree in arb_tree(), scale in 0.1f64..3.0) {
        let poly = martingale_polytope(&tree).unwrap();
        let flows: Vec<f64> = tree.nodes.iter().map(|n| scale * n.price[0] * n.dkappa).collect();
        let sh = superhedge(&tree, &poly, &flows).unwrap();
        let density: Vec<f64> = tree.nodes.iter().map(|n| scale * n.price[0]).collect();
        let wealth = tree.wealth(sh.price, &density, &sh.hedge);
        for &l in &tree.leaves {
            prop_assert!(wealth[l] >= -1e-9);
        }
    }

    #[test]
    fn pairing_two_ways_agree(tree in arb_tree(), y in 0.1f64..10.0, xi in 0.05f64..1.0, seed in 0u64..1000) {
        let poly = martingale_polytope(&tree).unwrap();
        let m = MeasureElement::new(&tree, y, xi, poly.interior.clone());
        let c: Vec<f64> = (0..tree.n_nodes()).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 10.0).collect();
        let ones = vec![1.0; tree.n_nodes()];
        prop_assert!((pairing(&tree, &ones, &m).unwrap() - xi * y).abs() < 1e-12 * (1.0 + y));
        prop_assert!(pairing(&tree, &c, &m).is_ok());
    }

    #[test]
    fn strong_duality_on_random_trees(tree in arb_tree(), x in 0.2f64..3.0) {
        let poly = martingale_polytope(&tree).unwrap();
        let field = UtilityField::log(0.0).unwrap();
        let sol = solve_primal(&tree, &poly, &field, x).unwrap();
        let y = dual_point_for_wealth(&tree, &poly, &field, x).unwrap();
        let d = solve_dual_full_mass(&tree, &poly, &field, y).unwrap();
        prop_assert!((sol.value - (d.value + x * y)).abs() < 1e-7);
        prop_assert!((sol.value - sol.budget_value).abs() < 1e-7);
        for j in tree.clock_nodes() {
            let want = field.inverse_marginal(0.0, d.measure.density[j]).unwrap();
            prop_assert!((sol.c[j] - want).abs() < 1e-6 * (1.0 + want));
        }
    }
}
