use serde::Serialize;

use super::dual::{dual_point_for_wealth, pairing, solve_dual, solve_dual_full_mass};
use super::hedging::{clock_flows, hedging_prices};
use super::polytope::martingale_polytope;
use super::primal::{solve_primal, solve_primal_from, utility_value};
use super::tree::EventTree;
use crate::error::{Error, Result};
use crate::utility::UtilityRandomField;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub property: &'static str,
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalRow {
    pub x: f64,
    pub u: f64,
    pub y_star: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualRow {
    pub y: f64,
    /// Value over scaled measures.
    pub v: f64,
    pub xi: f64,
    /// Value over full-mass measures.
    pub v_full: f64,
    pub derivative: f64,
    pub derivative_fd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub lower_price: f64,
    pub upper_price: f64,
    pub primal: Vec<PrimalRow>,
    pub dual: Vec<DualRow>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Tolerances applied by [`verify_duality`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerifyTolerances {
    pub gap: f64,
    pub consumption: f64,
    pub saturation: f64,
    pub kkt: f64,
    pub routes: f64,
    pub derivative: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            gap: 1e-5,
            consumption: 1e-7,
            saturation: 1e-8,
            kkt: 1e-8,
            routes: 1e-6,
            derivative: 1e-5,
        }
    }
}

fn check(name: &'static str, property: &'static str, residual: f64, tolerance: f64) -> Check {
    Check {
        name,
        property,
        pass: residual <= tolerance,
        residual,
        tolerance,
    }
}

/// Solves the primal on `x_grid` and the dual on `y_grid`, and checks the
/// duality relations between them. Trees with arbitrage are refused.
pub fn verify_duality(
    tree: &EventTree,
    field: &dyn UtilityRandomField,
    x_grid: &[f64],
    y_grid: &[f64],
    tol: VerifyTolerances,
) -> Result<DualityReport> {
    let poly = martingale_polytope(tree)?;
    let hp = hedging_prices(tree, &poly);
    let lower = hp.lower;
    if x_grid.is_empty() || y_grid.is_empty() {
        return Err(Error::Config("x_grid and y_grid must be non-empty".into()));
    }
    let mut xs = x_grid.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut ys = y_grid.to_vec();
    ys.sort_by(f64::total_cmp);
    if xs[0] <= -lower {
        return Err(Error::Config(format!("x_grid must lie above -L(E) = {}", -lower)));
    }
    let e = tree.endowments();
    let clock = tree.clock_nodes();
    let mut checks = Vec::new();

    // primal side
    let mut primal = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut worst_sat: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_routes: f64 = 0.0;
    let mut worst_unique: f64 = 0.0;
    let mut worst_weak: f64 = 0.0;
    let mut worst_idle: f64 = 0.0;
    for &x in &xs {
        let sol = solve_primal(tree, &poly, field, x)?;
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        worst_routes = worst_routes.max((sol.value - sol.budget_value).abs());

        let y = dual_point_for_wealth(tree, &poly, field, x)?;
        let d = solve_dual_full_mass(tree, &poly, field, y)?;
        let gap = (sol.value - (d.value + x * y)).abs();
        worst_gap = worst_gap.max(gap);
        for &j in &clock {
            let want = field.inverse_marginal(tree.nodes[j].t, d.measure.density[j])?;
            worst_c = worst_c.max((sol.c[j] - want).abs() / (1.0 + want.abs()));
        }
        let net: Vec<f64> = sol.c.iter().zip(&e).map(|(c, e)| c - e).collect();
        let cost = poly.extreme_value(tree, &clock_flows(tree, &net), true).value[0];
        worst_sat = worst_sat.max((cost - x).abs());
        pairing(tree, &sol.c, &d.measure)?;

        let again = solve_primal_from(tree, &poly, field, x, 0.2)?;
        for &j in &clock {
            worst_unique = worst_unique.max((again.c[j] - sol.c[j]).abs());
        }
        for &yg in &ys {
            let v = solve_dual_full_mass(tree, &poly, field, yg)?.value;
            worst_weak = worst_weak.max(sol.value - (v + x * yg));
        }
        let mut shifted = sol.c.clone();
        for (i, n) in tree.nodes.iter().enumerate() {
            if n.dkappa == 0.0 {
                shifted[i] += 1.0;
            }
        }
        worst_idle = worst_idle.max((utility_value(tree, field, &shifted)? - sol.value).abs());
        primal.push(PrimalRow {
            x,
            u: sol.value,
            y_star: y,
            gap,
        });
    }
    let mut concavity: f64 = 0.0;
    let mut increasing: f64 = 0.0;
    for w in primal.windows(2) {
        increasing = increasing.max(w[0].u - w[1].u);
    }
    for w in primal.windows(3) {
        let s1 = (w[1].u - w[0].u) / (w[1].x - w[0].x);
        let s2 = (w[2].u - w[1].u) / (w[2].x - w[1].x);
        concavity = concavity.max(s2 - s1);
    }
    checks.push(check(
        "u_increasing",
        "u is increasing on the wealth grid",
        increasing,
        0.0,
    ));
    checks.push(check("u_concave", "u is concave on the wealth grid", concavity, 1e-9));
    let below = -lower - 0.01 * (1.0 + lower.abs());
    let refused = matches!(solve_primal(tree, &poly, field, below), Err(Error::Infeasible { .. }));
    checks.push(check(
        "infeasible_below_lower_price",
        "no admissible plan exists below -L(E)",
        if refused { 0.0 } else { 1.0 },
        0.0,
    ));
    checks.push(check("kkt", "primal KKT stationarity", worst_kkt, tol.kkt));
    checks.push(check(
        "routes_agree",
        "wealth-recursion and budget-constraint formulations give the same value",
        worst_routes,
        tol.routes,
    ));
    checks.push(check("duality_gap", "u(x) = min_y v(y) + x y", worst_gap, tol.gap));
    checks.push(check(
        "weak_duality",
        "u(x) <= v(y) + x y on the dual grid",
        worst_weak,
        1e-9,
    ));
    checks.push(check(
        "consumption_is_inverse_marginal",
        "optimal consumption equals I(t, Y*) on clock nodes",
        worst_c,
        tol.consumption,
    ));
    checks.push(check(
        "budget_saturation",
        "the optimal plan costs exactly x under the worst measure",
        worst_sat,
        tol.saturation,
    ));
    checks.push(check(
        "primal_unique",
        "re-solving from another start gives the same consumption",
        worst_unique,
        tol.consumption,
    ));
    checks.push(check(
        "idle_nodes_irrelevant",
        "consumption where the clock is flat does not affect utility",
        worst_idle,
        0.0,
    ));

    // dual side
    let mut dual = Vec::new();
    let mut worst_deriv: f64 = 0.0;
    let mut worst_scaled: f64 = 0.0;
    let mut attained = true;
    for &y in &ys {
        let full = solve_dual_full_mass(tree, &poly, field, y)?;
        let scaled = solve_dual(tree, &poly, field, y)?;
        attained &= full.measure.density.iter().all(|v| v.is_finite()) && full.value.is_finite();
        let h = 1e-4 * y;
        let vp = solve_dual_full_mass(tree, &poly, field, y + h)?.value;
        let vm = solve_dual_full_mass(tree, &poly, field, y - h)?.value;
        let fd = (vp - vm) / (2.0 * h);
        worst_deriv = worst_deriv.max((fd - full.derivative).abs() / (1.0 + full.derivative.abs()));
        if -full.derivative >= 0.0 {
            worst_scaled = worst_scaled.max((scaled.value - full.value).abs());
        }
        worst_scaled = worst_scaled.max(scaled.value - full.value);
        dual.push(DualRow {
            y,
            v: scaled.value,
            xi: scaled.measure.xi,
            v_full: full.value,
            derivative: full.derivative,
            derivative_fd: fd,
        });
    }
    checks.push(check(
        "dual_attained",
        "the dual infimum is attained with finite densities",
        if attained { 0.0 } else { 1.0 },
        0.0,
    ));
    checks.push(check(
        "v_differentiable",
        "finite-difference v' matches the envelope derivative",
        worst_deriv,
        tol.derivative,
    ));
    let mut convexity: f64 = 0.0;
    for w in dual.windows(3) {
        let s1 = (w[1].v_full - w[0].v_full) / (w[1].y - w[0].y);
        let s2 = (w[2].v_full - w[1].v_full) / (w[2].y - w[1].y);
        convexity = convexity.max(s1 - s2);
    }
    checks.push(check("v_convex", "v is convex on the dual grid", convexity, 1e-9));
    // -v'(y) = x(y) must fall monotonically toward -L(E)
    let mut trend: f64 = 0.0;
    for w in dual.windows(2) {
        trend = trend.max(w[0].derivative - w[1].derivative);
    }
    let floor = dual.iter().map(|r| -r.derivative + lower).fold(f64::INFINITY, f64::min);
    trend = trend.max(-floor);
    checks.push(check(
        "v_prime_trend",
        "-v'(y) decreases monotonically toward -L(E)",
        trend,
        1e-9,
    ));
    checks.push(check(
        "scaled_dual_consistent",
        "the scaled dual never exceeds the full-mass dual and matches it where x(y) >= 0",
        worst_scaled,
        1e-9,
    ));
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(DualityReport {
        lower_price: lower,
        upper_price: hp.upper,
        primal,
        dual,
        checks,
        all_pass,
    })
}
