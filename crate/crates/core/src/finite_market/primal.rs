use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::barrier::{self, Problem};
use super::hedging::{clock_flows, hedging_prices, price_under, superhedge};
use super::polytope::MartingalePolytope;
use super::tree::EventTree;
use crate::error::{Error, Result};
use crate::utility::UtilityRandomField;

/// Optimal consumption plan with the trading strategy that finances it.
#[derive(Debug, Clone, Serialize)]
pub struct PrimalSolution {
    pub x: f64,
    /// Consumption density per node (0 where the clock does not move).
    pub c: Vec<f64>,
    /// Shares held from each internal node (empty at leaves).
    pub hedge: Vec<Vec<f64>>,
    /// Post-cash-flow wealth per node.
    pub wealth: Vec<f64>,
    pub value: f64,
    /// Value of the same problem posed through the budget constraints.
    pub budget_value: f64,
    pub kkt_residual: f64,
    pub complementarity: f64,
    /// Number of measures that ended up in the budget formulation.
    pub budget_measures: usize,
}

/// Evidence that `x` is below the lowest admissible initial wealth.
#[derive(Debug, Clone, Serialize)]
pub struct InfeasibilityCertificate {
    pub x: f64,
    /// `-L(E)`.
    pub min_wealth: f64,
    /// Measure under which every non-negative plan costs at least `-L(E)`.
    pub measure: Vec<f64>,
}

fn boundary_tol(lower: f64) -> f64 {
    1e-12 * (1.0 + lower.abs())
}

/// Returns a certificate when no plan with `c >= 0` is financeable from `x`.
pub fn infeasibility_certificate(
    tree: &EventTree,
    poly: &MartingalePolytope,
    x: f64,
) -> Option<InfeasibilityCertificate> {
    let hp = hedging_prices(tree, poly);
    (x < -hp.lower - boundary_tol(hp.lower)).then(|| InfeasibilityCertificate {
        x,
        min_wealth: -hp.lower,
        measure: hp.lower_measure,
    })
}

/// `sum_n P(n) dk(n) U(t(n), c(n))` over clock nodes.
pub fn utility_value(tree: &EventTree, field: &dyn UtilityRandomField, c: &[f64]) -> Result<f64> {
    let mut v = 0.0;
    for j in tree.clock_nodes() {
        let n = &tree.nodes[j];
        let u = if c[j] > 0.0 {
            field.u(n.t, c[j])?
        } else {
            field.u_at_zero(n.t)
        };
        v += n.pmass * n.dkappa * u;
    }
    Ok(v)
}

/// Value, gradient and Hessian.
type Objective = (f64, DVector<f64>, DMatrix<f64>);

fn concave_objective<'a>(
    tree: &'a EventTree,
    field: &'a dyn UtilityRandomField,
    vars: &'a [usize],
    total: usize,
) -> impl Fn(&DVector<f64>) -> Option<Objective> + 'a {
    move |z: &DVector<f64>| {
        let mut f = 0.0;
        let mut g = DVector::zeros(total);
        let mut h = DMatrix::zeros(total, total);
        for (k, &j) in vars.iter().enumerate() {
            let c = z[k];
            if !(c > 0.0) {
                return None;
            }
            let n = &tree.nodes[j];
            let w = n.pmass * n.dkappa;
            let up = field.u_prime(n.t, c).ok()?;
            let upp = 1.0 / field.inverse_marginal_dy(n.t, up).ok()?;
            f -= w * field.u(n.t, c).ok()?;
            g[k] = -w * up;
            h[(k, k)] = -w * upp;
        }
        Some((f, g, h))
    }
}

pub fn solve_primal(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
) -> Result<PrimalSolution> {
    solve_primal_from(tree, poly, field, x, 0.5)
}

/// As [`solve_primal`], starting the barrier at `c = init_fraction (x + L(E))`.
pub fn solve_primal_from(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
    init_fraction: f64,
) -> Result<PrimalSolution> {
    if !x.is_finite() || !(init_fraction > 0.0 && init_fraction < 1.0) {
        return Err(Error::Config(format!(
            "bad primal inputs x={x}, init_fraction={init_fraction}"
        )));
    }
    let hp = hedging_prices(tree, poly);
    let lower = hp.lower;
    let tol = boundary_tol(lower);
    if x < -lower - tol {
        return Err(Error::Infeasible { x, min_wealth: -lower });
    }
    if x <= -lower + tol {
        return solve_at_boundary(tree, poly, field, x, lower);
    }
    let budget = solve_budget(tree, poly, field, x, init_fraction, &[])?;
    solve_recursion(tree, poly, field, x, lower, init_fraction, budget)
}

struct BudgetSolution {
    c: Vec<f64>,
    value: f64,
    measures: usize,
}

/// Maximises utility subject to `<c - e, Q> <= x` for every extreme measure
/// (all listed vertices, or cuts generated by the node-wise programme),
/// with consumption pinned to zero on `fixed_zero`.
fn solve_budget(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
    init_fraction: f64,
    fixed_zero: &[usize],
) -> Result<BudgetSolution> {
    let e = tree.endowments();
    let hp = hedging_prices(tree, poly);
    let vars: Vec<usize> = tree
        .clock_nodes()
        .into_iter()
        .filter(|j| !fixed_zero.contains(j))
        .collect();
    let mut measures: Vec<Vec<f64>> = match &poly.vertices {
        Some(v) => v.clone(),
        None => vec![hp.lower_measure.clone(), poly.interior.clone()],
    };
    let nv = vars.len();
    for _round in 0..1000 {
        // only measures with slack at c = 0 can be kept strictly feasible
        let active: Vec<&Vec<f64>> = measures
            .iter()
            .filter(|q| x + price_under(tree, &e, q) > boundary_tol(hp.lower))
            .collect();
        let mut c = vec![0.0; tree.n_nodes()];
        let value;
        if nv == 0 {
            value = utility_value(tree, field, &c)?;
        } else {
            let rows = nv + active.len();
            let mut g = DMatrix::zeros(rows, nv);
            let mut h = DVector::zeros(rows);
            for k in 0..nv {
                g[(k, k)] = -1.0;
            }
            let mut min_cap = f64::INFINITY;
            for (r, q) in active.iter().enumerate() {
                let mass = tree.node_mass(q);
                for (k, &j) in vars.iter().enumerate() {
                    g[(nv + r, k)] = mass[j] * tree.nodes[j].dkappa;
                }
                let cap = x + price_under(tree, &e, q);
                h[nv + r] = cap;
                let load: f64 = (0..nv).map(|k| g[(nv + r, k)]).sum();
                if load > 0.0 {
                    min_cap = min_cap.min(cap / load);
                }
            }
            let start = if min_cap.is_finite() {
                init_fraction * min_cap
            } else {
                1.0
            };
            let obj = concave_objective(tree, field, &vars, nv);
            let problem = Problem { g, h, objective: &obj };
            let out = barrier::minimize(&problem, DVector::from_element(nv, start))?;
            for (k, &j) in vars.iter().enumerate() {
                c[j] = out.z[k];
            }
            value = utility_value(tree, field, &c)?;
        }
        if poly.vertices.is_some() {
            return Ok(BudgetSolution {
                c,
                value,
                measures: measures.len(),
            });
        }
        let net: Vec<f64> = c.iter().zip(&e).map(|(ci, ei)| ci - ei).collect();
        let worst = poly.extreme_value(tree, &clock_flows(tree, &net), true);
        if worst.value[0] <= x + 1e-10 * (1.0 + x.abs()) {
            return Ok(BudgetSolution {
                c,
                value,
                measures: measures.len(),
            });
        }
        measures.push(worst.measure);
    }
    Err(Error::Solver("budget cut generation did not terminate".into()))
}

/// Maximises utility over consumption and holdings subject to the wealth
/// recursion ending non-negative at every leaf.
fn solve_recursion(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
    lower: f64,
    init_fraction: f64,
    budget: BudgetSolution,
) -> Result<PrimalSolution> {
    let e = tree.endowments();
    let vars = tree.clock_nodes();
    let nc = vars.len();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let d = tree.dim;
    let mut hvar = vec![usize::MAX; tree.n_nodes()];
    for (k, &i) in internal.iter().enumerate() {
        hvar[i] = nc + k * d;
    }
    let nz = nc + internal.len() * d;
    let mut cvar = vec![usize::MAX; tree.n_nodes()];
    for (k, &j) in vars.iter().enumerate() {
        cvar[j] = k;
    }

    let rows = nc + tree.n_leaves();
    let mut g = DMatrix::zeros(rows, nz);
    let mut h = DVector::zeros(rows);
    for k in 0..nc {
        g[(k, k)] = -1.0;
    }
    for (li, &leaf) in tree.leaves.iter().enumerate() {
        let r = nc + li;
        let path = tree.path(leaf);
        let mut cap = x;
        for (pos, &n) in path.iter().enumerate() {
            let node = &tree.nodes[n];
            cap += node.endow * node.dkappa;
            if cvar[n] != usize::MAX {
                g[(r, cvar[n])] = node.dkappa;
            }
            if let Some(&child) = path.get(pos + 1) {
                for a in 0..d {
                    g[(r, hvar[n] + a)] = -(tree.nodes[child].price[a] - node.price[a]);
                }
            }
        }
        h[r] = cap;
    }

    let c0 = init_fraction * (x + lower);
    let mut start_c = vec![0.0; tree.n_nodes()];
    for &j in &vars {
        start_c[j] = c0;
    }
    let net: Vec<f64> = start_c.iter().zip(&e).map(|(c, e)| c - e).collect();
    let sh = superhedge(tree, poly, &clock_flows(tree, &net))?;
    let mut z0 = DVector::zeros(nz);
    for k in 0..nc {
        z0[k] = c0;
    }
    for &i in &internal {
        for a in 0..d {
            z0[hvar[i] + a] = sh.hedge[i][a];
        }
    }
    let obj = concave_objective(tree, field, &vars, nz);
    let problem = Problem { g, h, objective: &obj };
    let out = barrier::minimize(&problem, z0)?;

    let mut c = vec![0.0; tree.n_nodes()];
    for (k, &j) in vars.iter().enumerate() {
        c[j] = out.z[k];
    }
    let mut hedge = vec![Vec::new(); tree.n_nodes()];
    for &i in &internal {
        hedge[i] = (0..d).map(|a| out.z[hvar[i] + a]).collect();
    }
    let wealth = tree.wealth(x, &c, &hedge);
    let value = utility_value(tree, field, &c)?;
    let grad_scale = 1.0 + (0..nc).map(|k| out.multipliers[k].abs()).fold(0.0, f64::max);
    Ok(PrimalSolution {
        x,
        c,
        hedge,
        wealth,
        value,
        budget_value: budget.value,
        kkt_residual: out.stationarity / grad_scale,
        complementarity: out.complementarity,
        budget_measures: budget.measures,
    })
}

/// `x = -L(E)`: every measure attaining `L(E)` pins consumption to zero on the
/// clock nodes it charges; remaining nodes are optimised under the other constraints.
fn solve_at_boundary(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
    lower: f64,
) -> Result<PrimalSolution> {
    let e = tree.endowments();
    let tol = boundary_tol(lower);
    let minimizers: Vec<Vec<f64>> = match &poly.vertices {
        Some(vs) => vs
            .iter()
            .filter(|q| price_under(tree, &e, q) <= lower + tol)
            .cloned()
            .collect(),
        None => vec![hedging_prices(tree, poly).lower_measure],
    };
    let mut forced = Vec::new();
    for j in tree.clock_nodes() {
        if minimizers.iter().any(|q| tree.node_mass(q)[j] > 0.0) {
            forced.push(j);
        }
    }
    let budget = solve_budget(tree, poly, field, x, 0.5, &forced)?;
    let c = budget.c.clone();
    let net: Vec<f64> = c.iter().zip(&e).map(|(c, e)| c - e).collect();
    let sh = superhedge(tree, poly, &clock_flows(tree, &net))?;
    let wealth = tree.wealth(x, &c, &sh.hedge);
    Ok(PrimalSolution {
        x,
        c,
        hedge: sh.hedge,
        wealth,
        value: budget.value,
        budget_value: budget.value,
        kkt_residual: 0.0,
        complementarity: 0.0,
        budget_measures: budget.measures,
    })
}
