use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::barrier::{self, Problem};
use super::polytope::{martingale_rows, null_space, MartingalePolytope};
use super::tree::EventTree;
use crate::error::{domain, Error, Result};
use crate::optim::brent_root;
use crate::utility::UtilityRandomField;

/// A scaled martingale measure `xi y Q` with its density process.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureElement {
    pub y: f64,
    pub xi: f64,
    /// Leaf weights of `Q`, summing to one.
    pub q: Vec<f64>,
    /// `Y(n) = xi y Q(subtree n) / P(n)`.
    pub density: Vec<f64>,
}

impl MeasureElement {
    pub fn new(tree: &EventTree, y: f64, xi: f64, q: Vec<f64>) -> Self {
        let mass = tree.node_mass(&q);
        let density = tree
            .nodes
            .iter()
            .zip(&mass)
            .map(|(n, m)| xi * y * m / n.pmass)
            .collect();
        Self { y, xi, q, density }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub y: f64,
    pub measure: MeasureElement,
    /// `sum P dk V(t, Y) + <e, xi y Q>`.
    pub value: f64,
    /// Envelope derivative `dv/dy`.
    pub derivative: f64,
}

/// `<c, xi y Q>` computed as a leaf sum and as a `Y`-weighted sum over nodes;
/// the two must agree.
pub fn pairing(tree: &EventTree, c: &[f64], m: &MeasureElement) -> Result<f64> {
    let direct: f64 = m.xi * m.y * tree.leaf_path_sums(c).iter().zip(&m.q).map(|(s, q)| s * q).sum::<f64>();
    let weighted: f64 = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| n.pmass * n.dkappa * c[i] * m.density[i])
        .sum();
    let scale = 1.0 + direct.abs().max(weighted.abs());
    if (direct - weighted).abs() > 1e-12 * scale {
        return Err(Error::Solver(format!(
            "pairing mismatch: leaf sum {direct} vs density sum {weighted}"
        )));
    }
    Ok(direct)
}

/// `V^E` of a scaled measure.
pub fn dual_objective(tree: &EventTree, field: &dyn UtilityRandomField, m: &MeasureElement) -> Result<f64> {
    let mut v = 0.0;
    let mass = tree.node_mass(&m.q);
    for j in tree.clock_nodes() {
        let n = &tree.nodes[j];
        let yj = m.density[j];
        if !(yj > 0.0) {
            return Ok(f64::INFINITY);
        }
        v += n.pmass * n.dkappa * field.conjugate(n.t, yj)? + m.xi * m.y * mass[j] * n.dkappa * n.endow;
    }
    Ok(v)
}

/// Envelope derivative in `y` of the full-mass value at a fixed measure:
/// `<e - I(Y), Q>`.
fn envelope(tree: &EventTree, field: &dyn UtilityRandomField, m: &MeasureElement) -> Result<f64> {
    let mass = tree.node_mass(&m.q);
    let mut d = 0.0;
    for j in tree.clock_nodes() {
        let n = &tree.nodes[j];
        d += mass[j] * n.dkappa * (n.endow - field.inverse_marginal(n.t, m.density[j])?);
    }
    Ok(d)
}

/// Minimises over martingale measures of full mass `y` (no `xi` scaling).
pub fn solve_dual_full_mass(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    y: f64,
) -> Result<DualSolution> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(domain("solve_dual", format!("y must be positive, got {y}")));
    }
    let mut rows = martingale_rows(tree);
    rows.push(vec![1.0; tree.n_leaves()]);
    let basis = null_space(&rows);
    let nl = tree.n_leaves();
    let nz = basis.len();
    let eta0 = DVector::from_iterator(nl, poly.interior.iter().map(|q| q * y));
    let nmat = DMatrix::from_fn(nl, nz, |r, c| basis[c][r]);
    let clock = tree.clock_nodes();

    let q = if nz == 0 {
        poly.interior.clone()
    } else {
        let objective = |z: &DVector<f64>| {
            let eta = &eta0 + &nmat * z;
            let eta_v: Vec<f64> = eta.iter().copied().collect();
            let mass = tree.node_mass(&eta_v);
            let mut f = 0.0;
            let mut g_eta = DVector::zeros(nl);
            let mut h_eta = DMatrix::zeros(nl, nl);
            for &j in &clock {
                let n = &tree.nodes[j];
                let yj = mass[j] / n.pmass;
                if !(yj > 0.0) {
                    return None;
                }
                f += n.pmass * n.dkappa * field.conjugate(n.t, yj).ok()? + mass[j] * n.dkappa * n.endow;
                let gj = n.dkappa * (n.endow - field.inverse_marginal(n.t, yj).ok()?);
                let hj = -n.dkappa / n.pmass * field.inverse_marginal_dy(n.t, yj).ok()?;
                for l in n.leaf_lo..n.leaf_hi {
                    g_eta[l] += gj;
                    for k in n.leaf_lo..n.leaf_hi {
                        h_eta[(l, k)] += hj;
                    }
                }
            }
            let g = nmat.transpose() * g_eta;
            let h = nmat.transpose() * h_eta * &nmat;
            Some((f, g, h))
        };
        let problem = Problem {
            g: -nmat.clone(),
            h: eta0.clone(),
            objective: &objective,
        };
        let out = barrier::minimize(&problem, DVector::zeros(nz))?;
        let eta = &eta0 + &nmat * &out.z;
        eta.iter().map(|v| (v / y).max(0.0)).collect()
    };
    let measure = MeasureElement::new(tree, y, 1.0, q);
    let value = dual_objective(tree, field, &measure)?;
    let derivative = envelope(tree, field, &measure)?;
    Ok(DualSolution {
        y,
        measure,
        value,
        derivative,
    })
}

/// Dual problem over `{xi y Q : xi in (0,1], Q martingale measure}`.
/// The full-mass value is convex in its mass, so the best scale is `1` when
/// its derivative at `y` is non-positive and the interior stationary point otherwise.
pub fn solve_dual(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    y: f64,
) -> Result<DualSolution> {
    let full = solve_dual_full_mass(tree, poly, field, y)?;
    if full.derivative <= 0.0 {
        return Ok(full);
    }
    let slope = |s: f64| {
        solve_dual_full_mass(tree, poly, field, s)
            .map(|d| d.derivative)
            .unwrap_or(f64::NAN)
    };
    let mut lo = 0.5 * y;
    let mut k = 0;
    while slope(lo) > 0.0 {
        lo *= 0.5;
        k += 1;
        if k > 200 {
            return Err(Error::Solver("could not bracket the optimal dual scale".into()));
        }
    }
    let s = brent_root(slope, lo, y, 1e-14 * y, 200)?;
    let inner = solve_dual_full_mass(tree, poly, field, s)?;
    let measure = MeasureElement::new(tree, y, s / y, inner.measure.q.clone());
    Ok(DualSolution {
        y,
        value: inner.value,
        derivative: 0.0,
        measure,
    })
}

/// Wealth implied by the full-mass dual: `x(y) = -dv/dy`.
pub fn implied_wealth(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    y: f64,
) -> Result<f64> {
    Ok(-solve_dual_full_mass(tree, poly, field, y)?.derivative)
}

/// The `y` solving `x(y) = x`, for `x > -L(E)`.
pub fn dual_point_for_wealth(
    tree: &EventTree,
    poly: &MartingalePolytope,
    field: &dyn UtilityRandomField,
    x: f64,
) -> Result<f64> {
    let f = |y: f64| implied_wealth(tree, poly, field, y).map(|w| w - x).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (1.0, 1.0);
    for _ in 0..200 {
        if f(lo) > 0.0 {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..200 {
        if f(hi) < 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::Solver(format!("no dual point found for wealth {x}")));
    }
    brent_root(f, lo, hi, 1e-15 * hi, 300)
}
