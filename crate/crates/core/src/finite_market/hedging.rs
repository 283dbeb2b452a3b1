use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::polytope::MartingalePolytope;
use super::tree::EventTree;
use crate::error::{Error, Result};

/// Lower and upper hedging prices of the endowment stream, computed by the
/// node-wise programme and, when vertices are listed, by direct vertex search.
#[derive(Debug, Clone, Serialize)]
pub struct HedgingPrices {
    pub lower: f64,
    pub upper: f64,
    pub lower_measure: Vec<f64>,
    pub upper_measure: Vec<f64>,
    /// `(lower, upper)` from the vertex list, when available.
    pub vertex_check: Option<(f64, f64)>,
}

/// Cash flow `density(n) * dkappa(n)` per node.
pub fn clock_flows(tree: &EventTree, density: &[f64]) -> Vec<f64> {
    tree.nodes.iter().zip(density).map(|(n, d)| d * n.dkappa).collect()
}

/// `<f, Q>` for per-node densities and leaf weights.
pub fn price_under(tree: &EventTree, density: &[f64], q: &[f64]) -> f64 {
    tree.leaf_path_sums(density).iter().zip(q).map(|(s, w)| s * w).sum()
}

pub fn hedging_prices(tree: &EventTree, poly: &MartingalePolytope) -> HedgingPrices {
    let e = tree.endowments();
    let flows = clock_flows(tree, &e);
    let lo = poly.extreme_value(tree, &flows, false);
    let hi = poly.extreme_value(tree, &flows, true);
    let vertex_check = poly.vertices.as_ref().map(|vs| {
        let prices: Vec<f64> = vs.iter().map(|q| price_under(tree, &e, q)).collect();
        (
            prices.iter().cloned().fold(f64::INFINITY, f64::min),
            prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    });
    HedgingPrices {
        lower: lo.value[0],
        upper: hi.value[0],
        lower_measure: lo.measure,
        upper_measure: hi.measure,
        vertex_check,
    }
}

/// Cheapest super-replication of a stream of node cash flows.
#[derive(Debug, Clone, Serialize)]
pub struct Superhedge {
    pub price: f64,
    /// Value including the flow paid at the node.
    pub value: Vec<f64>,
    /// Shares held from each internal node to its children.
    pub hedge: Vec<Vec<f64>>,
    /// Measure attaining the price.
    pub measure: Vec<f64>,
}

/// Super-replicates the flows: starting from `price`, paying `flow(n)` at
/// each node and trading `hedge`, wealth stays above the remaining value.
pub fn superhedge(tree: &EventTree, poly: &MartingalePolytope, flow: &[f64]) -> Result<Superhedge> {
    let ev = poly.extreme_value(tree, flow, true);
    let mut hedge = vec![Vec::new(); tree.n_nodes()];
    for i in tree.internal_nodes() {
        let n = &tree.nodes[i];
        let reserve = ev.value[i] - flow[i];
        let targets: Vec<(Vec<f64>, f64)> = n
            .children
            .iter()
            .map(|&c| {
                let ds = tree.nodes[c].price.iter().zip(&n.price).map(|(a, b)| a - b).collect();
                (ds, ev.value[c] - reserve)
            })
            .collect();
        let support: Vec<usize> = poly.one_step[i][ev.choice[i]]
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .map(|(j, _)| j)
            .collect();
        hedge[i] = if tree.dim == 1 {
            scalar_hedge(&targets)
        } else {
            vector_hedge(&targets, &support, tree.dim)
        };
        let scale = 1.0 + ev.value[i].abs();
        for (ds, need) in &targets {
            let got: f64 = ds.iter().zip(&hedge[i]).map(|(a, h)| a * h).sum();
            if got < need - 1e-9 * scale {
                return Err(Error::Solver(format!(
                    "super-replicating hedge at node {} falls short by {}",
                    n.id,
                    need - got
                )));
            }
        }
    }
    Ok(Superhedge {
        price: ev.value[0],
        value: ev.value,
        hedge,
        measure: ev.measure,
    })
}

fn scalar_hedge(targets: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (ds, need) in targets {
        let d = ds[0];
        if d > 0.0 {
            lo = lo.max(need / d);
        } else if d < 0.0 {
            hi = hi.min(need / d);
        }
    }
    let h = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi.max(lo)),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    vec![h]
}

fn vector_hedge(targets: &[(Vec<f64>, f64)], support: &[usize], dim: usize) -> Vec<f64> {
    let m = DMatrix::from_fn(support.len(), dim, |r, c| targets[support[r]].0[c]);
    let rhs = DVector::from_iterator(support.len(), support.iter().map(|&j| targets[j].1));
    let svd = m.svd(true, true);
    match svd.solve(&rhs, 1e-12) {
        Ok(h) => h.iter().copied().collect(),
        Err(_) => vec![0.0; dim],
    }
}
