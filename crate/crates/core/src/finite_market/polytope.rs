use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::tree::EventTree;
use crate::error::{Error, Result};

/// Largest leaf count for which global vertices are listed explicitly.
pub const MAX_VERTEX_LEAVES: usize = 12;

/// The set of leaf weights `q >= 0` under which the price is a martingale.
#[derive(Debug, Clone, Serialize)]
pub struct MartingalePolytope {
    /// Rows: one per (internal node, asset), then the normalisation row.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Global vertices (leaf weights), listed when the tree is small enough.
    pub vertices: Option<Vec<Vec<f64>>>,
    /// Per-node conditional vertices over the children (empty at leaves).
    pub one_step: Vec<Vec<Vec<f64>>>,
    /// A strictly positive member: product of one-step vertex barycentres.
    pub interior: Vec<f64>,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Reduced row echelon form of `[A | b]`; returns the independent rows and
/// whether the system is consistent.
fn rref(mut m: Vec<Vec<BigRational>>) -> (Vec<Vec<BigRational>>, bool) {
    let rows = m.len();
    if rows == 0 {
        return (m, true);
    }
    let cols = m[0].len() - 1;
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let piv = m[r][c].clone();
        for v in m[r].iter_mut() {
            *v = &*v / &piv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..=cols {
                    let delta = &f * &m[r][j];
                    m[i][j] = &m[i][j] - delta;
                }
            }
        }
        r += 1;
        if r == rows {
            break;
        }
    }
    let consistent = m[r..].iter().all(|row| row[cols].is_zero());
    m.truncate(r);
    (m, consistent)
}

/// Solves the square system `M z = rhs` exactly; `None` if singular.
fn solve_square(mut m: Vec<Vec<BigRational>>, mut rhs: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).find(|&i| !m[i][c].is_zero())?;
        m.swap(c, p);
        rhs.swap(c, p);
        for i in c + 1..n {
            if m[i][c].is_zero() {
                continue;
            }
            let f = &m[i][c] / &m[c][c];
            for j in c..n {
                let delta = &f * &m[c][j];
                m[i][j] = &m[i][j] - delta;
            }
            let delta = &f * &rhs[c];
            rhs[i] = &rhs[i] - delta;
        }
    }
    let mut z = vec![BigRational::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i].clone();
        for j in i + 1..n {
            s -= &m[i][j] * &z[j];
        }
        z[i] = s / &m[i][i];
    }
    Some(z)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact vertices of `{q >= 0 : A q = b}` by enumerating bases.
/// Returns `None` when the system itself is inconsistent.
pub fn enumerate_vertices(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<Vec<f64>>> {
    let cols = a.first().map_or(0, |r| r.len());
    let aug: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| row.iter().map(|&v| rat(v)).chain(std::iter::once(rat(bi))).collect())
        .collect();
    let (red, consistent) = rref(aug);
    if !consistent {
        return None;
    }
    let r = red.len();
    let mut found: Vec<Vec<BigRational>> = Vec::new();
    if r == 0 {
        found.push(vec![BigRational::zero(); cols]);
    } else if r <= cols {
        let mut idx: Vec<usize> = (0..r).collect();
        loop {
            let sub: Vec<Vec<BigRational>> = red
                .iter()
                .map(|row| idx.iter().map(|&j| row[j].clone()).collect())
                .collect();
            let rhs: Vec<BigRational> = red.iter().map(|row| row[cols].clone()).collect();
            if let Some(z) = solve_square(sub, rhs) {
                if z.iter().all(|v| !v.is_negative()) {
                    let mut q = vec![BigRational::zero(); cols];
                    for (&j, v) in idx.iter().zip(z) {
                        q[j] = v;
                    }
                    if !found.contains(&q) {
                        found.push(q);
                    }
                }
            }
            if !next_combination(&mut idx, cols) {
                break;
            }
        }
    }
    Some(found.iter().map(|q| q.iter().map(to_f64).collect()).collect())
}

fn one_step_system(tree: &EventTree, node: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = &tree.nodes[node];
    let mut a = Vec::with_capacity(tree.dim + 1);
    let mut b = Vec::with_capacity(tree.dim + 1);
    for k in 0..tree.dim {
        a.push(
            n.children
                .iter()
                .map(|&c| tree.nodes[c].price[k] - n.price[k])
                .collect(),
        );
        b.push(0.0);
    }
    a.push(vec![1.0; n.children.len()]);
    b.push(1.0);
    (a, b)
}

/// Martingale constraint rows on leaf weights (without the normalisation).
pub fn martingale_rows(tree: &EventTree) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for i in tree.internal_nodes() {
        let n = &tree.nodes[i];
        for k in 0..tree.dim {
            let mut row = vec![0.0; tree.n_leaves()];
            for &c in &n.children {
                let ch = &tree.nodes[c];
                let ds = ch.price[k] - n.price[k];
                for v in &mut row[ch.leaf_lo..ch.leaf_hi] {
                    *v = ds;
                }
            }
            rows.push(row);
        }
    }
    rows
}

/// Builds the martingale polytope, refusing trees that admit arbitrage
/// (no equivalent martingale measure).
pub fn martingale_polytope(tree: &EventTree) -> Result<MartingalePolytope> {
    let mut one_step = vec![Vec::new(); tree.n_nodes()];
    for i in tree.internal_nodes() {
        let (a, b) = one_step_system(tree, i);
        let verts = enumerate_vertices(&a, &b).unwrap_or_default();
        let id = &tree.nodes[i].id;
        if verts.is_empty() {
            return Err(Error::Arbitrage(format!(
                "no martingale measure exists at node {id}: the price moves in one direction only"
            )));
        }
        let k = tree.nodes[i].children.len();
        if let Some(j) = (0..k).find(|&j| verts.iter().all(|v| v[j] == 0.0)) {
            return Err(Error::Arbitrage(format!(
                "every martingale measure gives zero weight to child {} of node {id}; no equivalent measure exists",
                tree.nodes[tree.nodes[i].children[j]].id
            )));
        }
        one_step[i] = verts;
    }
    let mut cond = vec![1.0; tree.n_nodes()];
    for i in tree.internal_nodes() {
        let verts = &one_step[i];
        for (j, &c) in tree.nodes[i].children.iter().enumerate() {
            cond[c] = verts.iter().map(|v| v[j]).sum::<f64>() / verts.len() as f64;
        }
    }
    let interior = leaf_weights_from_conditionals(tree, &cond);

    let mut a = martingale_rows(tree);
    let mut b = vec![0.0; a.len()];
    a.push(vec![1.0; tree.n_leaves()]);
    b.push(1.0);
    let vertices = if tree.n_leaves() <= MAX_VERTEX_LEAVES {
        let v = enumerate_vertices(&a, &b).unwrap_or_default();
        if v.is_empty() {
            return Err(Error::Arbitrage("the martingale polytope is empty".into()));
        }
        Some(v)
    } else {
        None
    };
    Ok(MartingalePolytope {
        a,
        b,
        vertices,
        one_step,
        interior,
    })
}

/// Leaf weights from per-node conditional probabilities (`cond[root]` ignored).
pub fn leaf_weights_from_conditionals(tree: &EventTree, cond: &[f64]) -> Vec<f64> {
    let mut mass = vec![1.0; tree.n_nodes()];
    for i in 1..tree.n_nodes() {
        let p = tree.nodes[i].parent.expect("non-root has a parent");
        mass[i] = mass[p] * cond[i];
    }
    tree.leaves.iter().map(|&l| mass[l]).collect()
}

/// Result of an extremal dynamic programme over the one-step vertices.
#[derive(Debug, Clone)]
pub struct ExtremeValue {
    /// `value(n) = flow(n) + opt_r sum_c r_c value(c)`.
    pub value: Vec<f64>,
    /// Chosen one-step vertex index per internal node.
    pub choice: Vec<usize>,
    /// Global measure assembled from the choices.
    pub measure: Vec<f64>,
}

impl MartingalePolytope {
    /// Optimises `sum_n Q(n) flow(n)` over the polytope node by node.
    pub fn extreme_value(&self, tree: &EventTree, flow: &[f64], maximize: bool) -> ExtremeValue {
        let mut value = flow.to_vec();
        let mut choice = vec![0usize; tree.n_nodes()];
        let mut cond = vec![1.0; tree.n_nodes()];
        for i in (0..tree.n_nodes()).rev() {
            let n = &tree.nodes[i];
            if n.is_leaf() {
                continue;
            }
            let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
            for (vi, v) in self.one_step[i].iter().enumerate() {
                let s: f64 = n.children.iter().zip(v).map(|(&c, r)| r * value[c]).sum();
                if (maximize && s > best) || (!maximize && s < best) {
                    best = s;
                    choice[i] = vi;
                }
            }
            value[i] += best;
            for (j, &c) in n.children.iter().enumerate() {
                cond[c] = self.one_step[i][choice[i]][j];
            }
        }
        let measure = leaf_weights_from_conditionals(tree, &cond);
        ExtremeValue { value, choice, measure }
    }

    pub fn contains(&self, q: &[f64], tol: f64) -> bool {
        q.iter().all(|&v| v >= -tol)
            && self
                .a
                .iter()
                .zip(&self.b)
                .all(|(row, bi)| (row.iter().zip(q).map(|(a, q)| a * q).sum::<f64>() - bi).abs() <= tol)
    }
}

/// Basis of `{z : A z = 0}` from the exact reduced row echelon form.
pub(crate) fn null_space(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = a.first().map_or(0, |r| r.len());
    let aug: Vec<Vec<BigRational>> = a
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| rat(v))
                .chain(std::iter::once(BigRational::zero()))
                .collect()
        })
        .collect();
    let (red, _) = rref(aug);
    let pivots: Vec<usize> = red
        .iter()
        .map(|row| row.iter().position(|v| !v.is_zero()).expect("non-zero row"))
        .collect();
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut z = vec![0.0; cols];
            z[free] = 1.0;
            for (row, &p) in red.iter().zip(&pivots) {
                z[p] = -to_f64(&row[free]);
            }
            z
        })
        .collect()
}
