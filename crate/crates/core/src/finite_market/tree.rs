use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::UtilitySpec;

const CLOCK_TOL: f64 = 1e-12;

/// Node identifier as written in a tree file: integer or string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Int(i64),
    Str(String),
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Int(i) => write!(f, "{i}"),
            NodeId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default)]
    pub parent: Option<NodeId>,
    /// Conditional probability given the parent; ignored (may be omitted) at the root.
    #[serde(default)]
    pub prob: Option<f64>,
    pub price: Vec<f64>,
    pub dkappa: f64,
    #[serde(default)]
    pub endow: f64,
    /// Calendar time; defaults to the depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// Contents of a tree file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFile {
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    pub t: f64,
    /// Conditional branch probability (1 at the root).
    pub prob: f64,
    /// Unconditional probability of reaching the node.
    pub pmass: f64,
    pub price: Vec<f64>,
    pub dkappa: f64,
    pub endow: f64,
    /// Half-open range of leaf positions below the node.
    pub leaf_lo: usize,
    pub leaf_hi: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Finite market on an event tree. Nodes are stored in depth-first
/// pre-order, so each subtree owns a contiguous block of leaves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTree {
    pub nodes: Vec<Node>,
    pub leaves: Vec<usize>,
    pub dim: usize,
}

impl EventTree {
    pub fn from_specs(specs: &[NodeSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Tree("tree has no nodes".into()));
        }
        let mut index = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Tree(format!("duplicate node id {}", s.id)));
            }
        }
        let dim = specs[0].price.len();
        if dim == 0 {
            return Err(Error::Tree("price vectors must be non-empty".into()));
        }
        let mut roots = Vec::new();
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (i, s) in specs.iter().enumerate() {
            if s.price.len() != dim {
                return Err(Error::Tree(format!(
                    "node {} has {} prices, expected {dim}",
                    s.id,
                    s.price.len()
                )));
            }
            if s.price.iter().any(|p| !p.is_finite()) {
                return Err(Error::Tree(format!("node {} has a non-finite price", s.id)));
            }
            if !(s.dkappa >= 0.0 && s.dkappa.is_finite()) {
                return Err(Error::Tree(format!("node {} has negative clock increment", s.id)));
            }
            if !(s.endow >= 0.0 && s.endow.is_finite()) {
                return Err(Error::Tree(format!("node {} has negative endowment", s.id)));
            }
            match &s.parent {
                None => roots.push(i),
                Some(p) => {
                    let &pi = index
                        .get(p)
                        .ok_or_else(|| Error::Tree(format!("node {} has unknown parent {p}", s.id)))?;
                    kids[pi].push(i);
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::Tree(format!("expected exactly one root, found {}", roots.len())));
        }
        let root = roots[0];

        let mut nodes: Vec<Node> = Vec::with_capacity(specs.len());
        let mut leaves = Vec::new();
        // iterative pre-order walk: (spec index, new parent index, depth)
        let mut stack = vec![(root, None::<usize>, 0usize)];
        while let Some((si, parent, depth)) = stack.pop() {
            let s = &specs[si];
            let prob = match parent {
                None => 1.0,
                Some(_) => s
                    .prob
                    .ok_or_else(|| Error::Tree(format!("node {} lacks a branch probability", s.id)))?,
            };
            if parent.is_some() && !(prob > 0.0 && prob <= 1.0) {
                return Err(Error::Tree(format!(
                    "node {} has probability {prob} outside (0,1]",
                    s.id
                )));
            }
            let pmass = parent.map_or(1.0, |p| nodes[p].pmass) * prob;
            let me = nodes.len();
            if nodes.len() == specs.len() {
                return Err(Error::Tree("parent links contain a cycle".into()));
            }
            nodes.push(Node {
                id: s.id.clone(),
                parent,
                children: Vec::new(),
                depth,
                t: s.t.unwrap_or(depth as f64),
                prob,
                pmass,
                price: s.price.clone(),
                dkappa: s.dkappa,
                endow: s.endow,
                leaf_lo: 0,
                leaf_hi: 0,
            });
            if let Some(p) = parent {
                nodes[p].children.push(me);
            }
            for &k in kids[si].iter().rev() {
                stack.push((k, Some(me), depth + 1));
            }
        }
        if nodes.len() != specs.len() {
            return Err(Error::Tree(format!(
                "{} nodes are not reachable from the root",
                specs.len() - nodes.len()
            )));
        }
        for i in 0..nodes.len() {
            if nodes[i].is_leaf() {
                nodes[i].leaf_lo = leaves.len();
                leaves.push(i);
            }
        }
        for i in (0..nodes.len()).rev() {
            if !nodes[i].is_leaf() {
                let (first, last) = (nodes[i].children[0], *nodes[i].children.last().unwrap());
                nodes[i].leaf_lo = nodes[first].leaf_lo;
                nodes[i].leaf_hi = nodes[last].leaf_hi;
            } else {
                nodes[i].leaf_hi = nodes[i].leaf_lo + 1;
            }
        }
        let tree = Self { nodes, leaves, dim };
        tree.check_probabilities()?;
        tree.check_clock()?;
        Ok(tree)
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<UtilitySpec>)> {
        let file: TreeFile = serde_json::from_str(text).map_err(|e| Error::Tree(e.to_string()))?;
        Ok((Self::from_specs(&file.nodes)?, file.utility))
    }

    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                parent: n.parent.map(|p| self.nodes[p].id.clone()),
                prob: n.parent.map(|_| n.prob),
                price: n.price.clone(),
                dkappa: n.dkappa,
                endow: n.endow,
                t: (n.t != n.depth as f64).then_some(n.t),
            })
            .collect()
    }

    fn check_probabilities(&self) -> Result<()> {
        for n in &self.nodes {
            if n.is_leaf() {
                continue;
            }
            let s: f64 = n.children.iter().map(|&c| self.nodes[c].prob).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Tree(format!("branch probabilities at node {} sum to {s}", n.id)));
            }
        }
        Ok(())
    }

    fn check_clock(&self) -> Result<()> {
        for &l in &self.leaves {
            let s: f64 = self.path(l).iter().map(|&n| self.nodes[n].dkappa).sum();
            if (s - 1.0).abs() > CLOCK_TOL {
                return Err(Error::Tree(format!(
                    "clock increments along the path to leaf {} sum to {s}, not 1",
                    self.nodes[l].id
                )));
            }
        }
        Ok(())
    }

    /// Node indices from the root to `node` inclusive.
    pub fn path(&self, node: usize) -> Vec<usize> {
        let mut p = vec![node];
        let mut cur = node;
        while let Some(par) = self.nodes[cur].parent {
            p.push(par);
            cur = par;
        }
        p.reverse();
        p
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf())
    }

    /// Subtree mass of leaf weights `q` at every node.
    pub fn node_mass(&self, q: &[f64]) -> Vec<f64> {
        let mut prefix = vec![0.0; q.len() + 1];
        for (i, v) in q.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        self.nodes
            .iter()
            .map(|n| prefix[n.leaf_hi] - prefix[n.leaf_lo])
            .collect()
    }

    /// Path sums `sum_{n <= leaf} f(n) dkappa(n)` for every leaf.
    pub fn leaf_path_sums(&self, per_node: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let up = self.nodes[i].parent.map_or(0.0, |p| acc[p]);
            acc[i] = up + per_node[i] * self.nodes[i].dkappa;
        }
        self.leaves.iter().map(|&l| acc[l]).collect()
    }

    /// Nodes carrying clock mass.
    pub fn clock_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].dkappa > 0.0).collect()
    }

    pub fn endowments(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.endow).collect()
    }

    /// Wealth recursion: post-cash-flow wealth `X(n) = W(n) - c(n) dk(n) + e(n) dk(n)`
    /// with `W(root) = x` and `W(child) = X(parent) + H(parent).(S(child) - S(parent))`.
    /// `hedge` is indexed by node (empty vectors at leaves).
    pub fn wealth(&self, x: f64, c: &[f64], hedge: &[Vec<f64>]) -> Vec<f64> {
        let mut xs = vec![0.0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let n = &self.nodes[i];
            let w = match n.parent {
                None => x,
                Some(p) => {
                    let pn = &self.nodes[p];
                    xs[p]
                        + hedge[p]
                            .iter()
                            .zip(n.price.iter().zip(&pn.price))
                            .map(|(h, (s1, s0))| h * (s1 - s0))
                            .sum::<f64>()
                }
            };
            xs[i] = w + (n.endow - c[i]) * n.dkappa;
        }
        xs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: i64, parent: Option<i64>, prob: f64, price: f64, dk: f64) -> NodeSpec {
        NodeSpec {
            id: NodeId::Int(id),
            parent: parent.map(NodeId::Int),
            prob: Some(prob),
            price: vec![price],
            dkappa: dk,
            endow: 0.0,
            t: None,
        }
    }

    #[test]
    fn preorder_and_leaf_ranges() {
        let t = EventTree::from_specs(&[
            spec(0, None, 1.0, 1.0, 0.0),
            spec(1, Some(0), 0.5, 2.0, 0.0),
            spec(2, Some(0), 0.5, 0.5, 1.0),
            spec(3, Some(1), 0.3, 3.0, 1.0),
            spec(4, Some(1), 0.7, 1.0, 1.0),
        ])
        .unwrap();
        assert_eq!(t.n_leaves(), 3);
        let ids: Vec<String> = t.nodes.iter().map(|n| n.id.to_string()).collect();
        assert_eq!(ids, ["0", "1", "3", "4", "2"]);
        assert_eq!((t.nodes[1].leaf_lo, t.nodes[1].leaf_hi), (0, 2));
        assert!((t.nodes[2].pmass - 0.15).abs() < 1e-15);
        assert_eq!(t.node_mass(&[0.2, 0.3, 0.5]), vec![1.0, 0.5, 0.2, 0.3, 0.5]);
    }

    #[test]
    fn rejects_malformed_trees() {
        let bad_clock = [spec(0, None, 1.0, 1.0, 0.5), spec(1, Some(0), 1.0, 1.0, 0.4)];
        assert!(EventTree::from_specs(&bad_clock).is_err());
        let bad_prob = [
            spec(0, None, 1.0, 1.0, 0.0),
            spec(1, Some(0), 0.6, 1.0, 1.0),
            spec(2, Some(0), 0.6, 1.0, 1.0),
        ];
        assert!(EventTree::from_specs(&bad_prob).is_err());
        let two_roots = [spec(0, None, 1.0, 1.0, 1.0), spec(1, None, 1.0, 1.0, 1.0)];
        assert!(EventTree::from_specs(&two_roots).is_err());
        let orphan = [spec(0, None, 1.0, 1.0, 1.0), spec(1, Some(7), 1.0, 1.0, 0.0)];
        assert!(EventTree::from_specs(&orphan).is_err());
        let cyc = [
            spec(0, None, 1.0, 1.0, 1.0),
            spec(1, Some(2), 1.0, 1.0, 0.0),
            spec(2, Some(1), 1.0, 1.0, 0.0),
        ];
        assert!(EventTree::from_specs(&cyc).is_err());
    }

    #[test]
    fn json_parse_error_reports_location() {
        let err = EventTree::from_json("{\"nodes\": [\n{\"id\": 0, \"price\": [1.0], \"dkappa\": 1.0, \"bogus\": 1}]}")
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
