//! Core representation of discrete pairwise MRFs: variable specs, canonical
//! edges, grouped weight vectors, and graph-structural queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Named discrete variables with their state counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    names: Vec<String>,
    cardinalities: Vec<usize>,
}

impl VariableSpec {
    pub fn new(names: Vec<String>, cardinalities: Vec<usize>) -> Result<Self> {
        if names.len() != cardinalities.len() {
            return Err(Error::InvalidSpec(format!(
                "{} names but {} cardinalities",
                names.len(),
                cardinalities.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::InvalidSpec("no variables".into()));
        }
        if let Some((i, &s)) = cardinalities.iter().enumerate().find(|(_, &s)| s < 2) {
            return Err(Error::InvalidSpec(format!(
                "variable {} ({}) has cardinality {}, need at least 2",
                i, names[i], s
            )));
        }
        Ok(Self {
            names,
            cardinalities,
        })
    }

    /// `n` variables named `x0..x{n-1}`, all with `states` states.
    pub fn uniform(n: usize, states: usize) -> Result<Self> {
        Self::new(
            (0..n).map(|i| format!("x{i}")).collect(),
            vec![states; n],
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn card(&self, i: usize) -> usize {
        self.cardinalities[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn s_max(&self) -> usize {
        self.cardinalities.iter().copied().max().unwrap_or(0)
    }

    /// Number of candidate edges, `n(n-1)/2`.
    pub fn num_candidate_edges(&self) -> u64 {
        let n = self.len() as u64;
        n * (n - 1) / 2
    }
}

/// Canonical undirected edge between two variables, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    i: usize,
    j: usize,
}

impl EdgeId {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        Ok(Self {
            i: a.min(b),
            j: a.max(b),
        })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn touches(&self, node: usize) -> bool {
        self.i == node || self.j == node
    }

    /// Whether both edges share an endpoint.
    pub fn adjacent(&self, other: &EdgeId) -> bool {
        self.touches(other.i) || self.touches(other.j)
    }

    /// Rank of this edge in the lexicographic enumeration of all `i < j`
    /// pairs over `n` variables, in `[0, n(n-1)/2)`.
    pub fn to_linear(&self, n: usize) -> u64 {
        debug_assert!(self.j < n);
        let (n, i, j) = (n as u64, self.i as u64, self.j as u64);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Inverse of [`EdgeId::to_linear`].
    pub fn from_linear(mut idx: u64, n: usize) -> Self {
        debug_assert!(idx < (n as u64) * (n as u64 - 1) / 2);
        let mut i = 0usize;
        loop {
            let row = (n - i - 1) as u64;
            if idx < row {
                return Self {
                    i,
                    j: i + 1 + idx as usize,
                };
            }
            idx -= row;
            i += 1;
        }
    }

    /// Canonical string key `"i-j"`, used in model serialization.
    pub fn key(&self) -> String {
        format!("{}-{}", self.i, self.j)
    }

    pub fn from_key(key: &str) -> Result<Self> {
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidSpec(format!("bad edge key {key:?}")))
        };
        let (a, b) = key
            .split_once('-')
            .ok_or_else(|| Error::InvalidSpec(format!("bad edge key {key:?}")))?;
        Self::new(parse(a)?, parse(b)?)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.i, self.j)
    }
}

/// All candidate edges over `n` variables in lexicographic order.
pub fn all_edges(n: usize) -> impl Iterator<Item = EdgeId> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| EdgeId { i, j }))
}

/// Total parameter count of the fully connected model over `spec`:
/// `Σ_i s_i + Σ_{i<j} s_i·s_j`.
pub fn parameter_count(spec: &VariableSpec) -> u64 {
    let cards = spec.cardinalities();
    let unary: u64 = cards.iter().map(|&s| s as u64).sum();
    let mut pairwise = 0u64;
    for i in 0..cards.len() {
        for j in i + 1..cards.len() {
            pairwise += (cards[i] * cards[j]) as u64;
        }
    }
    unary + pairwise
}

/// Pairwise MRF with an explicit active edge set.
///
/// Node weight groups are always allocated (length `s_i`); an edge group is
/// allocated, zero-initialized, when the edge is activated. Edge weight
/// matrices are stored row-major as `s_i × s_j` with `i < j` canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfModel {
    spec: VariableSpec,
    active: BTreeSet<EdgeId>,
    node_weights: Vec<Vec<f64>>,
    edge_weights: BTreeMap<EdgeId, Vec<f64>>,
    neighbors: Vec<BTreeSet<usize>>,
}

impl MrfModel {
    /// Model with no active edges and all weights zero.
    pub fn disconnected(spec: VariableSpec) -> Self {
        let node_weights = spec.cardinalities().iter().map(|&s| vec![0.0; s]).collect();
        let neighbors = vec![BTreeSet::new(); spec.len()];
        Self {
            spec,
            active: BTreeSet::new(),
            node_weights,
            edge_weights: BTreeMap::new(),
            neighbors,
        }
    }

    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn num_vars(&self) -> usize {
        self.spec.len()
    }

    pub fn active_edges(&self) -> &BTreeSet<EdgeId> {
        &self.active
    }

    pub fn num_active_edges(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, e: &EdgeId) -> bool {
        self.active.contains(e)
    }

    /// Activate `e`, allocating its zero-initialized weight matrix.
    pub fn activate_edge(&mut self, e: EdgeId) -> Result<()> {
        if self.active.contains(&e) {
            return Err(Error::DuplicateActivation(e));
        }
        let dim = self.spec.card(e.i()) * self.spec.card(e.j());
        self.edge_weights.insert(e, vec![0.0; dim]);
        self.neighbors[e.i()].insert(e.j());
        self.neighbors[e.j()].insert(e.i());
        self.active.insert(e);
        Ok(())
    }

    pub fn node_weight(&self, i: usize) -> &[f64] {
        &self.node_weights[i]
    }

    pub fn node_weight_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.node_weights[i]
    }

    pub fn edge_weight(&self, e: &EdgeId) -> Option<&[f64]> {
        self.edge_weights.get(e).map(|w| w.as_slice())
    }

    pub fn edge_weight_mut(&mut self, e: &EdgeId) -> Option<&mut Vec<f64>> {
        self.edge_weights.get_mut(e)
    }

    /// Pairwise weight entry for states `(a, b)` of the canonical endpoints
    /// of `e`; zero when `e` is inactive.
    pub fn edge_entry(&self, e: &EdgeId, a: usize, b: usize) -> f64 {
        match self.edge_weights.get(e) {
            Some(w) => w[a * self.spec.card(e.j()) + b],
            None => 0.0,
        }
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Degree centrality `c_i = degree / (n-1)`.
    pub fn degree_centrality(&self, i: usize) -> Result<f64> {
        let n = self.num_vars();
        if n < 2 {
            return Err(Error::TooFewVariables);
        }
        Ok(self.degree(i) as f64 / (n - 1) as f64)
    }

    /// Nodes with degree centrality strictly above `c_hat`.
    pub fn hub_set(&self, c_hat: f64) -> BTreeSet<usize> {
        let n = self.num_vars();
        if n < 2 {
            return BTreeSet::new();
        }
        (0..n)
            .filter(|&i| self.degree(i) as f64 / (n - 1) as f64 > c_hat)
            .collect()
    }

    /// Group dimension: `s_i` for node groups.
    pub fn node_group_dim(&self, i: usize) -> usize {
        self.spec.card(i)
    }

    /// Group dimension: `s_i·s_j` for edge groups.
    pub fn edge_group_dim(&self, e: &EdgeId) -> usize {
        self.spec.card(e.i()) * self.spec.card(e.j())
    }

    /// `||w||²₂` over all allocated weights.
    pub fn squared_weight_norm(&self) -> f64 {
        let nodes: f64 = self
            .node_weights
            .iter()
            .flat_map(|w| w.iter())
            .map(|x| x * x)
            .sum();
        let edges: f64 = self
            .edge_weights
            .values()
            .flat_map(|w| w.iter())
            .map(|x| x * x)
            .sum();
        nodes + edges
    }

    /// Group penalty `Σ_g d_g·||w_g||₂`, optionally exempting node groups.
    pub fn group_norm_penalty(&self, penalize_nodes: bool) -> f64 {
        let mut total = 0.0;
        if penalize_nodes {
            for (i, w) in self.node_weights.iter().enumerate() {
                total += self.node_group_dim(i) as f64 * l2_norm(w);
            }
        }
        for (e, w) in &self.edge_weights {
            total += self.edge_group_dim(e) as f64 * l2_norm(w);
        }
        total
    }

    /// JSON document with the spec, active edge list, and row-major weight
    /// arrays keyed by canonical edge id `"i-j"`.
    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<[usize; 2]> = self.active.iter().map(|e| [e.i(), e.j()]).collect();
        let weights: BTreeMap<String, &Vec<f64>> = self
            .edge_weights
            .iter()
            .map(|(e, w)| (e.key(), w))
            .collect();
        serde_json::json!({
            "spec": self.spec,
            "active_edges": edges,
            "node_weights": self.node_weights,
            "edge_weights": weights,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            spec: VariableSpec,
            active_edges: Vec<[usize; 2]>,
            node_weights: Vec<Vec<f64>>,
            edge_weights: BTreeMap<String, Vec<f64>>,
        }
        let doc: Doc = serde_json::from_value(value.clone())?;
        let spec = VariableSpec::new(doc.spec.names, doc.spec.cardinalities)?;
        let mut model = Self::disconnected(spec);
        if doc.node_weights.len() != model.num_vars() {
            return Err(Error::InvalidSpec("node weight count mismatch".into()));
        }
        for (i, w) in doc.node_weights.into_iter().enumerate() {
            if w.len() != model.spec.card(i) {
                return Err(Error::InvalidSpec(format!(
                    "node {i} weight length {} != cardinality {}",
                    w.len(),
                    model.spec.card(i)
                )));
            }
            model.node_weights[i] = w;
        }
        for pair in doc.active_edges {
            let e = EdgeId::new(pair[0], pair[1])?;
            if e.j() >= model.num_vars() {
                return Err(Error::InvalidSpec(format!("edge {e} out of range")));
            }
            model.activate_edge(e)?;
            if let Some(w) = doc.edge_weights.get(&e.key()) {
                let dim = model.edge_group_dim(&e);
                if w.len() != dim {
                    return Err(Error::InvalidSpec(format!(
                        "edge {e} weight length {} != {dim}",
                        w.len()
                    )));
                }
                *model.edge_weight_mut(&e).unwrap() = w.clone();
            }
        }
        Ok(model)
    }

    /// One `"i j"` pair per line, sorted canonically.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.active {
            writeln!(w, "{} {}", e.i(), e.j())?;
        }
        Ok(())
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
