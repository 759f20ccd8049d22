//! Model-expectation providers behind a single engine contract: an exact
//! enumeration oracle, loopy belief propagation, and pseudolikelihood
//! quantities. All potential arithmetic is carried out in log space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DiscreteDataset;
use crate::model::{EdgeId, MrfModel};
use crate::{Error, Result};

/// Exact enumeration is rejected above this joint state-space size.
pub const EXACT_STATE_CAP: u64 = 10_000_000;

/// Node and pairwise marginal estimates produced by an inference engine.
#[derive(Debug, Clone)]
pub struct Beliefs {
    pub node_beliefs: Vec<Vec<f64>>,
    /// One `s_i × s_j` row-major table per active edge.
    pub edge_beliefs: BTreeMap<EdgeId, Vec<f64>>,
    /// Log partition function; only the exact engine fills this in.
    pub log_z: Option<f64>,
    /// False when BP stopped at its iteration cap without meeting tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// Max message change per BP iteration (empty for the exact engine).
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Exact,
    #[serde(rename = "bp")]
    LoopyBp,
}

/// Inference engine selection plus BP convergence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::LoopyBp,
            max_iters: 500,
            tol: 1e-8,
            damping: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn exact() -> Self {
        Self {
            kind: EngineKind::Exact,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "bp damping {} not in [0, 1)",
                self.damping
            )));
        }
        if self.tol <= 0.0 || self.max_iters == 0 {
            return Err(Error::Config("bp tol/max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Dispatches to the configured engine.
pub fn compute_beliefs(model: &MrfModel, engine: &EngineConfig) -> Result<Beliefs> {
    match engine.kind {
        EngineKind::Exact => exact_marginals(model),
        EngineKind::LoopyBp => Ok(loopy_bp(model, engine)),
    }
}

/// Exact node and active-edge marginals by full joint enumeration, plus
/// `log Z`. Rejected when the state space exceeds [`EXACT_STATE_CAP`].
pub fn exact_marginals(model: &MrfModel) -> Result<Beliefs> {
    let spec = model.spec();
    let n = spec.len();
    let mut total: u128 = 1;
    for i in 0..n {
        total = total.saturating_mul(spec.card(i) as u128);
        if total > EXACT_STATE_CAP as u128 {
            return Err(Error::StateSpaceTooLarge(total, EXACT_STATE_CAP));
        }
    }

    let log_potential = |state: &[u32]| -> f64 {
        let mut lp = 0.0;
        for i in 0..n {
            lp += model.node_weight(i)[state[i] as usize];
        }
        for e in model.active_edges() {
            lp += model.edge_entry(e, state[e.i()] as usize, state[e.j()] as usize);
        }
        lp
    };

    // First pass: max log potential, for stable normalization.
    let mut state = vec![0u32; n];
    let mut max_lp = f64::NEG_INFINITY;
    loop {
        max_lp = max_lp.max(log_potential(&state));
        if !advance(&mut state, spec.cardinalities()) {
            break;
        }
    }

    let mut z = 0.0;
    let mut node_beliefs: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; spec.card(i)]).collect();
    let mut edge_beliefs: BTreeMap<EdgeId, Vec<f64>> = model
        .active_edges()
        .iter()
        .map(|e| (*e, vec![0.0; model.edge_group_dim(e)]))
        .collect();
    let mut state = vec![0u32; n];
    loop {
        let p = (log_potential(&state) - max_lp).exp();
        z += p;
        for i in 0..n {
            node_beliefs[i][state[i] as usize] += p;
        }
        for (e, table) in edge_beliefs.iter_mut() {
            let sj = spec.card(e.j());
            table[state[e.i()] as usize * sj + state[e.j()] as usize] += p;
        }
        if !advance(&mut state, spec.cardinalities()) {
            break;
        }
    }

    for b in node_beliefs.iter_mut() {
        for v in b.iter_mut() {
            *v /= z;
        }
    }
    for table in edge_beliefs.values_mut() {
        for v in table.iter_mut() {
            *v /= z;
        }
    }
    Ok(Beliefs {
        node_beliefs,
        edge_beliefs,
        log_z: Some(max_lp + z.ln()),
        converged: true,
        iterations: 0,
        residuals: Vec::new(),
    })
}

fn advance(state: &mut [u32], cards: &[usize]) -> bool {
    for i in (0..state.len()).rev() {
        state[i] += 1;
        if (state[i] as usize) < cards[i] {
            return true;
        }
        state[i] = 0;
    }
    false
}

/// Synchronous damped sum-product message passing on the active graph.
///
/// Always returns beliefs; `converged` is false when the message residual
/// never dropped below `engine.tol` within `engine.max_iters` iterations.
pub fn loopy_bp(model: &MrfModel, engine: &EngineConfig) -> Beliefs {
    let spec = model.spec();
    let n = spec.len();
    let edges: Vec<EdgeId> = model.active_edges().iter().copied().collect();

    // Directed message indexing: 2k is i->j for edge k=(i,j), 2k+1 is j->i.
    // Message i->j is a normalized log-distribution over states of j.
    let num_dir = 2 * edges.len();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut messages: Vec<Vec<f64>> = Vec::with_capacity(num_dir);
    let mut msg_target: Vec<usize> = Vec::with_capacity(num_dir);
    for (k, e) in edges.iter().enumerate() {
        messages.push(vec![-((spec.card(e.j()) as f64).ln()); spec.card(e.j())]);
        msg_target.push(e.j());
        incoming[e.j()].push(2 * k);
        messages.push(vec![-((spec.card(e.i()) as f64).ln()); spec.card(e.i())]);
        msg_target.push(e.i());
        incoming[e.i()].push(2 * k + 1);
    }

    // Pre-belief at a node excluding one incoming direction.
    let pre_belief = |messages: &[Vec<f64>], node: usize, skip: Option<usize>| -> Vec<f64> {
        let mut acc = model.node_weight(node).to_vec();
        for &d in &incoming[node] {
            if Some(d) == skip {
                continue;
            }
            for (a, v) in acc.iter_mut().enumerate() {
                *v += messages[d][a];
            }
        }
        acc
    };

    let mut iterations = 0;
    let mut residuals = Vec::new();
    let mut converged = edges.is_empty();
    let mut next = messages.clone();
    for _ in 0..engine.max_iters {
        if converged {
            break;
        }
        let mut max_delta = 0.0f64;
        for (k, e) in edges.iter().enumerate() {
            let (si, sj) = (spec.card(e.i()), spec.card(e.j()));
            // i -> j: sum over x_i of potential + pre-belief at i minus the
            // message j previously sent to i.
            let from_i = pre_belief(&messages, e.i(), Some(2 * k + 1));
            let from_j = pre_belief(&messages, e.j(), Some(2 * k));
            for (dir, source, s_src, s_dst) in
                [(2 * k, &from_i, si, sj), (2 * k + 1, &from_j, sj, si)]
            {
                let mut fresh = vec![0.0; s_dst];
                let mut terms = vec![0.0; s_src];
                for (b, f) in fresh.iter_mut().enumerate() {
                    for a in 0..s_src {
                        let w = if dir % 2 == 0 {
                            model.edge_entry(e, a, b)
                        } else {
                            model.edge_entry(e, b, a)
                        };
                        terms[a] = source[a] + w;
                    }
                    *f = log_sum_exp(&terms);
                }
                let norm = log_sum_exp(&fresh);
                for f in fresh.iter_mut() {
                    *f -= norm;
                }
                for (b, f) in fresh.iter().enumerate() {
                    let old = messages[dir][b];
                    let damped = engine.damping * old + (1.0 - engine.damping) * f;
                    max_delta = max_delta.max((damped - old).abs());
                    next[dir][b] = damped;
                }
                // Renormalize after damping.
                let norm = log_sum_exp(&next[dir]);
                for v in next[dir].iter_mut() {
                    *v -= norm;
                }
            }
        }
        std::mem::swap(&mut messages, &mut next);
        iterations += 1;
        residuals.push(max_delta);
        if max_delta < engine.tol {
            converged = true;
        }
    }

    let mut node_beliefs = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = pre_belief(&messages, i, None);
        let norm = log_sum_exp(&b);
        for v in b.iter_mut() {
            *v = (*v - norm).exp();
        }
        node_beliefs.push(b);
    }

    let mut edge_beliefs = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        let (si, sj) = (spec.card(e.i()), spec.card(e.j()));
        let from_i = pre_belief(&messages, e.i(), Some(2 * k + 1));
        let from_j = pre_belief(&messages, e.j(), Some(2 * k));
        let mut table = vec![0.0; si * sj];
        for a in 0..si {
            for b in 0..sj {
                table[a * sj + b] = from_i[a] + from_j[b] + model.edge_entry(e, a, b);
            }
        }
        let norm = log_sum_exp(&table);
        for v in table.iter_mut() {
            *v = (*v - norm).exp();
        }
        edge_beliefs.insert(*e, table);
    }

    let _ = msg_target;
    Beliefs {
        node_beliefs,
        edge_beliefs,
        log_z: None,
        converged,
        iterations,
        residuals,
    }
}

/// Model pairwise marginal estimate `p̂_w(e)`: the stored edge belief for an
/// active edge, or the outer product of node beliefs for an inactive one.
pub fn pair_marginal_estimate(beliefs: &Beliefs, e: &EdgeId) -> Vec<f64> {
    if let Some(table) = beliefs.edge_beliefs.get(e) {
        return table.clone();
    }
    let bi = &beliefs.node_beliefs[e.i()];
    let bj = &beliefs.node_beliefs[e.j()];
    let mut table = Vec::with_capacity(bi.len() * bj.len());
    for &a in bi {
        for &b in bj {
            table.push(a * b);
        }
    }
    table
}

/// `p(x_i = a | x_{N(i)})` under the model, as a normalized vector over `a`.
pub fn conditional_distribution(model: &MrfModel, x: &[u32], i: usize) -> Vec<f64> {
    let mut logits = conditional_logits(model, x, i);
    let norm = log_sum_exp(&logits);
    for v in logits.iter_mut() {
        *v = (*v - norm).exp();
    }
    logits
}

fn conditional_logits(model: &MrfModel, x: &[u32], i: usize) -> Vec<f64> {
    let mut logits = model.node_weight(i).to_vec();
    for &j in model.neighbors(i) {
        let e = EdgeId::new(i, j).expect("neighbor is distinct");
        if i < j {
            let b = x[j] as usize;
            for (a, v) in logits.iter_mut().enumerate() {
                *v += model.edge_entry(&e, a, b);
            }
        } else {
            let a = x[j] as usize;
            for (b, v) in logits.iter_mut().enumerate() {
                *v += model.edge_entry(&e, a, b);
            }
        }
    }
    logits
}

/// Negative log pseudolikelihood:
/// `(1/N) Σ_m Σ_i −log p(x_i^m | x^m_{N(i)})`.
pub fn nlpl(model: &MrfModel, data: &DiscreteDataset) -> f64 {
    let n = data.num_vars();
    let mut total = 0.0;
    for row in data.rows() {
        for i in 0..n {
            let logits = conditional_logits(model, row, i);
            total += log_sum_exp(&logits) - logits[row[i] as usize];
        }
    }
    total / data.n_rows() as f64
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}
