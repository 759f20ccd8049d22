//! Group-ℓ1/ℓ2 objective, gradients, activation scores, KKT residuals, and
//! the proximal optimizer over the active set.
//!
//! Two smooth-loss routes share the same penalty structure:
//!
//! - exact mode (exact engine): the true scaled negative log likelihood
//!   `L(w) = log Z(w) − ⟨w, E_D[f]⟩`, tractable only on small models;
//! - surrogate mode (BP engine): the negative log pseudolikelihood, whose
//!   gradient is exact and costs one data pass.
//!
//! Activation scores always compare engine pair-marginals against the data
//! tables, whichever engine is configured.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{DiscreteDataset, SufficientStatsStore};
use crate::inference::{
    conditional_distribution, exact_marginals, nlpl, pair_marginal_estimate, Beliefs,
    EngineConfig, EngineKind,
};
use crate::model::{all_edges, l2_norm, EdgeId, MrfModel};
use crate::{Error, Result};

/// Regularization weights and the activation-confidence parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    /// Group-ℓ1 weight; must be positive for any grafting run.
    pub lambda: f64,
    /// Ridge weight.
    pub lambda2: f64,
    /// Activation confidence in `[0, 1]`; 1 selects only the top-scoring
    /// reservoir edge.
    pub alpha: f64,
    /// When false, node groups are exempt from the group-ℓ1 penalty.
    pub penalize_nodes: bool,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            lambda2: 0.5,
            alpha: 1.0,
            penalize_nodes: true,
        }
    }
}

impl RegularizationParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda and lambda2 must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Proximal-gradient settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Relative objective-change convergence tolerance.
    pub tol: f64,
    /// Max inner iterations per activation round.
    pub max_inner: usize,
    /// Line-search step shrink factor.
    pub backtrack_beta: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_inner: 250,
            backtrack_beta: 0.5,
        }
    }
}

/// A parameter group: one node's unary weights or one active edge's
/// pairwise weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Node(usize),
    Edge(EdgeId),
}

/// Smooth part of the objective: `L(w) + λ2·||w||²₂` with `L` the exact NLL
/// (exact engine) or the pseudolikelihood surrogate (BP engine).
pub fn smooth_objective(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    engine: &EngineConfig,
    params: &RegularizationParams,
) -> Result<f64> {
    let loss = match engine.kind {
        EngineKind::Exact => exact_nll(model, data, stats)?,
        EngineKind::LoopyBp => nlpl(model, data),
    };
    Ok(loss + params.lambda2 * model.squared_weight_norm())
}

/// Full regularized objective: smooth part plus `λ·Σ_g d_g·||w_g||₂`.
pub fn full_objective(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    engine: &EngineConfig,
    params: &RegularizationParams,
) -> Result<f64> {
    Ok(smooth_objective(model, data, stats, engine, params)?
        + params.lambda * model.group_norm_penalty(params.penalize_nodes))
}

/// Exact scaled NLL: `log Z(w) − Σ_g ⟨w_g, E_D[f_g]⟩`.
fn exact_nll(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
) -> Result<f64> {
    let beliefs = exact_marginals(model)?;
    let log_z = beliefs.log_z.expect("exact engine returns log Z");
    let mut inner = 0.0;
    for i in 0..model.num_vars() {
        inner += dot(model.node_weight(i), stats.node_marginal(i));
    }
    for e in model.active_edges() {
        let table = stats.edge_table(data, *e).to_vec();
        inner += dot(model.edge_weight(e).unwrap(), &table);
    }
    Ok(log_z - inner)
}

/// Moment gradient of the unregularized loss for one group:
/// `E_w[f_g] − E_D[f_g]`, entrywise. The ridge term `2λ2·w_g` is the
/// caller's responsibility.
pub fn group_gradient(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    beliefs: &Beliefs,
    group: Group,
) -> Vec<f64> {
    match group {
        Group::Node(i) => beliefs.node_beliefs[i]
            .iter()
            .zip(stats.node_marginal(i))
            .map(|(m, d)| m - d)
            .collect(),
        Group::Edge(e) => {
            let model_table = pair_marginal_estimate(beliefs, &e);
            let _ = model;
            let data_table = stats.edge_table(data, e);
            model_table
                .iter()
                .zip(data_table)
                .map(|(m, d)| m - d)
                .collect()
        }
    }
}

/// Activation score `s_e = ||p̂_w(e) − p_D(e)||₂ / d_e`.
pub fn edge_score(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    beliefs: &Beliefs,
    e: EdgeId,
) -> f64 {
    let d_e = model.edge_group_dim(&e) as f64;
    let grad = group_gradient(model, data, stats, beliefs, Group::Edge(e));
    l2_norm(&grad) / d_e
}

/// Edge-activation test: strict `s_e > λ`.
pub fn activation_test_c2(score: f64, lambda: f64) -> bool {
    score > lambda
}

/// Max over all inactive edges of `s_e − λ`; non-positive certifies that no
/// violating edge remains. Exhaustive: computes every inactive edge's score.
pub fn kkt_inactive_residual(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    beliefs: &Beliefs,
    lambda: f64,
) -> f64 {
    let mut residual = f64::NEG_INFINITY;
    for e in all_edges(model.num_vars()) {
        if model.is_active(&e) {
            continue;
        }
        let s = edge_score(model, data, stats, beliefs, e);
        residual = residual.max(s - lambda);
    }
    residual
}

/// Block soft-threshold: `w_g · max(0, 1 − step·λ·d_g / ||w_g||₂)`.
pub fn prox_group(w_g: &[f64], step: f64, lambda: f64, d_g: usize) -> Vec<f64> {
    let norm = l2_norm(w_g);
    let threshold = step * lambda * d_g as f64;
    if norm <= threshold {
        return vec![0.0; w_g.len()];
    }
    let scale = 1.0 - threshold / norm;
    w_g.iter().map(|v| v * scale).collect()
}

/// Outcome of one [`optimize_active_set`] call.
#[derive(Debug, Clone)]
pub struct OptReport {
    pub inner_iterations: usize,
    pub converged: bool,
    /// Full objective after each accepted step (first entry: at entry).
    pub objective_trace: Vec<f64>,
}

impl OptReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace never empty")
    }
}

/// Gradients of the smooth loss for every allocated group.
struct SmoothGradient {
    nodes: Vec<Vec<f64>>,
    edges: BTreeMap<EdgeId, Vec<f64>>,
}

fn smooth_gradient(
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    engine: &EngineConfig,
    params: &RegularizationParams,
) -> Result<SmoothGradient> {
    let mut grad = match engine.kind {
        EngineKind::Exact => {
            let beliefs = exact_marginals(model)?;
            let nodes = (0..model.num_vars())
                .map(|i| group_gradient(model, data, stats, &beliefs, Group::Node(i)))
                .collect();
            let edges = model
                .active_edges()
                .iter()
                .map(|e| {
                    (
                        *e,
                        group_gradient(model, data, stats, &beliefs, Group::Edge(*e)),
                    )
                })
                .collect();
            SmoothGradient { nodes, edges }
        }
        EngineKind::LoopyBp => pseudo_gradient(model, data),
    };
    // Ridge part of the smooth objective.
    for (i, g) in grad.nodes.iter_mut().enumerate() {
        for (gv, wv) in g.iter_mut().zip(model.node_weight(i)) {
            *gv += 2.0 * params.lambda2 * wv;
        }
    }
    for (e, g) in grad.edges.iter_mut() {
        for (gv, wv) in g.iter_mut().zip(model.edge_weight(e).unwrap()) {
            *gv += 2.0 * params.lambda2 * wv;
        }
    }
    Ok(grad)
}

/// Gradient of the negative log pseudolikelihood. For node weights,
/// `(1/N) Σ_m [π_i(a|x^m) − 1{x_i^m = a}]`; for an edge `(u, v)`, the entry
/// `(a, b)` accumulates the conditional of each endpoint against the
/// observed state of the other, minus twice the joint indicator.
fn pseudo_gradient(model: &MrfModel, data: &DiscreteDataset) -> SmoothGradient {
    let n = model.num_vars();
    let inv_n = 1.0 / data.n_rows() as f64;
    let mut nodes: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![0.0; model.spec().card(i)])
        .collect();
    let mut edges: BTreeMap<EdgeId, Vec<f64>> = model
        .active_edges()
        .iter()
        .map(|e| (*e, vec![0.0; model.edge_group_dim(e)]))
        .collect();
    for row in data.rows() {
        for i in 0..n {
            let cond = conditional_distribution(model, row, i);
            let xi = row[i] as usize;
            for (a, p) in cond.iter().enumerate() {
                nodes[i][a] += p * inv_n;
            }
            nodes[i][xi] -= inv_n;
            for &j in model.neighbors(i) {
                let e = EdgeId::new(i, j).unwrap();
                let table = edges.get_mut(&e).unwrap();
                let sj = model.spec().card(e.j());
                let xj = row[j] as usize;
                if i < j {
                    // i is the row index of the table.
                    for (a, p) in cond.iter().enumerate() {
                        table[a * sj + xj] += p * inv_n;
                    }
                } else {
                    for (b, p) in cond.iter().enumerate() {
                        table[xj * sj + b] += p * inv_n;
                    }
                }
                table[row[e.i()] as usize * sj + row[e.j()] as usize] -= inv_n;
            }
        }
    }
    SmoothGradient { nodes, edges }
}

/// Proximal-gradient descent over the current active set, with backtracking
/// line search. The active edge set is fixed for the duration of the call;
/// the full objective is nonincreasing across accepted steps.
pub fn optimize_active_set(
    model: &mut MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    engine: &EngineConfig,
    params: &RegularizationParams,
    opt: &OptimizerConfig,
) -> Result<OptReport> {
    params.validate()?;
    if !(0.0 < opt.backtrack_beta && opt.backtrack_beta < 1.0) {
        return Err(Error::Config(format!(
            "backtrack_beta {} not in (0, 1)",
            opt.backtrack_beta
        )));
    }

    let group_penalty =
        |m: &MrfModel| params.lambda * m.group_norm_penalty(params.penalize_nodes);
    let mut smooth = smooth_objective(model, data, stats, engine, params)?;
    let mut objective = smooth + group_penalty(model);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    for inner in 0..opt.max_inner {
        let grad = smooth_gradient(model, data, stats, engine, params)?;
        let mut step = 1.0;
        let accepted = loop {
            let mut trial = model.clone();
            let mut delta_sq = 0.0;
            let mut grad_dot_delta = 0.0;
            for i in 0..trial.num_vars() {
                let target: Vec<f64> = model
                    .node_weight(i)
                    .iter()
                    .zip(&grad.nodes[i])
                    .map(|(w, g)| w - step * g)
                    .collect();
                let new = if params.penalize_nodes {
                    prox_group(&target, step, params.lambda, model.node_group_dim(i))
                } else {
                    target
                };
                for a in 0..new.len() {
                    let d = new[a] - model.node_weight(i)[a];
                    delta_sq += d * d;
                    grad_dot_delta += grad.nodes[i][a] * d;
                }
                trial.node_weight_mut(i).copy_from_slice(&new);
            }
            for (e, g) in &grad.edges {
                let d_g = model.edge_group_dim(e);
                let target: Vec<f64> = model
                    .edge_weight(e)
                    .unwrap()
                    .iter()
                    .zip(g)
                    .map(|(w, gv)| w - step * gv)
                    .collect();
                let new = prox_group(&target, step, params.lambda, d_g);
                for a in 0..new.len() {
                    let d = new[a] - model.edge_weight(e).unwrap()[a];
                    delta_sq += d * d;
                    grad_dot_delta += g[a] * d;
                }
                trial.edge_weight_mut(e).unwrap().copy_from_slice(&new);
            }

            if delta_sq == 0.0 {
                // Prox step is a fixed point: nothing to move.
                break None;
            }
            let trial_smooth = smooth_objective(&trial, data, stats, engine, params)?;
            // Composite sufficient-decrease condition for the smooth part.
            if trial_smooth <= smooth + grad_dot_delta + delta_sq / (2.0 * step) + 1e-12 {
                break Some((trial, trial_smooth));
            }
            step *= opt.backtrack_beta;
            if step < 1e-14 {
                return Err(Error::StepUnderflow(inner));
            }
        };

        iterations += 1;
        let Some((trial, trial_smooth)) = accepted else {
            converged = true;
            break;
        };
        let trial_objective = trial_smooth + group_penalty(&trial);
        *model = trial;
        smooth = trial_smooth;
        let change = (objective - trial_objective).abs();
        objective = trial_objective;
        trace.push(objective);
        if change <= opt.tol * objective.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(OptReport {
        inner_iterations: iterations,
        converged,
        objective_trace: trace,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariableSpec;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(cards: &[usize]) -> VariableSpec {
        VariableSpec::new(
            (0..cards.len()).map(|i| format!("x{i}")).collect(),
            cards.to_vec(),
        )
        .unwrap()
    }

    fn random_instance(
        n: usize,
        n_rows: usize,
        edges: &[(usize, usize)],
        seed: u64,
    ) -> (MrfModel, DiscreteDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = spec(&vec![2; n]);
        let mut model = MrfModel::disconnected(s.clone());
        for &(i, j) in edges {
            model.activate_edge(EdgeId::new(i, j).unwrap()).unwrap();
        }
        for i in 0..n {
            for v in model.node_weight_mut(i) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let active: Vec<EdgeId> = model.active_edges().iter().copied().collect();
        for e in active {
            for v in model.edge_weight_mut(&e).unwrap() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let rows = (0..n_rows)
            .map(|_| (0..n).map(|_| rng.gen_range(0..2u32)).collect())
            .collect();
        (model, DiscreteDataset::new(s, rows).unwrap())
    }

    #[test]
    fn smooth_objective_zero_weights() {
        let s = spec(&[2]);
        let model = MrfModel::disconnected(s.clone());
        let data = DiscreteDataset::new(s, vec![vec![0], vec![1]]).unwrap();
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda2: 0.0,
            ..Default::default()
        };
        let v = smooth_objective(&model, &data, &mut stats, &EngineConfig::exact(), &params)
            .unwrap();
        assert!((v - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn smooth_objective_matches_brute_force_likelihood() {
        let (model, data) = random_instance(4, 30, &[(0, 1), (2, 3), (1, 2)], 3);
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda2: 0.0,
            ..Default::default()
        };
        let v = smooth_objective(&model, &data, &mut stats, &EngineConfig::exact(), &params)
            .unwrap();
        // Brute force: -(1/N) sum log p_w(x).
        let beliefs = exact_marginals(&model).unwrap();
        let log_z = beliefs.log_z.unwrap();
        let mut oracle = 0.0;
        for row in data.rows() {
            let mut lp = 0.0;
            for i in 0..4 {
                lp += model.node_weight(i)[row[i] as usize];
            }
            for e in model.active_edges() {
                lp += model.edge_entry(e, row[e.i()] as usize, row[e.j()] as usize);
            }
            oracle -= lp - log_z;
        }
        oracle /= data.n_rows() as f64;
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn full_objective_penalty_arithmetic() {
        let s = spec(&[2, 2]);
        let mut model = MrfModel::disconnected(s.clone());
        let e = EdgeId::new(0, 1).unwrap();
        model.activate_edge(e).unwrap();
        model
            .edge_weight_mut(&e)
            .unwrap()
            .copy_from_slice(&[1.0; 4]);
        let data = DiscreteDataset::new(s, vec![vec![0, 0], vec![1, 1]]).unwrap();
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda: 0.1,
            lambda2: 0.0,
            ..Default::default()
        };
        let smooth =
            smooth_objective(&model, &data, &mut stats, &EngineConfig::exact(), &params).unwrap();
        let full =
            full_objective(&model, &data, &mut stats, &EngineConfig::exact(), &params).unwrap();
        // d_e = 4, ||w|| = 2 -> penalty 0.1 * 4 * 2 = 0.8.
        assert!((full - smooth - 0.8).abs() < 1e-12);

        // All-zero weights contribute no penalty.
        let zero = MrfModel::disconnected(spec(&[2, 2]));
        let s0 = smooth_objective(&zero, &data, &mut stats, &EngineConfig::exact(), &params)
            .unwrap();
        let f0 =
            full_objective(&zero, &data, &mut stats, &EngineConfig::exact(), &params).unwrap();
        assert_eq!(s0, f0);
    }

    #[test]
    fn group_gradient_examples() {
        // Model marginals equal data marginals -> zero vector.
        let s = spec(&[2, 2]);
        let model = MrfModel::disconnected(s.clone());
        let data = DiscreteDataset::new(
            s,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
        )
        .unwrap();
        let mut stats = SufficientStatsStore::new(&data);
        let beliefs = exact_marginals(&model).unwrap();
        let g = group_gradient(&model, &data, &mut stats, &beliefs, Group::Node(0));
        assert!(g.iter().all(|v| v.abs() < 1e-12));

        // Uniform beliefs vs diagonal data table.
        let corr =
            DiscreteDataset::new(spec(&[2, 2]), vec![vec![0, 0], vec![1, 1]]).unwrap();
        let mut stats = SufficientStatsStore::new(&corr);
        let e = EdgeId::new(0, 1).unwrap();
        let g = group_gradient(&model, &corr, &mut stats, &beliefs, Group::Edge(e));
        assert_eq!(g, vec![-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let n = 4;
            let edges = [(0, 1), (1, 2), (0, 3)];
            let (mut model, data) = random_instance(n, 25, &edges, 100 + trial);
            let params = RegularizationParams {
                lambda2: rng.gen_range(0.0..0.5),
                ..Default::default()
            };
            let engine = EngineConfig::exact();
            let mut stats = SufficientStatsStore::new(&data);
            let grad = smooth_gradient(&model, &data, &mut stats, &engine, &params).unwrap();

            let h = 1e-5;
            let mut check = |model: &mut MrfModel, group: Group, analytic: &[f64]| {
                for k in 0..analytic.len() {
                    let read = |m: &MrfModel| match group {
                        Group::Node(i) => m.node_weight(i)[k],
                        Group::Edge(e) => m.edge_weight(&e).unwrap()[k],
                    };
                    let write = |m: &mut MrfModel, v: f64| match group {
                        Group::Node(i) => m.node_weight_mut(i)[k] = v,
                        Group::Edge(e) => m.edge_weight_mut(&e).unwrap()[k] = v,
                    };
                    let orig = read(model);
                    let mut stats = SufficientStatsStore::new(&data);
                    write(model, orig + h);
                    let plus =
                        smooth_objective(model, &data, &mut stats, &engine, &params).unwrap();
                    write(model, orig - h);
                    let minus =
                        smooth_objective(model, &data, &mut stats, &engine, &params).unwrap();
                    write(model, orig);
                    let fd = (plus - minus) / (2.0 * h);
                    let rel = (analytic[k] - fd).abs() / fd.abs().max(1e-6);
                    assert!(rel < 1e-5, "group {group:?} entry {k}: {} vs {fd}", analytic[k]);
                }
            };
            for i in 0..n {
                let g = grad.nodes[i].clone();
                check(&mut model, Group::Node(i), &g);
            }
            for (e, g) in grad.edges.clone() {
                check(&mut model, Group::Edge(e), &g);
            }
        }
    }

    #[test]
    fn pseudo_gradient_matches_finite_differences() {
        let (mut model, data) = random_instance(4, 40, &[(0, 1), (1, 2), (2, 3)], 7);
        let params = RegularizationParams {
            lambda2: 0.25,
            ..Default::default()
        };
        let engine = EngineConfig::default(); // bp -> surrogate loss
        let mut stats = SufficientStatsStore::new(&data);
        let grad = smooth_gradient(&model, &data, &mut stats, &engine, &params).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            for k in 0..2 {
                let orig = model.node_weight(i)[k];
                model.node_weight_mut(i)[k] = orig + h;
                let plus =
                    smooth_objective(&model, &data, &mut stats, &engine, &params).unwrap();
                model.node_weight_mut(i)[k] = orig - h;
                let minus =
                    smooth_objective(&model, &data, &mut stats, &engine, &params).unwrap();
                model.node_weight_mut(i)[k] = orig;
                let fd = (plus - minus) / (2.0 * h);
                assert!((grad.nodes[i][k] - fd).abs() / fd.abs().max(1e-6) < 1e-5);
            }
        }
        let edges: Vec<EdgeId> = model.active_edges().iter().copied().collect();
        for e in edges {
            for k in 0..4 {
                let orig = model.edge_weight(&e).unwrap()[k];
                model.edge_weight_mut(&e).unwrap()[k] = orig + h;
                let plus =
                    smooth_objective(&model, &data, &mut stats, &engine, &params).unwrap();
                model.edge_weight_mut(&e).unwrap()[k] = orig - h;
                let minus =
                    smooth_objective(&model, &data, &mut stats, &engine, &params).unwrap();
                model.edge_weight_mut(&e).unwrap()[k] = orig;
                let fd = (plus - minus) / (2.0 * h);
                assert!(
                    (grad.edges[&e][k] - fd).abs() / fd.abs().max(1e-6) < 1e-5,
                    "edge {e} entry {k}"
                );
            }
        }
    }

    #[test]
    fn edge_score_examples() {
        let s = spec(&[2, 2]);
        let model = MrfModel::disconnected(s.clone());
        let beliefs = exact_marginals(&model).unwrap(); // uniform
        let e = EdgeId::new(0, 1).unwrap();

        // p_hat == p_D -> 0.
        let indep = DiscreteDataset::new(
            s.clone(),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
        )
        .unwrap();
        let mut stats = SufficientStatsStore::new(&indep);
        assert_eq!(edge_score(&model, &indep, &mut stats, &beliefs, e), 0.0);

        // Uniform p_hat vs diag(0.5, 0.5): (1/4)*sqrt(4*0.0625) = 0.125.
        let corr = DiscreteDataset::new(s, vec![vec![0, 0], vec![1, 1]]).unwrap();
        let mut stats = SufficientStatsStore::new(&corr);
        let score = edge_score(&model, &corr, &mut stats, &beliefs, e);
        assert!((score - 0.125).abs() < 1e-12);
    }

    #[test]
    fn c2_is_strict() {
        assert!(activation_test_c2(0.2, 0.1));
        assert!(!activation_test_c2(0.1, 0.1));
        assert!(!activation_test_c2(0.0, 0.1));
    }

    #[test]
    fn prox_group_cases() {
        // Shrink to zero.
        assert_eq!(prox_group(&[0.3, 0.4], 1.0, 0.25, 2), vec![0.0, 0.0]);
        // Identity at lambda = 0.
        assert_eq!(prox_group(&[1.0, -2.0], 0.7, 0.0, 4), vec![1.0, -2.0]);
        // Closed form.
        let got = prox_group(&[3.0, 4.0], 0.5, 0.5, 4); // step*lambda*d = 1
        assert!((got[0] - 2.4).abs() < 1e-12 && (got[1] - 3.2).abs() < 1e-12);
        // Zero maps to zero.
        assert_eq!(prox_group(&[0.0, 0.0], 1.0, 0.5, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn optimizer_moment_matching_fixed_point() {
        let s = spec(&[2]);
        let mut model = MrfModel::disconnected(s.clone());
        let rows = vec![vec![0u32]; 3]
            .into_iter()
            .chain(vec![vec![1u32]; 1])
            .collect();
        let data = DiscreteDataset::new(s, rows).unwrap();
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let opt = OptimizerConfig {
            tol: 1e-10,
            max_inner: 500,
            ..Default::default()
        };
        optimize_active_set(
            &mut model,
            &data,
            &mut stats,
            &EngineConfig::exact(),
            &params,
            &opt,
        )
        .unwrap();
        let beliefs = exact_marginals(&model).unwrap();
        assert!((beliefs.node_beliefs[0][0] - 0.75).abs() < 1e-4);
        assert!((beliefs.node_beliefs[0][1] - 0.25).abs() < 1e-4);
    }

    #[test]
    fn optimizer_descent_and_quick_exit() {
        let (mut model, data) = random_instance(4, 40, &[(0, 1), (2, 3)], 21);
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda: 0.05,
            lambda2: 0.1,
            ..Default::default()
        };
        let opt = OptimizerConfig::default();
        let report = optimize_active_set(
            &mut model,
            &data,
            &mut stats,
            &EngineConfig::exact(),
            &params,
            &opt,
        )
        .unwrap();
        assert!(report.converged);
        for w in report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {w:?}");
        }
        // Re-running from the optimum exits immediately, weights unchanged.
        let before = model.clone();
        let report2 = optimize_active_set(
            &mut model,
            &data,
            &mut stats,
            &EngineConfig::exact(),
            &params,
            &opt,
        )
        .unwrap();
        assert!(report2.inner_iterations <= 1);
        let drift: f64 = (0..4)
            .map(|i| {
                before
                    .node_weight(i)
                    .iter()
                    .zip(model.node_weight(i))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum();
        assert!(drift < 1e-4);
    }

    #[test]
    fn optimizer_large_lambda_zeroes_edges() {
        let (mut model, data) = random_instance(4, 40, &[(0, 1), (1, 2)], 33);
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda: 10.0,
            lambda2: 0.0,
            penalize_nodes: false,
            ..Default::default()
        };
        optimize_active_set(
            &mut model,
            &data,
            &mut stats,
            &EngineConfig::exact(),
            &params,
            &OptimizerConfig::default(),
        )
        .unwrap();
        for e in model.active_edges() {
            assert!(model.edge_weight(e).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn active_group_stationarity_after_convergence() {
        let (mut model, data) = random_instance(3, 60, &[(0, 1)], 55);
        let mut stats = SufficientStatsStore::new(&data);
        let params = RegularizationParams {
            lambda: 0.01,
            lambda2: 0.05,
            ..Default::default()
        };
        let opt = OptimizerConfig {
            tol: 1e-12,
            max_inner: 2000,
            ..Default::default()
        };
        let engine = EngineConfig::exact();
        optimize_active_set(&mut model, &data, &mut stats, &engine, &params, &opt).unwrap();
        let grad = smooth_gradient(&model, &data, &mut stats, &engine, &params).unwrap();
        for (e, g) in &grad.edges {
            let w = model.edge_weight(e).unwrap();
            let norm = l2_norm(w);
            if norm > 0.0 {
                let d_g = model.edge_group_dim(e) as f64;
                let sub: Vec<f64> = g
                    .iter()
                    .zip(w)
                    .map(|(gv, wv)| gv + params.lambda * d_g * wv / norm)
                    .collect();
                assert!(l2_norm(&sub) < 1e-4, "edge {e}: {}", l2_norm(&sub));
            }
        }
    }

    #[test]
    fn kkt_residual_detects_missing_edge() {
        // Data from a strongly coupled pair; model without the edge.
        let s = spec(&[2, 2, 2]);
        let rows: Vec<Vec<u32>> = (0..40)
            .map(|m| {
                let a = (m % 2) as u32;
                vec![a, a, (m / 2 % 2) as u32]
            })
            .collect();
        let data = DiscreteDataset::new(s.clone(), rows).unwrap();
        let mut stats = SufficientStatsStore::new(&data);
        let model = MrfModel::disconnected(s);
        let beliefs = exact_marginals(&model).unwrap();
        let lambda = 0.01;
        let r = kkt_inactive_residual(&model, &data, &mut stats, &beliefs, lambda);
        assert!(r > 0.0);
        // Huge lambda -> negative residual.
        let r = kkt_inactive_residual(&model, &data, &mut stats, &beliefs, 100.0);
        assert!(r < 0.0);
    }
}
