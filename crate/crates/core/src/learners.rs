//! Top-level learning drivers: exhaustive edge grafting, first-hit, and
//! best-choice edge grafting, with work-counter instrumentation and trace
//! emission.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{DiscreteDataset, SufficientStatsStore};
use crate::inference::{compute_beliefs, nlpl, Beliefs, EngineConfig};
use crate::model::{all_edges, EdgeId, MrfModel};
use crate::objective::{
    activation_test_c2, edge_score, full_objective, optimize_active_set, OptimizerConfig,
    RegularizationParams,
};
use crate::search::{
    activation_set, refresh_reservoir, reservoir_offer, FrozenContainer, PrioritySearchSpace,
    Reservoir,
};
use crate::synthetic::recall;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "eg")]
    EdgeGrafting,
    FirstHit,
    #[serde(rename = "bceg")]
    BestChoice,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eg" => Ok(Self::EdgeGrafting),
            "first_hit" => Ok(Self::FirstHit),
            "bceg" => Ok(Self::BestChoice),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected eg, first_hit, or bceg)"
            ))),
        }
    }
}

/// Everything a learning run needs. `None` sizes resolve against the
/// variable count `n`: reservoir `n`, tests-per-round `max(1, n/5)`, edge
/// budget `3n`, hub threshold `4/(n-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub method: Method,
    pub lambda: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub reservoir_size: Option<usize>,
    pub t_max: Option<usize>,
    pub edge_budget: Option<usize>,
    pub c_hat: Option<f64>,
    pub structure_heuristics: bool,
    pub penalize_nodes: bool,
    pub rho0: f64,
    pub eager_pq: bool,
    pub seed: u64,
    pub engine: EngineConfig,
    pub opt: OptimizerConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            method: Method::BestChoice,
            lambda: 0.01,
            lambda2: 0.5,
            alpha: 1.0,
            reservoir_size: None,
            t_max: None,
            edge_budget: None,
            c_hat: None,
            structure_heuristics: true,
            penalize_nodes: true,
            rho0: 0.0,
            eager_pq: false,
            seed: 0,
            engine: EngineConfig::default(),
            opt: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ResolvedConfig {
    reservoir_size: usize,
    t_max: usize,
    edge_budget: usize,
    c_hat: f64,
}

impl LearnerConfig {
    fn resolve(&self, n: usize) -> Result<ResolvedConfig> {
        if n < 2 {
            return Err(Error::TooFewVariables);
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config(
                "grafting requires lambda > 0 (the activation test is vacuous otherwise)".into(),
            ));
        }
        self.params().validate()?;
        self.engine.validate()?;
        let resolved = match self.method {
            // First hit is best-choice with no reservoir.
            Method::FirstHit => ResolvedConfig {
                reservoir_size: 1,
                t_max: 1,
                edge_budget: self.edge_budget.unwrap_or(3 * n),
                c_hat: self.c_hat.unwrap_or(4.0 / (n - 1) as f64).min(1.0),
            },
            _ => ResolvedConfig {
                reservoir_size: self.reservoir_size.unwrap_or(n),
                t_max: self.t_max.unwrap_or((n / 5).max(1)),
                edge_budget: self.edge_budget.unwrap_or(3 * n),
                c_hat: self.c_hat.unwrap_or(4.0 / (n - 1) as f64).min(1.0),
            },
        };
        if resolved.reservoir_size < 1 || resolved.t_max < 1 || resolved.edge_budget < 1 {
            return Err(Error::Config(
                "reservoir_size, t_max, and edge_budget must be at least 1".into(),
            ));
        }
        if resolved.c_hat < 0.0 {
            return Err(Error::Config(format!("c_hat {} < 0", resolved.c_hat)));
        }
        Ok(resolved)
    }

    fn params(&self) -> RegularizationParams {
        RegularizationParams {
            lambda: self.lambda,
            lambda2: self.lambda2,
            alpha: self.alpha,
            penalize_nodes: self.penalize_nodes,
        }
    }
}

/// Per-round work counters and quality metrics. Counter fields are
/// cumulative since the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRound {
    pub round: usize,
    pub edges_active: usize,
    pub tables_computed: u64,
    pub edges_tested: u64,
    pub opt_iterations: u64,
    pub objective: f64,
    pub nlpl: Option<f64>,
    pub recall: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub rounds: Vec<TraceRound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    JsonLines,
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "round,edges_active,tables_computed,edges_tested,objective,nlpl,recall,wall_ms"
        )?;
        for r in &self.rounds {
            let opt_field = |v: Option<f64>| v.map(fmt_sig12).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.round,
                r.edges_active,
                r.tables_computed,
                r.edges_tested,
                fmt_sig12(r.objective),
                opt_field(r.nlpl),
                opt_field(r.recall),
                fmt_sig12(r.wall_ms),
            )?;
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut rounds = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rounds.push(serde_json::from_str(&line)?);
        }
        Ok(Self { rounds })
    }
}

/// Writes `trace` to `path` in the requested format.
pub fn emit_trace<P: AsRef<Path>>(trace: &RunTrace, path: P, format: TraceFormat) -> Result<()> {
    let mut file = BufWriter::new(std::fs::File::create(path)?);
    match format {
        TraceFormat::Csv => trace.write_csv(&mut file)?,
        TraceFormat::JsonLines => trace.write_jsonl(&mut file)?,
    }
    file.flush()?;
    Ok(())
}

/// Floats in emitted files carry 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float");
    format!("{rounded}")
}

/// Optional held-out data and ground truth for trace enrichment.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceTargets<'a> {
    pub test_data: Option<&'a DiscreteDataset>,
    pub true_edges: Option<&'a BTreeSet<EdgeId>>,
}

/// One edge activation: `ordinal` is the 1-based position `j` in the run's
/// activation sequence, `tables_at_activation` the sufficient-statistics
/// counter at the moment of activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationRecord {
    pub edge: EdgeId,
    pub round: usize,
    pub ordinal: usize,
    pub tables_at_activation: u64,
    pub score: f64,
}

/// Result of a learning run.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub model: MrfModel,
    pub trace: RunTrace,
    /// True when the run stopped because no violating edge remained (as
    /// opposed to hitting the edge budget).
    pub converged: bool,
    /// Candidate tests spent filling the reservoir (best-choice only).
    pub fill_tests: u64,
    /// Exhaustive certificate sweeps triggered by an empty reservoir.
    pub exhaustive_sweeps: u64,
    pub activations: Vec<ActivationRecord>,
    pub tables_computed: u64,
    pub edges_tested: u64,
}

impl LearnOutcome {
    pub fn activation_sequence(&self) -> Vec<EdgeId> {
        self.activations.iter().map(|a| a.edge).collect()
    }
}

/// Exhaustive edge grafting: precomputes every pairwise table, then
/// repeatedly activates the highest-scoring violating edge.
pub fn edge_grafting(
    data: &DiscreteDataset,
    cfg: &LearnerConfig,
) -> Result<(MrfModel, RunTrace)> {
    let outcome = edge_grafting_with(data, cfg, TraceTargets::default())?;
    Ok((outcome.model, outcome.trace))
}

pub fn edge_grafting_with(
    data: &DiscreteDataset,
    cfg: &LearnerConfig,
    targets: TraceTargets<'_>,
) -> Result<LearnOutcome> {
    let n = data.num_vars();
    let resolved = cfg.resolve(n)?;
    let params = cfg.params();
    let start = Instant::now();

    let mut stats = SufficientStatsStore::new(data);
    stats.precompute_all(data); // the startup bottleneck this method carries
    let mut model = MrfModel::disconnected(data.spec().clone());
    let mut opt_iterations =
        optimize_active_set(&mut model, data, &mut stats, &cfg.engine, &params, &cfg.opt)?
            .inner_iterations as u64;
    let mut beliefs = compute_beliefs(&model, &cfg.engine)?;

    let mut trace = RunTrace::default();
    let mut edges_tested = 0u64;
    let mut activations: Vec<ActivationRecord> = Vec::new();
    let record = |round: usize,
                      model: &MrfModel,
                      stats: &mut SufficientStatsStore,
                      edges_tested: u64,
                      opt_iterations: u64,
                      trace: &mut RunTrace|
     -> Result<()> {
        trace.rounds.push(make_round(
            round,
            model,
            data,
            stats,
            &cfg.engine,
            &params,
            targets,
            edges_tested,
            opt_iterations,
            start,
        )?);
        Ok(())
    };
    record(0, &model, &mut stats, edges_tested, opt_iterations, &mut trace)?;

    let mut converged = false;
    let mut round = 0;
    while activations.len() < resolved.edge_budget {
        round += 1;
        let mut best: Option<(f64, EdgeId)> = None;
        for e in all_edges(n) {
            if model.is_active(&e) {
                continue;
            }
            let s = edge_score(&model, data, &mut stats, &beliefs, e);
            edges_tested += 1;
            // Strict improvement keeps the lexicographically first argmax.
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, e));
            }
        }
        let Some((score, e)) = best else {
            converged = true;
            break;
        };
        if !activation_test_c2(score, params.lambda) {
            converged = true;
            break;
        }
        model.activate_edge(e)?;
        activations.push(ActivationRecord {
            edge: e,
            round,
            ordinal: activations.len() + 1,
            tables_at_activation: stats.tables_computed(),
            score,
        });
        let report =
            optimize_active_set(&mut model, data, &mut stats, &cfg.engine, &params, &cfg.opt)?;
        opt_iterations += report.inner_iterations as u64;
        beliefs = compute_beliefs(&model, &cfg.engine)?;
        record(round, &model, &mut stats, edges_tested, opt_iterations, &mut trace)?;
    }

    Ok(LearnOutcome {
        model,
        trace,
        converged,
        fill_tests: 0,
        exhaustive_sweeps: 0,
        activations,
        tables_computed: stats.tables_computed(),
        edges_tested,
    })
}

/// Best-choice edge grafting, run to completion. See [`BestChoiceLearner`]
/// for the stepwise driver.
pub fn best_choice_edge_grafting(
    data: &DiscreteDataset,
    cfg: &LearnerConfig,
) -> Result<(MrfModel, RunTrace)> {
    let outcome = BestChoiceLearner::new(data, cfg, TraceTargets::default())?.run()?;
    Ok((outcome.model, outcome.trace))
}

pub fn best_choice_edge_grafting_with(
    data: &DiscreteDataset,
    cfg: &LearnerConfig,
    targets: TraceTargets<'_>,
) -> Result<LearnOutcome> {
    BestChoiceLearner::new(data, cfg, targets)?.run()
}

/// Best-choice edge grafting with no reservoir: activates the first edge
/// that passes the activation test (reservoir size 1, one test per round).
pub fn first_hit(data: &DiscreteDataset, cfg: &LearnerConfig) -> Result<(MrfModel, RunTrace)> {
    let outcome = first_hit_with(data, cfg, TraceTargets::default())?;
    Ok((outcome.model, outcome.trace))
}

pub fn first_hit_with(
    data: &DiscreteDataset,
    cfg: &LearnerConfig,
    targets: TraceTargets<'_>,
) -> Result<LearnOutcome> {
    let cfg = LearnerConfig {
        method: Method::FirstHit,
        alpha: 1.0,
        ..cfg.clone()
    };
    BestChoiceLearner::new(data, &cfg, targets)?.run()
}

/// What one [`BestChoiceLearner::step_round`] call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundOutcome {
    /// Activated this many edges (at least one) and re-optimized.
    Activated(usize),
    /// An exhaustive sweep certified that no violating edge remains.
    Converged,
    /// The edge budget was reached.
    BudgetReached,
}

/// Stepwise best-choice driver; exposes enough state for container-level
/// audits in tests.
pub struct BestChoiceLearner<'a> {
    data: &'a DiscreteDataset,
    cfg: LearnerConfig,
    resolved: ResolvedConfig,
    params: RegularizationParams,
    targets: TraceTargets<'a>,
    model: MrfModel,
    stats: SufficientStatsStore,
    space: PrioritySearchSpace,
    reservoir: Reservoir,
    frozen: FrozenContainer,
    beliefs: Beliefs,
    trace: RunTrace,
    activations: Vec<ActivationRecord>,
    tested: HashSet<EdgeId>,
    edges_tested: u64,
    opt_iterations: u64,
    fill_tests: u64,
    exhaustive_sweeps: u64,
    round: usize,
    finished: Option<bool>,
    start: Instant,
}

impl<'a> BestChoiceLearner<'a> {
    pub fn new(
        data: &'a DiscreteDataset,
        cfg: &LearnerConfig,
        targets: TraceTargets<'a>,
    ) -> Result<Self> {
        let n = data.num_vars();
        let resolved = cfg.resolve(n)?;
        let params = cfg.params();
        let start = Instant::now();

        let mut stats = SufficientStatsStore::new(data);
        let mut model = MrfModel::disconnected(data.spec().clone());
        let opt_iterations =
            optimize_active_set(&mut model, data, &mut stats, &cfg.engine, &params, &cfg.opt)?
                .inner_iterations as u64;
        let beliefs = compute_beliefs(&model, &cfg.engine)?;
        let space = if cfg.eager_pq {
            PrioritySearchSpace::eager(n, cfg.rho0, cfg.seed)
        } else {
            PrioritySearchSpace::new(n, cfg.rho0, cfg.seed)
        };

        let mut learner = Self {
            data,
            cfg: cfg.clone(),
            resolved,
            params,
            targets,
            model,
            stats,
            space,
            reservoir: Reservoir::new(resolved.reservoir_size),
            frozen: FrozenContainer::new(),
            beliefs,
            trace: RunTrace::default(),
            activations: Vec::new(),
            tested: HashSet::new(),
            edges_tested: 0,
            opt_iterations,
            fill_tests: 0,
            exhaustive_sweeps: 0,
            round: 0,
            finished: None,
            start,
        };
        learner.fill_reservoir();
        learner.fill_tests = learner.edges_tested;
        learner.record_round()?;
        Ok(learner)
    }

    fn score(&mut self, e: EdgeId) -> f64 {
        self.edges_tested += 1;
        self.tested.insert(e);
        edge_score(&self.model, self.data, &mut self.stats, &self.beliefs, e)
    }

    /// Next candidate from the prioritized stream, refilling the queue from
    /// the frozen container when it runs empty. `None` means the combined
    /// heap + frozen + unseen pool is exhausted.
    fn select(&mut self) -> Option<EdgeId> {
        if self.space.heap_is_empty() && !self.frozen.is_empty() {
            self.space
                .refill_from_frozen(&mut self.frozen)
                .expect("heap checked empty");
        }
        match self.space.select_next_edge() {
            Ok(e) => Some(e),
            Err(Error::SearchExhausted) => None,
            Err(e) => unreachable!("selection only fails by exhaustion: {e}"),
        }
    }

    /// Fill the reservoir to capacity before the first activation, capped
    /// at one pass over the candidate space (no refills).
    fn fill_reservoir(&mut self) {
        let total = self.space.total_candidates();
        for _ in 0..total {
            if self.reservoir.is_full() {
                break;
            }
            let Ok(e) = self.space.select_next_edge() else {
                break;
            };
            let s = self.score(e);
            reservoir_offer(&mut self.reservoir, &mut self.frozen, e, s, self.params.lambda);
        }
    }

    /// Rescores every inactive edge with current beliefs and rebuilds the
    /// reservoir/frozen containers from scratch. Returns true when at least
    /// one violating edge exists.
    fn exhaustive_sweep(&mut self) -> bool {
        self.exhaustive_sweeps += 1;
        // Every heap entry gets retested below, so the queue can be drained.
        self.space.clear_queue();
        let mut reservoir = Reservoir::new(self.resolved.reservoir_size);
        let mut frozen = FrozenContainer::new();
        let mut any = false;
        for e in all_edges(self.data.num_vars()) {
            if self.model.is_active(&e) {
                continue;
            }
            self.space.mark_seen(e);
            let s = self.score(e);
            any |= activation_test_c2(s, self.params.lambda);
            reservoir_offer(&mut reservoir, &mut frozen, e, s, self.params.lambda);
        }
        self.reservoir = reservoir;
        self.frozen = frozen;
        any
    }

    pub fn step_round(&mut self) -> Result<RoundOutcome> {
        if let Some(converged) = self.finished {
            return Ok(if converged {
                RoundOutcome::Converged
            } else {
                RoundOutcome::BudgetReached
            });
        }
        self.round += 1;

        if self.cfg.structure_heuristics {
            let hubs = self.model.hub_set(self.resolved.c_hat);
            let (model, reservoir) = (&self.model, &self.reservoir);
            self.space
                .reorganize(&hubs, |e| model.is_active(e) || reservoir.contains(e));
        }

        for _ in 0..self.resolved.t_max {
            let Some(e) = self.select() else {
                break;
            };
            let s = self.score(e);
            reservoir_offer(&mut self.reservoir, &mut self.frozen, e, s, self.params.lambda);
        }

        if self.reservoir.is_empty() && !self.exhaustive_sweep() {
            self.finished = Some(true);
            self.record_round()?;
            return Ok(RoundOutcome::Converged);
        }

        let mut batch = activation_set(&self.reservoir, self.params.alpha);
        let remaining = self.resolved.edge_budget - self.activations.len();
        batch.truncate(remaining);
        debug_assert!(!batch.is_empty(), "nonempty reservoir yields a batch");
        for &e in &batch {
            let score = self
                .reservoir
                .remove(&e)
                .expect("activation batch comes from the reservoir");
            self.model.activate_edge(e)?;
            self.activations.push(ActivationRecord {
                edge: e,
                round: self.round,
                ordinal: self.activations.len() + 1,
                tables_at_activation: self.stats.tables_computed(),
                score,
            });
        }

        let report = optimize_active_set(
            &mut self.model,
            self.data,
            &mut self.stats,
            &self.cfg.engine,
            &self.params,
            &self.cfg.opt,
        )?;
        self.opt_iterations += report.inner_iterations as u64;
        self.beliefs = compute_beliefs(&self.model, &self.cfg.engine)?;

        let (model, data, stats, beliefs) =
            (&self.model, self.data, &mut self.stats, &self.beliefs);
        refresh_reservoir(&mut self.reservoir, &mut self.frozen, self.params.lambda, |e| {
            edge_score(model, data, stats, beliefs, e)
        });

        self.record_round()?;
        if self.activations.len() >= self.resolved.edge_budget {
            self.finished = Some(false);
            return Ok(RoundOutcome::BudgetReached);
        }
        Ok(RoundOutcome::Activated(batch.len()))
    }

    pub fn run(mut self) -> Result<LearnOutcome> {
        loop {
            match self.step_round()? {
                RoundOutcome::Activated(_) => continue,
                RoundOutcome::Converged | RoundOutcome::BudgetReached => break,
            }
        }
        Ok(LearnOutcome {
            converged: self.finished == Some(true),
            model: self.model,
            trace: self.trace,
            fill_tests: self.fill_tests,
            exhaustive_sweeps: self.exhaustive_sweeps,
            activations: self.activations,
            tables_computed: self.stats.tables_computed(),
            edges_tested: self.edges_tested,
        })
    }

    fn record_round(&mut self) -> Result<()> {
        let round = make_round(
            self.round,
            &self.model,
            self.data,
            &mut self.stats,
            &self.cfg.engine,
            &self.params,
            self.targets,
            self.edges_tested,
            self.opt_iterations,
            self.start,
        )?;
        self.trace.rounds.push(round);
        Ok(())
    }

    pub fn model(&self) -> &MrfModel {
        &self.model
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Container membership snapshot, for conservation audits: seen edges
    /// must partition into active / reservoir / frozen / queued.
    pub fn container_audit(&self) -> ContainerAudit {
        ContainerAudit {
            seen: self.space.seen_len(),
            active: self.model.active_edges().iter().copied().collect(),
            reservoir: self.reservoir.entries().iter().map(|(e, _)| *e).collect(),
            frozen: self.frozen.edges().copied().collect(),
            queued: self.space.heap_edges().into_iter().collect(),
        }
    }

    pub fn reservoir_len(&self) -> usize {
        self.reservoir.len()
    }

    pub fn reservoir_min_score(&self) -> Option<f64> {
        self.reservoir.min_score()
    }
}

/// Snapshot of which container holds each seen edge.
#[derive(Debug, Clone)]
pub struct ContainerAudit {
    pub seen: usize,
    pub active: BTreeSet<EdgeId>,
    pub reservoir: BTreeSet<EdgeId>,
    pub frozen: BTreeSet<EdgeId>,
    pub queued: BTreeSet<EdgeId>,
}

impl ContainerAudit {
    /// Every seen edge sits in exactly one container.
    pub fn is_conserved(&self) -> bool {
        let total =
            self.active.len() + self.reservoir.len() + self.frozen.len() + self.queued.len();
        if total != self.seen {
            return false;
        }
        let mut union: BTreeSet<EdgeId> = BTreeSet::new();
        for set in [&self.active, &self.reservoir, &self.frozen, &self.queued] {
            for e in set {
                if !union.insert(*e) {
                    return false;
                }
            }
        }
        true
    }
}

#[allow(clippy::too_many_arguments)]
fn make_round(
    round: usize,
    model: &MrfModel,
    data: &DiscreteDataset,
    stats: &mut SufficientStatsStore,
    engine: &EngineConfig,
    params: &RegularizationParams,
    targets: TraceTargets<'_>,
    edges_tested: u64,
    opt_iterations: u64,
    start: Instant,
) -> Result<TraceRound> {
    let objective = full_objective(model, data, stats, engine, params)?;
    Ok(TraceRound {
        round,
        edges_active: model.num_active_edges(),
        tables_computed: stats.tables_computed(),
        edges_tested,
        opt_iterations,
        objective,
        nlpl: targets.test_data.map(|test| nlpl(model, test)),
        recall: targets
            .true_edges
            .map(|truth| recall(truth, model.active_edges())),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
