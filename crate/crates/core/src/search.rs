//! Prioritized search-space machinery: a min-priority queue with
//! default-priority random sampling, the bounded reservoir of violating
//! candidate edges, the frozen container of failed candidates, and the
//! hub-centrality queue reorganization.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::heap::EdgeMinHeap;
use crate::model::{all_edges, EdgeId};
use crate::{Error, Result};

/// Candidate-edge stream over `C(n,2)` pairs.
///
/// Prioritized edges live in a min-heap; never-seen edges carry the implicit
/// default priority `rho0` and are drawn by rejection sampling. An edge
/// enters `seen` the first time it is prioritized or selected and stays
/// there for the run.
#[derive(Debug, Clone)]
pub struct PrioritySearchSpace {
    heap: EdgeMinHeap,
    seen: HashSet<EdgeId>,
    rho0: f64,
    rng: ChaCha8Rng,
    n: usize,
    selections: u64,
    samples_drawn: u64,
}

impl PrioritySearchSpace {
    pub fn new(n: usize, rho0: f64, seed: u64) -> Self {
        Self {
            heap: EdgeMinHeap::new(),
            seen: HashSet::new(),
            rho0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            selections: 0,
            samples_drawn: 0,
        }
    }

    /// Eager variant: every candidate edge starts in the queue at `rho0`.
    pub fn eager(n: usize, rho0: f64, seed: u64) -> Self {
        let mut space = Self::new(n, rho0, seed);
        for e in all_edges(n) {
            space.heap.push(e, rho0).expect("fresh heap");
            space.seen.insert(e);
        }
        space
    }

    pub fn total_candidates(&self) -> u64 {
        let n = self.n as u64;
        n * (n - 1) / 2
    }

    pub fn unseen_remaining(&self) -> u64 {
        self.total_candidates() - self.seen.len() as u64
    }

    pub fn heap_is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    pub fn in_heap(&self, e: &EdgeId) -> bool {
        self.heap.contains(e)
    }

    pub fn is_seen(&self, e: &EdgeId) -> bool {
        self.seen.contains(e)
    }

    pub fn seen_len(&self) -> usize {
        self.seen.len()
    }

    /// Edges currently held in the queue (any order).
    pub fn heap_edges(&self) -> Vec<EdgeId> {
        self.heap.iter().map(|(_, e)| e).collect()
    }

    /// Mean rejection samples per random selection so far.
    pub fn mean_samples_per_selection(&self) -> f64 {
        if self.selections == 0 {
            0.0
        } else {
            self.samples_drawn as f64 / self.selections as f64
        }
    }

    /// Next edge to test, by priority.
    ///
    /// The queue head wins when its priority beats the default `rho0`;
    /// otherwise an unseen edge is rejection-sampled uniformly. When no
    /// unseen edge remains the queue head is taken regardless, and
    /// [`Error::SearchExhausted`] is returned once the queue is empty too.
    pub fn select_next_edge(&mut self) -> Result<EdgeId> {
        if let Some((priority, _)) = self.heap.peek() {
            if priority < self.rho0 {
                let (_, e) = self.heap.pop().unwrap();
                return Ok(e);
            }
        }
        if self.unseen_remaining() > 0 {
            let total = self.total_candidates();
            self.selections += 1;
            loop {
                self.samples_drawn += 1;
                let idx = self.rng.gen_range(0..total);
                let e = EdgeId::from_linear(idx, self.n);
                if self.seen.insert(e) {
                    return Ok(e);
                }
            }
        }
        if let Some((_, e)) = self.heap.pop() {
            return Ok(e);
        }
        Err(Error::SearchExhausted)
    }

    /// Prioritize every candidate edge incident to a hub: present queue
    /// entries get their priority decremented by 1; unseen edges are
    /// inserted at `rho0 - 1` and marked seen. Edges for which `skip`
    /// returns true (active or reservoir-held) are left alone, as are
    /// frozen edges awaiting re-injection.
    pub fn reorganize(&mut self, hubs: &BTreeSet<usize>, mut skip: impl FnMut(&EdgeId) -> bool) {
        for &h in hubs {
            for v in 0..self.n {
                if v == h {
                    continue;
                }
                let e = EdgeId::new(h, v).expect("distinct");
                if skip(&e) {
                    continue;
                }
                if let Some(p) = self.heap.priority_of(&e) {
                    self.heap.decrease_key(&e, p - 1.0).expect("present");
                } else if self.seen.insert(e) {
                    self.heap.push(e, self.rho0 - 1.0).expect("absent");
                }
            }
        }
    }

    /// Drops every queue entry. Used by the exhaustive certificate sweep,
    /// which retests all candidates and rebuilds the containers.
    pub fn clear_queue(&mut self) {
        while self.heap.pop().is_some() {}
    }

    pub fn mark_seen(&mut self, e: EdgeId) {
        self.seen.insert(e);
    }

    /// Re-inject every frozen edge with its violation offset as priority.
    /// Rejected unless the queue is empty.
    pub fn refill_from_frozen(&mut self, frozen: &mut FrozenContainer) -> Result<()> {
        if !self.heap.is_empty() {
            return Err(Error::RefillNonEmptyHeap);
        }
        for (e, v_e) in std::mem::take(&mut frozen.offsets) {
            self.heap.push(e, v_e).expect("heap was empty");
        }
        Ok(())
    }
}

/// Tested, non-selected edges with their violation offsets `v_e = 1 − s_e/λ`.
#[derive(Debug, Clone, Default)]
pub struct FrozenContainer {
    offsets: BTreeMap<EdgeId, f64>,
}

impl FrozenContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self, e: EdgeId, score: f64, lambda: f64) {
        self.offsets.insert(e, 1.0 - score / lambda);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn contains(&self, e: &EdgeId) -> bool {
        self.offsets.contains_key(e)
    }

    pub fn offset(&self, e: &EdgeId) -> Option<f64> {
        self.offsets.get(e).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeId> {
        self.offsets.keys()
    }
}

/// Bounded container of the currently violating candidate edges, with the
/// minimum-scoring entry retrievable in `O(log |R|)`.
#[derive(Debug, Clone)]
pub struct Reservoir {
    capacity: usize,
    heap: EdgeMinHeap, // keyed by score
}

/// What [`reservoir_offer`] did with a tested edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferOutcome {
    /// Inserted; the reservoir had spare capacity.
    Inserted,
    /// Inserted by evicting the previous minimum, which was frozen.
    ReplacedMin(EdgeId),
    /// Satisfied C2 but did not beat the current minimum; frozen.
    FrozenNotBetter,
    /// Failed C2; frozen.
    FrozenBelowLambda,
}

impl Reservoir {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "reservoir capacity must be at least 1");
        Self {
            capacity,
            heap: EdgeMinHeap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.capacity
    }

    pub fn contains(&self, e: &EdgeId) -> bool {
        self.heap.contains(e)
    }

    pub fn min_score(&self) -> Option<f64> {
        self.heap.peek().map(|(s, _)| s)
    }

    pub fn score_of(&self, e: &EdgeId) -> Option<f64> {
        self.heap.priority_of(e)
    }

    /// Current `(edge, score)` entries in unspecified order.
    pub fn entries(&self) -> Vec<(EdgeId, f64)> {
        self.heap.iter().map(|(s, e)| (e, s)).collect()
    }

    pub fn remove(&mut self, e: &EdgeId) -> Option<f64> {
        let score = self.heap.priority_of(e)?;
        // Sink the entry below everything, then pop it.
        self.heap
            .decrease_key(e, f64::MIN)
            .expect("entry present");
        let (_, popped) = self.heap.pop().expect("nonempty");
        debug_assert_eq!(popped, *e);
        Some(score)
    }
}

/// Routes a freshly scored edge: into the reservoir when it satisfies C2
/// and either fits or beats the current minimum (which is then evicted and
/// frozen); into the frozen container otherwise.
pub fn reservoir_offer(
    reservoir: &mut Reservoir,
    frozen: &mut FrozenContainer,
    e: EdgeId,
    score: f64,
    lambda: f64,
) -> OfferOutcome {
    if score <= lambda {
        frozen.freeze(e, score, lambda);
        return OfferOutcome::FrozenBelowLambda;
    }
    if !reservoir.is_full() {
        reservoir.heap.push(e, score).expect("capacity available");
        return OfferOutcome::Inserted;
    }
    let (min_score, min_edge) = reservoir.heap.peek().expect("full reservoir is nonempty");
    if score > min_score {
        reservoir.heap.pop();
        frozen.freeze(min_edge, min_score, lambda);
        reservoir.heap.push(e, score).expect("slot freed");
        OfferOutcome::ReplacedMin(min_edge)
    } else {
        frozen.freeze(e, score, lambda);
        OfferOutcome::FrozenNotBetter
    }
}

/// Rescores every held edge with the current model and drops (freezes) those
/// that no longer satisfy C2. Called after each optimization step.
pub fn refresh_reservoir(
    reservoir: &mut Reservoir,
    frozen: &mut FrozenContainer,
    lambda: f64,
    mut rescore: impl FnMut(EdgeId) -> f64,
) {
    let entries = reservoir.entries();
    let mut kept = EdgeMinHeap::new();
    for (e, _) in entries {
        let score = rescore(e);
        if score > lambda {
            kept.push(e, score).expect("distinct edges");
        } else {
            frozen.freeze(e, score, lambda);
        }
    }
    reservoir.heap = kept;
}

/// Edges to activate this round: those scoring at least
/// `τ_α = (1−α)·μ + α·max`, in decreasing score order, greedily skipping
/// edges adjacent to one already selected in the batch. `α = 1` yields
/// exactly the top-scoring edge.
pub fn activation_set(reservoir: &Reservoir, alpha: f64) -> Vec<EdgeId> {
    let mut entries = reservoir.entries();
    if entries.is_empty() {
        return Vec::new();
    }
    // Decreasing score; ties broken toward the lexicographically smaller edge.
    entries.sort_by(|(ea, sa), (eb, sb)| {
        sb.partial_cmp(sa)
            .expect("scores are finite")
            .then(ea.cmp(eb))
    });
    if alpha >= 1.0 {
        return vec![entries[0].0];
    }
    let max = entries[0].1;
    let mean = entries.iter().map(|(_, s)| s).sum::<f64>() / entries.len() as f64;
    let tau = (1.0 - alpha) * mean + alpha * max;
    let mut batch: Vec<EdgeId> = Vec::new();
    for (e, s) in entries {
        if s < tau {
            break;
        }
        if batch.iter().any(|chosen| chosen.adjacent(&e)) {
            continue;
        }
        batch.push(e);
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(i: usize, j: usize) -> EdgeId {
        EdgeId::new(i, j).unwrap()
    }

    #[test]
    fn selection_prefers_prioritized_head() {
        let mut space = PrioritySearchSpace::new(4, 0.0, 1);
        space.heap.push(edge(1, 2), -1.0).unwrap();
        space.seen.insert(edge(1, 2));
        assert_eq!(space.select_next_edge().unwrap(), edge(1, 2));
    }

    #[test]
    fn selection_samples_when_head_below_default() {
        let mut space = PrioritySearchSpace::new(3, 0.0, 7);
        // Frozen re-injection above rho0: random unseen edge preferred.
        space.heap.push(edge(0, 1), 0.5).unwrap();
        space.seen.insert(edge(0, 1));
        let e = space.select_next_edge().unwrap();
        assert_ne!(e, edge(0, 1));
        assert!(space.is_seen(&e));
    }

    #[test]
    fn selection_deterministic_under_seed() {
        let pick = |seed| {
            let mut space = PrioritySearchSpace::new(3, 0.0, seed);
            space.select_next_edge().unwrap()
        };
        assert_eq!(pick(5), pick(5));
    }

    #[test]
    fn selection_falls_back_to_heap_then_exhausts() {
        let mut space = PrioritySearchSpace::new(3, 0.0, 2);
        for e in all_edges(3) {
            space.seen.insert(e);
        }
        space.heap.push(edge(0, 1), 0.9).unwrap();
        assert_eq!(space.select_next_edge().unwrap(), edge(0, 1));
        assert!(matches!(
            space.select_next_edge(),
            Err(Error::SearchExhausted)
        ));
    }

    #[test]
    fn eager_space_marks_all_seen() {
        let space = PrioritySearchSpace::eager(5, 0.0, 3);
        assert_eq!(space.unseen_remaining(), 0);
        assert_eq!(space.heap_len(), 10);
    }

    #[test]
    fn offer_routes_by_score() {
        let lambda = 0.1;
        let mut frozen = FrozenContainer::new();
        let mut res = Reservoir::new(2);

        // Below lambda: frozen with v_e = 1 - 0.05/0.1 = 0.5.
        let out = reservoir_offer(&mut res, &mut frozen, edge(0, 1), 0.05, lambda);
        assert_eq!(out, OfferOutcome::FrozenBelowLambda);
        assert!((frozen.offset(&edge(0, 1)).unwrap() - 0.5).abs() < 1e-12);

        reservoir_offer(&mut res, &mut frozen, edge(0, 2), 0.2, lambda);
        reservoir_offer(&mut res, &mut frozen, edge(0, 3), 0.4, lambda);
        assert!(res.is_full());

        // Better than min: replaces, min frozen with negative offset.
        let out = reservoir_offer(&mut res, &mut frozen, edge(1, 2), 0.3, lambda);
        assert_eq!(out, OfferOutcome::ReplacedMin(edge(0, 2)));
        assert!(frozen.offset(&edge(0, 2)).unwrap() < 0.0);
        assert_eq!(res.min_score(), Some(0.3));

        // Violating but not better than min: frozen, reservoir unchanged.
        let out = reservoir_offer(&mut res, &mut frozen, edge(1, 3), 0.15, lambda);
        assert_eq!(out, OfferOutcome::FrozenNotBetter);
        assert_eq!(res.len(), 2);
    }

    #[test]
    fn refresh_drops_only_failing_edges() {
        let lambda = 0.1;
        let mut frozen = FrozenContainer::new();
        let mut res = Reservoir::new(3);
        reservoir_offer(&mut res, &mut frozen, edge(0, 1), 0.2, lambda);
        reservoir_offer(&mut res, &mut frozen, edge(0, 2), 0.3, lambda);

        // No score changes: unchanged.
        refresh_reservoir(&mut res, &mut frozen, lambda, |e| {
            res_score(&e)
        });
        fn res_score(e: &EdgeId) -> f64 {
            if *e == EdgeId::new(0, 1).unwrap() {
                0.2
            } else {
                0.3
            }
        }
        assert_eq!(res.len(), 2);

        // One edge crosses below lambda.
        refresh_reservoir(&mut res, &mut frozen, lambda, |e| {
            if e == edge(0, 1) {
                0.05
            } else {
                0.3
            }
        });
        assert_eq!(res.len(), 1);
        assert!(frozen.contains(&edge(0, 1)));

        // All scores fall: reservoir emptied.
        refresh_reservoir(&mut res, &mut frozen, lambda, |_| 0.0);
        assert!(res.is_empty());
        assert!(frozen.contains(&edge(0, 2)));
    }

    #[test]
    fn activation_set_alpha_one_is_argmax() {
        let mut res = Reservoir::new(3);
        let mut frozen = FrozenContainer::new();
        for (e, s) in [(edge(0, 1), 0.2), (edge(2, 3), 0.5), (edge(4, 5), 0.9)] {
            reservoir_offer(&mut res, &mut frozen, e, s, 0.1);
        }
        assert_eq!(activation_set(&res, 1.0), vec![edge(4, 5)]);
    }

    #[test]
    fn activation_set_threshold_arithmetic() {
        let mut res = Reservoir::new(2);
        let mut frozen = FrozenContainer::new();
        reservoir_offer(&mut res, &mut frozen, edge(0, 1), 0.2, 0.1);
        reservoir_offer(&mut res, &mut frozen, edge(2, 3), 0.6, 0.1);
        // alpha = 0: tau = mean = 0.4; only the 0.6 edge passes.
        assert_eq!(activation_set(&res, 0.0), vec![edge(2, 3)]);
    }

    #[test]
    fn activation_set_skips_adjacent() {
        let mut res = Reservoir::new(2);
        let mut frozen = FrozenContainer::new();
        reservoir_offer(&mut res, &mut frozen, edge(0, 1), 0.9, 0.1);
        reservoir_offer(&mut res, &mut frozen, edge(1, 2), 0.8, 0.1);
        assert_eq!(activation_set(&res, 0.0), vec![edge(0, 1)]);
    }

    #[test]
    fn reorganize_inserts_and_decrements() {
        let mut space = PrioritySearchSpace::new(5, 0.0, 1);
        // Empty hub set: unchanged.
        space.reorganize(&BTreeSet::new(), |_| false);
        assert_eq!(space.heap_len(), 0);

        let hubs = BTreeSet::from([0]);
        space.reorganize(&hubs, |_| false);
        assert_eq!(space.heap_len(), 4);
        assert_eq!(space.heap.priority_of(&edge(0, 3)), Some(-1.0));

        // Cumulative decrement on a second pass.
        space.reorganize(&hubs, |_| false);
        assert_eq!(space.heap.priority_of(&edge(0, 3)), Some(-2.0));

        // Skip callback excludes active/reservoir edges.
        let mut space = PrioritySearchSpace::new(5, 0.0, 1);
        space.reorganize(&hubs, |e| *e == edge(0, 1));
        assert!(!space.in_heap(&edge(0, 1)));
        assert_eq!(space.heap_len(), 3);
    }

    #[test]
    fn refill_orders_by_offset_and_empties() {
        let mut space = PrioritySearchSpace::new(4, 0.0, 1);
        let mut frozen = FrozenContainer::new();
        frozen.freeze(edge(0, 1), 0.07, 0.1); // v = 0.3
        frozen.freeze(edge(2, 3), 0.03, 0.1); // v = 0.7
        space.seen.insert(edge(0, 1));
        space.seen.insert(edge(2, 3));
        space.refill_from_frozen(&mut frozen).unwrap();
        assert!(frozen.is_empty());
        // Lower offset = closer to violating = popped first.
        assert_eq!(space.heap.pop().unwrap().1, edge(0, 1));
        assert_eq!(space.heap.pop().unwrap().1, edge(2, 3));

        // Refill with a nonempty heap is rejected.
        let mut space2 = PrioritySearchSpace::new(4, 0.0, 1);
        space2.heap.push(edge(0, 1), 0.0).unwrap();
        let mut frozen2 = FrozenContainer::new();
        frozen2.freeze(edge(2, 3), 0.0, 0.1);
        assert!(matches!(
            space2.refill_from_frozen(&mut frozen2),
            Err(Error::RefillNonEmptyHeap)
        ));
    }

    #[test]
    fn empty_frozen_empty_heap_falls_through_to_sampling() {
        let mut space = PrioritySearchSpace::new(4, 0.0, 9);
        let mut frozen = FrozenContainer::new();
        space.refill_from_frozen(&mut frozen).unwrap();
        assert!(space.select_next_edge().is_ok());
    }

    #[test]
    fn reservoir_remove() {
        let mut res = Reservoir::new(3);
        let mut frozen = FrozenContainer::new();
        reservoir_offer(&mut res, &mut frozen, edge(0, 1), 0.2, 0.1);
        reservoir_offer(&mut res, &mut frozen, edge(2, 3), 0.5, 0.1);
        assert_eq!(res.remove(&edge(0, 1)), Some(0.2));
        assert_eq!(res.remove(&edge(0, 1)), None);
        assert_eq!(res.len(), 1);
        assert_eq!(res.min_score(), Some(0.5));
    }

    #[test]
    fn rejection_sampling_collision_rate() {
        // With |seen| = beta*n out of C(n,2) candidates, the expected number
        // of draws per selection is 1/(1 - 2*beta/(n-1)). Probe without
        // growing the seen set.
        let n = 1000usize;
        let beta = 2usize;
        let mut space = PrioritySearchSpace::new(n, 0.0, 12345);
        for k in 0..(beta * n) as u64 {
            space.seen.insert(EdgeId::from_linear(k, n));
        }
        let mut draws = 0u64;
        let trials = 10_000;
        for _ in 0..trials {
            let e = space.select_next_edge().unwrap();
            draws += space.samples_drawn;
            space.samples_drawn = 0;
            space.seen.remove(&e); // keep |seen| fixed at beta*n
        }
        let mean = draws as f64 / trials as f64;
        assert!(mean < 1.005, "mean draws {mean}");
    }
}
