//! Ground-truth model generation, Gibbs sampling, structure-recovery
//! metrics, and the reservoir-rank Monte Carlo simulation.

use std::collections::BTreeSet;

use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::data::DiscreteDataset;
use crate::inference::conditional_distribution;
use crate::model::{EdgeId, MrfModel, VariableSpec};
use crate::{Error, Result};

/// Scale-free graph over `n >= 3` nodes by preferential attachment.
///
/// Starts from a 2-edge path on three nodes; each arriving node attaches
/// two edges to distinct existing nodes chosen with probability
/// proportional to current degree. Produces exactly `2n - 4` edges,
/// connected, with no multi-edges.
pub fn preferential_attachment(n: usize, seed: u64) -> Result<BTreeSet<EdgeId>> {
    if n < 3 {
        return Err(Error::Config(format!(
            "preferential attachment needs n >= 3, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = BTreeSet::new();
    let mut degrees = vec![0usize; n];
    let add = |edges: &mut BTreeSet<EdgeId>, degrees: &mut Vec<usize>, a: usize, b: usize| {
        edges.insert(EdgeId::new(a, b).expect("distinct"));
        degrees[a] += 1;
        degrees[b] += 1;
    };
    add(&mut edges, &mut degrees, 0, 1);
    add(&mut edges, &mut degrees, 1, 2);

    for arrival in 3..n {
        // Two distinct degree-proportional targets, sampled without
        // replacement.
        let mut excluded = usize::MAX;
        for _ in 0..2 {
            let total: usize = degrees[..arrival]
                .iter()
                .enumerate()
                .filter(|(v, _)| *v != excluded)
                .map(|(_, d)| d)
                .sum();
            let mut ticket = rng.gen_range(0..total);
            let mut target = None;
            for (v, &d) in degrees[..arrival].iter().enumerate() {
                if v == excluded {
                    continue;
                }
                if ticket < d {
                    target = Some(v);
                    break;
                }
                ticket -= d;
            }
            let target = target.expect("ticket lands on some node");
            add(&mut edges, &mut degrees, arrival, target);
            excluded = target;
        }
    }
    debug_assert_eq!(edges.len(), 2 * n - 4);
    Ok(edges)
}

/// Ground-truth model: `spec` plus the given true edges, weights drawn from
/// `Normal(mean, sigma_v)` for node entries and `Normal(mean, sigma_e)` for
/// edge entries.
pub fn sample_parameters(
    edges: &BTreeSet<EdgeId>,
    spec: &VariableSpec,
    mean: f64,
    sigma_v: f64,
    sigma_e: f64,
    seed: u64,
) -> Result<MrfModel> {
    if sigma_v <= 0.0 || sigma_e <= 0.0 {
        return Err(Error::Config("sigmas must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_dist = Normal::new(mean, sigma_v).map_err(|e| Error::Config(e.to_string()))?;
    let edge_dist = Normal::new(mean, sigma_e).map_err(|e| Error::Config(e.to_string()))?;
    let mut model = MrfModel::disconnected(spec.clone());
    for i in 0..spec.len() {
        for w in model.node_weight_mut(i) {
            *w = node_dist.sample(&mut rng);
        }
    }
    for &e in edges {
        model.activate_edge(e)?;
        for w in model.edge_weight_mut(&e).unwrap() {
            *w = edge_dist.sample(&mut rng);
        }
    }
    Ok(model)
}

/// Systematic-scan Gibbs sampler: discards `burn_in` full sweeps, then keeps
/// the state after every `thinning`-th sweep until `count` rows are drawn.
pub fn gibbs_sample(
    model: &MrfModel,
    count: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> Result<DiscreteDataset> {
    if count == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let thinning = thinning.max(1);
    let spec = model.spec();
    let n = spec.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state: Vec<u32> = (0..n)
        .map(|i| rng.gen_range(0..spec.card(i) as u32))
        .collect();

    let sweep = |state: &mut Vec<u32>, rng: &mut ChaCha8Rng| {
        for i in 0..n {
            let cond = conditional_distribution(model, state, i);
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut drawn = cond.len() - 1;
            for (a, p) in cond.iter().enumerate() {
                cum += p;
                if u < cum {
                    drawn = a;
                    break;
                }
            }
            state[i] = drawn as u32;
        }
    };

    for _ in 0..burn_in {
        sweep(&mut state, &mut rng);
    }
    let mut rows = Vec::with_capacity(count);
    while rows.len() < count {
        for _ in 0..thinning {
            sweep(&mut state, &mut rng);
        }
        rows.push(state.clone());
    }
    DiscreteDataset::new(spec.clone(), rows)
}

/// Fraction of true edges recovered; an empty true set counts as 1.
pub fn recall(true_edges: &BTreeSet<EdgeId>, learned_edges: &BTreeSet<EdgeId>) -> f64 {
    if true_edges.is_empty() {
        return 1.0;
    }
    let hit = true_edges.intersection(learned_edges).count();
    hit as f64 / true_edges.len() as f64
}

/// One row of the reservoir-rank simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRow {
    pub reservoir_size: usize,
    pub mean_rank: f64,
    pub min_rank: u64,
    pub max_rank: u64,
    /// `(M + 1) / (|R| + 1)` with `M = C(n,2)`.
    pub expected_rank: f64,
}

/// Monte Carlo of the best rank a size-`|R|` reservoir captures: draws `|R|`
/// distinct ranks uniformly from `{1..C(n,2)}` and records the minimum,
/// averaged over `trials`.
pub fn reservoir_rank_simulation(
    n: usize,
    reservoir_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<RankRow>> {
    if n < 2 || trials == 0 {
        return Err(Error::Config("need n >= 2 and trials >= 1".into()));
    }
    let population = (n as u64) * (n as u64 - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(reservoir_sizes.len());
    for &size in reservoir_sizes {
        if size == 0 || size as u64 > population {
            return Err(Error::Config(format!(
                "reservoir size {size} not in [1, {population}]"
            )));
        }
        let mut sum = 0.0;
        let mut min_rank = u64::MAX;
        let mut max_rank = 0u64;
        for _ in 0..trials {
            let best = sample_min_rank(&mut rng, population, size);
            sum += best as f64;
            min_rank = min_rank.min(best);
            max_rank = max_rank.max(best);
        }
        rows.push(RankRow {
            reservoir_size: size,
            mean_rank: sum / trials as f64,
            min_rank,
            max_rank,
            expected_rank: (population as f64 + 1.0) / (size as f64 + 1.0),
        });
    }
    Ok(rows)
}

/// Minimum of `k` distinct uniform draws from `{1..population}` without
/// materializing the population: sequential sampling with rejection.
fn sample_min_rank(rng: &mut ChaCha8Rng, population: u64, k: usize) -> u64 {
    if k as u64 == population {
        return 1;
    }
    let mut drawn = std::collections::HashSet::with_capacity(k);
    let mut best = u64::MAX;
    while drawn.len() < k {
        let r = rng.gen_range(1..=population);
        if drawn.insert(r) {
            best = best.min(r);
        }
    }
    best
}
