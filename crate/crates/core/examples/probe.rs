// Scratch probe for benchmark parameter exploration. Not part of the build.

use std::collections::BTreeSet;
use std::time::Instant;

use edgegraft::learners::{
    best_choice_edge_grafting_with, edge_grafting_with, first_hit_with, LearnerConfig, Method,
    TraceTargets,
};
use edgegraft::model::{EdgeId, VariableSpec};
use edgegraft::objective::OptimizerConfig;
use edgegraft::synthetic::{gibbs_sample, preferential_attachment, recall, sample_parameters};
use edgegraft::DiscreteDataset;

fn benchmark_dataset(n: usize, s: usize, count: usize, seed: u64) -> (BTreeSet<EdgeId>, DiscreteDataset) {
    benchmark_dataset_sigma(n, s, count, seed, 1.0)
}

fn benchmark_dataset_sigma(n: usize, s: usize, count: usize, seed: u64, sigma_e: f64) -> (BTreeSet<EdgeId>, DiscreteDataset) {
    let spec = VariableSpec::uniform(n, s).unwrap();
    let edges = preferential_attachment(n, seed).unwrap();
    let truth = sample_parameters(&edges, &spec, 0.0, 0.5, sigma_e, seed.wrapping_add(1)).unwrap();
    let data = gibbs_sample(&truth, count, 200, 5, seed.wrapping_add(2)).unwrap();
    (edges, data)
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "lambda".into());
    match mode.as_str() {
        "lambda" => lambda_grid(),
        "alpha" => alpha_sweep(),
        "heur" => heuristics(),
        "instr" => instrumentation(),
        "kkt" => kkt_convergence(),
        "ceiling" => ceiling(),
        "mceiling" => marginal_ceiling(),
        "bp" => bp_health(),
        other => eprintln!("unknown mode {other}"),
    }
}

fn quick_opt() -> OptimizerConfig {
    OptimizerConfig {
        tol: 1e-5,
        max_inner: 60,
        ..Default::default()
    }
}

fn lambda_grid() {
    let lambdas = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    for &lambda in &lambdas {
        let mut recalls = Vec::new();
        let mut fh_recalls = Vec::new();
        let t0 = Instant::now();
        for seed in 0..4u64 {
            let (truth, data) = benchmark_dataset(20, 5, 5000, 100 + seed);
            let cfg = LearnerConfig {
                method: Method::BestChoice,
                lambda,
                lambda2: 0.5,
                alpha: 1.0,
                seed,
                opt: quick_opt(),
                ..Default::default()
            };
            let targets = TraceTargets {
                true_edges: Some(&truth),
                ..Default::default()
            };
            let out = best_choice_edge_grafting_with(&data, &cfg, targets).unwrap();
            recalls.push(recall(&truth, out.model.active_edges()));
            let fh = first_hit_with(&data, &cfg, targets).unwrap();
            fh_recalls.push(recall(&truth, fh.model.active_edges()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "lambda={lambda:>7}: bceg recall mean {:.3} {:?}, first_hit {:.3}, elapsed {:.1}s",
            mean(&recalls),
            recalls.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
            mean(&fh_recalls),
            t0.elapsed().as_secs_f64()
        );
    }
}

fn alpha_sweep() {
    let lambda: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1e-2);
    for alpha in [0.25, 0.5, 0.75, 1.0] {
        let mut recalls = Vec::new();
        let t0 = Instant::now();
        for seed in 0..10u64 {
            let (truth, data) = benchmark_dataset(20, 5, 5000, 100 + seed);
            let cfg = LearnerConfig {
                method: Method::BestChoice,
                lambda,
                lambda2: 0.5,
                alpha,
                seed,
                opt: quick_opt(),
                ..Default::default()
            };
            let targets = TraceTargets {
                true_edges: Some(&truth),
                ..Default::default()
            };
            let out = best_choice_edge_grafting_with(&data, &cfg, targets).unwrap();
            recalls.push(recall(&truth, out.model.active_edges()));
        }
        let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
        println!(
            "alpha={alpha}: mean recall {mean:.3} ({:.1}s)",
            t0.elapsed().as_secs_f64()
        );
    }
}

fn heuristics() {
    let lambda: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1e-2);
    let t_max: usize = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(4);
    for heur in [true, false] {
        let mut recalls = Vec::new();
        for seed in 0..10u64 {
            let (truth, data) = benchmark_dataset(20, 5, 5000, 100 + seed);
            let cfg = LearnerConfig {
                method: Method::BestChoice,
                lambda,
                lambda2: 0.5,
                alpha: 1.0,
                t_max: Some(t_max),
                structure_heuristics: heur,
                seed,
                opt: quick_opt(),
                ..Default::default()
            };
            let targets = TraceTargets {
                true_edges: Some(&truth),
                ..Default::default()
            };
            let out = best_choice_edge_grafting_with(&data, &cfg, targets).unwrap();
            recalls.push(recall(&truth, out.model.active_edges()));
        }
        let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
        println!("heuristics={heur} t_max={t_max}: mean recall {mean:.3} {recalls:?}");
    }
}

fn instrumentation() {
    let t0 = Instant::now();
    let (_, data) = benchmark_dataset(60, 5, 2000, 500);
    println!("dataset generated in {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let cfg = LearnerConfig {
        method: Method::EdgeGrafting,
        lambda: 1e-3,
        lambda2: 0.5,
        edge_budget: Some(1),
        opt: quick_opt(),
        ..Default::default()
    };
    let eg = edge_grafting_with(&data, &cfg, TraceTargets::default()).unwrap();
    println!(
        "EG: tables at first activation {}, total {}, elapsed {:.1}s",
        eg.activations[0].tables_at_activation,
        eg.tables_computed,
        t0.elapsed().as_secs_f64()
    );

    let t0 = Instant::now();
    let cfg = LearnerConfig {
        method: Method::BestChoice,
        lambda: 1e-3,
        lambda2: 0.5,
        alpha: 0.5,
        reservoir_size: Some(60),
        t_max: Some(6),
        edge_budget: Some(30),
        seed: 9,
        opt: quick_opt(),
        ..Default::default()
    };
    let bc = best_choice_edge_grafting_with(&data, &cfg, TraceTargets::default()).unwrap();
    println!(
        "BCEG: fill_tests r={}, sweeps={}, total tables {}, elapsed {:.1}s",
        bc.fill_tests,
        bc.exhaustive_sweeps,
        bc.tables_computed,
        t0.elapsed().as_secs_f64()
    );
    for a in &bc.activations {
        let bound = bc.fill_tests + (a.ordinal as u64) * 6;
        let ok = a.tables_at_activation <= bound;
        if !ok || a.ordinal == 30 {
            println!(
                "  j={} tables={} bound={} {}",
                a.ordinal,
                a.tables_at_activation,
                bound,
                if ok { "ok" } else { "VIOLATION" }
            );
        }
    }
    let at30 = bc
        .activations
        .iter()
        .find(|a| a.ordinal == 30)
        .map(|a| a.tables_at_activation);
    println!(
        "tables at j=30: {:?} (vs 25% of 1770 = 442.5)",
        at30
    );
}

fn ceiling() {
    let card: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(5);
    let sigma_e: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    use edgegraft::inference::{compute_beliefs, EngineConfig};
    use edgegraft::objective::edge_score;
    use edgegraft::SufficientStatsStore;
    // How good is the raw dependence ranking, and what does exhaustive EG get?
    for seed in 0..4u64 {
        let (truth, data) = benchmark_dataset_sigma(20, card, 5000, 100 + seed, sigma_e);
        let model = edgegraft::MrfModel::disconnected(data.spec().clone());
        let mut stats = SufficientStatsStore::new(&data);
        let beliefs = compute_beliefs(&model, &EngineConfig::default()).unwrap();
        let mut scored: Vec<(f64, EdgeId)> = edgegraft::model::all_edges(20)
            .map(|e| (edge_score(&model, &data, &mut stats, &beliefs, e), e))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let top36: BTreeSet<EdgeId> = scored.iter().take(36).map(|(_, e)| *e).collect();
        let top60: BTreeSet<EdgeId> = scored.iter().take(60).map(|(_, e)| *e).collect();

        let t0 = Instant::now();
        let cfg = LearnerConfig {
            method: Method::EdgeGrafting,
            lambda: 1e-2,
            lambda2: 0.5,
            opt: quick_opt(),
            ..Default::default()
        };
        let eg = edge_grafting_with(&data, &cfg, TraceTargets::default()).unwrap();
        println!(
            "seed {seed}: static top-36 recall {:.3}, top-60 recall {:.3}, EG(60) recall {:.3} ({} edges, {:.1}s)",
            recall(&truth, &top36),
            recall(&truth, &top60),
            recall(&truth, eg.model.active_edges()),
            eg.model.num_active_edges(),
            t0.elapsed().as_secs_f64(),
        );
    }
}

fn marginal_ceiling() {
    use edgegraft::SufficientStatsStore;
    let card: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let sigma_e: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    // Rank pairs by ||p_D(e) - p_D(i) x p_D(j)|| / d_e (pure data dependence),
    // then greedily take 60 edges: measures the ordering ceiling with
    // bias-free node marginals.
    for seed in 0..4u64 {
        let (truth, data) = benchmark_dataset_sigma(20, card, 5000, 100 + seed, sigma_e);
        let mut stats = SufficientStatsStore::new(&data);
        let mut scored: Vec<(f64, EdgeId)> = edgegraft::model::all_edges(20)
            .map(|e| {
                let d_e = (data.spec().card(e.i()) * data.spec().card(e.j())) as f64;
                let table = stats.edge_table(&data, e).to_vec();
                let mi = stats.node_marginal(e.i()).to_vec();
                let mj = stats.node_marginal(e.j()).to_vec();
                let mut norm = 0.0;
                for (a, &pa) in mi.iter().enumerate() {
                    for (b, &pb) in mj.iter().enumerate() {
                        let diff = table[a * mj.len() + b] - pa * pb;
                        norm += diff * diff;
                    }
                }
                (norm.sqrt() / d_e, e)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let top60: BTreeSet<EdgeId> = scored.iter().take(60).map(|(_, e)| *e).collect();
        println!(
            "seed {seed}: data-marginal top-60 recall {:.3}",
            recall(&truth, &top60)
        );
    }
}

fn bp_health() {
    use edgegraft::inference::{loopy_bp, EngineConfig};
    let card: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let (truth, data) = benchmark_dataset_sigma(20, card, 5000, 100, 1.0);
    let cfg = LearnerConfig {
        method: Method::EdgeGrafting,
        lambda: 1e-2,
        lambda2: 0.5,
        opt: quick_opt(),
        ..Default::default()
    };
    let eg = edge_grafting_with(&data, &cfg, TraceTargets::default()).unwrap();
    let beliefs = loopy_bp(&eg.model, &EngineConfig::default());
    let _ = truth;
    println!(
        "final EG model: {} edges, BP converged={} iters={} last-residual={:.2e}",
        eg.model.num_active_edges(),
        beliefs.converged,
        beliefs.iterations,
        beliefs.residuals.last().copied().unwrap_or(0.0)
    );
}

fn kkt_convergence() {
    for lambda in [0.02, 0.01, 0.005] {
        let t0 = Instant::now();
        let (truth, data) = benchmark_dataset(15, 2, 2000, 900);
        let cfg = LearnerConfig {
            method: Method::EdgeGrafting,
            lambda,
            lambda2: 0.5,
            edge_budget: Some(105),
            opt: quick_opt(),
            ..Default::default()
        };
        let out = edge_grafting_with(&data, &cfg, TraceTargets::default()).unwrap();
        println!(
            "lambda={lambda}: converged={} edges={} (truth {}), recall {:.2}, {:.1}s",
            out.converged,
            out.model.num_active_edges(),
            truth.len(),
            recall(&truth, out.model.active_edges()),
            t0.elapsed().as_secs_f64()
        );
    }
}
