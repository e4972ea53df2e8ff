//! Comparison searchers sharing the benchmark accounting: random search,
//! aging (regularized) evolution, and the discriminator-free RL ablation
//! that feeds queried accuracy straight into PPO.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bench::Benchmark;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::graph::{canonical_hash, Architecture, SearchSpaceSpec};
use crate::reward::{ppo_update, validity_reward};
use crate::search::{random_unique, Ledger, SearchConfig, SearchResult};
use crate::tensor::params::ParamStore;

/// Queries `budget` distinct random architectures; a budget covering the
/// whole space degrades to exhaustive enumeration.
pub fn random_search(bench: &Benchmark, budget: usize, seed: u64) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::Config("budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(bench, Some(budget));
    if budget >= bench.len() {
        let rows: Vec<Architecture> = bench.rows().map(|(_, arch, _, _)| arch.clone()).collect();
        for arch in rows {
            ledger.evaluate(&arch)?;
        }
    } else {
        while ledger.q() < budget {
            let want = budget - ledger.q();
            let fresh = random_unique(&bench.space, want, &mut rng, ledger.seen())?;
            if fresh.is_empty() {
                break; // representable space exhausted
            }
            for arch in &fresh {
                ledger.evaluate(arch)?;
            }
        }
    }
    ledger.finish("random", Vec::new(), json!({ "budget": budget }), seed, 0)
}

/// Single random mutation: a chain flips one position to a different
/// operator; a cell either reassigns one intermediate node's operator or
/// toggles one candidate edge (respecting the edge budget).
pub fn mutate<R: Rng>(arch: &Architecture, space: &SearchSpaceSpec, rng: &mut R) -> Architecture {
    match arch {
        Architecture::Chain { choices } => {
            let n_ops = space.vocabulary.searchable().len();
            let mut next = choices.clone();
            let pos = rng.gen_range(0..next.len());
            let shift = rng.gen_range(1..n_ops);
            next[pos] = (next[pos] + shift) % n_ops;
            Architecture::chain(next)
        }
        Architecture::Cell { ops, edges } => {
            let searchable = space.vocabulary.searchable();
            let intermediate: Vec<usize> = (0..ops.len())
                .filter(|&i| {
                    ops[i] != crate::graph::INPUT && ops[i] != crate::graph::OUTPUT
                })
                .collect();
            let flip_op = !intermediate.is_empty() && rng.gen_bool(0.5);
            if flip_op {
                let node = intermediate[rng.gen_range(0..intermediate.len())];
                let mut next_ops = ops.clone();
                let current = searchable.iter().position(|&s| s == ops[node]).unwrap_or(0);
                let shift = rng.gen_range(1..searchable.len().max(2));
                next_ops[node] = searchable[(current + shift) % searchable.len()].to_string();
                Architecture::cell(next_ops, edges.clone())
            } else {
                let n = ops.len();
                let src = rng.gen_range(0..n.saturating_sub(1));
                let dst = rng.gen_range(src + 1..n);
                let mut next_edges = edges.clone();
                if let Some(pos) = next_edges.iter().position(|&e| e == (src, dst)) {
                    next_edges.remove(pos);
                } else if space.max_edges.map(|m| next_edges.len() < m).unwrap_or(true) {
                    next_edges.push((src, dst));
                }
                Architecture::cell(ops.clone(), next_edges)
            }
        }
    }
}

/// Aging evolution: the population is a FIFO queue; each step a tournament
/// picks the parent, one mutation makes the child, the oldest member dies.
/// Children falling outside the benchmark (invalid cells) are re-mutated.
pub fn regularized_evolution(
    bench: &Benchmark,
    population_size: usize,
    tournament_size: usize,
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    if population_size == 0 || tournament_size == 0 {
        return Err(Error::Config("population and tournament must be >= 1".into()));
    }
    if population_size > budget {
        return Err(Error::Config("population must not exceed the query budget".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(bench, Some(budget));

    let init = random_unique(&bench.space, population_size.min(bench.len()), &mut rng, ledger.seen())?;
    let mut population: Vec<(Architecture, f64)> = Vec::new();
    for arch in &init {
        ledger.evaluate(arch)?;
        let metrics = bench.query(arch)?;
        population.push((arch.clone(), metrics.accuracy));
    }

    let mut stagnant = 0usize;
    while ledger.q() < budget && ledger.seen().len() < bench.len() {
        let parent = (0..tournament_size)
            .map(|_| &population[rng.gen_range(0..population.len())])
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty tournament")
            .0
            .clone();
        let mut child = mutate(&parent, &bench.space, &mut rng);
        let mut hash = canonical_hash(&child)?;
        let mut tries = 0;
        while !bench.contains(&hash) && tries < 50 {
            child = mutate(&parent, &bench.space, &mut rng);
            hash = canonical_hash(&child)?;
            tries += 1;
        }
        if !bench.contains(&hash) {
            continue;
        }
        let fresh = !ledger.seen().contains(&hash);
        ledger.evaluate(&child)?;
        let metrics = bench.query(&child)?;
        population.push((child, metrics.accuracy));
        population.remove(0);
        // converged populations stop charging #Q; inject a random member to
        // keep the budget invariant honest
        stagnant = if fresh { 0 } else { stagnant + 1 };
        if stagnant > 200 {
            if let Some(arch) = random_unique(&bench.space, 1, &mut rng, ledger.seen())?.pop() {
                ledger.evaluate(&arch)?;
                let metrics = bench.query(&arch)?;
                population.push((arch, metrics.accuracy));
                population.remove(0);
            }
            stagnant = 0;
        }
    }

    let echo = json!({
        "population": population_size,
        "tournament": tournament_size,
        "budget": budget,
    });
    ledger.finish("ea", Vec::new(), echo, seed, 0)
}

/// Ablation of the adversarial loop: same generator and PPO machinery, but
/// the final reward of a valid architecture is its queried accuracy. Invalid
/// episodes keep the validity penalties and are never queried.
pub fn rlnas(
    bench: &Benchmark,
    config: &SearchConfig,
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    config.validate()?;
    if budget == 0 {
        return Err(Error::Config("budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(bench, Some(budget));
    let mut store = ParamStore::new();
    let gen = Generator::new(bench.space.clone(), config.hidden_dim, config.gnn_layers, &mut store, &mut rng);
    let reward_cfg = config.reward_config();

    let batch_cap = 200 + 20 * (budget / config.episode_batch.max(1) + 1);
    // a collapsed policy regenerates the same cells forever; stop once no
    // batch has charged a new query in a while instead of burning the cap
    const STALL_CAP: usize = 50;
    let mut batches = 0usize;
    let mut stalled = 0usize;
    while ledger.q() < budget && batches < batch_cap && stalled < STALL_CAP {
        batches += 1;
        let q_before = ledger.q();
        let mut batch = Vec::with_capacity(config.episode_batch);
        for _ in 0..config.episode_batch {
            let mut traj = gen.rollout(&store, &mut rng)?;
            if traj.invalid_termination {
                traj.final_reward = 0.0;
            } else {
                let r_v = validity_reward(&traj.final_arch, &gen)?;
                if r_v < 0.0 {
                    traj.final_reward = r_v;
                } else {
                    let hash = canonical_hash(&traj.final_arch)?;
                    let novel = !ledger.seen().contains(&hash);
                    if novel && ledger.budget_left() == 0 {
                        // budget exhausted: unrewarded, unqueried
                        traj.final_reward = 0.0;
                    } else {
                        ledger.evaluate(&traj.final_arch)?;
                        let metrics = bench.query(&traj.final_arch)?;
                        traj.final_reward = metrics.accuracy;
                    }
                }
            }
            batch.push(traj);
        }
        if config.g_lr > 0.0 {
            ppo_update(&gen, &mut store, &batch, &reward_cfg, config.g_lr)?;
        }
        stalled = if ledger.q() == q_before { stalled + 1 } else { 0 };
    }

    let echo = serde_json::to_value(config)?;
    ledger.finish("rlnas", Vec::new(), echo, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::synth_benchmark;
    use crate::graph::{OperatorVocabulary, SearchSpaceSpec};

    fn chain_space(n_ops: usize, length: usize) -> SearchSpaceSpec {
        let mut names = vec![crate::graph::INPUT.to_string()];
        for i in 0..n_ops {
            names.push(format!("op{i}"));
        }
        names.push(crate::graph::OUTPUT.to_string());
        SearchSpaceSpec::chain(OperatorVocabulary::new(names).unwrap(), length).unwrap()
    }

    #[test]
    fn exhaustive_budget_finds_rank_one() {
        let bench = synth_benchmark(&chain_space(3, 3), 1, 0.5, 100).unwrap();
        let result = random_search(&bench, bench.len(), 0).unwrap();
        assert_eq!(result.queries, bench.len());
        assert_eq!(result.best.rank, 1);
        // over-budget also degrades to exhaustive
        let result = random_search(&bench, bench.len() * 2, 0).unwrap();
        assert_eq!(result.queries, bench.len());
        assert_eq!(result.best.rank, 1);
    }

    #[test]
    fn budget_one_queries_once() {
        let bench = synth_benchmark(&chain_space(3, 3), 1, 0.5, 100).unwrap();
        let result = random_search(&bench, 1, 7).unwrap();
        assert_eq!(result.queries, 1);
        assert_eq!(result.evaluated.len(), 1);
    }

    #[test]
    fn mean_best_rank_matches_order_statistics() {
        // uniform draws: E[best rank] = (|space|+1)/(budget+1); assert within 3x
        let bench = synth_benchmark(&chain_space(10, 4), 3, 0.8, 10_100).unwrap();
        assert_eq!(bench.len(), 10_000);
        let budget = 99;
        let mut total_rank = 0.0;
        for seed in 0..20 {
            let result = random_search(&bench, budget, seed).unwrap();
            assert_eq!(result.queries, budget);
            total_rank += result.best.rank as f64;
        }
        let mean_rank = total_rank / 20.0;
        let expect = (bench.len() as f64 + 1.0) / (budget as f64 + 1.0);
        assert!(
            mean_rank < 3.0 * expect && mean_rank > expect / 3.0,
            "mean best rank {mean_rank} vs expectation {expect}"
        );
    }

    #[test]
    fn chain_mutation_flips_exactly_one_position() {
        let space = chain_space(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let parent = crate::graph::random_architecture(&space, &mut rng);
            let child = mutate(&parent, &space, &mut rng);
            let (p, c) = match (&parent, &child) {
                (Architecture::Chain { choices: p }, Architecture::Chain { choices: c }) => (p, c),
                _ => panic!("chain mutation changed kind"),
            };
            let diffs = p.iter().zip(c).filter(|(a, b)| a != b).count();
            assert_eq!(diffs, 1);
            assert!(c.iter().all(|&v| v < 4));
        }
    }

    #[test]
    fn cell_mutation_changes_one_op_or_one_edge() {
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 5, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let parent = crate::graph::random_architecture(&space, &mut rng);
            let child = mutate(&parent, &space, &mut rng);
            let (p_ops, p_edges) = match &parent {
                Architecture::Cell { ops, edges } => (ops, edges),
                _ => unreachable!(),
            };
            let (c_ops, c_edges) = match &child {
                Architecture::Cell { ops, edges } => (ops, edges),
                _ => unreachable!(),
            };
            let op_diffs = p_ops.iter().zip(c_ops).filter(|(a, b)| a != b).count();
            let edge_delta = (p_edges.len() as i64 - c_edges.len() as i64).abs();
            assert!(
                (op_diffs == 1 && edge_delta == 0) || (op_diffs == 0 && edge_delta <= 1),
                "more than one mutation applied"
            );
            if let Some(max) = space.max_edges {
                assert!(c_edges.len() <= max);
            }
        }
    }

    #[test]
    fn population_one_still_runs() {
        let bench = synth_benchmark(&chain_space(3, 4), 4, 0.2, 200).unwrap();
        let result = regularized_evolution(&bench, 1, 1, 20, 5).unwrap();
        assert_eq!(result.queries, 20);
        assert_eq!(result.algorithm, "ea");
    }

    #[test]
    fn rea_beats_random_on_smooth_chains() {
        // roughness 0 => separable landscape where local moves climb
        let bench = synth_benchmark(&chain_space(4, 5), 11, 0.0, 2000).unwrap();
        let budget = 100;
        let mut rea_total = 0.0;
        let mut random_total = 0.0;
        for seed in 0..20 {
            rea_total += regularized_evolution(&bench, 25, 5, budget, seed).unwrap().best.accuracy;
            random_total += random_search(&bench, budget, seed).unwrap().best.accuracy;
        }
        assert!(
            rea_total > random_total,
            "REA mean {} <= random mean {}",
            rea_total / 20.0,
            random_total / 20.0
        );
    }

    #[test]
    fn baselines_are_deterministic_per_seed() {
        let bench = synth_benchmark(&chain_space(3, 4), 4, 0.2, 200).unwrap();
        let a = serde_json::to_string(&random_search(&bench, 10, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&random_search(&bench, 10, 3).unwrap()).unwrap();
        assert_eq!(a, b);
        let a = serde_json::to_string(&regularized_evolution(&bench, 5, 2, 15, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&regularized_evolution(&bench, 5, 2, 15, 3).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    fn tiny_rl_config() -> SearchConfig {
        SearchConfig {
            hidden_dim: 8,
            gnn_layers: 1,
            episode_batch: 4,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn rlnas_respects_budget_and_accounting() {
        let bench = synth_benchmark(&chain_space(3, 3), 2, 0.4, 100).unwrap();
        let result = rlnas(&bench, &tiny_rl_config(), 12, 9).unwrap();
        assert!(result.queries <= 12, "#Q = {}", result.queries);
        assert_eq!(result.queries, result.evaluated.len());
        assert_eq!(result.algorithm, "rlnas");
        let again = rlnas(&bench, &tiny_rl_config(), 12, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&result).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn rlnas_skips_queries_for_invalid_cells() {
        // free-DAG rollouts can be invalid; every charged query must be a
        // valid benchmark member, so #Q == |evaluated| <= budget always
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 4, 5).unwrap();
        let bench = synth_benchmark(&space, 6, 0.4, 10_000).unwrap();
        let result = rlnas(&bench, &tiny_rl_config(), 15, 1).unwrap();
        assert!(result.queries <= 15);
        assert_eq!(result.queries, result.evaluated.len());
        for hash in &result.evaluated {
            assert!(bench.contains(hash));
        }
    }
}
