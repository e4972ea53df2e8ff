//! Multi-seed campaigns, summary statistics, best-so-far curves and Pareto
//! front recovery reports. Every aggregate is recomputable from the per-seed
//! result files it cites.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{random_search, regularized_evolution, rlnas};
use crate::bench::Benchmark;
use crate::error::{Error, Result};
use crate::graph::ArchHash;
use crate::search::{ganas_run, pareto_fronts, EvalRecord, SearchConfig, SearchResult};

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub accuracy: f64,
    pub rank: usize,
    pub queries: usize,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub algorithm: String,
    pub bench_id: String,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_rank: f64,
    pub mean_q: f64,
    pub std_q: f64,
    pub per_seed: Vec<SeedOutcome>,
    pub config_echo: serde_json::Value,
}

impl CampaignSummary {
    /// Table shaped like the published comparisons.
    pub fn table(&self) -> String {
        format!(
            "| Algorithm | Mean Acc | Mean Rank | Average #Q |\n\
             |-----------|----------|-----------|------------|\n\
             | {} | {:.4} ± {:.4} | {:.1} | {:.1} ± {:.1} |\n",
            self.algorithm, self.mean_acc, self.std_acc, self.mean_rank, self.mean_q, self.std_q
        )
    }
}

/// Runs one searcher per seed. The baselines take their #Q budget from
/// `config.max_queries`.
pub fn run_one(
    algorithm: &str,
    config: &SearchConfig,
    bench: &Benchmark,
    seed: u64,
) -> Result<SearchResult> {
    let budget = || {
        config
            .max_queries
            .ok_or_else(|| Error::Config("this algorithm needs max_queries as its #Q budget".into()))
    };
    match algorithm {
        "ganas" => ganas_run(config, bench, seed),
        "random" => random_search(bench, budget()?, seed),
        "ea" => regularized_evolution(bench, config.ea_population, config.ea_tournament, budget()?, seed),
        "rlnas" => rlnas(bench, config, budget()?, seed),
        other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
    }
}

/// Runs a seed list, writes `{out_dir}/{algorithm}_seed{seed}.json` per seed
/// and aggregates mean/std accuracy, mean rank and mean/std #Q.
pub fn run_campaign(
    algorithm: &str,
    config: &SearchConfig,
    bench: &Benchmark,
    seeds: &[u64],
    out_dir: &Path,
) -> Result<CampaignSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("campaign needs at least one seed".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut results = Vec::with_capacity(seeds.len());
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let result = run_one(algorithm, config, bench, seed)?;
        let file = out_dir.join(format!("{algorithm}_seed{seed}.json"));
        std::fs::write(&file, serde_json::to_string_pretty(&result)?)?;
        per_seed.push(SeedOutcome {
            seed,
            accuracy: result.best.accuracy,
            rank: result.best.rank,
            queries: result.queries,
            file: file.to_string_lossy().into_owned(),
        });
        results.push(result);
    }
    Ok(summarize(algorithm, config, &results, per_seed))
}

pub fn summarize(
    algorithm: &str,
    config: &SearchConfig,
    results: &[SearchResult],
    per_seed: Vec<SeedOutcome>,
) -> CampaignSummary {
    let accs: Vec<f64> = results.iter().map(|r| r.best.accuracy).collect();
    let qs: Vec<f64> = results.iter().map(|r| r.queries as f64).collect();
    let ranks: Vec<f64> = results.iter().map(|r| r.best.rank as f64).collect();
    let (mean_acc, std_acc) = mean_std(&accs);
    let (mean_q, std_q) = mean_std(&qs);
    let (mean_rank, _) = mean_std(&ranks);
    CampaignSummary {
        algorithm: algorithm.to_string(),
        bench_id: results.first().map(|r| r.bench_id.clone()).unwrap_or_default(),
        mean_acc,
        std_acc,
        mean_rank,
        mean_q,
        std_q,
        per_seed,
        config_echo: serde_json::to_value(config).unwrap_or_default(),
    }
}

/// Best-so-far value of one result at query count `q` (the last curve point
/// at or below `q`).
fn best_at(result: &SearchResult, q: usize) -> Option<f64> {
    result
        .curve
        .iter()
        .take_while(|p| p.q <= q)
        .last()
        .map(|p| p.best_accuracy)
}

/// CSV of mean/std best-accuracy-so-far across seeds on a shared #Q grid.
/// Results from different benchmarks are refused.
pub fn emit_curve(results: &[SearchResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Config("emit_curve needs at least one result".into()));
    }
    let bench_id = &results[0].bench_id;
    if results.iter().any(|r| &r.bench_id != bench_id) {
        return Err(Error::Config("results come from different benchmarks".into()));
    }
    // grid starts where every seed has at least one observation
    let start = results
        .iter()
        .map(|r| r.curve.first().map(|p| p.q).unwrap_or(0))
        .max()
        .unwrap_or(0);
    let mut grid: Vec<usize> = results
        .iter()
        .flat_map(|r| r.curve.iter().map(|p| p.q))
        .filter(|&q| q >= start)
        .collect();
    grid.sort_unstable();
    grid.dedup();

    let mut csv = String::from("q,mean_best_acc,std_best_acc\n");
    for &q in &grid {
        let values: Vec<f64> = results
            .iter()
            .map(|r| best_at(r, q).expect("grid starts at shared coverage"))
            .collect();
        let (mean, std) = mean_std(&values);
        csv.push_str(&format!("{q},{mean},{std}\n"));
    }
    Ok(csv)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParetoSeedReport {
    pub seed: u64,
    /// Non-dominated members of the evaluated set.
    pub found_front: Vec<ArchHash>,
    /// How many true-front members the run evaluated.
    pub recovered: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParetoReport {
    pub true_front: Vec<ArchHash>,
    pub per_seed: Vec<ParetoSeedReport>,
}

fn records_of(bench: &Benchmark, hashes: &[ArchHash]) -> Result<Vec<EvalRecord>> {
    hashes
        .iter()
        .map(|h| {
            let (arch, metrics, rank) = bench.peek(h).ok_or(Error::NotInBenchmark)?;
            Ok(EvalRecord { hash: *h, arch: arch.clone(), metrics: metrics.clone(), rank })
        })
        .collect()
}

/// Compares each result's evaluated set against the true first Pareto front
/// of the full table (accuracy ↑ vs train_seconds ↓).
pub fn report_pareto(results: &[SearchResult], bench: &Benchmark) -> Result<ParetoReport> {
    let all: Vec<ArchHash> = bench.rows().map(|(h, _, _, _)| *h).collect();
    let all_records = records_of(bench, &all)?;
    let (true_fronts, _) = pareto_fronts(&all_records, 1);
    let true_front = true_fronts.into_iter().next().unwrap_or_default();

    let mut per_seed = Vec::with_capacity(results.len());
    for result in results {
        if result.bench_id != bench.id() {
            return Err(Error::Config("result does not belong to this benchmark".into()));
        }
        let records = records_of(bench, &result.evaluated)?;
        let (fronts, _) = pareto_fronts(&records, 1);
        let found_front = fronts.into_iter().next().unwrap_or_default();
        let recovered = true_front.iter().filter(|h| result.evaluated.binary_search(h).is_ok()).count();
        per_seed.push(ParetoSeedReport { seed: result.seed, found_front, recovered });
    }
    Ok(ParetoReport { true_front, per_seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::synth_benchmark;
    use crate::graph::{OperatorVocabulary, SearchSpaceSpec};
    use tempfile::tempdir;

    fn bench() -> Benchmark {
        let space = SearchSpaceSpec::chain(OperatorVocabulary::nb101(), 4).unwrap();
        synth_benchmark(&space, 17, 0.4, 200).unwrap()
    }

    fn config() -> SearchConfig {
        SearchConfig { max_queries: Some(20), ..Default::default() }
    }

    #[test]
    fn single_seed_campaign_has_zero_stds() {
        let bench = bench();
        let dir = tempdir().unwrap();
        let summary = run_campaign("random", &config(), &bench, &[3], dir.path()).unwrap();
        assert_eq!(summary.std_acc, 0.0);
        assert_eq!(summary.std_q, 0.0);
        assert_eq!(summary.per_seed.len(), 1);
        assert!(Path::new(&summary.per_seed[0].file).exists());
        let table = summary.table();
        assert!(table.contains("Mean Acc") && table.contains("Mean Rank") && table.contains("Average #Q"));
    }

    #[test]
    fn aggregate_mean_matches_per_seed_files() {
        let bench = bench();
        let dir = tempdir().unwrap();
        let seeds = [1u64, 2, 3, 4];
        let summary = run_campaign("random", &config(), &bench, &seeds, dir.path()).unwrap();
        // recompute every number from the files the summary cites
        let mut accs = Vec::new();
        let mut qs = Vec::new();
        let mut ranks = Vec::new();
        for outcome in &summary.per_seed {
            let text = std::fs::read_to_string(&outcome.file).unwrap();
            let result: SearchResult = serde_json::from_str(&text).unwrap();
            assert_eq!(result.best.accuracy, outcome.accuracy);
            accs.push(result.best.accuracy);
            qs.push(result.queries as f64);
            ranks.push(result.best.rank as f64);
        }
        let hand_mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((summary.mean_acc - hand_mean).abs() < 1e-15);
        let hand_q = qs.iter().sum::<f64>() / qs.len() as f64;
        assert!((summary.mean_q - hand_q).abs() < 1e-15);
        let hand_rank = ranks.iter().sum::<f64>() / ranks.len() as f64;
        assert!((summary.mean_rank - hand_rank).abs() < 1e-15);
    }

    #[test]
    fn curve_is_monotone_and_ends_at_best() {
        let bench = bench();
        let results: Vec<SearchResult> = (0..4)
            .map(|seed| random_search(&bench, 25, seed).unwrap())
            .collect();
        let csv = emit_curve(&results).unwrap();
        let mut prev_mean = f64::NEG_INFINITY;
        let mut last_mean = 0.0;
        for line in csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let mean: f64 = cols[1].parse().unwrap();
            assert!(mean >= prev_mean, "curve not monotone: {csv}");
            prev_mean = mean;
            last_mean = mean;
        }
        let expect: f64 =
            results.iter().map(|r| r.best.accuracy).sum::<f64>() / results.len() as f64;
        assert!((last_mean - expect).abs() < 1e-12);
        // single run => std column all zeros
        let csv = emit_curve(&results[..1]).unwrap();
        for line in csv.lines().skip(1) {
            let std: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(std, 0.0);
        }
    }

    #[test]
    fn mixed_benchmarks_are_refused() {
        let bench_a = bench();
        let space = SearchSpaceSpec::chain(OperatorVocabulary::nb101(), 4).unwrap();
        let bench_b = synth_benchmark(&space, 18, 0.4, 200).unwrap();
        let a = random_search(&bench_a, 10, 1).unwrap();
        let b = random_search(&bench_b, 10, 1).unwrap();
        assert!(emit_curve(&[a.clone(), b]).is_err());
        assert!(emit_curve(&[a]).is_ok());
    }

    #[test]
    fn pareto_report_invariants() {
        let bench = bench();
        let results: Vec<SearchResult> = (0..3)
            .map(|seed| random_search(&bench, 30, seed).unwrap())
            .collect();
        let report = report_pareto(&results, &bench).unwrap();
        assert!(!report.true_front.is_empty());
        for (seed_report, result) in report.per_seed.iter().zip(&results) {
            // found front is a subset of the evaluated set
            for hash in &seed_report.found_front {
                assert!(result.evaluated.binary_search(hash).is_ok());
            }
            assert!(seed_report.recovered <= report.true_front.len());
        }
        // exhaustive search recovers the whole front
        let full = random_search(&bench, bench.len(), 0).unwrap();
        let report = report_pareto(&[full], &bench).unwrap();
        assert_eq!(report.per_seed[0].recovered, report.true_front.len());
        let mut found = report.per_seed[0].found_front.clone();
        let mut truth = report.true_front.clone();
        found.sort();
        truth.sort();
        assert_eq!(found, truth);
    }
}
