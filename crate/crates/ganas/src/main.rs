//! Experiment driver: benchmark generation/inspection, search campaigns and
//! report emission. Exit codes: 0 success, 2 config error, 3 benchmark error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ganas::bench::synth::synth_benchmark;
use ganas::bench::Benchmark;
use ganas::ce::{ce_optimize, CategoricalFamily, CeSchedule};
use ganas::graph::SearchSpaceSpec;
use ganas::report::{emit_curve, report_pareto, run_campaign, summarize, SeedOutcome};
use ganas::search::{SearchConfig, SearchResult};

#[derive(Parser)]
#[command(name = "ganas", version, about = "Adversarial architecture search over tabular benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark generation and inspection.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Run a searcher.
    #[command(subcommand)]
    Search(SearchCmd),
    /// Aggregate result files.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Generate a synthetic tabular benchmark from a space spec.
    Synth {
        /// JSON file holding the search-space spec.
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        roughness: f64,
        /// Enumeration cap (errors if the space is larger).
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
        /// Output JSONL path; a sibling `.space.json` records the space.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exact top-k of a benchmark.
    Oracle {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Print size and rank-extreme statistics.
    Info {
        #[arg(long)]
        bench: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Search configuration JSON (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bench: PathBuf,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum SearchCmd {
    /// The adversarial importance-sampling search.
    Ganas(RunArgs),
    /// Uniform random search (budget = max_queries).
    Random(RunArgs),
    /// Aging evolution (budget = max_queries).
    Ea(RunArgs),
    /// Accuracy-as-reward RL ablation (budget = max_queries).
    Rlnas(RunArgs),
    /// Reference cross-entropy optimizer on toy problems.
    Ce {
        /// `onemax` ({0,1}^n, score = ones) or `needle` ({0,1,2}^n, score = 1 at one point).
        #[arg(long, default_value = "onemax")]
        problem: String,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        max_stages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Per-algorithm mean/std tables from the result files in a directory.
    Summary {
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Best-so-far-vs-#Q CSV (mean and std across seeds).
    Curve {
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Found-vs-true Pareto front comparison.
    Pareto {
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long)]
        bench: PathBuf,
    },
}

#[derive(Serialize, Deserialize)]
struct SpaceSidecar {
    space: SearchSpaceSpec,
    tie_seed: u64,
}

fn sidecar_path(bench_path: &Path) -> PathBuf {
    bench_path.with_extension("space.json")
}

fn load_bench(path: &Path) -> Result<Benchmark> {
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)
            .with_context(|| format!("reading {}", sidecar.display()))?;
        let meta: SpaceSidecar = serde_json::from_str(&text).map_err(ganas::Error::from)?;
        Ok(Benchmark::load_tabular(path, meta.space, meta.tie_seed)?)
    } else {
        Ok(Benchmark::load_infer_space(path, 0)?)
    }
}

fn load_config(path: Option<&Path>) -> Result<SearchConfig> {
    match path {
        None => Ok(SearchConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let config: SearchConfig = serde_json::from_str(&text).map_err(ganas::Error::from)?;
            Ok(config)
        }
    }
}

fn seed_list(args: &RunArgs) -> Result<Vec<u64>> {
    if let Some(seed) = args.seed {
        Ok(vec![seed])
    } else if !args.seeds.is_empty() {
        Ok(args.seeds.clone())
    } else {
        bail!(ganas::Error::Config("pass --seed or --seeds".into()))
    }
}

fn campaign(algorithm: &str, args: &RunArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let bench = load_bench(&args.bench)?;
    let seeds = seed_list(args)?;
    let summary = run_campaign(algorithm, &config, &bench, &seeds, &args.out_dir)?;
    println!("{}", summary.table());
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn load_results(dir: &Path) -> Result<Vec<SearchResult>> {
    let mut results = Vec::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        if let Ok(result) = serde_json::from_str::<SearchResult>(&text) {
            results.push(result);
        }
    }
    if results.is_empty() {
        bail!(ganas::Error::Config(format!("no result files in {}", dir.display())));
    }
    Ok(results)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Bench(BenchCmd::Synth { space, seed, roughness, cap, out }) => {
            let text = std::fs::read_to_string(&space)
                .with_context(|| format!("reading {}", space.display()))?;
            let spec: SearchSpaceSpec = serde_json::from_str(&text).map_err(ganas::Error::from)?;
            spec.validate()?;
            let bench = synth_benchmark(&spec, seed, roughness, cap)?;
            bench.save_tabular(&out)?;
            let sidecar = SpaceSidecar { space: bench.space.clone(), tie_seed: bench.tie_seed };
            std::fs::write(sidecar_path(&out), serde_json::to_string_pretty(&sidecar)?)?;
            println!("wrote {} rows to {}", bench.len(), out.display());
        }
        Command::Bench(BenchCmd::Oracle { bench, top }) => {
            let bench = load_bench(&bench)?;
            for (arch, metrics, rank) in bench.top_k_oracle(top)? {
                println!(
                    "{rank}\t{:.6}\t{}",
                    metrics.accuracy,
                    serde_json::to_string(&arch)?
                );
            }
        }
        Command::Bench(BenchCmd::Info { bench }) => {
            let bench = load_bench(&bench)?;
            let info = serde_json::json!({
                "rows": bench.len(),
                "bench_id": bench.id(),
                "space": bench.space,
                "tie_seed": bench.tie_seed,
                "max_accuracy": bench.max_accuracy(),
            });
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        Command::Search(SearchCmd::Ganas(args)) => campaign("ganas", &args)?,
        Command::Search(SearchCmd::Random(args)) => campaign("random", &args)?,
        Command::Search(SearchCmd::Ea(args)) => campaign("ea", &args)?,
        Command::Search(SearchCmd::Rlnas(args)) => campaign("rlnas", &args)?,
        Command::Search(SearchCmd::Ce { problem, n, alpha, delta, rho, samples, max_stages, seed, out }) => {
            let schedule = CeSchedule {
                alpha,
                delta,
                rho,
                samples_per_stage: samples,
                max_stages,
                full_ratio: false,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (family, objective): (CategoricalFamily, Box<dyn Fn(&[usize]) -> f64>) =
                match problem.as_str() {
                    "onemax" => (
                        CategoricalFamily::uniform(&vec![2; n])?,
                        Box::new(|x: &[usize]| x.iter().filter(|&&b| b == 1).count() as f64),
                    ),
                    "needle" => {
                        let needle: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
                        (
                            CategoricalFamily::uniform(&vec![3; n])?,
                            Box::new(move |x: &[usize]| if x == needle.as_slice() { 1.0 } else { 0.0 }),
                        )
                    }
                    other => bail!(ganas::Error::Config(format!("unknown problem `{other}`"))),
                };
            let result = ce_optimize(&*objective, &family, &schedule, &mut rng)?;
            let doc = serde_json::json!({
                "problem": problem,
                "n": n,
                "seed": seed,
                "schedule": schedule,
                "result": result,
            });
            let text = serde_json::to_string_pretty(&doc)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
        }
        Command::Report(ReportCmd::Summary { out_dir }) => {
            let results = load_results(&out_dir)?;
            let mut algorithms: Vec<String> =
                results.iter().map(|r| r.algorithm.clone()).collect();
            algorithms.sort();
            algorithms.dedup();
            for algorithm in algorithms {
                let group: Vec<SearchResult> = results
                    .iter()
                    .filter(|r| r.algorithm == algorithm)
                    .cloned()
                    .collect();
                let per_seed = group
                    .iter()
                    .map(|r| SeedOutcome {
                        seed: r.seed,
                        accuracy: r.best.accuracy,
                        rank: r.best.rank,
                        queries: r.queries,
                        file: String::new(),
                    })
                    .collect();
                let config: SearchConfig =
                    serde_json::from_value(group[0].config_echo.clone())
                        .unwrap_or_default();
                let summary = summarize(&algorithm, &config, &group, per_seed);
                println!("{}", summary.table());
            }
        }
        Command::Report(ReportCmd::Curve { out_dir, out }) => {
            let results = load_results(&out_dir)?;
            let csv = emit_curve(&results)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Report(ReportCmd::Pareto { out_dir, bench }) => {
            let results = load_results(&out_dir)?;
            let bench = load_bench(&bench)?;
            let report = report_pareto(&results, &bench)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ganas::Error>() {
        Some(ganas::Error::Config(_)) | Some(ganas::Error::Json(_)) | Some(ganas::Error::InvalidSpace(_)) => 2,
        Some(ganas::Error::Benchmark(_))
        | Some(ganas::Error::NotInBenchmark)
        | Some(ganas::Error::DuplicateArchitecture { .. })
        | Some(ganas::Error::Parse { .. })
        | Some(ganas::Error::KTooLarge { .. })
        | Some(ganas::Error::EnumerationTruncated(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
