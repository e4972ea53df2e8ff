//! The outer search loop: truth-set selection (top-k, constrained, Pareto),
//! adversarial training rounds, the sample-size schedule, level tracing and
//! result assembly.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{Benchmark, Metrics};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::graph::{canonical_hash, random_architecture, ArchHash, Architecture};
use crate::reward::{adversarial_round, AdversarialConfig, RewardConfig};
use crate::tensor::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMode {
    Topk,
    Constrained,
    Pareto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// |X_t| = eval_base + (t−1)·eval_inc
    Linear,
    /// |X_t| = eval_base for every t
    Uniform,
}

/// Hard constraint applied to truth-set selection (never to generation).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    #[serde(default)]
    pub max_train_seconds: Option<f64>,
    #[serde(default)]
    pub max_param_count: Option<u64>,
}

impl Constraint {
    pub fn admits(&self, metrics: &Metrics) -> bool {
        if let Some(max) = self.max_train_seconds {
            if metrics.train_seconds > max {
                return false;
            }
        }
        if let Some(max) = self.max_param_count {
            if metrics.param_count > max {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub g_lr: f64,
    pub d_lr: f64,
    pub gnn_layers: usize,
    pub hidden_dim: usize,
    pub iterations: usize,
    pub eval_base: usize,
    pub eval_inc: usize,
    pub init_method: String,
    pub init_size: usize,
    pub truth_size: usize,
    pub mode: TruthMode,
    pub pareto_fronts: usize,
    pub constraint: Constraint,
    pub inner_rounds: usize,
    pub d_epochs: usize,
    pub d_batch: usize,
    pub ppo_epochs: usize,
    pub episode_batch: usize,
    pub batches_per_inner: usize,
    pub entropy_coef: f64,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub discount: f64,
    pub value_coef: f64,
    pub max_queries: Option<usize>,
    pub gen_attempt_factor: usize,
    pub pairwise_discriminator: bool,
    pub schedule: Schedule,
    /// Aging-evolution baseline knobs.
    pub ea_population: usize,
    pub ea_tournament: usize,
    /// Architectures force-included (and evaluated) in X_0.
    pub seed_truth: Vec<Architecture>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            g_lr: 0.0001,
            d_lr: 0.001,
            gnn_layers: 2,
            hidden_dim: 64,
            iterations: 10,
            eval_base: 100,
            eval_inc: 100,
            init_method: "random".into(),
            init_size: 50,
            truth_size: 25,
            mode: TruthMode::Topk,
            pareto_fronts: 4,
            constraint: Constraint::default(),
            inner_rounds: 5,
            d_epochs: 10,
            d_batch: 32,
            ppo_epochs: 4,
            episode_batch: 32,
            batches_per_inner: 2,
            entropy_coef: 0.1,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            discount: 1.0,
            value_coef: 0.5,
            max_queries: None,
            gen_attempt_factor: 20,
            pairwise_discriminator: true,
            schedule: Schedule::Linear,
            ea_population: 50,
            ea_tournament: 10,
            seed_truth: Vec::new(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.truth_size < 2 {
            return Err(Error::Config("truth_size must be >= 2".into()));
        }
        if self.init_size < self.truth_size {
            return Err(Error::Config("init_size must cover truth_size".into()));
        }
        if self.init_method != "random" {
            return Err(Error::Config(format!("unknown init_method `{}`", self.init_method)));
        }
        if self.mode == TruthMode::Pareto && self.pareto_fronts < 1 {
            return Err(Error::Config("pareto_fronts must be >= 1".into()));
        }
        self.reward_config().validate()
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            entropy_coef: self.entropy_coef,
            clip_epsilon: self.clip_epsilon,
            gae_lambda: self.gae_lambda,
            discount: self.discount,
            value_coef: self.value_coef,
            ppo_epochs: self.ppo_epochs,
            ..RewardConfig::default()
        }
    }

    pub fn adversarial_config(&self) -> AdversarialConfig {
        AdversarialConfig {
            inner_rounds: self.inner_rounds,
            d_epochs: self.d_epochs,
            d_lr: self.d_lr,
            g_lr: self.g_lr,
            d_batch: self.d_batch,
            episode_batch: self.episode_batch,
            batches_per_inner: self.batches_per_inner,
            gen_attempt_factor: self.gen_attempt_factor,
        }
    }

    pub fn schedule_size(&self, t: usize) -> usize {
        match self.schedule {
            Schedule::Linear => self.eval_base + (t - 1) * self.eval_inc,
            Schedule::Uniform => self.eval_base,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub hash: ArchHash,
    pub arch: Architecture,
    pub metrics: Metrics,
    pub rank: usize,
}

/// Successive non-dominated fronts under (accuracy ↑, train_seconds ↓).
/// Returns at most `n` fronts plus a flag set when fewer than `n` exist.
pub fn pareto_fronts(records: &[EvalRecord], n: usize) -> (Vec<Vec<ArchHash>>, bool) {
    let mut remaining: Vec<&EvalRecord> = records.iter().collect();
    let mut fronts = Vec::new();
    while fronts.len() < n && !remaining.is_empty() {
        let mut front = Vec::new();
        let mut rest = Vec::new();
        for &candidate in &remaining {
            let dominated = remaining.iter().any(|&other| {
                let better_or_equal = other.metrics.accuracy >= candidate.metrics.accuracy
                    && other.metrics.train_seconds <= candidate.metrics.train_seconds;
                let strictly = other.metrics.accuracy > candidate.metrics.accuracy
                    || other.metrics.train_seconds < candidate.metrics.train_seconds;
                better_or_equal && strictly
            });
            if dominated {
                rest.push(candidate);
            } else {
                front.push(candidate.hash);
            }
        }
        front.sort();
        fronts.push(front);
        remaining = rest;
    }
    let exhausted = remaining.is_empty() && fronts.len() < n;
    (fronts, exhausted)
}

/// Truth-set selection. Records must be pre-sorted by benchmark rank
/// (ascending); `topk` takes the first k, `constrained` the first k passing
/// the predicate, `pareto` the union of the first `pareto_fronts` fronts.
pub fn select_truth(
    records: &[EvalRecord],
    k: usize,
    mode: TruthMode,
    constraint: &Constraint,
    n_fronts: usize,
) -> Result<Vec<EvalRecord>> {
    match mode {
        TruthMode::Topk => {
            if records.is_empty() {
                return Err(Error::EmptyTruthSet);
            }
            Ok(records.iter().take(k).cloned().collect())
        }
        TruthMode::Constrained => {
            let feasible: Vec<EvalRecord> = records
                .iter()
                .filter(|r| constraint.admits(&r.metrics))
                .take(k)
                .cloned()
                .collect();
            if feasible.is_empty() {
                return Err(Error::EmptyFeasibleSet);
            }
            Ok(feasible)
        }
        TruthMode::Pareto => {
            if records.is_empty() {
                return Err(Error::EmptyTruthSet);
            }
            let (fronts, _) = pareto_fronts(records, n_fronts);
            let keep: BTreeSet<ArchHash> = fronts.into_iter().flatten().collect();
            Ok(records.iter().filter(|r| keep.contains(&r.hash)).cloned().collect())
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BestRecord {
    pub arch: Architecture,
    pub accuracy: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    /// Level parameter: minimum accuracy of the fixed-size elite prefix of
    /// everything evaluated so far — nondecreasing by construction.
    pub gamma: f64,
    pub q: usize,
    pub truth_min: f64,
    pub truth_max: f64,
    pub truth: Vec<ArchHash>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub q: usize,
    pub best_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResult {
    pub algorithm: String,
    pub best: BestRecord,
    pub trace: Vec<TraceEntry>,
    pub config_echo: serde_json::Value,
    pub seed: u64,
    pub queries: usize,
    pub shortfalls: usize,
    pub curve: Vec<CurvePoint>,
    pub evaluated: Vec<ArchHash>,
    pub bench_len: usize,
    pub bench_id: String,
}

/// Shared bookkeeping for all searchers: evaluation set, rank ordering,
/// best-so-far curve and unique-query accounting.
pub(crate) struct Ledger<'a> {
    pub bench: &'a Benchmark,
    pub records: Vec<EvalRecord>,
    seen: BTreeSet<ArchHash>,
    pub curve: Vec<CurvePoint>,
    pub budget: Option<usize>,
}

impl<'a> Ledger<'a> {
    pub fn new(bench: &'a Benchmark, budget: Option<usize>) -> Self {
        bench.reset_accounting();
        Ledger { bench, records: Vec::new(), seen: BTreeSet::new(), curve: Vec::new(), budget }
    }

    pub fn budget_left(&self) -> usize {
        self.budget.map(|b| b.saturating_sub(self.q())).unwrap_or(usize::MAX)
    }

    pub fn q(&self) -> usize {
        self.bench.query_count()
    }

    pub fn seen(&self) -> &BTreeSet<ArchHash> {
        &self.seen
    }

    /// Queries one architecture; keeps records sorted by benchmark rank.
    pub fn evaluate(&mut self, arch: &Architecture) -> Result<()> {
        let hash = canonical_hash(arch)?;
        if !self.seen.insert(hash) {
            return Ok(());
        }
        let metrics = self.bench.query_hash(&hash)?;
        let rank = self.bench.rank_of_hash(&hash)?;
        let record = EvalRecord { hash, arch: arch.clone(), metrics, rank };
        let pos = self.records.partition_point(|r| r.rank < rank);
        self.records.insert(pos, record);
        let best = self.records[0].metrics.accuracy;
        let q = self.q();
        if self.curve.last().map(|p| p.best_accuracy < best).unwrap_or(true) {
            self.curve.push(CurvePoint { q, best_accuracy: best });
        }
        Ok(())
    }

    pub fn finish(
        mut self,
        algorithm: &str,
        trace: Vec<TraceEntry>,
        config_echo: serde_json::Value,
        seed: u64,
        shortfalls: usize,
    ) -> Result<SearchResult> {
        if self.records.is_empty() {
            return Err(Error::Benchmark("search evaluated nothing".into()));
        }
        let best = &self.records[0];
        let q = self.q();
        let best_acc = best.metrics.accuracy;
        if self.curve.last().map(|p| p.q != q).unwrap_or(true) {
            self.curve.push(CurvePoint { q, best_accuracy: best_acc });
        }
        let evaluated: Vec<ArchHash> = self.seen.iter().cloned().collect();
        Ok(SearchResult {
            algorithm: algorithm.to_string(),
            best: BestRecord { arch: best.arch.clone(), accuracy: best_acc, rank: best.rank },
            trace,
            config_echo,
            seed,
            queries: q,
            shortfalls,
            curve: self.curve,
            evaluated,
            bench_len: self.bench.len(),
            bench_id: self.bench.id(),
        })
    }
}

/// Draws up to `n` distinct random architectures from the space, skipping
/// anything in `exclude`.
pub(crate) fn random_unique(
    space: &crate::graph::SearchSpaceSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
    exclude: &BTreeSet<ArchHash>,
) -> Result<Vec<Architecture>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let cap = 200 * n.max(1) + 1000;
    for _ in 0..cap {
        if out.len() == n {
            break;
        }
        let arch = random_architecture(space, rng);
        let hash = canonical_hash(&arch)?;
        if exclude.contains(&hash) || !seen.insert(hash) {
            continue;
        }
        out.push(arch);
    }
    Ok(out)
}

/// Algorithm 1: initialize X_0, then T iterations of truth selection,
/// adversarial training and evaluation of a freshly generated set.
pub fn ganas_run(config: &SearchConfig, bench: &Benchmark, seed: u64) -> Result<SearchResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(bench, config.max_queries);

    let mut gen_store = ParamStore::new();
    let gen = Generator::new(
        bench.space.clone(),
        config.hidden_dim,
        config.gnn_layers,
        &mut gen_store,
        &mut rng,
    );
    let mut disc_store = ParamStore::new();
    let disc = Discriminator::new(
        bench.space.clone(),
        config.hidden_dim,
        config.gnn_layers,
        config.pairwise_discriminator,
        &mut disc_store,
        &mut rng,
    );

    // X_0: forced seeds first, then random unique fill
    for arch in &config.seed_truth {
        ledger.evaluate(arch)?;
    }
    let fill = config.init_size.saturating_sub(ledger.records.len()).min(ledger.budget_left());
    let inits = random_unique(&bench.space, fill, &mut rng, ledger.seen())?;
    for arch in &inits {
        ledger.evaluate(arch)?;
    }

    let adv = config.adversarial_config();
    let reward_cfg = config.reward_config();
    let mut trace = Vec::new();
    let mut shortfalls = 0usize;
    // fixed elite size defining the gamma level; for Pareto mode the first
    // iteration's neighborhood size is frozen so the trace stays monotone
    let mut gamma_k: Option<usize> = match config.mode {
        TruthMode::Pareto => None,
        _ => Some(config.truth_size),
    };

    for t in 1..=config.iterations {
        let truth_records = select_truth(
            &ledger.records,
            config.truth_size,
            config.mode,
            &config.constraint,
            config.pareto_fronts,
        )?;
        if truth_records.len() < 2 {
            return Err(Error::EmptyTruthSet);
        }
        let k = *gamma_k.get_or_insert(truth_records.len());
        let gamma = gamma_level(&ledger.records, k);
        let truth_min = truth_records
            .iter()
            .map(|r| r.metrics.accuracy)
            .fold(f64::INFINITY, f64::min);
        let truth_max = truth_records
            .iter()
            .map(|r| r.metrics.accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut truth_hashes: Vec<ArchHash> = truth_records.iter().map(|r| r.hash).collect();
        truth_hashes.sort();
        trace.push(TraceEntry { t, gamma, q: ledger.q(), truth_min, truth_max, truth: truth_hashes });

        let truth_archs: Vec<Architecture> =
            truth_records.iter().map(|r| r.arch.clone()).collect();
        let round = adversarial_round(
            &gen,
            &mut gen_store,
            &disc,
            &mut disc_store,
            &truth_archs,
            ledger.seen(),
            &adv,
            &reward_cfg,
            &mut rng,
        )?;
        shortfalls += round.generation_shortfalls;

        let target = config.schedule_size(t).min(ledger.budget_left());
        if target == 0 {
            continue;
        }
        let (fresh, short) = gen.generate_unique_valid(
            &gen_store,
            target,
            &mut rng,
            config.gen_attempt_factor * target.max(1),
            ledger.seen(),
        )?;
        if short {
            shortfalls += 1;
        }
        for arch in &fresh {
            ledger.evaluate(arch)?;
        }
        if fresh.len() < target {
            // the policy stopped producing novel cells; spend the remainder
            // of this round's evaluations on random unseen cells so the
            // budget is never stranded and the truth set keeps moving
            let top_up =
                random_unique(&bench.space, target - fresh.len(), &mut rng, ledger.seen())?;
            for arch in &top_up {
                ledger.evaluate(arch)?;
            }
        }
    }

    let echo = serde_json::to_value(config)?;
    ledger.finish("ganas", trace, echo, seed, shortfalls)
}

/// Minimum accuracy among the top `k` evaluated records (records sorted by
/// rank); nondecreasing as the evaluated union grows.
fn gamma_level(records: &[EvalRecord], k: usize) -> f64 {
    records
        .iter()
        .take(k)
        .map(|r| r.metrics.accuracy)
        .fold(f64::INFINITY, f64::min)
}
