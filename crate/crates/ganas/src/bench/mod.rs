//! Tabular performance oracle with unique-query accounting.
//!
//! A [`Benchmark`] maps canonical architecture hashes to metrics. Queries
//! are charged once per distinct hash (#Q); repeats and isomorphic
//! re-encodings are free. Ranking is by unrounded accuracy with seeded
//! random tie-breaking, so no two cells share a rank.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{canonical_hash, ArchHash, Architecture, SearchSpaceSpec};

/// Accuracy is kept unrounded; on disk all reals travel as decimal strings
/// so ranking is immune to cross-platform float formatting drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "decimal_string")]
    pub accuracy: f64,
    #[serde(with = "decimal_string")]
    pub train_seconds: f64,
    pub param_count: u64,
}

impl Metrics {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::Benchmark(format!("accuracy {} outside [0, 1]", self.accuracy)));
        }
        if self.train_seconds < 0.0 {
            return Err(Error::Benchmark("negative train_seconds".into()));
        }
        Ok(())
    }
}

mod decimal_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = ryu_format(*value);
        if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
            buf.push_str(".0");
        }
        serializer.serialize_str(&buf)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse::<f64>().map_err(serde::de::Error::custom)
    }

    fn ryu_format(value: f64) -> String {
        // std's shortest round-trip formatting
        format!("{value}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRecord {
    pub arch: Architecture,
    pub metrics: Metrics,
}

struct Entry {
    arch: Architecture,
    metrics: Metrics,
    rank: usize,
}

/// Permutation of all hashes by descending unrounded accuracy with seeded
/// random tie-breaking.
pub struct RankTable {
    ordering: Vec<ArchHash>,
}

impl RankTable {
    fn build(entries: &BTreeMap<ArchHash, (Architecture, Metrics)>, tie_seed: u64) -> Self {
        let mut rows: Vec<(&ArchHash, f64)> =
            entries.iter().map(|(h, (_, m))| (h, m.accuracy)).collect();
        // descending accuracy; BTreeMap iteration gives a stable base order
        rows.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
        let mut ordering = Vec::with_capacity(rows.len());
        let mut idx = 0;
        while idx < rows.len() {
            let mut end = idx + 1;
            while end < rows.len() && rows[end].1 == rows[idx].1 {
                end += 1;
            }
            let mut group: Vec<&ArchHash> = rows[idx..end].iter().map(|r| r.0).collect();
            group.shuffle(&mut rng);
            ordering.extend(group.into_iter().cloned());
            idx = end;
        }
        RankTable { ordering }
    }

    pub fn ordering(&self) -> &[ArchHash] {
        &self.ordering
    }
}

/// The performance evaluator S(x): a fully tabular benchmark.
pub struct Benchmark {
    pub space: SearchSpaceSpec,
    pub tie_seed: u64,
    entries: BTreeMap<ArchHash, Entry>,
    ordering: Vec<ArchHash>,
    charged: Mutex<BTreeSet<ArchHash>>,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("space", &self.space)
            .field("tie_seed", &self.tie_seed)
            .field("len", &self.entries.len())
            .finish()
    }
}

impl Benchmark {
    pub fn from_records(
        space: SearchSpaceSpec,
        records: Vec<BenchRecord>,
        tie_seed: u64,
    ) -> Result<Self> {
        let mut table: BTreeMap<ArchHash, (Architecture, Metrics)> = BTreeMap::new();
        let mut first_line: BTreeMap<ArchHash, usize> = BTreeMap::new();
        for (line0, record) in records.into_iter().enumerate() {
            let line = line0 + 1;
            record.metrics.validate()?;
            let hash = canonical_hash(&record.arch)?;
            if let Some(&first) = first_line.get(&hash) {
                return Err(Error::DuplicateArchitecture { first, second: line });
            }
            first_line.insert(hash, line);
            table.insert(hash, (record.arch, record.metrics));
        }
        let rank_table = RankTable::build(&table, tie_seed);
        let mut entries = BTreeMap::new();
        for (rank0, hash) in rank_table.ordering.iter().enumerate() {
            let (arch, metrics) = table.get(hash).unwrap().clone();
            entries.insert(*hash, Entry { arch, metrics, rank: rank0 + 1 });
        }
        Ok(Benchmark {
            space,
            tie_seed,
            entries,
            ordering: rank_table.ordering,
            charged: Mutex::new(BTreeSet::new()),
        })
    }

    /// Loads a JSONL benchmark file: one `{"arch": ..., "metrics": ...}`
    /// object per line.
    pub fn load_tabular(path: &Path, space: SearchSpaceSpec, tie_seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut records = Vec::new();
        for (line0, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: BenchRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line0 + 1,
                msg: e.to_string(),
            })?;
            records.push(record);
        }
        Benchmark::from_records(space, records, tie_seed)
    }

    /// Loads a benchmark while inferring a search space from the records;
    /// used by reporting paths that never generate new architectures.
    pub fn load_infer_space(path: &Path, tie_seed: u64) -> Result<Self> {
        use crate::graph::{OperatorVocabulary, INPUT, OUTPUT};
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut records: Vec<BenchRecord> = Vec::new();
        for (line0, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line0 + 1,
                msg: e.to_string(),
            })?);
        }
        if records.is_empty() {
            return Err(Error::Benchmark("empty benchmark file".into()));
        }
        let space = match &records[0].arch {
            Architecture::Chain { choices } => {
                let max_choice = records
                    .iter()
                    .filter_map(|r| match &r.arch {
                        Architecture::Chain { choices } => choices.iter().max().copied(),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(0);
                let mut names = vec![INPUT.to_string()];
                for i in 0..=max_choice {
                    names.push(format!("op{i}"));
                }
                names.push(OUTPUT.to_string());
                SearchSpaceSpec::chain(OperatorVocabulary::new(names)?, choices.len())?
            }
            Architecture::Cell { .. } => {
                let mut labels = BTreeSet::new();
                let mut max_nodes = 3;
                let mut max_edges = 2;
                for r in &records {
                    if let Some((ops, edges)) = r.arch.cell_parts() {
                        max_nodes = max_nodes.max(ops.len());
                        max_edges = max_edges.max(edges.len());
                        for op in ops {
                            if op != INPUT && op != OUTPUT {
                                labels.insert(op.clone());
                            }
                        }
                    }
                }
                let mut names = vec![INPUT.to_string()];
                names.extend(labels);
                names.push(OUTPUT.to_string());
                SearchSpaceSpec::free_dag(OperatorVocabulary::new(names)?, max_nodes, max_edges)?
            }
        };
        Benchmark::from_records(space, records, tie_seed)
    }

    pub fn save_tabular(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for hash in &self.ordering {
            let entry = &self.entries[hash];
            let record = BenchRecord { arch: entry.arch.clone(), metrics: entry.metrics.clone() };
            serde_json::to_writer(&mut file, &record)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Content identity: digest of the space, tie seed and every row's
    /// hash+metrics. Results from different benchmarks never mix silently.
    pub fn id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.space).expect("space serializes"));
        hasher.update(self.tie_seed.to_le_bytes());
        for hash in &self.ordering {
            hasher.update(hash.bytes());
            let metrics = &self.entries[hash].metrics;
            hasher.update(serde_json::to_vec(metrics).expect("metrics serialize"));
        }
        hex::encode(&hasher.finalize()[..16])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, hash: &ArchHash) -> bool {
        self.entries.contains_key(hash)
    }

    /// S(x): returns metrics and charges #Q iff this hash was never charged.
    pub fn query(&self, arch: &Architecture) -> Result<Metrics> {
        let hash = canonical_hash(arch)?;
        self.query_hash(&hash)
    }

    pub fn query_hash(&self, hash: &ArchHash) -> Result<Metrics> {
        let entry = self.entries.get(hash).ok_or(Error::NotInBenchmark)?;
        self.charged.lock().unwrap().insert(*hash);
        Ok(entry.metrics.clone())
    }

    /// #Q: distinct hashes ever charged.
    pub fn query_count(&self) -> usize {
        self.charged.lock().unwrap().len()
    }

    pub fn charged_hashes(&self) -> BTreeSet<ArchHash> {
        self.charged.lock().unwrap().clone()
    }

    pub fn reset_accounting(&self) {
        self.charged.lock().unwrap().clear();
    }

    /// Metrics without charging; oracle/reporting use only.
    pub fn peek(&self, hash: &ArchHash) -> Option<(&Architecture, &Metrics, usize)> {
        self.entries.get(hash).map(|e| (&e.arch, &e.metrics, e.rank))
    }

    /// Exact top-k by the rank table.
    pub fn top_k_oracle(&self, k: usize) -> Result<Vec<(Architecture, Metrics, usize)>> {
        if k > self.entries.len() {
            return Err(Error::KTooLarge { k, size: self.entries.len() });
        }
        Ok(self
            .ordering
            .iter()
            .take(k)
            .map(|h| {
                let e = &self.entries[h];
                (e.arch.clone(), e.metrics.clone(), e.rank)
            })
            .collect())
    }

    pub fn rank_of(&self, arch: &Architecture) -> Result<usize> {
        let hash = canonical_hash(arch)?;
        self.rank_of_hash(&hash)
    }

    pub fn rank_of_hash(&self, hash: &ArchHash) -> Result<usize> {
        self.entries.get(hash).map(|e| e.rank).ok_or(Error::NotInBenchmark)
    }

    pub fn ordering(&self) -> &[ArchHash] {
        &self.ordering
    }

    pub fn max_accuracy(&self) -> f64 {
        self.ordering
            .first()
            .map(|h| self.entries[h].metrics.accuracy)
            .unwrap_or(0.0)
    }

    /// All (hash, metrics) rows; reporting/oracle use, never charged.
    pub fn rows(&self) -> impl Iterator<Item = (&ArchHash, &Architecture, &Metrics, usize)> {
        self.entries.iter().map(|(h, e)| (h, &e.arch, &e.metrics, e.rank))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{OperatorVocabulary, INPUT, OUTPUT};

    fn chain_space(len: usize) -> SearchSpaceSpec {
        SearchSpaceSpec::chain(OperatorVocabulary::nb101(), len).unwrap()
    }

    fn record(choices: Vec<usize>, accuracy: f64) -> BenchRecord {
        BenchRecord {
            arch: Architecture::chain(choices),
            metrics: Metrics { accuracy, train_seconds: 100.0, param_count: 1000 },
        }
    }

    #[test]
    fn three_record_file_loads() {
        let records = vec![
            record(vec![0, 0], 0.5),
            record(vec![0, 1], 0.7),
            record(vec![1, 0], 0.6),
        ];
        let bench = Benchmark::from_records(chain_space(2), records, 0).unwrap();
        assert_eq!(bench.len(), 3);
        assert_eq!(bench.max_accuracy(), 0.7);
    }

    #[test]
    fn duplicate_architecture_names_both_lines() {
        let records = vec![
            record(vec![0, 0], 0.5),
            record(vec![0, 1], 0.7),
            record(vec![0, 0], 0.6),
        ];
        let err = Benchmark::from_records(chain_space(2), records, 0).unwrap_err();
        match err {
            Error::DuplicateArchitecture { first, second } => {
                assert_eq!((first, second), (1, 3));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn query_accounting_charges_each_hash_once() {
        let records = vec![record(vec![0, 0], 0.5), record(vec![0, 1], 0.7)];
        let bench = Benchmark::from_records(chain_space(2), records, 0).unwrap();
        let a = Architecture::chain(vec![0, 0]);
        let b = Architecture::chain(vec![0, 1]);
        bench.query(&a).unwrap();
        bench.query(&a).unwrap();
        assert_eq!(bench.query_count(), 1);
        bench.query(&b).unwrap();
        assert_eq!(bench.query_count(), 2);
        assert!(bench.query(&Architecture::chain(vec![2, 2])).is_err());
    }

    #[test]
    fn isomorphic_reencoding_charges_nothing() {
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 5, 9).unwrap();
        let a = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), "conv1x1".into(), OUTPUT.into()],
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
        );
        let b = Architecture::cell(
            vec![INPUT.into(), "conv1x1".into(), "conv3x3".into(), OUTPUT.into()],
            vec![(0, 2), (0, 1), (2, 3), (1, 3)],
        );
        let records = vec![BenchRecord {
            arch: a.clone(),
            metrics: Metrics { accuracy: 0.9, train_seconds: 10.0, param_count: 5 },
        }];
        let bench = Benchmark::from_records(space, records, 0).unwrap();
        bench.query(&a).unwrap();
        bench.query(&b).unwrap();
        assert_eq!(bench.query_count(), 1);
    }

    #[test]
    fn rank_table_is_a_bijection_with_stable_tie_sets() {
        let records = vec![
            record(vec![0, 0], 0.5),
            record(vec![0, 1], 0.9),
            record(vec![1, 0], 0.7),
            record(vec![1, 1], 0.7),
            record(vec![2, 2], 0.1),
        ];
        let bench_a = Benchmark::from_records(chain_space(2), records.clone(), 1).unwrap();
        let bench_b = Benchmark::from_records(chain_space(2), records.clone(), 2).unwrap();
        // full ordering is a bijection
        let full = bench_a.top_k_oracle(5).unwrap();
        let ranks: BTreeSet<usize> = full.iter().map(|(_, _, r)| *r).collect();
        assert_eq!(ranks, (1..=5).collect());
        assert!(bench_a.top_k_oracle(6).is_err());
        // at k not splitting the tie, top-k sets agree across tie seeds
        let top1a: BTreeSet<_> = bench_a.top_k_oracle(1).unwrap().iter().map(|(a, _, _)| a.clone()).collect();
        let top1b: BTreeSet<_> = bench_b.top_k_oracle(1).unwrap().iter().map(|(a, _, _)| a.clone()).collect();
        assert_eq!(top1a, top1b);
        let top3a: BTreeSet<_> = bench_a.top_k_oracle(3).unwrap().iter().map(|(a, _, _)| a.clone()).collect();
        let top3b: BTreeSet<_> = bench_b.top_k_oracle(3).unwrap().iter().map(|(a, _, _)| a.clone()).collect();
        assert_eq!(top3a, top3b);
        // same seed reloads identically
        let bench_c = Benchmark::from_records(chain_space(2), records, 1).unwrap();
        assert_eq!(bench_a.ordering(), bench_c.ordering());
    }

    #[test]
    fn rank_of_extremes() {
        let records = vec![
            record(vec![0, 0], 0.5),
            record(vec![0, 1], 0.9),
            record(vec![1, 0], 0.1),
        ];
        let bench = Benchmark::from_records(chain_space(2), records, 0).unwrap();
        assert_eq!(bench.rank_of(&Architecture::chain(vec![0, 1])).unwrap(), 1);
        assert_eq!(bench.rank_of(&Architecture::chain(vec![1, 0])).unwrap(), 3);
    }

    #[test]
    fn rank_matches_direct_sort_oracle_within_tie_groups() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let space = chain_space(3);
        let mut records = Vec::new();
        for i in 0..3usize {
            for j in 0..3 {
                for k in 0..3 {
                    // quantized accuracies force ties
                    let acc = (rng.gen_range(0..10) as f64) / 10.0;
                    records.push(record(vec![i, j, k], acc));
                }
            }
        }
        let bench = Benchmark::from_records(space, records.clone(), 5).unwrap();
        for rec in &records {
            let acc = rec.metrics.accuracy;
            let better = records.iter().filter(|r| r.metrics.accuracy > acc).count();
            let tied = records.iter().filter(|r| r.metrics.accuracy == acc).count();
            let rank = bench.rank_of(&rec.arch).unwrap();
            assert!(rank > better && rank <= better + tied);
        }
    }

    #[test]
    fn jsonl_round_trip_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");
        let records = vec![record(vec![0, 0], 0.5432), record(vec![0, 1], 0.91)];
        let bench = Benchmark::from_records(chain_space(2), records, 7).unwrap();
        bench.save_tabular(&path).unwrap();
        let loaded = Benchmark::load_tabular(&path, chain_space(2), 7).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.ordering(), bench.ordering());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"accuracy\":\"0.91\""), "metrics stored as decimal strings: {text}");
    }

    #[test]
    fn parse_error_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"arch\":{\"kind\":\"chain\",\"choices\":[0,0]},\"metrics\":{\"accuracy\":\"0.5\",\"train_seconds\":\"1.0\",\"param_count\":1}}\nnot json\n").unwrap();
        match Benchmark::load_tabular(&path, chain_space(2), 0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            Err(other) => panic!("expected parse error, got {other}"),
            Ok(_) => panic!("expected parse error, got success"),
        }
    }
}
