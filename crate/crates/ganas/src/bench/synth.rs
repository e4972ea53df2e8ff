//! Synthetic tabular benchmark generator.
//!
//! Accuracy is a squashed linear-plus-interaction score over the canonical
//! form of each cell: per-operator weights, depth, and — scaled by a
//! `roughness` knob — operator-bigram interactions and structured noise.
//! At roughness 0 the landscape is separable (a greedy per-position sweep
//! reaches the optimum on chain spaces); positive roughness makes the top of
//! the table depend on operator combinations, not single choices.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{canonical_form, enumerate_space, Architecture, SearchSpaceSpec, INPUT, OUTPUT};

use super::{BenchRecord, Benchmark, Metrics};

const ACC_FLOOR: f64 = 0.09;
const ACC_SPAN: f64 = 0.86; // accuracy stays inside [0.09, 0.95]

/// Deterministic weights derived from (seed, key) so the landscape depends
/// only on the seed, never on enumeration order.
fn keyed_normal(seed: u64, key: &str, std: f64) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    Normal::new(0.0, std).unwrap().sample(&mut rng)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Raw landscape score of one architecture; see module docs for the formula.
fn raw_score(arch: &Architecture, seed: u64, roughness: f64) -> Result<f64> {
    match arch {
        Architecture::Chain { choices } => {
            let mut raw = 0.0;
            for (pos, &c) in choices.iter().enumerate() {
                raw += keyed_normal(seed, &format!("chain:{pos}:{c}"), 1.0);
            }
            for (pos, w) in choices.windows(2).enumerate() {
                raw += roughness
                    * keyed_normal(seed, &format!("bigram:{pos}:{}:{}", w[0], w[1]), 1.0);
            }
            Ok(raw)
        }
        Architecture::Cell { .. } => {
            let canon = canonical_form(arch)?;
            let (ops, edges) = canon.cell_parts().unwrap();
            let mut op_counts: BTreeMap<&str, usize> = BTreeMap::new();
            for op in ops {
                if op != INPUT && op != OUTPUT {
                    *op_counts.entry(op.as_str()).or_default() += 1;
                }
            }
            let mut raw = 0.0;
            for (op, count) in &op_counts {
                raw += keyed_normal(seed, &format!("op:{op}"), 1.0) * *count as f64;
            }
            let mut bigram_counts: BTreeMap<(String, String), usize> = BTreeMap::new();
            for &(u, v) in edges {
                *bigram_counts.entry((ops[u].clone(), ops[v].clone())).or_default() += 1;
            }
            for ((a, b), count) in &bigram_counts {
                raw += roughness
                    * keyed_normal(seed, &format!("edge:{a}>{b}"), 1.0)
                    * *count as f64;
            }
            let depth = crate::graph::validity::longest_path(ops.len(), edges) as f64;
            raw += keyed_normal(seed, "depth", 0.5) * depth;
            // structured noise keyed to the whole canonical encoding
            let canon_json = serde_json::to_string(&canon)?;
            raw += roughness * 0.5 * keyed_normal(seed, &format!("noise:{canon_json}"), 1.0);
            Ok(raw)
        }
    }
}

fn per_op_cost(op: &str, seed: u64) -> (f64, u64) {
    let base = keyed_normal(seed, &format!("cost:{op}"), 1.0).abs() + 0.2;
    let secs = base * 400.0;
    let params = (base * 2_000_000.0) as u64;
    (secs, params)
}

fn metrics_for(arch: &Architecture, seed: u64, roughness: f64, scale: f64) -> Result<Metrics> {
    let raw = raw_score(arch, seed, roughness)?;
    let accuracy = ACC_FLOOR + ACC_SPAN * sigmoid(scale * raw);
    let (mut secs, mut params) = (60.0, 500_000u64);
    let ops: Vec<String> = match arch {
        Architecture::Chain { choices } => choices.iter().map(|c| format!("chain-op{c}")).collect(),
        Architecture::Cell { ops, .. } => ops
            .iter()
            .filter(|o| o.as_str() != INPUT && o.as_str() != OUTPUT)
            .cloned()
            .collect(),
    };
    for op in &ops {
        let (s, p) = per_op_cost(op, seed);
        secs += s;
        params += p;
    }
    Ok(Metrics { accuracy, train_seconds: (secs * 10.0).round() / 10.0, param_count: params })
}

/// Enumerates `space` and tabulates every cell. The table is a pure function
/// of (space, seed, roughness); the tie-break seed is derived from `seed`.
pub fn synth_benchmark(
    space: &SearchSpaceSpec,
    seed: u64,
    roughness: f64,
    cap: usize,
) -> Result<Benchmark> {
    if !(0.0..=1.0).contains(&roughness) {
        return Err(Error::Config(format!("roughness {roughness} outside [0, 1]")));
    }
    let archs = enumerate_space(space, cap)?;
    // scale keeps a useful accuracy spread regardless of space dimension
    let mean_terms = match space.topology_mode {
        crate::graph::TopologyMode::Chain => space.chain_length.unwrap() as f64,
        _ => space.max_nodes as f64,
    };
    let scale = 1.2 / mean_terms.sqrt();
    let records: Vec<BenchRecord> = archs
        .into_iter()
        .map(|arch| {
            let metrics = metrics_for(&arch, seed, roughness, scale)?;
            Ok(BenchRecord { arch, metrics })
        })
        .collect::<Result<_>>()?;
    Benchmark::from_records(space.clone(), records, seed.wrapping_mul(0x9e37_79b9).wrapping_add(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OperatorVocabulary;

    fn chain_space(len: usize) -> SearchSpaceSpec {
        SearchSpaceSpec::chain(OperatorVocabulary::nb101(), len).unwrap()
    }

    #[test]
    fn deterministic_across_builds() {
        let space = chain_space(4);
        let a = synth_benchmark(&space, 7, 0.3, 1000).unwrap();
        let b = synth_benchmark(&space, 7, 0.3, 1000).unwrap();
        assert_eq!(a.ordering(), b.ordering());
        for (h, _, m, r) in a.rows() {
            let (_, m2, r2) = b.peek(h).unwrap();
            assert_eq!(m, m2);
            assert_eq!(r, r2);
        }
        let c = synth_benchmark(&space, 8, 0.3, 1000).unwrap();
        assert_ne!(a.ordering(), c.ordering());
    }

    #[test]
    fn accuracies_stay_in_band() {
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 5, 9).unwrap();
        let bench = synth_benchmark(&space, 3, 1.0, 100_000).unwrap();
        assert!(bench.len() > 100);
        for (_, _, m, _) in bench.rows() {
            assert!(m.accuracy >= ACC_FLOOR && m.accuracy <= ACC_FLOOR + ACC_SPAN);
            assert!(m.train_seconds > 0.0);
            assert!(m.param_count > 0);
        }
    }

    #[test]
    fn roughness_zero_chain_is_greedy_solvable() {
        // at roughness 0 the chain landscape is separable: optimizing one
        // position at a time from any start must land on the global optimum
        let space = chain_space(5);
        let bench = synth_benchmark(&space, 11, 0.0, 10_000).unwrap();
        let n_ops = 3usize;
        let mut current = vec![0usize; 5];
        for pos in 0..5 {
            let mut best = current.clone();
            let mut best_acc = f64::NEG_INFINITY;
            for c in 0..n_ops {
                let mut cand = current.clone();
                cand[pos] = c;
                let acc = bench.query(&Architecture::chain(cand.clone())).unwrap().accuracy;
                if acc > best_acc {
                    best_acc = acc;
                    best = cand;
                }
            }
            current = best;
        }
        let greedy_acc = bench.query(&Architecture::chain(current)).unwrap().accuracy;
        assert_eq!(greedy_acc, bench.max_accuracy());
    }

    #[test]
    fn roughness_breaks_separability_somewhere() {
        // with interactions on, at least one seed's optimum is not reached by
        // the single greedy sweep from all-zeros
        let space = chain_space(5);
        let n_ops = 3usize;
        let mut any_gap = false;
        for seed in 0..10u64 {
            let bench = synth_benchmark(&space, seed, 1.0, 10_000).unwrap();
            let mut current = vec![0usize; 5];
            for pos in 0..5 {
                let mut best = current.clone();
                let mut best_acc = f64::NEG_INFINITY;
                for c in 0..n_ops {
                    let mut cand = current.clone();
                    cand[pos] = c;
                    let acc = bench.query(&Architecture::chain(cand.clone())).unwrap().accuracy;
                    if acc > best_acc {
                        best_acc = acc;
                        best = cand;
                    }
                }
                current = best;
            }
            let greedy = bench.query(&Architecture::chain(current)).unwrap().accuracy;
            if greedy < bench.max_accuracy() {
                any_gap = true;
                break;
            }
        }
        assert!(any_gap, "roughness 1.0 never created a non-separable landscape");
    }

    #[test]
    fn isomorphic_cells_get_identical_metrics() {
        use crate::graph::{INPUT, OUTPUT};
        let a = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), "conv1x1".into(), OUTPUT.into()],
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
        );
        let b = Architecture::cell(
            vec![INPUT.into(), "conv1x1".into(), "conv3x3".into(), OUTPUT.into()],
            vec![(0, 2), (0, 1), (2, 3), (1, 3)],
        );
        let ma = metrics_for(&a, 5, 0.7, 0.5).unwrap();
        let mb = metrics_for(&b, 5, 0.7, 0.5).unwrap();
        assert_eq!(ma.accuracy, mb.accuracy);
    }

    #[test]
    fn rejects_bad_roughness() {
        let space = chain_space(2);
        assert!(synth_benchmark(&space, 0, 1.5, 100).is_err());
        assert!(synth_benchmark(&space, 0, -0.1, 100).is_err());
    }
}
