//! Uniform proposal sampling of structurally valid architectures.
//!
//! Free-DAG proposal: node count uniform in range, operators uniform, then a
//! uniformly random edge set over the ordered nodes subject to the edge cap.
//! Invalid draws are rejected up to a cap, after which connectivity is
//! repaired instead.

use rand::seq::SliceRandom;
use rand::Rng;

use super::arch::{adjacency, Architecture, SearchSpaceSpec, TopologyMode, INPUT, OUTPUT};
use super::validity::validate_cell;

const REJECTION_CAP: usize = 1000;

pub fn random_architecture<R: Rng>(space: &SearchSpaceSpec, rng: &mut R) -> Architecture {
    match space.topology_mode {
        TopologyMode::Chain => {
            let n_ops = space.vocabulary.searchable().len();
            let len = space.chain_length.unwrap();
            Architecture::chain((0..len).map(|_| rng.gen_range(0..n_ops)).collect())
        }
        TopologyMode::FixedTopology => {
            let searchable: Vec<String> =
                space.vocabulary.searchable().iter().map(|s| s.to_string()).collect();
            let slots = space.max_nodes - 2;
            let mut ops = Vec::with_capacity(space.max_nodes);
            ops.push(INPUT.to_string());
            for _ in 0..slots {
                ops.push(searchable[rng.gen_range(0..searchable.len())].clone());
            }
            ops.push(OUTPUT.to_string());
            Architecture::cell(ops, space.fixed_edge_template.clone().unwrap())
        }
        TopologyMode::FreeDag => random_free_dag(space, rng),
    }
}

fn random_free_dag<R: Rng>(space: &SearchSpaceSpec, rng: &mut R) -> Architecture {
    let searchable: Vec<String> =
        space.vocabulary.searchable().iter().map(|s| s.to_string()).collect();
    let max_edges = space.max_edges.unwrap_or(space.max_nodes * (space.max_nodes - 1) / 2);

    for attempt in 0..=REJECTION_CAP {
        let mid = rng.gen_range(1..=space.max_nodes - 2);
        let n = mid + 2;
        let mut ops = Vec::with_capacity(n);
        ops.push(INPUT.to_string());
        for _ in 0..mid {
            ops.push(searchable[rng.gen_range(0..searchable.len())].clone());
        }
        ops.push(OUTPUT.to_string());

        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| ((s + 1)..n).map(move |d| (s, d)))
            .collect();
        let lo = (n - 1).min(max_edges);
        let hi = pairs.len().min(max_edges);
        let count = rng.gen_range(lo..=hi);
        let mut chosen = pairs.clone();
        chosen.shuffle(rng);
        chosen.truncate(count);
        chosen.sort_unstable();

        let mut arch = Architecture::cell(ops, chosen);
        if validate_cell(&arch, space).unwrap().is_valid() {
            return arch;
        }
        if attempt == REJECTION_CAP {
            repair_connectivity(&mut arch, rng, max_edges);
            return arch;
        }
    }
    unreachable!()
}

/// Adds edges until every node has the in/out connectivity the validity
/// rules demand, dropping excess edges first if the cap is tight.
fn repair_connectivity<R: Rng>(arch: &mut Architecture, rng: &mut R, max_edges: usize) {
    let Architecture::Cell { ops, edges } = arch else { return };
    let n = ops.len();
    loop {
        let (ins, outs) = adjacency(n, edges);
        let mut fixed_any = false;
        for v in 0..n {
            if ins[v].is_empty() && ops[v] != INPUT {
                let src = if v == 0 { 0 } else { rng.gen_range(0..v) };
                if !edges.contains(&(src, v)) {
                    edges.push((src, v));
                    fixed_any = true;
                }
            }
            if outs[v].is_empty() && ops[v] != OUTPUT {
                let dst = rng.gen_range(v + 1..n);
                if !edges.contains(&(v, dst)) {
                    edges.push((v, dst));
                    fixed_any = true;
                }
            }
        }
        while edges.len() > max_edges {
            // drop a random edge that is not the only one at either endpoint
            let idx = rng.gen_range(0..edges.len());
            edges.remove(idx);
            fixed_any = true;
        }
        if !fixed_any {
            break;
        }
    }
    edges.sort_unstable();
    edges.dedup();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::arch::OperatorVocabulary;
    use crate::graph::enumerate::enumerate_space;
    use crate::graph::hash::canonical_hash;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_draws_are_uniform_positions() {
        let space = SearchSpaceSpec::chain(OperatorVocabulary::nb101(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [[0usize; 3]; 4];
        let draws = 30_000;
        for _ in 0..draws {
            if let Architecture::Chain { choices } = random_architecture(&space, &mut rng) {
                for (pos, &c) in choices.iter().enumerate() {
                    counts[pos][c] += 1;
                }
            }
        }
        let expected = draws as f64 / 3.0;
        for pos in 0..4 {
            for op in 0..3 {
                let z = (counts[pos][op] as f64 - expected) / (expected * (2.0 / 3.0)).sqrt();
                assert!(z.abs() < 5.0, "position {pos} op {op} far from uniform");
            }
        }
    }

    #[test]
    fn seeded_rng_is_reproducible() {
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 6, 9).unwrap();
        let a: Vec<Architecture> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..50).map(|_| random_architecture(&space, &mut rng)).collect()
        };
        let b: Vec<Architecture> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..50).map(|_| random_architecture(&space, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn free_dag_draws_are_valid() {
        let space = SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 7, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let arch = random_architecture(&space, &mut rng);
            assert!(validate_cell(&arch, &space).unwrap().is_valid());
        }
    }

    #[test]
    fn covers_small_space() {
        let space = SearchSpaceSpec::chain(OperatorVocabulary::nb101(), 2).unwrap();
        let all: std::collections::BTreeSet<_> = enumerate_space(&space, 100)
            .unwrap()
            .iter()
            .map(|a| canonical_hash(a).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..10_000 {
            seen.insert(canonical_hash(&random_architecture(&space, &mut rng)).unwrap());
        }
        assert_eq!(seen, all);
    }
}
