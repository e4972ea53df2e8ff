//! Exhaustive enumeration of small search spaces.
//!
//! Emits each isomorphism-distinct structurally valid architecture exactly
//! once, in a deterministic order. Used by the brute-force oracles and by
//! synthetic benchmark generation.

use std::collections::BTreeSet;

use super::arch::{Architecture, SearchSpaceSpec, TopologyMode, INPUT, OUTPUT};
use super::hash::canonical_hash;
use super::validity::validate_cell;
use crate::error::{Error, Result};

pub fn enumerate_space(space: &SearchSpaceSpec, cap: usize) -> Result<Vec<Architecture>> {
    space.validate()?;
    match space.topology_mode {
        TopologyMode::Chain => enumerate_chain(space, cap),
        TopologyMode::FixedTopology => enumerate_fixed(space, cap),
        TopologyMode::FreeDag => enumerate_free_dag(space, cap),
    }
}

fn enumerate_chain(space: &SearchSpaceSpec, cap: usize) -> Result<Vec<Architecture>> {
    let n_ops = space.vocabulary.searchable().len();
    let len = space.chain_length.unwrap();
    let mut out = Vec::new();
    let mut choices = vec![0usize; len];
    loop {
        if out.len() == cap {
            return Err(Error::EnumerationTruncated(cap));
        }
        out.push(Architecture::chain(choices.clone()));
        // odometer increment
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            choices[pos] += 1;
            if choices[pos] < n_ops {
                break;
            }
            choices[pos] = 0;
        }
    }
}

fn enumerate_fixed(space: &SearchSpaceSpec, cap: usize) -> Result<Vec<Architecture>> {
    let searchable: Vec<String> = space.vocabulary.searchable().iter().map(|s| s.to_string()).collect();
    let slots = space.max_nodes - 2;
    let template = space.fixed_edge_template.clone().unwrap();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut choices = vec![0usize; slots];
    loop {
        let mut ops = Vec::with_capacity(space.max_nodes);
        ops.push(INPUT.to_string());
        for &c in &choices {
            ops.push(searchable[c].clone());
        }
        ops.push(OUTPUT.to_string());
        let arch = Architecture::cell(ops, template.clone());
        if seen.insert(canonical_hash(&arch)?) {
            if out.len() == cap {
                return Err(Error::EnumerationTruncated(cap));
            }
            out.push(arch);
        }
        let mut pos = slots;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            choices[pos] += 1;
            if choices[pos] < searchable.len() {
                break;
            }
            choices[pos] = 0;
        }
    }
}

fn enumerate_free_dag(space: &SearchSpaceSpec, cap: usize) -> Result<Vec<Architecture>> {
    let searchable: Vec<String> = space.vocabulary.searchable().iter().map(|s| s.to_string()).collect();
    let max_mid = space.max_nodes - 2;
    let max_edges = space.max_edges.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();

    for mid in 1..=max_mid {
        let n = mid + 2; // INPUT, mid ops, OUTPUT (node n-1)
        // candidate edges in topological index order
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| ((s + 1)..n).map(move |d| (s, d)))
            .collect();
        let n_pairs = pairs.len();
        debug_assert!(n_pairs < 63);
        for mask in 0u64..(1u64 << n_pairs) {
            if (mask.count_ones() as usize) > max_edges {
                continue;
            }
            let edges: Vec<(usize, usize)> = (0..n_pairs)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| pairs[i])
                .collect();
            // topology validity is label-independent: INPUT and OUTPUT sit at
            // fixed positions and middle labels never affect connectivity
            let probe_ops: Vec<String> = std::iter::once(INPUT.to_string())
                .chain(std::iter::repeat(searchable[0].clone()).take(mid))
                .chain(std::iter::once(OUTPUT.to_string()))
                .collect();
            let probe = Architecture::cell(probe_ops, edges.clone());
            if !validate_cell(&probe, space)?.is_valid() {
                continue;
            }
            let mut labeling = vec![0usize; mid];
            loop {
                let ops: Vec<String> = std::iter::once(INPUT.to_string())
                    .chain(labeling.iter().map(|&c| searchable[c].clone()))
                    .chain(std::iter::once(OUTPUT.to_string()))
                    .collect();
                let arch = Architecture::cell(ops, edges.clone());
                if seen.insert(canonical_hash(&arch)?) {
                    if out.len() == cap {
                        return Err(Error::EnumerationTruncated(cap));
                    }
                    out.push(arch);
                }
                let mut pos = mid;
                let mut done = false;
                loop {
                    if pos == 0 {
                        done = true;
                        break;
                    }
                    pos -= 1;
                    labeling[pos] += 1;
                    if labeling[pos] < searchable.len() {
                        break;
                    }
                    labeling[pos] = 0;
                }
                if done {
                    break;
                }
            }
        }
    }
    Ok(out)
}
