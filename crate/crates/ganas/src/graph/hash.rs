//! Canonical hashing of architectures.
//!
//! Cells are canonicalized by iterative neighborhood refinement on
//! (operator label, in-neighbor colors, out-neighbor colors), followed by a
//! search over the remaining within-class permutations for the
//! lexicographically smallest encoding. Two cells hash equal iff they are
//! isomorphic as operator-labeled DAGs. All hashing goes through SHA-256 so
//! digests are stable across runs and platforms.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::Architecture;
use crate::error::Result;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArchHash([u8; 32]);

impl ArchHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(ArchHash(arr))
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        ArchHash(bytes)
    }
}

impl fmt::Display for ArchHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ArchHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ArchHash({})", &self.to_hex()[..12])
    }
}

impl Serialize for ArchHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ArchHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ArchHash::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad hash hex"))
    }
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

fn hash64(bytes: &[u8]) -> u64 {
    let digest = sha(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Digest invariant under relabeling of node indices.
pub fn canonical_hash(arch: &Architecture) -> Result<ArchHash> {
    arch.well_formed()?;
    match arch {
        Architecture::Chain { choices } => {
            let mut bytes = b"chain:".to_vec();
            for &c in choices {
                bytes.extend_from_slice(&(c as u64).to_le_bytes());
            }
            Ok(ArchHash(sha(&bytes)))
        }
        Architecture::Cell { ops, edges } => {
            let encoding = canonical_encoding(ops, edges);
            Ok(ArchHash(sha(&encoding)))
        }
    }
}

/// The same architecture with node indices relabeled into canonical order.
/// Chains are returned unchanged.
pub fn canonical_form(arch: &Architecture) -> Result<Architecture> {
    arch.well_formed()?;
    match arch {
        Architecture::Chain { .. } => Ok(arch.clone()),
        Architecture::Cell { ops, edges } => {
            let perm = canonical_permutation(ops, edges);
            let n = ops.len();
            let mut new_ops = vec![String::new(); n];
            for (old, &new) in perm.iter().enumerate() {
                new_ops[new] = ops[old].clone();
            }
            let mut new_edges: Vec<(usize, usize)> =
                edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
            new_edges.sort_unstable();
            Ok(Architecture::cell(new_ops, new_edges))
        }
    }
}

/// Byte encoding of the canonical labeling of a cell.
fn canonical_encoding(ops: &[String], edges: &[(usize, usize)]) -> Vec<u8> {
    let perm = canonical_permutation(ops, edges);
    encode_under(ops, edges, &perm)
}

fn encode_under(ops: &[String], edges: &[(usize, usize)], perm: &[usize]) -> Vec<u8> {
    let n = ops.len();
    let mut labels = vec![""; n];
    for (old, &new) in perm.iter().enumerate() {
        labels[new] = ops[old].as_str();
    }
    let mut mapped: Vec<(usize, usize)> = edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
    mapped.sort_unstable();
    let mut bytes = b"cell:".to_vec();
    for label in labels {
        bytes.extend_from_slice(label.as_bytes());
        bytes.push(0);
    }
    bytes.push(1);
    for (s, d) in mapped {
        bytes.extend_from_slice(&(s as u32).to_le_bytes());
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    bytes
}

/// old-index -> canonical-index permutation.
fn canonical_permutation(ops: &[String], edges: &[(usize, usize)]) -> Vec<usize> {
    let n = ops.len();
    if n == 0 {
        return Vec::new();
    }
    let (ins, outs) = super::arch::adjacency(n, edges);

    // WL-style refinement with directed neighborhoods.
    let mut colors: Vec<u64> = ops.iter().map(|op| hash64(op.as_bytes())).collect();
    for _ in 0..n {
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut in_colors: Vec<u64> = ins[v].iter().map(|&u| colors[u]).collect();
            let mut out_colors: Vec<u64> = outs[v].iter().map(|&u| colors[u]).collect();
            in_colors.sort_unstable();
            out_colors.sort_unstable();
            let mut bytes = colors[v].to_le_bytes().to_vec();
            bytes.push(b'i');
            for c in in_colors {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(b'o');
            for c in out_colors {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            next.push(hash64(&bytes));
        }
        if partition_of(&next) == partition_of(&colors) {
            colors = next;
            break;
        }
        colors = next;
    }

    // Group nodes by refined color; group order is color order, which is
    // isomorphism-invariant. Search within-class permutations for the
    // minimal encoding.
    let mut classes: std::collections::BTreeMap<u64, Vec<usize>> = std::collections::BTreeMap::new();
    for (v, &c) in colors.iter().enumerate() {
        classes.entry(c).or_default().push(v);
    }
    let classes: Vec<Vec<usize>> = classes.into_values().collect();

    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_encoding: Option<Vec<u8>> = None;
    let mut ordering: Vec<usize> = Vec::with_capacity(n);
    search_class(
        ops,
        edges,
        &classes,
        0,
        &mut ordering,
        &mut best_perm,
        &mut best_encoding,
    );
    best_perm.expect("at least one permutation exists")
}

fn search_class(
    ops: &[String],
    edges: &[(usize, usize)],
    classes: &[Vec<usize>],
    class_idx: usize,
    ordering: &mut Vec<usize>,
    best_perm: &mut Option<Vec<usize>>,
    best_encoding: &mut Option<Vec<u8>>,
) {
    if class_idx == classes.len() {
        // ordering[i] = old node at canonical position i
        let mut perm = vec![0usize; ops.len()];
        for (pos, &old) in ordering.iter().enumerate() {
            perm[old] = pos;
        }
        let encoding = encode_under(ops, edges, &perm);
        if best_encoding.as_ref().map_or(true, |b| encoding < *b) {
            *best_encoding = Some(encoding);
            *best_perm = Some(perm);
        }
        return;
    }
    let members = classes[class_idx].clone();
    permute(&members, &mut Vec::new(), &mut |arrangement| {
        let len = arrangement.len();
        ordering.extend_from_slice(arrangement);
        search_class(ops, edges, classes, class_idx + 1, ordering, best_perm, best_encoding);
        ordering.truncate(ordering.len() - len);
    });
}

fn permute(remaining: &[usize], prefix: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if remaining.is_empty() {
        visit(prefix);
        return;
    }
    for (i, &item) in remaining.iter().enumerate() {
        let mut rest = remaining.to_vec();
        rest.remove(i);
        prefix.push(item);
        permute(&rest, prefix, visit);
        prefix.pop();
    }
}

fn partition_of(colors: &[u64]) -> Vec<Vec<usize>> {
    let mut map: std::collections::BTreeMap<u64, Vec<usize>> = std::collections::BTreeMap::new();
    for (v, &c) in colors.iter().enumerate() {
        map.entry(c).or_default().push(v);
    }
    map.into_values().collect()
}

/// Exact isomorphism test by exhaustive label-preserving permutation.
/// Test oracle only; exponential in node count.
pub fn brute_force_isomorphic(a: &Architecture, b: &Architecture) -> bool {
    match (a, b) {
        (Architecture::Chain { choices: ca }, Architecture::Chain { choices: cb }) => ca == cb,
        (
            Architecture::Cell { ops: ops_a, edges: edges_a },
            Architecture::Cell { ops: ops_b, edges: edges_b },
        ) => {
            let n = ops_a.len();
            if n != ops_b.len() || edges_a.len() != edges_b.len() {
                return false;
            }
            let edge_set_b: std::collections::BTreeSet<(usize, usize)> =
                edges_b.iter().copied().collect();
            let indices: Vec<usize> = (0..n).collect();
            let mut found = false;
            permute(&indices, &mut Vec::new(), &mut |mapping| {
                if found {
                    return;
                }
                // mapping[i] = node of b matched to node i of a
                if (0..n).any(|i| ops_a[i] != ops_b[mapping[i]]) {
                    return;
                }
                if edges_a.iter().all(|&(s, d)| edge_set_b.contains(&(mapping[s], mapping[d]))) {
                    found = true;
                }
            });
            found
        }
        _ => false,
    }
}
