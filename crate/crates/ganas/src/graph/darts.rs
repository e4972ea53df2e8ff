//! Conversion of DARTS-like cells (operators on edges) into the node-labeled
//! DAG format used everywhere else in this crate. Each DARTS edge becomes an
//! operator node; node u feeds node v iff the DARTS edge of u ends at the
//! source DARTS-node of the edge of v.

use serde::{Deserialize, Serialize};

use super::arch::{Architecture, OperatorVocabulary, SearchSpaceSpec, INPUT, OUTPUT};
use crate::error::{Error, Result};

/// One searchable edge of a DARTS-like cell, carrying exactly one operator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DartsEdge {
    pub from: usize,
    pub to: usize,
    pub op: String,
}

/// Converts a DARTS-like cell over `num_nodes` feature-map nodes (node 0 is
/// the input, node `num_nodes - 1` the output) into a node-labeled cell.
pub fn convert_darts_to_nodes(num_nodes: usize, darts_edges: &[DartsEdge]) -> Result<Architecture> {
    if num_nodes < 2 {
        return Err(Error::InvalidArchitecture("DARTS cell needs input and output nodes".into()));
    }
    if darts_edges.is_empty() {
        return Err(Error::InvalidArchitecture("DARTS cell has no edges".into()));
    }
    for (i, e) in darts_edges.iter().enumerate() {
        if e.from >= num_nodes || e.to >= num_nodes {
            return Err(Error::InvalidArchitecture(format!(
                "DARTS edge {i} references a missing node ({} -> {})",
                e.from, e.to
            )));
        }
    }

    let k = darts_edges.len();
    let input_idx = 0usize;
    let output_idx = k + 1;
    let mut ops = Vec::with_capacity(k + 2);
    ops.push(INPUT.to_string());
    for e in darts_edges {
        ops.push(e.op.clone());
    }
    ops.push(OUTPUT.to_string());

    let mut edges = Vec::new();
    for (u, e) in darts_edges.iter().enumerate() {
        if e.from == 0 {
            edges.push((input_idx, u + 1));
        }
        if e.to == num_nodes - 1 {
            edges.push((u + 1, output_idx));
        }
        for (v, f) in darts_edges.iter().enumerate() {
            if e.to == f.from {
                edges.push((u + 1, v + 1));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(Architecture::cell(ops, edges))
}

/// The NB201-style edge layout: 4 feature-map nodes, one operator per edge.
pub fn nb201_darts_topology() -> Vec<(usize, usize)> {
    vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
}

/// Fixed-topology search space obtained by converting the shared NB201 edge
/// layout; every cell in the space shares one converted edge template.
pub fn nb201_space() -> Result<SearchSpaceSpec> {
    let vocab = OperatorVocabulary::nb201();
    let probe_op = vocab.searchable()[0].to_string();
    let darts_edges: Vec<DartsEdge> = nb201_darts_topology()
        .into_iter()
        .map(|(from, to)| DartsEdge { from, to, op: probe_op.clone() })
        .collect();
    let converted = convert_darts_to_nodes(4, &darts_edges)?;
    let (ops, edges) = converted.cell_parts().unwrap();
    SearchSpaceSpec::fixed_topology(vocab, ops.len(), edges.to_vec())
}
