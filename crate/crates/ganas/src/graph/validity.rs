//! Validity analysis for cell architectures.
//!
//! Four violation types are tracked: (1) missing output node, (2) a node
//! with no incoming edges, (3) a node with no outgoing edges, (4) a node
//! with neither. INPUT is exempt from (2), OUTPUT from (3), and a node that
//! falls under (4) is counted once there and excluded from (2)/(3).
//! The report carries per-node counts for diagnostics, but the score charges
//! each *type* at most once (the taxonomy defines four possible violations,
//! so R_v is bounded below by -0.4 on acyclic cells); defensively, each back
//! edge of a cyclic input also counts as one violation. The score is -0.1
//! per violation, held internally in exact tenths.

use super::arch::{adjacency, Architecture, SearchSpaceSpec, INPUT, OUTPUT};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityReport {
    /// Count of missing/extra output-node violations.
    pub no_output: usize,
    /// Nodes with no incoming edges (INPUT exempt).
    pub no_incoming: usize,
    /// Nodes with no outgoing edges (OUTPUT exempt).
    pub no_outgoing: usize,
    /// Isolated nodes, counted once here and not under the two above.
    pub isolated: usize,
    /// Back edges found by cycle detection; each counts as one violation.
    pub back_edges: usize,
    pub is_dag: bool,
}

impl ValidityReport {
    /// Number of violation types present (each charged once) plus one per
    /// back edge on cyclic inputs.
    pub fn total_violations(&self) -> usize {
        usize::from(self.no_output > 0)
            + usize::from(self.no_incoming > 0)
            + usize::from(self.no_outgoing > 0)
            + usize::from(self.isolated > 0)
            + self.back_edges
    }

    /// Score in exact tenths: -1 per violation.
    pub fn score_tenths(&self) -> i64 {
        -(self.total_violations() as i64)
    }

    /// R_v in reward units.
    pub fn score(&self) -> f64 {
        self.score_tenths() as f64 / 10.0
    }

    pub fn is_valid(&self) -> bool {
        self.total_violations() == 0 && self.is_dag
    }
}

/// Scores a cell against the four-violation taxonomy. Every representable
/// cell is scorable; this never fails except on a chain input.
pub fn validate_cell(arch: &Architecture, _space: &SearchSpaceSpec) -> Result<ValidityReport> {
    let (ops, edges) = arch
        .cell_parts()
        .ok_or_else(|| Error::InvalidArchitecture("validate_cell requires a cell".into()))?;
    let n = ops.len();
    let (ins, outs) = adjacency(n, edges);

    let output_count = ops.iter().filter(|op| op.as_str() == OUTPUT).count();
    let no_output = if output_count == 0 { 1 } else { output_count - 1 };

    let mut no_incoming = 0;
    let mut no_outgoing = 0;
    let mut isolated = 0;
    for idx in 0..n {
        let missing_in = ins[idx].is_empty() && ops[idx] != INPUT;
        let missing_out = outs[idx].is_empty() && ops[idx] != OUTPUT;
        match (missing_in, missing_out) {
            (true, true) => isolated += 1,
            (true, false) => no_incoming += 1,
            (false, true) => no_outgoing += 1,
            (false, false) => {}
        }
    }

    let back_edges = count_back_edges(n, &outs);

    Ok(ValidityReport {
        no_output,
        no_incoming,
        no_outgoing,
        isolated,
        back_edges,
        is_dag: back_edges == 0,
    })
}

/// DFS back-edge count, visiting nodes in ascending index order so the
/// count is deterministic.
fn count_back_edges(n: usize, outs: &[Vec<usize>]) -> usize {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color = vec![WHITE; n];
    let mut back = 0;
    // iterative DFS with an explicit edge-iterator stack
    for start in 0..n {
        if color[start] != WHITE {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = GRAY;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < outs[node].len() {
                let target = outs[node][*next];
                *next += 1;
                match color[target] {
                    WHITE => {
                        color[target] = GRAY;
                        stack.push((target, 0));
                    }
                    GRAY => back += 1,
                    _ => {}
                }
            } else {
                color[node] = BLACK;
                stack.pop();
            }
        }
    }
    back
}

/// Longest path length (in edges) over a DAG cell; 0 for cyclic inputs.
pub fn longest_path(ops_len: usize, edges: &[(usize, usize)]) -> usize {
    let (ins, outs) = adjacency(ops_len, edges);
    if count_back_edges(ops_len, &outs) > 0 {
        return 0;
    }
    // Kahn order then DP.
    let mut indeg: Vec<usize> = ins.iter().map(|v| v.len()).collect();
    let mut queue: Vec<usize> = (0..ops_len).filter(|&i| indeg[i] == 0).collect();
    let mut depth = vec![0usize; ops_len];
    let mut head = 0;
    while head < queue.len() {
        let node = queue[head];
        head += 1;
        for &next in &outs[node] {
            depth[next] = depth[next].max(depth[node] + 1);
            indeg[next] -= 1;
            if indeg[next] == 0 {
                queue.push(next);
            }
        }
    }
    depth.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::arch::OperatorVocabulary;

    fn space() -> SearchSpaceSpec {
        SearchSpaceSpec::free_dag(OperatorVocabulary::nb101(), 7, 9).unwrap()
    }

    #[test]
    fn linear_cell_is_valid() {
        let cell = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), OUTPUT.into()],
            vec![(0, 1), (1, 2)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.total_violations(), 0);
        assert_eq!(report.score_tenths(), 0);
        assert_eq!(report.score(), 0.0);
        assert!(report.is_valid());
    }

    #[test]
    fn missing_output_counts_two_violations() {
        // {INPUT, op_a} with edge INPUT -> op_a and no OUTPUT node:
        // no-output plus no-outgoing(op_a).
        let cell = Architecture::cell(vec![INPUT.into(), "conv3x3".into()], vec![(0, 1)]);
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.no_output, 1);
        assert_eq!(report.no_outgoing, 1);
        assert_eq!(report.total_violations(), 2);
        assert_eq!(report.score_tenths(), -2);
        assert!((report.score() - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_counts_once() {
        // valid linear remainder plus an isolated op_b
        let cell = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), OUTPUT.into(), "conv1x1".into()],
            vec![(0, 1), (1, 2)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.isolated, 1);
        assert_eq!(report.no_incoming, 0);
        assert_eq!(report.no_outgoing, 0);
        assert_eq!(report.total_violations(), 1);
        assert_eq!(report.score_tenths(), -1);
    }

    #[test]
    fn cycle_counts_back_edges_and_clears_is_dag() {
        let cell = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), "conv1x1".into(), OUTPUT.into()],
            vec![(0, 1), (1, 2), (2, 1), (2, 3)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert!(!report.is_dag);
        assert_eq!(report.back_edges, 1);
        assert!(!report.is_valid());
    }

    #[test]
    fn two_output_nodes_violate() {
        let cell = Architecture::cell(
            vec![INPUT.into(), OUTPUT.into(), OUTPUT.into()],
            vec![(0, 1), (0, 2)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.no_output, 1);
        assert!(!report.is_valid());
    }

    #[test]
    fn score_is_bounded_by_four_tenths_on_dags() {
        // worst case: no OUTPUT, dangling, sourceless and isolated nodes all
        // at once; each type charges once
        let cell = Architecture::cell(
            vec![
                INPUT.into(),
                "conv3x3".into(),
                "conv3x3".into(),
                "conv1x1".into(),
                "conv1x1".into(),
                "maxpool3x3".into(),
            ],
            vec![(0, 1), (0, 2), (3, 2)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.no_output, 1);
        assert!(report.no_incoming >= 1 && report.no_outgoing >= 1 && report.isolated >= 1);
        assert_eq!(report.total_violations(), 4);
        assert_eq!(report.score_tenths(), -4);
    }

    #[test]
    fn repeated_violations_of_one_type_charge_once() {
        // two isolated nodes → still a single type-(4) charge
        let cell = Architecture::cell(
            vec![INPUT.into(), "conv3x3".into(), OUTPUT.into(), "conv1x1".into(), "conv1x1".into()],
            vec![(0, 1), (1, 2)],
        );
        let report = validate_cell(&cell, &space()).unwrap();
        assert_eq!(report.isolated, 2);
        assert_eq!(report.total_violations(), 1);
    }

    #[test]
    fn longest_path_on_diamond() {
        let edges = vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)];
        assert_eq!(longest_path(5, &edges), 3);
    }
}
