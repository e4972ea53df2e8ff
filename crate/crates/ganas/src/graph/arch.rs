//! Search-space definitions and the architecture representation.
//!
//! An [`Architecture`] is either a `cell` (an operator-labeled DAG) or a
//! `chain` (one categorical choice per position in a fixed backbone).
//! Structural validity in the reward sense is deliberately *not* an
//! invariant of `Architecture`: invalid cells must stay representable so
//! the validity score can penalize them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved label for the cell input node.
pub const INPUT: &str = "INPUT";
/// Reserved label for the cell output node.
pub const OUTPUT: &str = "OUTPUT";

/// Operator labels available in a search space, including the reserved
/// `INPUT` and `OUTPUT` labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorVocabulary {
    pub names: Vec<String>,
}

impl OperatorVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let vocab = OperatorVocabulary { names };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate operator label `{name}`")));
            }
        }
        for reserved in [INPUT, OUTPUT] {
            if self.names.iter().filter(|n| n.as_str() == reserved).count() != 1 {
                return Err(Error::InvalidSpace(format!(
                    "vocabulary must contain `{reserved}` exactly once"
                )));
            }
        }
        if self.searchable().is_empty() {
            return Err(Error::InvalidSpace("no searchable operators".into()));
        }
        Ok(())
    }

    /// The three-operator vocabulary used by NB101-style spaces.
    pub fn nb101() -> Self {
        OperatorVocabulary {
            names: vec![
                INPUT.into(),
                "conv3x3".into(),
                "conv1x1".into(),
                "maxpool3x3".into(),
                OUTPUT.into(),
            ],
        }
    }

    /// The five-operator vocabulary used by NB201-style spaces.
    pub fn nb201() -> Self {
        OperatorVocabulary {
            names: vec![
                INPUT.into(),
                "zeroize".into(),
                "skip".into(),
                "conv1x1".into(),
                "conv3x3".into(),
                "avgpool3x3".into(),
                OUTPUT.into(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Operator labels excluding the reserved `INPUT`/`OUTPUT`.
    pub fn searchable(&self) -> Vec<&str> {
        self.names
            .iter()
            .map(|s| s.as_str())
            .filter(|s| *s != INPUT && *s != OUTPUT)
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyMode {
    FreeDag,
    FixedTopology,
    Chain,
}

/// Full description of a search space: vocabulary, topology mode and the
/// structural bounds the generator must respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceSpec {
    pub vocabulary: OperatorVocabulary,
    pub topology_mode: TopologyMode,
    /// Upper bound on total node count (input + ops + output); this is the
    /// trajectory length bound N for DAG modes.
    #[serde(default)]
    pub max_nodes: usize,
    #[serde(default)]
    pub max_edges: Option<usize>,
    #[serde(default)]
    pub chain_length: Option<usize>,
    /// Edge template for fixed-topology spaces, over node indices
    /// `0..max_nodes` with node 0 = INPUT and node `max_nodes - 1` = OUTPUT.
    #[serde(default)]
    pub fixed_edge_template: Option<Vec<(usize, usize)>>,
}

impl SearchSpaceSpec {
    pub fn free_dag(vocabulary: OperatorVocabulary, max_nodes: usize, max_edges: usize) -> Result<Self> {
        let spec = SearchSpaceSpec {
            vocabulary,
            topology_mode: TopologyMode::FreeDag,
            max_nodes,
            max_edges: Some(max_edges),
            chain_length: None,
            fixed_edge_template: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn chain(vocabulary: OperatorVocabulary, chain_length: usize) -> Result<Self> {
        let spec = SearchSpaceSpec {
            vocabulary,
            topology_mode: TopologyMode::Chain,
            max_nodes: 0,
            max_edges: None,
            chain_length: Some(chain_length),
            fixed_edge_template: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fixed_topology(
        vocabulary: OperatorVocabulary,
        max_nodes: usize,
        template: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let spec = SearchSpaceSpec {
            vocabulary,
            topology_mode: TopologyMode::FixedTopology,
            max_nodes,
            max_edges: None,
            chain_length: None,
            fixed_edge_template: Some(template),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        match self.topology_mode {
            TopologyMode::Chain => {
                if self.chain_length.unwrap_or(0) < 1 {
                    return Err(Error::InvalidSpace("chain mode requires chain_length >= 1".into()));
                }
            }
            TopologyMode::FreeDag | TopologyMode::FixedTopology => {
                if self.max_nodes < 3 {
                    return Err(Error::InvalidSpace(
                        "DAG modes require max_nodes >= 3 (input + >=1 op + output)".into(),
                    ));
                }
                if let Some(max_edges) = self.max_edges {
                    if max_edges + 1 < self.max_nodes {
                        return Err(Error::InvalidSpace(
                            "max_edges must be at least max_nodes - 1".into(),
                        ));
                    }
                }
                if self.topology_mode == TopologyMode::FixedTopology {
                    let template = self
                        .fixed_edge_template
                        .as_ref()
                        .ok_or_else(|| Error::InvalidSpace("fixed-topology mode needs an edge template".into()))?;
                    for &(src, dst) in template {
                        if src >= self.max_nodes || dst >= self.max_nodes || src == dst {
                            return Err(Error::InvalidSpace(format!(
                                "template edge ({src}, {dst}) out of range"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of decisions one architecture in this space requires.
    pub fn decision_slots(&self) -> usize {
        match self.topology_mode {
            TopologyMode::Chain => self.chain_length.unwrap_or(0),
            TopologyMode::FixedTopology => self.max_nodes - 2,
            TopologyMode::FreeDag => self.max_nodes - 1,
        }
    }
}

/// A point in the search space. Cell architectures carry node labels plus
/// directed edges over node indices; chain architectures carry one operator
/// index per position (indices into `vocabulary.searchable()`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Architecture {
    Cell {
        ops: Vec<String>,
        edges: Vec<(usize, usize)>,
    },
    Chain {
        choices: Vec<usize>,
    },
}

impl Architecture {
    pub fn cell(ops: Vec<String>, edges: Vec<(usize, usize)>) -> Self {
        Architecture::Cell { ops, edges }
    }

    pub fn chain(choices: Vec<usize>) -> Self {
        Architecture::Chain { choices }
    }

    pub fn is_cell(&self) -> bool {
        matches!(self, Architecture::Cell { .. })
    }

    /// Checks the representation invariants: edge indices in range, no
    /// self-loops, no duplicate edges. Chain choice ranges are checked
    /// against a space by [`Architecture::check_in_space`].
    pub fn well_formed(&self) -> Result<()> {
        match self {
            Architecture::Cell { ops, edges } => {
                let n = ops.len();
                let mut seen = std::collections::BTreeSet::new();
                for &(src, dst) in edges {
                    if src >= n || dst >= n {
                        return Err(Error::InvalidArchitecture(format!(
                            "edge ({src}, {dst}) references a missing node"
                        )));
                    }
                    if src == dst {
                        return Err(Error::InvalidArchitecture(format!("self-loop on node {src}")));
                    }
                    if !seen.insert((src, dst)) {
                        return Err(Error::InvalidArchitecture(format!(
                            "duplicate edge ({src}, {dst})"
                        )));
                    }
                }
                Ok(())
            }
            Architecture::Chain { .. } => Ok(()),
        }
    }

    pub fn check_in_space(&self, space: &SearchSpaceSpec) -> Result<()> {
        self.well_formed()?;
        match (self, space.topology_mode) {
            (Architecture::Chain { choices }, TopologyMode::Chain) => {
                let n_ops = space.vocabulary.searchable().len();
                if choices.len() != space.chain_length.unwrap_or(0) {
                    return Err(Error::InvalidArchitecture("wrong chain length".into()));
                }
                if choices.iter().any(|&c| c >= n_ops) {
                    return Err(Error::InvalidArchitecture("chain choice out of vocabulary range".into()));
                }
                Ok(())
            }
            (Architecture::Cell { ops, .. }, TopologyMode::FreeDag | TopologyMode::FixedTopology) => {
                if ops.len() > space.max_nodes {
                    return Err(Error::InvalidArchitecture("too many nodes for space".into()));
                }
                for op in ops {
                    if space.vocabulary.index_of(op).is_none() {
                        return Err(Error::InvalidArchitecture(format!("unknown operator `{op}`")));
                    }
                }
                Ok(())
            }
            _ => Err(Error::InvalidArchitecture("architecture kind does not match space".into())),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Architecture::Cell { ops, .. } => ops.len(),
            Architecture::Chain { choices } => choices.len(),
        }
    }

    pub fn cell_parts(&self) -> Option<(&[String], &[(usize, usize)])> {
        match self {
            Architecture::Cell { ops, edges } => Some((ops, edges)),
            Architecture::Chain { .. } => None,
        }
    }
}

/// In/out adjacency lists for a cell, in node-index order.
pub fn adjacency(ops_len: usize, edges: &[(usize, usize)]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut ins = vec![Vec::new(); ops_len];
    let mut outs = vec![Vec::new(); ops_len];
    for &(src, dst) in edges {
        outs[src].push(dst);
        ins[dst].push(src);
    }
    (ins, outs)
}
