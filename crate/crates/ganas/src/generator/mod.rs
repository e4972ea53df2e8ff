//! Autoregressive architecture generator G(·;θ).
//!
//! Cells grow node-by-node: each step samples an operator (with a terminal
//! OUTPUT action) from an MLP over the graph embedding, then a GRU walks the
//! existing nodes in creation order emitting connect/skip decisions. Chain
//! and fixed-topology spaces sample operators only. The encoder is a stack
//! of message-passing layers over the partial graph plus a mean readout.
//!
//! The GRU consumes every existing node's embedding regardless of the edge
//! decisions, so sampling and replay share one computation path and PPO
//! ratios are exact.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    canonical_hash, validate_cell, ArchHash, Architecture, SearchSpaceSpec, TopologyMode, INPUT,
    OUTPUT,
};
use crate::tensor::layers::{GnnLayer, GruCell, Linear, Mlp};
use crate::tensor::params::ParamStore;
use crate::tensor::{Tape, Tensor, Var};

/// Penalty for an action the space cannot accept (edge budget exceeded).
pub const STEP_PENALTY: f64 = -0.1;

/// A partially constructed architecture C_t.
#[derive(Clone, Debug)]
pub struct GeneratorState {
    pub partial_arch: Architecture,
    pub step: usize,
    pub done: bool,
}

impl GeneratorState {
    pub fn initial(space: &SearchSpaceSpec) -> Self {
        let partial_arch = match space.topology_mode {
            TopologyMode::Chain => Architecture::chain(Vec::new()),
            _ => Architecture::cell(vec![INPUT.to_string()], Vec::new()),
        };
        GeneratorState { partial_arch, step: 0, done: false }
    }
}

/// One decision: an operator choice (`op_choice == n_searchable` is the
/// terminal OUTPUT action in free-DAG mode) plus connect/skip flags for each
/// existing node in creation order (cell mode only).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub op_choice: usize,
    pub edge_decisions: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct TrajStep {
    pub state: Architecture,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub final_arch: Architecture,
    pub final_reward: f64,
    /// Episode ended by an action the space rejected; the terminal step
    /// penalty is the whole reward and no final reward applies.
    pub invalid_termination: bool,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum::<f64>() + self.final_reward
    }
}

/// Differentiable outputs of one policy step during replay.
pub struct StepVars {
    pub log_prob: Var,
    pub entropy: Var,
    pub value: Var,
}

pub struct Generator {
    pub space: SearchSpaceSpec,
    pub hidden_dim: usize,
    gnn: Vec<GnnLayer>,
    op_head: Mlp,
    value_head: Mlp,
    h0: Linear,
    edge_head: Linear,
    gru: GruCell,
    n_actions: usize,
    n_searchable: usize,
}

impl Generator {
    pub fn new<R: Rng>(
        space: SearchSpaceSpec,
        hidden_dim: usize,
        gnn_layers: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let d = hidden_dim;
        let n_searchable = space.vocabulary.searchable().len();
        let n_actions = match space.topology_mode {
            TopologyMode::FreeDag => n_searchable + 1,
            _ => n_searchable,
        };
        let gnn: Vec<GnnLayer> =
            (0..gnn_layers).map(|i| GnnLayer::new(&format!("gen.gnn{i}"), d, d)).collect();
        let op_head = Mlp::new("gen.op", &[d, d, n_actions]);
        let value_head = Mlp::new("gen.value", &[d, d, 1]);
        let h0 = Linear::new("gen.h0", d, d);
        let edge_head = Linear::new("gen.edge", d, 1);
        let gru = GruCell::new("gen.gru", d, d);

        store.init_uniform("gen.embed", vec![space.vocabulary.len(), d], d, rng);
        for layer in &gnn {
            layer.init(store, rng);
        }
        op_head.init(store, rng);
        value_head.init(store, rng);
        h0.init(store, rng);
        edge_head.init(store, rng);
        gru.init(store, rng);

        Generator { space, hidden_dim: d, gnn, op_head, value_head, h0, edge_head, gru, n_actions, n_searchable }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn is_output_action(&self, op_choice: usize) -> bool {
        self.space.topology_mode == TopologyMode::FreeDag && op_choice == self.n_searchable
    }

    /// The terminal OUTPUT action is unavailable until at least one
    /// intermediate node exists: the space contains no trivial INPUT→OUTPUT
    /// cell.
    fn masks_terminal(&self, state: &GeneratorState) -> bool {
        self.space.topology_mode == TopologyMode::FreeDag && state.step == 0
    }

    /// Adds a large negative constant to the terminal logit when masked.
    fn mask_logits(&self, tape: &Tape, state: &GeneratorState, op_logits: Var) -> Result<Var> {
        if !self.masks_terminal(state) {
            return Ok(op_logits);
        }
        let mut mask = vec![0.0; self.n_actions];
        mask[self.n_actions - 1] = -1e9;
        let mask = tape.constant(Tensor::vector(mask))?;
        tape.add(op_logits, mask)
    }

    fn op_label(&self, op_choice: usize) -> String {
        if self.is_output_action(op_choice) {
            OUTPUT.to_string()
        } else {
            self.space.vocabulary.searchable()[op_choice].to_string()
        }
    }

    /// Node labels and edges for encoding a state's partial graph. Chains
    /// encode as a linear graph of chosen ops behind INPUT; fixed-topology
    /// states use the template restricted to existing nodes.
    fn encoding_graph(&self, state: &GeneratorState) -> (Vec<String>, Vec<(usize, usize)>) {
        match &state.partial_arch {
            Architecture::Cell { ops, edges } => {
                if self.space.topology_mode == TopologyMode::FixedTopology {
                    let n = ops.len();
                    let template = self.space.fixed_edge_template.as_deref().unwrap_or(&[]);
                    let edges = template
                        .iter()
                        .copied()
                        .filter(|&(s, d)| s < n && d < n)
                        .collect();
                    (ops.clone(), edges)
                } else {
                    (ops.clone(), edges.clone())
                }
            }
            Architecture::Chain { choices } => {
                let mut ops = vec![INPUT.to_string()];
                for &c in choices {
                    ops.push(self.space.vocabulary.searchable()[c].to_string());
                }
                let edges = (0..choices.len()).map(|i| (i, i + 1)).collect();
                (ops, edges)
            }
        }
    }

    /// Encoder: embedding lookup, message-passing stack, mean readout.
    /// Returns (graph embedding `[1, d]`, node embeddings `[n, d]`, n).
    pub fn encode(&self, tape: &Tape, store: &ParamStore, state: &GeneratorState) -> Result<(Var, Var, usize)> {
        let (ops, edges) = self.encoding_graph(state);
        let n = ops.len();
        let indices: Vec<usize> = ops
            .iter()
            .map(|op| {
                self.space
                    .vocabulary
                    .index_of(op)
                    .ok_or_else(|| Error::InvalidArchitecture(format!("unknown operator `{op}`")))
            })
            .collect::<Result<_>>()?;
        let table = store.leaf(tape, "gen.embed")?;
        let mut h = tape.embed_lookup(table, &indices)?;
        for layer in &self.gnn {
            h = layer.forward(tape, store, h, n, &edges)?;
        }
        let g = tape.reshape(tape.mean_rows(h)?, vec![1, self.hidden_dim])?;
        Ok((g, h, n))
    }

    fn wants_edges(&self, state: &GeneratorState) -> bool {
        self.space.topology_mode == TopologyMode::FreeDag && state.partial_arch.is_cell()
            && !state.partial_arch.cell_parts().map(|(o, _)| o.is_empty()).unwrap_or(true)
    }

    /// Differentiable policy evaluation of `action` in `state`: summed
    /// log-probability, summed entropy (operator term plus each Bernoulli),
    /// and the value estimate.
    pub fn replay_step(
        &self,
        tape: &Tape,
        store: &ParamStore,
        state: &GeneratorState,
        action: &Action,
    ) -> Result<StepVars> {
        let (g, node_embs, n) = self.encode(tape, store, state)?;
        let op_logits = self.op_head.forward(tape, store, g)?;
        let op_logits = self.mask_logits(tape, state, tape.reshape(op_logits, vec![self.n_actions])?)?;
        let log_probs = tape.log_softmax(op_logits)?;
        let probs = tape.softmax(op_logits)?;
        let mut log_prob = tape.reshape(tape.gather(log_probs, &[action.op_choice])?, vec![1])?;
        // op entropy: −Σ p log p
        let mut entropy = tape.neg(tape.sum(tape.mul(probs, log_probs)?)?)?;

        let value_raw = self.value_head.forward(tape, store, g)?;
        let value = tape.reshape(value_raw, vec![1])?;

        if self.wants_edges(state) {
            if action.edge_decisions.len() != n {
                return Err(Error::InvalidArchitecture(format!(
                    "action has {} edge decisions for {n} nodes",
                    action.edge_decisions.len()
                )));
            }
            if state.step == 0 {
                // first step always connects to INPUT; not a random variable
                if action.edge_decisions != [true] {
                    return Err(Error::InvalidArchitecture(
                        "first step must connect to INPUT".into(),
                    ));
                }
            } else {
                let mut h = tape.tanh(self.h0.forward(tape, store, g)?)?;
                for (j, &connect) in action.edge_decisions.iter().enumerate() {
                    let xj = tape.embed_lookup(node_embs, &[j])?;
                    h = self.gru.forward(tape, store, h, xj)?;
                    let logit = tape.reshape(self.edge_head.forward(tape, store, h)?, vec![1])?;
                    // log σ(z) = −softplus(−z); log(1−σ(z)) = −softplus(z)
                    let term = if connect {
                        tape.neg(tape.softplus(tape.neg(logit)?)?)?
                    } else {
                        tape.neg(tape.softplus(logit)?)?
                    };
                    log_prob = tape.add(log_prob, term)?;
                    // Bernoulli entropy: softplus(z) − z·σ(z) + softplus(−z)·... use
                    // H = −p log p − (1−p) log(1−p) = softplus(−z)·p + softplus(z)·(1−p)
                    let p = tape.sigmoid(logit)?;
                    let one_minus_p = tape.add_scalar(tape.neg(p)?, 1.0)?;
                    let h_term = tape.add(
                        tape.mul(tape.softplus(tape.neg(logit)?)?, p)?,
                        tape.mul(tape.softplus(logit)?, one_minus_p)?,
                    )?;
                    entropy = tape.add(entropy, tape.sum(h_term)?)?;
                }
            }
        } else if !action.edge_decisions.is_empty() {
            return Err(Error::InvalidArchitecture("edge decisions in an edge-free mode".into()));
        }

        Ok(StepVars { log_prob: tape.sum(log_prob)?, entropy, value })
    }

    /// Samples one action. Returns the action, its log-probability, and the
    /// value estimate.
    pub fn sample_step<R: Rng>(
        &self,
        store: &ParamStore,
        state: &GeneratorState,
        rng: &mut R,
    ) -> Result<(Action, f64, f64)> {
        if state.done {
            return Err(Error::Invalid("sample_step on a finished episode".into()));
        }
        let tape = Tape::new();
        let (g, node_embs, n) = self.encode(&tape, store, state)?;
        let op_logits = self.mask_logits(
            &tape,
            state,
            tape.reshape(self.op_head.forward(&tape, store, g)?, vec![self.n_actions])?,
        )?;
        let log_probs = tape.value(tape.log_softmax(op_logits)?);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        // fallback skips the masked terminal action
        let mut op_choice = if self.masks_terminal(state) { self.n_actions - 2 } else { self.n_actions - 1 };
        for (i, lp) in log_probs.data.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                op_choice = i;
                break;
            }
        }
        let mut log_prob = log_probs.data[op_choice];

        let value = tape.value(self.value_head.forward(&tape, store, g)?).data[0];

        let mut edge_decisions = Vec::new();
        if self.wants_edges(state) {
            if state.step == 0 {
                edge_decisions.push(true); // forced INPUT connection
            } else {
                let mut h = tape.tanh(self.h0.forward(&tape, store, g)?)?;
                for j in 0..n {
                    let xj = tape.embed_lookup(node_embs, &[j])?;
                    h = self.gru.forward(&tape, store, h, xj)?;
                    let z = tape.value(self.edge_head.forward(&tape, store, h)?).data[0];
                    let p = 1.0 / (1.0 + (-z).exp());
                    let connect = rng.gen::<f64>() < p;
                    edge_decisions.push(connect);
                    log_prob += if connect { p.ln() } else { (1.0 - p).ln() };
                }
            }
        }
        Ok((Action { op_choice, edge_decisions }, log_prob, value))
    }

    /// Applies an action to a state. Returns the next state and whether the
    /// action was rejected (edge budget exceeded → terminal penalty).
    pub fn apply_action(&self, state: &GeneratorState, action: &Action) -> (GeneratorState, bool) {
        let mut next = state.clone();
        next.step += 1;
        match (&mut next.partial_arch, self.space.topology_mode) {
            (Architecture::Chain { choices }, TopologyMode::Chain) => {
                choices.push(action.op_choice);
                if choices.len() >= self.space.chain_length.unwrap_or(0) {
                    next.done = true;
                }
            }
            (Architecture::Cell { ops, edges }, mode) => {
                let label = self.op_label(action.op_choice);
                let node_idx = ops.len();
                let mut new_edges = Vec::new();
                for (j, &connect) in action.edge_decisions.iter().enumerate() {
                    if connect {
                        new_edges.push((j, node_idx));
                    }
                }
                if let Some(max_edges) = self.space.max_edges {
                    if edges.len() + new_edges.len() > max_edges {
                        next.step -= 1; // action rejected, state unchanged
                        next.done = true;
                        return (next, true);
                    }
                }
                ops.push(label.clone());
                edges.extend(new_edges);
                let terminal = match mode {
                    TopologyMode::FreeDag => {
                        label == OUTPUT || ops.len() >= self.space.max_nodes
                    }
                    _ => ops.len() >= self.space.max_nodes - 1,
                };
                if terminal && mode == TopologyMode::FixedTopology {
                    // close the fixed template with its OUTPUT node
                    ops.push(OUTPUT.to_string());
                    *edges = self.space.fixed_edge_template.clone().unwrap_or_default();
                }
                next.done = terminal;
            }
            _ => unreachable!("state kind matches space mode by construction"),
        }
        (next, false)
    }

    /// One full episode. Step rewards are 0 except a terminal −0.1 on a
    /// rejected action; the final reward is attached later by the caller.
    pub fn rollout<R: Rng>(&self, store: &ParamStore, rng: &mut R) -> Result<Trajectory> {
        let mut state = GeneratorState::initial(&self.space);
        let mut steps = Vec::new();
        let mut invalid_termination = false;
        while !state.done {
            let (action, log_prob, value) = self.sample_step(store, &state, rng)?;
            let (next, rejected) = self.apply_action(&state, &action);
            let reward = if rejected { STEP_PENALTY } else { 0.0 };
            steps.push(TrajStep {
                state: state.partial_arch.clone(),
                action,
                log_prob,
                value,
                reward,
            });
            if rejected {
                invalid_termination = true;
            }
            state = next;
        }
        Ok(Trajectory {
            steps,
            final_arch: state.partial_arch,
            final_reward: 0.0,
            invalid_termination,
        })
    }

    /// Recomputes every step's log-probability under the current parameters.
    pub fn log_prob_of(&self, store: &ParamStore, traj: &Trajectory) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(traj.steps.len());
        for (t, step) in traj.steps.iter().enumerate() {
            let state = GeneratorState { partial_arch: step.state.clone(), step: t, done: false };
            let tape = Tape::new();
            let vars = self.replay_step(&tape, store, &state, &step.action)?;
            out.push(tape.value(vars.log_prob).item());
        }
        Ok(out)
    }

    /// Rejection-samples rollouts until `n` pairwise-distinct valid
    /// architectures are found (also distinct from `exclude`), or
    /// `attempt_cap` rollouts have been spent. Returns the set and a
    /// shortfall flag.
    pub fn generate_unique_valid<R: Rng>(
        &self,
        store: &ParamStore,
        n: usize,
        rng: &mut R,
        attempt_cap: usize,
        exclude: &BTreeSet<ArchHash>,
    ) -> Result<(Vec<Architecture>, bool)> {
        let mut found = Vec::new();
        let mut seen: BTreeSet<ArchHash> = BTreeSet::new();
        let mut attempts = 0;
        while found.len() < n && attempts < attempt_cap {
            attempts += 1;
            let traj = self.rollout(store, rng)?;
            if traj.invalid_termination {
                continue;
            }
            let arch = traj.final_arch;
            let valid = match self.space.topology_mode {
                TopologyMode::Chain => arch.check_in_space(&self.space).is_ok(),
                _ => validate_cell(&arch, &self.space).map(|r| r.is_valid()).unwrap_or(false),
            };
            if !valid {
                continue;
            }
            let hash = canonical_hash(&arch)?;
            if exclude.contains(&hash) || !seen.insert(hash) {
                continue;
            }
            found.push(arch);
        }
        let shortfall = found.len() < n;
        Ok((found, shortfall))
    }
}
