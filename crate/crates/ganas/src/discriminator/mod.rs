//! Pairwise (relativistic) discriminator D(·;φ).
//!
//! A shared message-passing embedder encodes both members of a pair; the
//! concatenated embeddings feed an MLP whose sigmoid is the probability that
//! the candidate comes from the truth distribution. Architectures are
//! embedded in canonical form, so isomorphic candidates score identically.
//! A standard (anchor-free) ablation mode classifies the candidate alone;
//! pair construction is unchanged.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{canonical_form, canonical_hash, Architecture, SearchSpaceSpec, INPUT};
use crate::tensor::layers::{GnnLayer, Mlp};
use crate::tensor::params::{AdamConfig, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// One labeled pair: `label` is 1.0 when the candidate is a truth cell.
#[derive(Clone, Debug)]
pub struct PairSample {
    pub anchor: Architecture,
    pub candidate: Architecture,
    pub label: f64,
}

/// All ordered truth-vs-truth pairs as positives (|T|·(|T|−1)) and every
/// truth-vs-fake pair as negatives (|T|·|F|).
pub fn build_training_pairs(truth: &[Architecture], fakes: &[Architecture]) -> Result<Vec<PairSample>> {
    if truth.len() < 2 {
        return Err(Error::EmptyTruthSet);
    }
    let mut pairs = Vec::with_capacity(truth.len() * (truth.len() - 1) + truth.len() * fakes.len());
    for (i, anchor) in truth.iter().enumerate() {
        for (j, other) in truth.iter().enumerate() {
            if i != j {
                pairs.push(PairSample {
                    anchor: anchor.clone(),
                    candidate: other.clone(),
                    label: 1.0,
                });
            }
        }
        for fake in fakes {
            pairs.push(PairSample { anchor: anchor.clone(), candidate: fake.clone(), label: 0.0 });
        }
    }
    Ok(pairs)
}

pub struct Discriminator {
    pub space: SearchSpaceSpec,
    pub hidden_dim: usize,
    pub pairwise: bool,
    gnn: Vec<GnnLayer>,
    head: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng>(
        space: SearchSpaceSpec,
        hidden_dim: usize,
        gnn_layers: usize,
        pairwise: bool,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let d = hidden_dim;
        let gnn: Vec<GnnLayer> =
            (0..gnn_layers).map(|i| GnnLayer::new(&format!("disc.gnn{i}"), d, d)).collect();
        let head_in = if pairwise { 2 * d } else { d };
        let head = Mlp::new("disc.head", &[head_in, d, 1]);
        store.init_uniform("disc.embed", vec![space.vocabulary.len(), d], d, rng);
        for layer in &gnn {
            layer.init(store, rng);
        }
        head.init(store, rng);
        Discriminator { space, hidden_dim: d, pairwise, gnn, head }
    }

    fn encoding_graph(&self, arch: &Architecture) -> Result<(Vec<String>, Vec<(usize, usize)>)> {
        match arch {
            Architecture::Cell { .. } => {
                let canon = canonical_form(arch)?;
                let (ops, edges) = canon.cell_parts().unwrap();
                Ok((ops.to_vec(), edges.to_vec()))
            }
            Architecture::Chain { choices } => {
                let searchable = self.space.vocabulary.searchable();
                let mut ops = vec![INPUT.to_string()];
                for &c in choices {
                    let label = searchable.get(c).ok_or_else(|| {
                        Error::InvalidArchitecture(format!("chain choice {c} out of range"))
                    })?;
                    ops.push(label.to_string());
                }
                let edges = (0..choices.len()).map(|i| (i, i + 1)).collect();
                Ok((ops, edges))
            }
        }
    }

    /// Embeds one architecture to a `[1, d]` graph embedding.
    pub fn embed(&self, tape: &Tape, store: &ParamStore, arch: &Architecture) -> Result<Var> {
        let (ops, edges) = self.encoding_graph(arch)?;
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
        let table = store.leaf(tape, "disc.embed")?;
        let mut h = tape.embed_lookup(table, &indices)?;
        for layer in &self.gnn {
            h = layer.forward(tape, store, h, n, &edges)?;
        }
        tape.mean_rows(h)
    }

    /// Pre-sigmoid pair score from already-computed `[d]` embeddings.
    fn pair_logit(&self, tape: &Tape, store: &ParamStore, anchor: Var, candidate: Var) -> Result<Var> {
        let features = if self.pairwise {
            tape.concat(&[anchor, candidate])?
        } else {
            candidate
        };
        let x = tape.reshape(features, vec![1, if self.pairwise { 2 * self.hidden_dim } else { self.hidden_dim }])?;
        tape.reshape(self.head.forward(tape, store, x)?, vec![1])
    }

    /// P(candidate ∈ p_data | candidate, anchor) ∈ (0, 1).
    pub fn predict_pair(
        &self,
        store: &ParamStore,
        anchor: &Architecture,
        candidate: &Architecture,
    ) -> Result<f64> {
        let tape = Tape::new();
        let ea = self.embed(&tape, store, anchor)?;
        let ec = self.embed(&tape, store, candidate)?;
        let logit = self.pair_logit(&tape, store, ea, ec)?;
        Ok(tape.value(tape.sigmoid(logit)?).item())
    }

    /// R_D: maximum pair probability over the truth anchors.
    pub fn reward_score(
        &self,
        store: &ParamStore,
        candidate: &Architecture,
        truth: &[Architecture],
    ) -> Result<f64> {
        if truth.is_empty() {
            return Err(Error::EmptyTruthSet);
        }
        let tape = Tape::new();
        let ec = self.embed(&tape, store, candidate)?;
        let mut best = f64::NEG_INFINITY;
        for anchor in truth {
            let ea = self.embed(&tape, store, anchor)?;
            let logit = self.pair_logit(&tape, store, ea, ec)?;
            best = best.max(tape.value(tape.sigmoid(logit)?).item());
        }
        Ok(best)
    }

    /// Adam/BCE training over shuffled minibatches. Each minibatch embeds
    /// every distinct architecture once and reuses the embedding across its
    /// pairs. Returns the mean loss per epoch.
    pub fn train<R: Rng>(
        &self,
        store: &mut ParamStore,
        pairs: &[PairSample],
        epochs: usize,
        lr: f64,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Err(Error::SingleClassPairs);
        }
        let first = pairs[0].label;
        if pairs.iter().all(|p| p.label == first) {
            return Err(Error::SingleClassPairs);
        }
        let cfg = AdamConfig::with_lr(lr);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut trace = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size.max(1)) {
                let tape = Tape::new();
                // embed each distinct architecture once per batch
                let mut cache: std::collections::BTreeMap<crate::graph::ArchHash, Var> =
                    std::collections::BTreeMap::new();
                let mut embed_cached = |arch: &Architecture, tape: &Tape, store: &ParamStore| -> Result<Var> {
                    let hash = canonical_hash(arch)?;
                    if let Some(&v) = cache.get(&hash) {
                        return Ok(v);
                    }
                    let v = self.embed(tape, store, arch)?;
                    cache.insert(hash, v);
                    Ok(v)
                };
                let mut logits = Vec::with_capacity(chunk.len());
                let mut labels = Vec::with_capacity(chunk.len());
                for &idx in chunk {
                    let pair = &pairs[idx];
                    let ea = embed_cached(&pair.anchor, &tape, store)?;
                    let ec = embed_cached(&pair.candidate, &tape, store)?;
                    let logit = self.pair_logit(&tape, store, ea, ec)?;
                    logits.push(tape.sum(logit)?);
                    labels.push(pair.label);
                }
                let stacked = tape.stack(&logits)?;
                let loss = tape.mean(tape.bce_with_logits(stacked, &Tensor::vector(labels))?)?;
                epoch_loss += tape.value(loss).item();
                batches += 1;
                let grads = tape.backward(loss)?;
                store.adam_step(&grads, cfg)?;
            }
            trace.push(epoch_loss / batches as f64);
        }
        Ok(trace)
    }

    /// Fraction of pairs classified correctly at the 0.5 threshold.
    pub fn pair_accuracy(&self, store: &ParamStore, pairs: &[PairSample]) -> Result<f64> {
        let mut correct = 0usize;
        for pair in pairs {
            let p = self.predict_pair(store, &pair.anchor, &pair.candidate)?;
            if (p >= 0.5) == (pair.label >= 0.5) {
                correct += 1;
            }
        }
        Ok(correct as f64 / pairs.len() as f64)
    }
}

/// Zero out the final head layer so the untrained discriminator outputs
/// exactly 0.5; keeps early R_D rewards uninformative rather than noisy.
pub fn zero_final_layer(store: &mut ParamStore) -> Result<()> {
    for suffix in ["w", "b"] {
        let name = format!("disc.head.1.{suffix}");
        let shape = store.get(&name)?.shape.clone();
        store.set(&name, Tensor::zeros(shape))?;
    }
    Ok(())
}
