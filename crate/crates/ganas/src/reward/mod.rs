//! Reward shaping and PPO training.
//!
//! Step reward is 0 for accepted actions and −0.1 for the terminal rejected
//! action. The final reward is the validity score R_v when it is negative or
//! the architecture is already a truth cell, otherwise R_v (= 0) plus the
//! discriminator score R_D. The policy trains with clipped-surrogate PPO,
//! generalized advantage estimation and an entropy bonus.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{build_training_pairs, Discriminator};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorState, Trajectory};
use crate::graph::{canonical_hash, validate_cell, ArchHash, Architecture, TopologyMode};
use crate::tensor::params::{AdamConfig, ParamStore};
use crate::tensor::Tape;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RewardConfig {
    pub step_penalty: f64,
    pub violation_penalty: f64,
    pub entropy_coef: f64,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub discount: f64,
    pub value_coef: f64,
    pub ppo_epochs: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            step_penalty: -0.1,
            violation_penalty: -0.1,
            entropy_coef: 0.1,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            discount: 1.0,
            value_coef: 0.5,
            ppo_epochs: 4,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_penalty >= 0.0 || self.violation_penalty >= 0.0 {
            return Err(Error::Config("penalties must be negative".into()));
        }
        if self.entropy_coef < 0.0 {
            return Err(Error::Config("entropy_coef must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.clip_epsilon) || self.clip_epsilon == 0.0 {
            return Err(Error::Config("clip_epsilon must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// R_v: 0 for a structurally valid cell, −0.1 per violation otherwise.
/// Chains are always valid within their space.
pub fn validity_reward(arch: &Architecture, gen: &Generator) -> Result<f64> {
    match gen.space.topology_mode {
        TopologyMode::Chain => Ok(0.0),
        _ => Ok(validate_cell(arch, &gen.space)?.score()),
    }
}

/// R_final per the case split: R_v when R_v < 0 or the architecture is
/// already known (`gate` holds the truth hashes, plus anything else the
/// caller wants ungated — searchers add their evaluated set); otherwise
/// R_v + R_D = R_D. The discriminator is only consulted for valid novel
/// architectures.
pub fn final_reward(
    arch: &Architecture,
    truth: &[Architecture],
    gate: &BTreeSet<ArchHash>,
    gen: &Generator,
    disc: &Discriminator,
    disc_store: &ParamStore,
) -> Result<f64> {
    let r_v = validity_reward(arch, gen)?;
    if r_v < 0.0 {
        return Ok(r_v);
    }
    if gate.contains(&canonical_hash(arch)?) {
        return Ok(r_v);
    }
    Ok(r_v + disc.reward_score(disc_store, arch, truth)?)
}

/// Attaches the final reward to a finished trajectory. Invalid-action
/// terminations keep final_reward = 0: the terminal step penalty is all the
/// episode earns.
pub fn attach_final_reward(
    traj: &mut Trajectory,
    truth: &[Architecture],
    gate: &BTreeSet<ArchHash>,
    gen: &Generator,
    disc: &Discriminator,
    disc_store: &ParamStore,
) -> Result<()> {
    if traj.invalid_termination {
        traj.final_reward = 0.0;
        return Ok(());
    }
    traj.final_reward = final_reward(&traj.final_arch, truth, gate, gen, disc, disc_store)?;
    Ok(())
}

/// Standard GAE over one trajectory; the final reward is folded into the
/// last step's reward and V(terminal) = 0. Returns (advantages, returns).
pub fn compute_gae(traj: &Trajectory, discount: f64, gae_lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.steps.is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    let n = traj.steps.len();
    let mut rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    rewards[n - 1] += traj.final_reward;
    let values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let v_next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + discount * v_next - values[t];
        acc = delta + discount * gae_lambda * acc;
        advantages[t] = acc;
    }
    let returns: Vec<f64> = advantages.iter().zip(&values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

#[derive(Clone, Debug, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean probability ratio on the first epoch; exactly 1 by construction.
    pub first_epoch_mean_ratio: f64,
}

/// Clipped-surrogate PPO over a batch of finished trajectories.
pub fn ppo_update(
    gen: &Generator,
    store: &mut ParamStore,
    trajectories: &[Trajectory],
    cfg: &RewardConfig,
    g_lr: f64,
) -> Result<PpoStats> {
    if trajectories.is_empty() {
        return Err(Error::Invalid("ppo_update needs at least one trajectory".into()));
    }
    struct Sample {
        state: Architecture,
        step_idx: usize,
        action: crate::generator::Action,
        old_log_prob: f64,
        advantage: f64,
        ret: f64,
    }
    let mut samples = Vec::new();
    for traj in trajectories {
        let (advantages, returns) = compute_gae(traj, cfg.discount, cfg.gae_lambda)?;
        for (t, step) in traj.steps.iter().enumerate() {
            samples.push(Sample {
                state: step.state.clone(),
                step_idx: t,
                action: step.action.clone(),
                old_log_prob: step.log_prob,
                advantage: advantages[t],
                ret: returns[t],
            });
        }
    }
    // normalize advantages over the batch
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for s in &mut samples {
        s.advantage = (s.advantage - mean) / std;
    }

    let adam = AdamConfig::with_lr(g_lr);
    let mut stats = PpoStats::default();
    for epoch in 0..cfg.ppo_epochs {
        let tape = Tape::new();
        let mut surrogates = Vec::with_capacity(samples.len());
        let mut value_losses = Vec::with_capacity(samples.len());
        let mut entropies = Vec::with_capacity(samples.len());
        let mut ratio_sum = 0.0;
        for s in &samples {
            let state = GeneratorState {
                partial_arch: s.state.clone(),
                step: s.step_idx,
                done: false,
            };
            let vars = gen.replay_step(&tape, store, &state, &s.action)?;
            let ratio = tape.exp(tape.add_scalar(vars.log_prob, -s.old_log_prob)?)?;
            let r_val = tape.value(ratio).item();
            if !r_val.is_finite() {
                return Err(Error::NonFinite("ppo ratio"));
            }
            ratio_sum += r_val;
            let clipped = tape.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon)?;
            let surr = tape.minimum(tape.scale(ratio, s.advantage)?, tape.scale(clipped, s.advantage)?)?;
            surrogates.push(surr);
            let err = tape.add_scalar(vars.value, -s.ret)?;
            value_losses.push(tape.square(err)?);
            entropies.push(vars.entropy);
        }
        if epoch == 0 {
            stats.first_epoch_mean_ratio = ratio_sum / samples.len() as f64;
        }
        let policy_loss = tape.neg(tape.mean(tape.stack(&surrogates)?)?)?;
        let value_loss = tape.mean(tape.stack(&value_losses)?)?;
        let entropy = tape.mean(tape.stack(&entropies)?)?;
        let loss = tape.add(
            tape.add(policy_loss, tape.scale(value_loss, cfg.value_coef)?)?,
            tape.scale(entropy, -cfg.entropy_coef)?,
        )?;
        stats.policy_loss = tape.value(policy_loss).item();
        stats.value_loss = tape.value(value_loss).item();
        stats.entropy = tape.value(entropy).item();
        let grads = tape.backward(loss)?;
        store.adam_step(&grads, adam)?;
    }
    Ok(stats)
}

/// Knobs for one adversarial round (Algorithm 2's inner loop).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub inner_rounds: usize,
    pub d_epochs: usize,
    pub d_lr: f64,
    pub g_lr: f64,
    pub d_batch: usize,
    /// Episodes per PPO batch.
    pub episode_batch: usize,
    /// PPO batches per inner round.
    pub batches_per_inner: usize,
    /// Attempt cap for unique-valid generation = factor × requested count.
    pub gen_attempt_factor: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            inner_rounds: 5,
            d_epochs: 10,
            d_lr: 0.001,
            g_lr: 0.0001,
            d_batch: 32,
            episode_batch: 32,
            batches_per_inner: 2,
            gen_attempt_factor: 20,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RoundStats {
    pub d_loss_traces: Vec<Vec<f64>>,
    pub ppo_stats: Vec<PpoStats>,
    pub generation_shortfalls: usize,
    pub mean_final_reward: f64,
}

/// One adversarial round: `inner_rounds` alternations of {generate the fake
/// set F, train D on truth-vs-F pairs, train G with PPO against the fresh
/// rewards}. A generation shortfall is recorded and the round proceeds with
/// the partial F.
///
/// `known` extends the novelty gate beyond the truth set: any architecture
/// whose hash is in it earns R_v alone, never R_D. Searchers pass their
/// evaluated set here — otherwise the policy can farm reward by regenerating
/// cells it already found and collapse onto them.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_round<R: Rng>(
    gen: &Generator,
    gen_store: &mut ParamStore,
    disc: &Discriminator,
    disc_store: &mut ParamStore,
    truth: &[Architecture],
    known: &BTreeSet<ArchHash>,
    adv: &AdversarialConfig,
    reward_cfg: &RewardConfig,
    rng: &mut R,
) -> Result<RoundStats> {
    if truth.len() < 2 {
        return Err(Error::EmptyTruthSet);
    }
    let truth_hashes: BTreeSet<ArchHash> =
        truth.iter().map(canonical_hash).collect::<Result<_>>()?;
    let mut gate = truth_hashes.clone();
    gate.extend(known.iter().copied());
    let mut stats = RoundStats::default();
    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for _ in 0..adv.inner_rounds {
        let (fakes, shortfall) = gen.generate_unique_valid(
            gen_store,
            truth.len(),
            rng,
            adv.gen_attempt_factor * truth.len().max(1),
            &truth_hashes,
        )?;
        if shortfall {
            stats.generation_shortfalls += 1;
        }
        if !fakes.is_empty() && adv.d_lr > 0.0 {
            let pairs = build_training_pairs(truth, &fakes)?;
            let trace = disc.train(disc_store, &pairs, adv.d_epochs, adv.d_lr, adv.d_batch, rng)?;
            stats.d_loss_traces.push(trace);
        }
        for _ in 0..adv.batches_per_inner {
            let mut batch = Vec::with_capacity(adv.episode_batch);
            for _ in 0..adv.episode_batch {
                let mut traj = gen.rollout(gen_store, rng)?;
                attach_final_reward(&mut traj, truth, &gate, gen, disc, disc_store)?;
                reward_sum += traj.total_reward();
                reward_count += 1;
                batch.push(traj);
            }
            if adv.g_lr > 0.0 {
                stats.ppo_stats.push(ppo_update(gen, gen_store, &batch, reward_cfg, adv.g_lr)?);
            }
        }
    }
    if reward_count > 0 {
        stats.mean_final_reward = reward_sum / reward_count as f64;
    }
    Ok(stats)
}
