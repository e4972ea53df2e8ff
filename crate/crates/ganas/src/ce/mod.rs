//! Reference cross-entropy machinery for rare-event optimization over
//! independent categorical product families: level quantiles, the closed-form
//! CE parameter update, the adaptive multi-level loop, and a JS-divergence
//! diagnostic comparing the KL-based update against a direct JS minimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor keeping every symbol reachable.
pub const EPS_P: f64 = 1e-6;

/// Independent product of per-coordinate categorical distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFamily {
    pub probs: Vec<Vec<f64>>,
}

impl CategoricalFamily {
    pub fn uniform(alphabet_sizes: &[usize]) -> Result<Self> {
        if alphabet_sizes.iter().any(|&k| k < 2) {
            return Err(Error::Config("alphabet sizes must be >= 2".into()));
        }
        let probs = alphabet_sizes
            .iter()
            .map(|&k| vec![1.0 / k as f64; k])
            .collect();
        Ok(CategoricalFamily { probs })
    }

    pub fn n_coords(&self) -> usize {
        self.probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        for vector in &self.probs {
            let sum: f64 = vector.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("coordinate mass {sum} != 1")));
            }
            if vector.iter().any(|&p| p < EPS_P) {
                return Err(Error::Invalid("probability below floor".into()));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.probs
            .iter()
            .map(|vector| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (idx, &p) in vector.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return idx;
                    }
                }
                vector.len() - 1
            })
            .collect()
    }

    pub fn log_prob(&self, x: &[usize]) -> f64 {
        x.iter()
            .zip(&self.probs)
            .map(|(&sym, vector)| vector[sym].ln())
            .sum()
    }
}

/// Empirical (1−ρ)-quantile with lower interpolation: the value at index
/// ⌊(1−ρ)·n⌋ of the ascending sort, so a ρ-fraction of samples scores at or
/// above the returned level.
pub fn quantile_level(scores: &[f64], rho: f64) -> f64 {
    assert!(!scores.is_empty(), "quantile of an empty sample");
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (((1.0 - rho) * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Closed-form CE maximizer for the categorical product family: per
/// coordinate, the weighted symbol frequency among elites, mixed with the
/// floor so every entry is exactly ≥ EPS_P and each vector sums to 1.
pub fn ce_update(
    elites: &[Vec<usize>],
    family: &CategoricalFamily,
    weights: &[f64],
) -> Result<CategoricalFamily> {
    if elites.is_empty() {
        return Err(Error::Invalid("CE update requires a non-empty elite set".into()));
    }
    if elites.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} elites vs {} weights",
            elites.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Invalid("all elite weights are zero".into()));
    }
    let mut probs = Vec::with_capacity(family.n_coords());
    for (coord, vector) in family.probs.iter().enumerate() {
        let k = vector.len();
        let mut freq = vec![0.0; k];
        for (elite, &w) in elites.iter().zip(weights) {
            freq[elite[coord]] += w;
        }
        let scale = (1.0 - k as f64 * EPS_P) / total;
        probs.push(freq.iter().map(|f| EPS_P + f * scale).collect());
    }
    let updated = CategoricalFamily { probs };
    updated.validate()?;
    Ok(updated)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CeSchedule {
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub samples_per_stage: usize,
    pub max_stages: usize,
    /// Keep the prior λ̄ fixed and weight elites by the likelihood ratio
    /// p(x;λ̄)/p(x;θ̃); default resets λ̄ := θ̃ each stage (ratio 1).
    pub full_ratio: bool,
}

impl CeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0.0 {
            return Err(Error::Config("delta must be > 0".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config("rho must be in (0,1)".into()));
        }
        if self.samples_per_stage == 0 || self.max_stages == 0 {
            return Err(Error::Config("samples_per_stage and max_stages must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CeResult {
    pub best: Vec<usize>,
    pub best_score: f64,
    pub gamma_trace: Vec<f64>,
    pub stages: usize,
    /// γ reached α (false means the stage cap was hit; flagged, not fatal).
    pub reached: bool,
    /// Elite fraction of the final stage — a diagnostic stand-in for the
    /// rare-event probability estimate.
    pub elite_fraction: f64,
}

const RHO_MIN: f64 = 0.01;

/// Multi-level CE loop: sample, raise the level by at least δ (adapting ρ
/// geometrically when needed), refit, repeat until γ ≥ α or the stage cap.
pub fn ce_optimize<S, R>(
    objective: S,
    family: &CategoricalFamily,
    schedule: &CeSchedule,
    rng: &mut R,
) -> Result<CeResult>
where
    S: Fn(&[usize]) -> f64,
    R: Rng,
{
    schedule.validate()?;
    family.validate()?;
    let prior = family.clone();
    let mut theta = family.clone();
    let mut gamma_prev = f64::NEG_INFINITY;
    let mut gamma_trace = Vec::new();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stages = 0;
    let mut reached = false;
    let mut elite_fraction = 0.0;

    while stages < schedule.max_stages {
        stages += 1;
        let samples: Vec<Vec<usize>> =
            (0..schedule.samples_per_stage).map(|_| theta.sample(rng)).collect();
        let scores: Vec<f64> = samples.iter().map(|x| objective(x)).collect();
        for (x, &s) in samples.iter().zip(&scores) {
            if best.as_ref().map(|(_, b)| s > *b).unwrap_or(true) {
                best = Some((x.clone(), s));
            }
        }

        // level condition γ_t ≥ min(α, γ_{t−1} + δ); shrink ρ to push the
        // quantile up when the condition fails
        let target = schedule.alpha.min(gamma_prev + schedule.delta);
        let mut rho_t = schedule.rho;
        let mut gamma = quantile_level(&scores, rho_t);
        while gamma < target && rho_t * 0.8 >= RHO_MIN {
            rho_t *= 0.8;
            gamma = quantile_level(&scores, rho_t);
        }
        let gamma_t = gamma.min(schedule.alpha);
        gamma_trace.push(gamma_t);

        let elite_idx: Vec<usize> =
            (0..samples.len()).filter(|&i| scores[i] >= gamma_t).collect();
        elite_fraction = elite_idx.len() as f64 / samples.len() as f64;
        let elites: Vec<Vec<usize>> = elite_idx.iter().map(|&i| samples[i].clone()).collect();
        let weights: Vec<f64> = if schedule.full_ratio {
            elite_idx
                .iter()
                .map(|&i| (prior.log_prob(&samples[i]) - theta.log_prob(&samples[i])).exp())
                .collect()
        } else {
            vec![1.0; elites.len()]
        };
        theta = ce_update(&elites, &theta, &weights)?;
        gamma_prev = gamma_t;

        if gamma_t >= schedule.alpha {
            reached = true;
            break;
        }
    }

    let (best, best_score) = best.expect("at least one stage ran");
    Ok(CeResult { best, best_score, gamma_trace, stages, reached, elite_fraction })
}

/// Enumerates the joint support of a product family (error above 1e6 states).
fn joint_states(family: &CategoricalFamily) -> Result<Vec<Vec<usize>>> {
    let size: usize = family.probs.iter().map(|v| v.len()).product();
    if size > 1_000_000 {
        return Err(Error::Invalid(format!("joint support too large: {size}")));
    }
    let mut states = vec![Vec::new()];
    for vector in &family.probs {
        let mut next = Vec::with_capacity(states.len() * vector.len());
        for state in &states {
            for sym in 0..vector.len() {
                let mut s = state.clone();
                s.push(sym);
                next.push(s);
            }
        }
        states = next;
    }
    Ok(states)
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// Exact Jensen–Shannon divergence between two product categoricals,
/// computed over the enumerated joint support (natural log, so JS ≤ ln 2).
pub fn js_divergence(a: &CategoricalFamily, b: &CategoricalFamily) -> Result<f64> {
    if a.probs.iter().map(Vec::len).ne(b.probs.iter().map(Vec::len)) {
        return Err(Error::ShapeMismatch("families over different alphabets".into()));
    }
    let mut js = 0.0;
    for state in joint_states(a)? {
        let pa = a.log_prob(&state).exp();
        let pb = b.log_prob(&state).exp();
        let m = 0.5 * (pa + pb);
        if m > 0.0 {
            js += 0.5 * kl_term(pa, m) + 0.5 * kl_term(pb, m);
        }
    }
    Ok(js.max(0.0))
}

/// JS between a weighted empirical distribution over joint points and a
/// product family.
fn js_empirical(points: &[Vec<usize>], weights: &[f64], family: &CategoricalFamily) -> Result<f64> {
    use std::collections::BTreeMap;
    let total: f64 = weights.iter().sum();
    let mut atoms: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (x, &w) in points.iter().zip(weights) {
        *atoms.entry(x.clone()).or_insert(0.0) += w / total;
    }
    let mut js = 0.0;
    for state in joint_states(family)? {
        let q = atoms.get(&state).copied().unwrap_or(0.0);
        let p = family.log_prob(&state).exp();
        let m = 0.5 * (q + p);
        if m > 0.0 {
            js += 0.5 * kl_term(q, m) + 0.5 * kl_term(p, m);
        }
    }
    Ok(js.max(0.0))
}

/// Direct JS-minimizing update: gradient descent (central differences) on
/// per-coordinate logits of JS(empirical elites ‖ p_θ). Diagnostic only —
/// exponential in the number of coordinates.
pub fn js_update(
    elites: &[Vec<usize>],
    weights: &[f64],
    family: &CategoricalFamily,
    steps: usize,
    lr: f64,
) -> Result<CategoricalFamily> {
    if elites.is_empty() {
        return Err(Error::Invalid("JS update requires a non-empty elite set".into()));
    }
    let mut logits: Vec<Vec<f64>> =
        family.probs.iter().map(|v| v.iter().map(|p| p.ln()).collect()).collect();
    let to_family = |logits: &Vec<Vec<f64>>| -> CategoricalFamily {
        let probs = logits
            .iter()
            .map(|z| {
                let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
                let sum: f64 = exp.iter().sum();
                let k = z.len() as f64;
                exp.iter().map(|e| EPS_P + (1.0 - k * EPS_P) * e / sum).collect()
            })
            .collect();
        CategoricalFamily { probs }
    };
    const H: f64 = 1e-5;
    for _ in 0..steps {
        let mut grads: Vec<Vec<f64>> = logits.iter().map(|z| vec![0.0; z.len()]).collect();
        for c in 0..logits.len() {
            for k in 0..logits[c].len() {
                let mut plus = logits.clone();
                plus[c][k] += H;
                let mut minus = logits.clone();
                minus[c][k] -= H;
                let up = js_empirical(elites, weights, &to_family(&plus))?;
                let down = js_empirical(elites, weights, &to_family(&minus))?;
                grads[c][k] = (up - down) / (2.0 * H);
            }
        }
        for (z, g) in logits.iter_mut().zip(&grads) {
            for (zi, gi) in z.iter_mut().zip(g) {
                *zi -= lr * gi;
            }
        }
    }
    Ok(to_family(&logits))
}
