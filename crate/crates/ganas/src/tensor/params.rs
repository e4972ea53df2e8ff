//! Named parameter storage with Adam state and checkpointing.
//!
//! Checkpoint layout: `<path>` is a JSON manifest
//! `{"step": u64, "params": [{"name", "shape", "offset", "len"}, ...]}`
//! and `<path>.bin` holds, for each manifest entry in order, the raw
//! little-endian f64 words of `value`, then `m`, then `v` (so each entry
//! occupies `3 * len * 8` bytes starting at `offset * 8`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct Slot {
    value: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Adam hyperparameters; betas/eps are the standard defaults.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Default)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> Vec<&str> {
        self.slots.keys().map(|s| s.as_str()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let m = Tensor::zeros(value.shape.clone());
        let v = Tensor::zeros(value.shape.clone());
        self.slots.insert(name.to_string(), Slot { value, m, v });
    }

    /// Uniform ±1/√fan_in initialization.
    pub fn init_uniform<R: Rng>(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.value.shape != value.shape {
            return Err(Error::ShapeMismatch(format!(
                "set {name}: {:?} vs {:?}",
                slot.value.shape, value.shape
            )));
        }
        slot.value = value;
        Ok(())
    }

    /// Attaches the parameter's current value to a tape as a named leaf.
    pub fn leaf(&self, tape: &Tape, name: &str) -> Result<Var> {
        tape.leaf(name, self.get(name)?.clone())
    }

    /// Standard Adam with bias correction; one global step per call.
    /// Parameters absent from `grads` are untouched; an entirely empty grad
    /// map is an error, as is a grad for an unknown parameter.
    pub fn adam_step(&mut self, grads: &BTreeMap<String, Tensor>, cfg: AdamConfig) -> Result<()> {
        if grads.is_empty() {
            return Err(Error::MissingGradient);
        }
        for name in grads.keys() {
            if !self.slots.contains_key(name) {
                return Err(Error::UnknownParam(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (name, grad) in grads {
            let slot = self.slots.get_mut(name).unwrap();
            if slot.value.shape != grad.shape {
                return Err(Error::ShapeMismatch(format!(
                    "grad {name}: {:?} vs {:?}",
                    slot.value.shape, grad.shape
                )));
            }
            for i in 0..grad.data.len() {
                let g = grad.data[i];
                slot.m.data[i] = cfg.beta1 * slot.m.data[i] + (1.0 - cfg.beta1) * g;
                slot.v.data[i] = cfg.beta2 * slot.v.data[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = slot.m.data[i] / bc1;
                let v_hat = slot.v.data[i] / bc2;
                slot.value.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                if !slot.value.data[i].is_finite() {
                    return Err(Error::NonFinite("adam_step"));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Entry<'a> {
            name: &'a str,
            shape: &'a [usize],
            offset: usize,
            len: usize,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            step: u64,
            params: Vec<Entry<'a>>,
        }
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let mut bin: Vec<u8> = Vec::new();
        for (name, slot) in &self.slots {
            let len = slot.value.data.len();
            entries.push(Entry { name, shape: &slot.value.shape, offset, len });
            for part in [&slot.value, &slot.m, &slot.v] {
                for &x in &part.data {
                    bin.extend_from_slice(&x.to_le_bytes());
                }
            }
            offset += 3 * len;
        }
        let manifest = Manifest { step: self.step, params: entries };
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        let mut fb = std::fs::File::create(path.with_extension("bin"))?;
        fb.write_all(&bin)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            name: String,
            shape: Vec<usize>,
            offset: usize,
            len: usize,
        }
        #[derive(Deserialize)]
        struct Manifest {
            step: u64,
            params: Vec<Entry>,
        }
        let manifest: Manifest = serde_json::from_reader(std::fs::File::open(path)?)?;
        let mut bin = Vec::new();
        std::fs::File::open(path.with_extension("bin"))?.read_to_end(&mut bin)?;
        let words: Vec<f64> = bin
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut store = ParamStore { slots: BTreeMap::new(), step: manifest.step };
        for entry in manifest.params {
            let want: usize = entry.shape.iter().product();
            if want != entry.len || entry.offset + 3 * entry.len > words.len() {
                return Err(Error::Config(format!("checkpoint entry `{}` is inconsistent", entry.name)));
            }
            let at = |k: usize| {
                let start = entry.offset + k * entry.len;
                Tensor { shape: entry.shape.clone(), data: words[start..start + entry.len].to_vec() }
            };
            store
                .slots
                .insert(entry.name, Slot { value: at(0), m: at(1), v: at(2) });
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_adam_step_from_zero_moments() {
        // Δ = −lr·g/(|g|+eps) after bias correction
        let mut store = ParamStore::new();
        store.insert("p", Tensor::scalar(1.0));
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::scalar(0.3));
        let cfg = AdamConfig::with_lr(0.01);
        store.adam_step(&grads, cfg).unwrap();
        let expected = 1.0 - 0.01 * 0.3 / (0.3 + cfg.eps * (1.0 - cfg.beta2).sqrt());
        // v_hat = g², so denominator is |g| + eps (eps applied after sqrt)
        let got = store.get("p").unwrap().data[0];
        assert!((got - (1.0 - 0.01 * 0.3 / (0.3 + cfg.eps))).abs() < 1e-9, "{got} vs {expected}");
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn constant_gradient_approaches_sign_step() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::scalar(0.0));
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::scalar(2.5));
        let cfg = AdamConfig::with_lr(0.001);
        let mut prev = 0.0;
        for _ in 0..200 {
            prev = store.get("p").unwrap().data[0];
            store.adam_step(&grads, cfg).unwrap();
        }
        let delta = store.get("p").unwrap().data[0] - prev;
        assert!((delta + cfg.lr).abs() < 1e-5, "per-step move {delta} should approach -lr");
    }

    #[test]
    fn missing_and_unknown_gradients_error() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::scalar(1.0));
        let cfg = AdamConfig::with_lr(0.01);
        assert!(matches!(store.adam_step(&BTreeMap::new(), cfg), Err(Error::MissingGradient)));
        let mut grads = BTreeMap::new();
        grads.insert("q".to_string(), Tensor::scalar(1.0));
        assert!(matches!(store.adam_step(&grads, cfg), Err(Error::UnknownParam(_))));
        // params without grads stay put
        store.insert("r", Tensor::scalar(5.0));
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Tensor::scalar(1.0));
        store.adam_step(&grads, cfg).unwrap();
        assert_eq!(store.get("r").unwrap().data[0], 5.0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        store.init_uniform("a.w", vec![4, 3], 4, &mut rng);
        store.init_uniform("b", vec![7], 7, &mut rng);
        let mut grads = BTreeMap::new();
        grads.insert("a.w".to_string(), Tensor::new(vec![4, 3], vec![0.1; 12]).unwrap());
        store.adam_step(&grads, AdamConfig::with_lr(0.01)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        store.save(&path).unwrap();
        let loaded = ParamStore::load(&path).unwrap();
        assert_eq!(loaded.step(), store.step());
        for name in store.names() {
            assert_eq!(loaded.get(name).unwrap(), store.get(name).unwrap());
        }
        // Adam moments survive too: next step matches bit-for-bit
        let mut s1 = store;
        let mut s2 = loaded;
        s1.adam_step(&grads, AdamConfig::with_lr(0.01)).unwrap();
        s2.adam_step(&grads, AdamConfig::with_lr(0.01)).unwrap();
        assert_eq!(s1.get("a.w").unwrap(), s2.get("a.w").unwrap());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        store.init_uniform("w", vec![16, 16], 16, &mut rng);
        let bound = 1.0 / 4.0;
        for &x in &store.get("w").unwrap().data {
            assert!(x.abs() <= bound);
        }
    }
}
