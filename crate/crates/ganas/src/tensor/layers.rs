//! Layers used by the generator and discriminator: linear / MLP stacks, a
//! direction-aware message-passing layer, and a GRU cell. Each layer is a
//! small descriptor that initializes its parameters into a [`ParamStore`]
//! and replays them onto a [`Tape`] at forward time.

use rand::Rng;

use crate::error::Result;

use super::params::ParamStore;
use super::{Tape, Tensor, Var};

/// `y = x·W + b`, rows are independent samples.
#[derive(Clone, Debug)]
pub struct Linear {
    pub prefix: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(prefix: &str, d_in: usize, d_out: usize) -> Self {
        Linear { prefix: prefix.to_string(), d_in, d_out }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_uniform(&format!("{}.w", self.prefix), vec![self.d_in, self.d_out], self.d_in, rng);
        store.init_uniform(&format!("{}.b", self.prefix), vec![self.d_out], self.d_in, rng);
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = store.leaf(tape, &format!("{}.w", self.prefix))?;
        let b = store.leaf(tape, &format!("{}.b", self.prefix))?;
        let xw = tape.matmul(x, w)?;
        if tape.shape(xw).len() == 1 {
            tape.add(xw, b)
        } else {
            tape.add_row(xw, b)
        }
    }
}

/// Linear stack with ReLU between layers and a linear final layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(prefix: &str, dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{prefix}.{i}"), w[0], w[1]))
            .collect();
        Mlp { layers }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for layer in &self.layers {
            layer.init(store, rng);
        }
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// One message-passing layer with direction-specific mean aggregation:
/// `h'_v = ReLU(W_self·h_v + W_in·mean_{u→v} h_u + W_out·mean_{v→u} h_u + b)`.
/// Nodes without in- (out-) neighbors use a zero aggregate.
#[derive(Clone, Debug)]
pub struct GnnLayer {
    pub prefix: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl GnnLayer {
    pub fn new(prefix: &str, d_in: usize, d_out: usize) -> Self {
        GnnLayer { prefix: prefix.to_string(), d_in, d_out }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for name in ["w_self", "w_in", "w_out"] {
            store.init_uniform(
                &format!("{}.{name}", self.prefix),
                vec![self.d_in, self.d_out],
                self.d_in,
                rng,
            );
        }
        store.init_uniform(&format!("{}.b", self.prefix), vec![self.d_out], self.d_in, rng);
    }

    /// `h` is `[n, d_in]`; `edges` are (src, dst) over `0..n`.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        h: Var,
        n: usize,
        edges: &[(usize, usize)],
    ) -> Result<Var> {
        let mut in_deg = vec![0usize; n];
        let mut out_deg = vec![0usize; n];
        for &(src, dst) in edges {
            assert!(src < n && dst < n, "edge out of range");
            out_deg[src] += 1;
            in_deg[dst] += 1;
        }
        // mean-normalized aggregation as constant matrices: row v of n_in
        // averages v's in-neighbors
        let mut n_in = vec![0.0; n * n];
        let mut n_out = vec![0.0; n * n];
        for &(src, dst) in edges {
            n_in[dst * n + src] = 1.0 / in_deg[dst] as f64;
            n_out[src * n + dst] = 1.0 / out_deg[src] as f64;
        }
        let n_in = tape.constant(Tensor::new(vec![n, n], n_in)?)?;
        let n_out = tape.constant(Tensor::new(vec![n, n], n_out)?)?;

        let w_self = store.leaf(tape, &format!("{}.w_self", self.prefix))?;
        let w_in = store.leaf(tape, &format!("{}.w_in", self.prefix))?;
        let w_out = store.leaf(tape, &format!("{}.w_out", self.prefix))?;
        let b = store.leaf(tape, &format!("{}.b", self.prefix))?;

        let own = tape.matmul(h, w_self)?;
        let agg_in = tape.matmul(tape.matmul(n_in, h)?, w_in)?;
        let agg_out = tape.matmul(tape.matmul(n_out, h)?, w_out)?;
        let sum = tape.add(tape.add(own, agg_in)?, agg_out)?;
        tape.relu(tape.add_row(sum, b)?)
    }
}

/// Standard GRU cell:
/// `z = σ(x·W_z + h·U_z + b_z)`, `r = σ(x·W_r + h·U_r + b_r)`,
/// `h̃ = tanh(x·W_h + (r∘h)·U_h + b_h)`, `h' = (1−z)∘h + z∘h̃`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub prefix: String,
    pub d_x: usize,
    pub d_h: usize,
}

impl GruCell {
    pub fn new(prefix: &str, d_x: usize, d_h: usize) -> Self {
        GruCell { prefix: prefix.to_string(), d_x, d_h }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for gate in ["z", "r", "h"] {
            store.init_uniform(&format!("{}.w_{gate}", self.prefix), vec![self.d_x, self.d_h], self.d_x, rng);
            store.init_uniform(&format!("{}.u_{gate}", self.prefix), vec![self.d_h, self.d_h], self.d_h, rng);
            store.init_uniform(&format!("{}.b_{gate}", self.prefix), vec![self.d_h], self.d_h, rng);
        }
    }

    /// `h_prev` and the result are `[n, d_h]`; `x` is `[n, d_x]`.
    pub fn forward(&self, tape: &Tape, store: &ParamStore, h_prev: Var, x: Var) -> Result<Var> {
        let gate = |g: &str| -> Result<(Var, Var, Var)> {
            Ok((
                store.leaf(tape, &format!("{}.w_{g}", self.prefix))?,
                store.leaf(tape, &format!("{}.u_{g}", self.prefix))?,
                store.leaf(tape, &format!("{}.b_{g}", self.prefix))?,
            ))
        };
        let pre = |tape: &Tape, x_in: Var, h_in: Var, w: Var, u: Var, b: Var| -> Result<Var> {
            let s = tape.add(tape.matmul(x_in, w)?, tape.matmul(h_in, u)?)?;
            if tape.shape(s).len() == 1 {
                tape.add(s, b)
            } else {
                tape.add_row(s, b)
            }
        };
        let (wz, uz, bz) = gate("z")?;
        let (wr, ur, br) = gate("r")?;
        let (wh, uh, bh) = gate("h")?;
        let z = tape.sigmoid(pre(tape, x, h_prev, wz, uz, bz)?)?;
        let r = tape.sigmoid(pre(tape, x, h_prev, wr, ur, br)?)?;
        let rh = tape.mul(r, h_prev)?;
        let cand = tape.tanh(pre(tape, x, rh, wh, uh, bh)?)?;
        // h' = (1 − z)∘h + z∘h̃
        let keep = tape.mul(tape.add_scalar(tape.neg(z)?, 1.0)?, h_prev)?;
        let update = tape.mul(z, cand)?;
        tape.add(keep, update)
    }
}
