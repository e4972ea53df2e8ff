//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive op in execution order; [`Tape::backward`]
//! walks the record once in reverse, accumulating gradients into the named
//! parameter leaves. Tapes are single-use: a second backward call without
//! rebuilding the graph is an error. Every op checks its output for
//! NaN/Inf and fails instead of propagating poison.

pub mod check;
pub mod layers;
pub mod params;

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense tensor. Only the 1-D and 2-D cases are exercised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} wants {expect} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// (rows, cols) treating a 1-D tensor as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => (1, self.data.len()),
        }
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
}

enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    /// matrix + broadcast row vector
    AddRow(usize, usize),
    Sub(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalarConst(usize),
    Mul(usize, usize),
    Matmul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Square(usize),
    /// row-wise
    Softmax(usize),
    LogSoftmax(usize),
    Concat(Vec<usize>),
    Reshape(usize),
    MeanRows(usize),
    Sum(usize),
    Mean(usize),
    Stack(Vec<usize>),
    Gather(usize, Vec<usize>),
    EmbedLookup(usize, Vec<usize>),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
    /// targets are constants
    BceWithLogits(usize, Tensor),
}

struct Node {
    op: Op,
    value: Tensor,
    param_name: Option<String>,
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Constant => "constant",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Neg(..) => "neg",
        Op::Scale(..) => "scale",
        Op::AddScalarConst(..) => "add_scalar",
        Op::Mul(..) => "mul",
        Op::Matmul(..) => "matmul",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Relu(..) => "relu",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Softplus(..) => "softplus",
        Op::Square(..) => "square",
        Op::Softmax(..) => "softmax",
        Op::LogSoftmax(..) => "log_softmax",
        Op::Concat(..) => "concat",
        Op::Reshape(..) => "reshape",
        Op::MeanRows(..) => "mean_rows",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::Stack(..) => "stack",
        Op::Gather(..) => "gather",
        Op::EmbedLookup(..) => "embed_lookup",
        Op::Clamp(..) => "clamp",
        Op::Minimum(..) => "minimum",
        Op::BceWithLogits(..) => "bce_with_logits",
    }
}

/// The recording context. All ops are methods here; results are [`Var`]
/// handles into the tape.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), consumed: Cell::new(false) }
    }

    fn push(&self, op: Op, value: Tensor, param_name: Option<String>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value, param_name });
        Ok(Var { id: nodes.len() - 1 })
    }

    /// A value that never receives gradient.
    pub fn constant(&self, t: Tensor) -> Result<Var> {
        self.push(Op::Constant, t, None)
    }

    /// A named parameter leaf; gradients accumulate under `name`, across all
    /// leaves sharing that name on this tape.
    pub fn leaf(&self, name: &str, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, t, Some(name.to_string()))
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.id].value.shape.clone()
    }

    fn binary_same_shape(&self, a: Var, b: Var, op_name: &str) -> Result<(Tensor, Tensor)> {
        let nodes = self.nodes.borrow();
        let (ta, tb) = (&nodes[a.id].value, &nodes[b.id].value);
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch(format!(
                "{op_name}: {:?} vs {:?}",
                ta.shape, tb.shape
            )));
        }
        Ok((ta.clone(), tb.clone()))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same_shape(a, b, "add")?;
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        self.push(Op::Add(a.id, b.id), Tensor { shape: ta.shape, data }, None)
    }

    /// `[r, c] + [c]` with the row vector broadcast over every row.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let (ta, trow) = {
            let nodes = self.nodes.borrow();
            (nodes[a.id].value.clone(), nodes[row.id].value.clone())
        };
        let (r, c) = ta.dims2();
        if trow.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "add_row: {:?} vs row of {}",
                ta.shape,
                trow.len()
            )));
        }
        let mut data = ta.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += trow.data[j];
            }
        }
        self.push(Op::AddRow(a.id, row.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same_shape(a, b, "sub")?;
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        self.push(Op::Sub(a.id, b.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn neg(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| -x).collect();
        self.push(Op::Neg(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn scale(&self, a: Var, k: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x * k).collect();
        self.push(Op::Scale(a.id, k), Tensor { shape: ta.shape, data }, None)
    }

    pub fn add_scalar(&self, a: Var, k: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x + k).collect();
        self.push(Op::AddScalarConst(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same_shape(a, b, "mul")?;
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        self.push(Op::Mul(a.id, b.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = {
            let nodes = self.nodes.borrow();
            (nodes[a.id].value.clone(), nodes[b.id].value.clone())
        };
        let (m, k1) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k1 != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {:?} x {:?}",
                ta.shape, tb.shape
            )));
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for k in 0..k1 {
                let aik = ta.data[i * k1 + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += aik * tb.data[k * n + j];
                }
            }
        }
        let shape = if ta.shape.len() == 1 && tb.shape.len() == 2 {
            vec![n]
        } else {
            vec![m, n]
        };
        self.push(Op::Matmul(a.id, b.id), Tensor { shape, data }, None)
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push(Op::Sigmoid(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.max(0.0)).collect();
        self.push(Op::Relu(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.exp()).collect();
        self.push(Op::Exp(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn ln(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.ln()).collect();
        self.push(Op::Ln(a.id), Tensor { shape: ta.shape, data }, None)
    }

    /// Numerically stable `ln(1 + exp(x))`.
    pub fn softplus(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| x.max(0.0) + (-(x.abs())).exp().ln_1p()).collect();
        self.push(Op::Softplus(a.id), Tensor { shape: ta.shape, data }, None)
    }

    pub fn square(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x * x).collect();
        self.push(Op::Square(a.id), Tensor { shape: ta.shape, data }, None)
    }

    fn rowwise_softmax(t: &Tensor) -> Tensor {
        let (r, c) = t.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &t.data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        Tensor { shape: t.shape.clone(), data }
    }

    /// Row-wise softmax; 1-D input is one row.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let out = Tape::rowwise_softmax(&ta);
        self.push(Op::Softmax(a.id), out, None)
    }

    pub fn log_softmax(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &ta.data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                data[i * c + j] = row[j] - lse;
            }
        }
        self.push(Op::LogSoftmax(a.id), Tensor { shape: ta.shape, data }, None)
    }

    /// Concatenation of 1-D tensors.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        {
            let nodes = self.nodes.borrow();
            for v in parts {
                let t = &nodes[v.id].value;
                if t.shape.len() != 1 {
                    return Err(Error::ShapeMismatch(format!(
                        "concat wants 1-D parts, got {:?}",
                        t.shape
                    )));
                }
                data.extend_from_slice(&t.data);
            }
        }
        let len = data.len();
        self.push(
            Op::Concat(parts.iter().map(|v| v.id).collect()),
            Tensor { shape: vec![len], data },
            None,
        )
    }

    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        let want: usize = shape.iter().product();
        if want != ta.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                ta.shape, shape
            )));
        }
        self.push(Op::Reshape(a.id), Tensor { shape, data: ta.data }, None)
    }

    /// Column-wise mean over rows: `[r, c] -> [c]`.
    pub fn mean_rows(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2();
        if r == 0 {
            return Err(Error::ShapeMismatch("mean_rows of empty tensor".into()));
        }
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += ta.data[i * c + j];
            }
        }
        for v in &mut data {
            *v /= r as f64;
        }
        self.push(Op::MeanRows(a.id), Tensor { shape: vec![c], data }, None)
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        self.push(Op::Sum(a.id), Tensor::scalar(ta.data.iter().sum()), None)
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.is_empty() {
            return Err(Error::ShapeMismatch("mean of empty tensor".into()));
        }
        let m = ta.data.iter().sum::<f64>() / ta.len() as f64;
        self.push(Op::Mean(a.id), Tensor::scalar(m), None)
    }

    /// Stacks scalar vars into one 1-D tensor.
    pub fn stack(&self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(parts.len());
        {
            let nodes = self.nodes.borrow();
            for v in parts {
                let t = &nodes[v.id].value;
                if !t.is_scalar() {
                    return Err(Error::ShapeMismatch("stack wants scalars".into()));
                }
                data.push(t.data[0]);
            }
        }
        let len = data.len();
        self.push(
            Op::Stack(parts.iter().map(|v| v.id).collect()),
            Tensor { shape: vec![len], data },
            None,
        )
    }

    /// Elements of a 1-D tensor by index.
    pub fn gather(&self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let mut data = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= ta.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gather index {i} out of {}",
                    ta.len()
                )));
            }
            data.push(ta.data[i]);
        }
        let len = data.len();
        self.push(Op::Gather(a.id, indices.to_vec()), Tensor { shape: vec![len], data }, None)
    }

    /// Rows of a 2-D tensor by index; the standard embedding lookup.
    pub fn embed_lookup(&self, table: Var, indices: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (r, c) = tt.dims2();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::ShapeMismatch(format!("embed index {i} out of {r}")));
            }
            data.extend_from_slice(&tt.data[i * c..(i + 1) * c]);
        }
        self.push(
            Op::EmbedLookup(table.id, indices.to_vec()),
            Tensor { shape: vec![indices.len(), c], data },
            None,
        )
    }

    /// Gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(Op::Clamp(a.id, lo, hi), Tensor { shape: ta.shape, data }, None)
    }

    pub fn minimum(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.binary_same_shape(a, b, "minimum")?;
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x.min(*y)).collect();
        self.push(Op::Minimum(a.id, b.id), Tensor { shape: ta.shape, data }, None)
    }

    /// Per-element binary cross-entropy on logits against constant targets:
    /// `softplus(z) - t·z`, computed in the overflow-safe arrangement.
    pub fn bce_with_logits(&self, logits: Var, targets: &Tensor) -> Result<Var> {
        let tz = self.value(logits);
        if tz.shape != targets.shape {
            return Err(Error::ShapeMismatch(format!(
                "bce: {:?} vs {:?}",
                tz.shape, targets.shape
            )));
        }
        let data = tz
            .data
            .iter()
            .zip(&targets.data)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-(z.abs())).exp().ln_1p())
            .collect();
        self.push(
            Op::BceWithLogits(logits.id, targets.clone()),
            Tensor { shape: tz.shape, data },
            None,
        )
    }

    /// Reverse pass from a scalar loss. Consumes the tape's single use and
    /// returns gradients keyed by leaf name.
    pub fn backward(&self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        if !nodes[loss.id].value.is_scalar() {
            return Err(Error::NonScalarLoss(nodes[loss.id].value.shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));

        let acc = |grads: &mut Vec<Option<Tensor>>, id: usize, shape: &[usize], add: &[f64]| {
            match &mut grads[id] {
                Some(g) => {
                    for (gi, ai) in g.data.iter_mut().zip(add) {
                        *gi += ai;
                    }
                }
                slot @ None => {
                    *slot = Some(Tensor { shape: shape.to_vec(), data: add.to_vec() });
                }
            }
        };

        for id in (0..nodes.len()).rev() {
            let Some(gout) = grads[id].clone() else { continue };
            let node = &nodes[id];
            let val = &node.value;
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::Add(a, b) => {
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &gout.data);
                    let sb = nodes[*b].value.shape.clone();
                    acc(&mut grads, *b, &sb, &gout.data);
                }
                Op::AddRow(a, row) => {
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &gout.data);
                    let (r, c) = nodes[*a].value.dims2();
                    let mut rg = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            rg[j] += gout.data[i * c + j];
                        }
                    }
                    let sr = nodes[*row].value.shape.clone();
                    acc(&mut grads, *row, &sr, &rg);
                }
                Op::Sub(a, b) => {
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &gout.data);
                    let neg: Vec<f64> = gout.data.iter().map(|g| -g).collect();
                    let sb = nodes[*b].value.shape.clone();
                    acc(&mut grads, *b, &sb, &neg);
                }
                Op::Neg(a) => {
                    let neg: Vec<f64> = gout.data.iter().map(|g| -g).collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &neg);
                }
                Op::Scale(a, k) => {
                    let g: Vec<f64> = gout.data.iter().map(|g| g * k).collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::AddScalarConst(a) => {
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &gout.data);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> =
                        gout.data.iter().zip(&nodes[*b].value.data).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> =
                        gout.data.iter().zip(&nodes[*a].value.data).map(|(g, x)| g * x).collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &ga);
                    let sb = nodes[*b].value.shape.clone();
                    acc(&mut grads, *b, &sb, &gb);
                }
                Op::Matmul(a, b) => {
                    let ta = &nodes[*a].value;
                    let tb = &nodes[*b].value;
                    let (m, k) = ta.dims2();
                    let (_, n) = tb.dims2();
                    // dA = G·Bᵀ
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gout.data[i * n + j] * tb.data[p * n + j];
                            }
                            ga[i * k + p] = s;
                        }
                    }
                    // dB = Aᵀ·G
                    let mut gb = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += ta.data[i * k + p] * gout.data[i * n + j];
                            }
                            gb[p * n + j] = s;
                        }
                    }
                    let sa = ta.shape.clone();
                    acc(&mut grads, *a, &sa, &ga);
                    let sb = tb.shape.clone();
                    acc(&mut grads, *b, &sb, &gb);
                }
                Op::Sigmoid(a) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&val.data)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Tanh(a) => {
                    let g: Vec<f64> =
                        gout.data.iter().zip(&val.data).map(|(g, y)| g * (1.0 - y * y)).collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Relu(a) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Exp(a) => {
                    let g: Vec<f64> =
                        gout.data.iter().zip(&val.data).map(|(g, y)| g * y).collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Ln(a) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .map(|(g, x)| g / x)
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Softplus(a) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .map(|(g, &x)| g / (1.0 + (-x).exp()))
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Square(a) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .map(|(g, x)| g * 2.0 * x)
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Softmax(a) => {
                    let (r, c) = val.dims2();
                    let mut g = vec![0.0; r * c];
                    for i in 0..r {
                        let y = &val.data[i * c..(i + 1) * c];
                        let go = &gout.data[i * c..(i + 1) * c];
                        let dot: f64 = y.iter().zip(go).map(|(y, g)| y * g).sum();
                        for j in 0..c {
                            g[i * c + j] = y[j] * (go[j] - dot);
                        }
                    }
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::LogSoftmax(a) => {
                    let (r, c) = val.dims2();
                    let mut g = vec![0.0; r * c];
                    for i in 0..r {
                        let ly = &val.data[i * c..(i + 1) * c];
                        let go = &gout.data[i * c..(i + 1) * c];
                        let gsum: f64 = go.iter().sum();
                        for j in 0..c {
                            g[i * c + j] = go[j] - ly[j].exp() * gsum;
                        }
                    }
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = nodes[p].value.len();
                        let sp = nodes[p].value.shape.clone();
                        acc(&mut grads, p, &sp, &gout.data[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Reshape(a) => {
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &gout.data);
                }
                Op::MeanRows(a) => {
                    let (r, c) = nodes[*a].value.dims2();
                    let mut g = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            g[i * c + j] = gout.data[j] / r as f64;
                        }
                    }
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Sum(a) => {
                    let n = nodes[*a].value.len();
                    let g = vec![gout.data[0]; n];
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Mean(a) => {
                    let n = nodes[*a].value.len();
                    let g = vec![gout.data[0] / n as f64; n];
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Stack(parts) => {
                    for (i, &p) in parts.iter().enumerate() {
                        acc(&mut grads, p, &[1], &[gout.data[i]]);
                    }
                }
                Op::Gather(a, indices) => {
                    let n = nodes[*a].value.len();
                    let mut g = vec![0.0; n];
                    for (out_i, &src) in indices.iter().enumerate() {
                        g[src] += gout.data[out_i];
                    }
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::EmbedLookup(a, indices) => {
                    let (_, c) = nodes[*a].value.dims2();
                    let mut g = vec![0.0; nodes[*a].value.len()];
                    for (out_i, &src) in indices.iter().enumerate() {
                        for j in 0..c {
                            g[src * c + j] += gout.data[out_i * c + j];
                        }
                    }
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Clamp(a, lo, hi) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .map(|(g, &x)| if x > *lo && x < *hi { *g } else { 0.0 })
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
                Op::Minimum(a, b) => {
                    let ta = &nodes[*a].value;
                    let tb = &nodes[*b].value;
                    let mut ga = vec![0.0; ta.len()];
                    let mut gb = vec![0.0; tb.len()];
                    for i in 0..ta.len() {
                        if ta.data[i] <= tb.data[i] {
                            ga[i] = gout.data[i];
                        } else {
                            gb[i] = gout.data[i];
                        }
                    }
                    let sa = ta.shape.clone();
                    acc(&mut grads, *a, &sa, &ga);
                    let sb = tb.shape.clone();
                    acc(&mut grads, *b, &sb, &gb);
                }
                Op::BceWithLogits(a, targets) => {
                    let g: Vec<f64> = gout
                        .data
                        .iter()
                        .zip(&nodes[*a].value.data)
                        .zip(&targets.data)
                        .map(|((g, &z), &t)| g * (1.0 / (1.0 + (-z).exp()) - t))
                        .collect();
                    let sa = nodes[*a].value.shape.clone();
                    acc(&mut grads, *a, &sa, &g);
                }
            }
        }

        let mut out: BTreeMap<String, Tensor> = BTreeMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if let (Some(name), Some(grad)) = (&node.param_name, &grads[id]) {
                if !grad.all_finite() {
                    return Err(Error::NonFinite("backward"));
                }
                match out.get_mut(name) {
                    Some(existing) => {
                        for (e, g) in existing.data.iter_mut().zip(&grad.data) {
                            *e += g;
                        }
                    }
                    None => {
                        out.insert(name.clone(), grad.clone());
                    }
                }
            }
        }
        Ok(out)
    }
}
