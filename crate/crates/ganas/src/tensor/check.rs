//! Finite-difference gradient checking.
//!
//! `max_rel_err` rebuilds the loss under ±h perturbations of every parameter
//! element and compares the central difference against the tape gradient.
//! Layer tests and the acceptance suite drive this over randomized shapes.

use crate::error::Result;

use super::params::ParamStore;
use super::{Tape, Var};

pub const FD_H: f64 = 1e-4;

/// Max relative error between tape gradients and central finite differences
/// over every element of every parameter in `store`. `build` must construct
/// the scalar loss from scratch on the given tape.
pub fn max_rel_err<F>(store: &ParamStore, build: F) -> Result<f64>
where
    F: Fn(&Tape, &ParamStore) -> Result<Var>,
{
    let tape = Tape::new();
    let loss = build(&tape, store)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    for name in store.names() {
        let base = store.get(name)?.clone();
        let analytic = grads.get(name);
        for i in 0..base.data.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut perturbed = store.clone();
                let mut t = base.clone();
                t.data[i] += delta;
                perturbed.set(name, t)?;
                let tape = Tape::new();
                let loss = build(&tape, &perturbed)?;
                Ok(tape.value(loss).item())
            };
            let numeric = (eval(FD_H)? - eval(-FD_H)?) / (2.0 * FD_H);
            let a = analytic.map(|g| g.data[i]).unwrap_or(0.0);
            let denom = a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
