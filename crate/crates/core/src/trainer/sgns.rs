//! Negative-sampling gradient steps.
//!
//! Two objective shapes share one kernel:
//!
//! * [`Objective::Pairwise`]: every (target, context) pair is a positive
//!   example, `σ(u_ctx · c_tgt) → 1`, with `k` sampled negatives per pair,
//!   `σ(u_neg · c_tgt) → 0`. Only the target's input row is updated.
//! * [`Objective::MeanContext`]: the mean of the context input rows `h`
//!   predicts the target's output row, `σ(u_tgt · h) → 1`, against `k`
//!   negatives. The gradient on `h` is split evenly over the context rows.
//!
//! Every step is an exact gradient-descent step: all scores are computed
//! from the parameters as they were before the step, so a step equals
//! `θ − lr · ∇L(θ)` even when ids repeat.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::matrix::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Pairwise,
    MeanContext,
}

/// Row storage the kernel reads from and writes to.
pub(crate) trait Rows {
    fn dim(&self) -> usize;
    fn read(&self, id: usize, out: &mut [f64]);
    fn add_scaled(&mut self, id: usize, alpha: f64, x: &[f64]);
}

impl Rows for EmbeddingMatrix {
    fn dim(&self) -> usize {
        EmbeddingMatrix::dim(self)
    }

    fn read(&self, id: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(id));
    }

    fn add_scaled(&mut self, id: usize, alpha: f64, x: &[f64]) {
        for (r, v) in self.row_mut(id).iter_mut().zip(x) {
            *r += alpha * v;
        }
    }
}

/// Read-only view of a frozen output layer.
pub(crate) struct Frozen<'a>(pub &'a EmbeddingMatrix);

impl Rows for Frozen<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn read(&self, id: usize, out: &mut [f64]) {
        out.copy_from_slice(self.0.row(id));
    }

    fn add_scaled(&mut self, _: usize, _: f64, _: &[f64]) {
        unreachable!("write to a frozen layer");
    }
}

/// Matrix shared between unsynchronized workers. Each element is read and
/// written atomically but read-modify-write sequences are not, so
/// concurrent updates may be lost.
#[derive(Clone, Copy)]
pub(crate) struct SharedRows<'a> {
    cells: &'a [AtomicU64],
    dim: usize,
}

impl<'a> SharedRows<'a> {
    /// `None` when the platform cannot view `f64` storage as atomics.
    pub(crate) fn new(matrix: &'a mut EmbeddingMatrix) -> Option<Self> {
        let dim = matrix.dim();
        let data = matrix.as_mut_slice();
        if !cfg!(target_has_atomic = "64")
            || std::mem::align_of::<AtomicU64>() > std::mem::align_of::<f64>()
                && (data.as_ptr() as usize) % std::mem::align_of::<AtomicU64>() != 0
        {
            return None;
        }
        // SAFETY: AtomicU64 and f64 have the same size, the pointer is
        // suitably aligned (checked above), and the exclusive borrow ensures
        // every access for 'a goes through the atomics.
        let cells = unsafe { std::slice::from_raw_parts(data.as_mut_ptr() as *const AtomicU64, data.len()) };
        Some(SharedRows { cells, dim })
    }
}

impl Rows for SharedRows<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self, id: usize, out: &mut [f64]) {
        let row = &self.cells[id * self.dim..(id + 1) * self.dim];
        for (o, c) in out.iter_mut().zip(row) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    fn add_scaled(&mut self, id: usize, alpha: f64, x: &[f64]) {
        let row = &self.cells[id * self.dim..(id + 1) * self.dim];
        for (c, v) in row.iter().zip(x) {
            let cur = f64::from_bits(c.load(Ordering::Relaxed));
            c.store((cur + alpha * v).to_bits(), Ordering::Relaxed);
        }
    }
}

/// Reusable buffers for the kernel.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    h: Vec<f64>,
    grad_h: Vec<f64>,
    row: Vec<f64>,
    outputs: Vec<(usize, f64)>,
}

impl Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Scratch {
            h: vec![0.0; dim],
            grad_h: vec![0.0; dim],
            row: vec![0.0; dim],
            outputs: Vec::new(),
        }
    }
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scores one output row against `h`: accumulates the descent direction
/// for `h` and records the coefficient for the later output update.
fn score_output<U: Rows>(u: &U, id: usize, label: f64, s: &mut Scratch) -> f64 {
    u.read(id, &mut s.row);
    let score = dot(&s.row, &s.h);
    let g = label - sigmoid(score);
    for (gh, r) in s.grad_h.iter_mut().zip(&s.row) {
        *gh += g * r;
    }
    s.outputs.push((id, g));
    if label > 0.5 {
        -log_sigmoid(score)
    } else {
        -log_sigmoid(-score)
    }
}

/// One step; ids must already be validated. Returns the loss before the step.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_kernel<C: Rows, U: Rows>(
    objective: Objective,
    target: usize,
    contexts: &[usize],
    negatives: &[usize],
    c: &mut C,
    u: &mut U,
    lr: f64,
    update_u: bool,
    s: &mut Scratch,
) -> f64 {
    if contexts.is_empty() {
        return 0.0;
    }
    s.grad_h.fill(0.0);
    s.outputs.clear();
    let mut loss = 0.0;
    match objective {
        Objective::Pairwise => {
            c.read(target, &mut s.h);
            let k = negatives.len() / contexts.len();
            for (i, &ctx) in contexts.iter().enumerate() {
                loss += score_output(u, ctx, 1.0, s);
                for &neg in &negatives[i * k..(i + 1) * k] {
                    loss += score_output(u, neg, 0.0, s);
                }
            }
        }
        Objective::MeanContext => {
            s.h.fill(0.0);
            for &ctx in contexts {
                c.read(ctx, &mut s.row);
                for (h, r) in s.h.iter_mut().zip(&s.row) {
                    *h += r;
                }
            }
            let inv = 1.0 / contexts.len() as f64;
            s.h.iter_mut().for_each(|h| *h *= inv);
            loss += score_output(u, target, 1.0, s);
            for &neg in negatives {
                loss += score_output(u, neg, 0.0, s);
            }
        }
    }
    if lr == 0.0 {
        return loss;
    }
    if update_u {
        for &(id, g) in &s.outputs {
            u.add_scaled(id, lr * g, &s.h);
        }
    }
    match objective {
        Objective::Pairwise => c.add_scaled(target, lr, &s.grad_h),
        Objective::MeanContext => {
            let alpha = lr / contexts.len() as f64;
            for &ctx in contexts {
                c.add_scaled(ctx, alpha, &s.grad_h);
            }
        }
    }
    loss
}

fn validate(
    objective: Objective,
    target: usize,
    contexts: &[usize],
    negatives: &[usize],
    c: &EmbeddingMatrix,
    u: &EmbeddingMatrix,
) -> Result<()> {
    if c.dim() != u.dim() || c.rows() != u.rows() {
        return Err(Error::Model(format!(
            "input layer is {}x{} but output layer is {}x{}",
            c.rows(),
            c.dim(),
            u.rows(),
            u.dim()
        )));
    }
    let size = c.rows();
    for &id in std::iter::once(&target).chain(contexts).chain(negatives) {
        if id >= size {
            return Err(Error::Index { index: id, size });
        }
    }
    if objective == Objective::Pairwise && !contexts.is_empty() && negatives.len() % contexts.len() != 0 {
        return Err(Error::Config(format!(
            "pairwise objective needs the same number of negatives per context; got {} for {} contexts",
            negatives.len(),
            contexts.len()
        )));
    }
    Ok(())
}

/// Applies one negative-sampling gradient step and returns the loss at the
/// parameters before the step.
///
/// For [`Objective::Pairwise`], `negatives` holds `k` ids per context, laid
/// out context by context. With `freeze_u` set, `u` is only read.
#[allow(clippy::too_many_arguments)]
pub fn sgns_step(
    objective: Objective,
    target: usize,
    contexts: &[usize],
    negatives: &[usize],
    c: &mut EmbeddingMatrix,
    u: &mut EmbeddingMatrix,
    lr: f64,
    freeze_u: bool,
) -> Result<f64> {
    validate(objective, target, contexts, negatives, c, u)?;
    let mut s = Scratch::new(c.dim());
    let loss = if freeze_u {
        step_kernel(
            objective,
            target,
            contexts,
            negatives,
            c,
            &mut Frozen(u),
            lr,
            false,
            &mut s,
        )
    } else {
        step_kernel(objective, target, contexts, negatives, c, u, lr, true, &mut s)
    };
    Ok(loss)
}

/// Loss of one training item, without modifying anything.
pub fn sgns_loss(
    objective: Objective,
    target: usize,
    contexts: &[usize],
    negatives: &[usize],
    c: &EmbeddingMatrix,
    u: &EmbeddingMatrix,
) -> Result<f64> {
    validate(objective, target, contexts, negatives, c, u)?;
    let mut s = Scratch::new(c.dim());
    let mut c = Frozen(c);
    let mut u = Frozen(u);
    Ok(step_kernel(
        objective, target, contexts, negatives, &mut c, &mut u, 0.0, false, &mut s,
    ))
}

/// Loss and its gradient with respect to both layers.
pub fn sgns_gradient(
    objective: Objective,
    target: usize,
    contexts: &[usize],
    negatives: &[usize],
    c: &EmbeddingMatrix,
    u: &EmbeddingMatrix,
) -> Result<(f64, EmbeddingMatrix, EmbeddingMatrix)> {
    validate(objective, target, contexts, negatives, c, u)?;
    // A unit step from zeroed copies of both layers leaves −∇ in the copies.
    let mut s = Scratch::new(c.dim());
    let mut c_probe = c.clone();
    let mut u_probe = u.clone();
    let loss = step_kernel(
        objective,
        target,
        contexts,
        negatives,
        &mut c_probe,
        &mut u_probe,
        1.0,
        true,
        &mut s,
    );
    let diff = |after: &EmbeddingMatrix, before: &EmbeddingMatrix| {
        let data = after
            .as_slice()
            .iter()
            .zip(before.as_slice())
            .map(|(a, b)| b - a)
            .collect();
        EmbeddingMatrix::from_vec(before.rows(), before.dim(), data)
    };
    Ok((loss, diff(&c_probe, c)?, diff(&u_probe, u)?))
}
