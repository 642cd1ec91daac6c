//! Instance-recognition and local-aggregation objectives.
//!
//! Both losses are scalar tape expressions of the current sample
//! embedding; bank rows enter as constants, so gradients flow only
//! through the embedding (and the parameters behind it). All softmax
//! denominators are evaluated in log space with max subtraction: at
//! temperature 0.07 the score range is roughly +-14, and the shifted
//! form keeps every exponent non-positive regardless of temperature.
//!
//! The LA ratio `P(C n B | e) / P(B | e)` shares one global partition
//! sum, so it is computed as a difference of two log-sum-exp terms over
//! the respective index sets; the global term cancels and is never built.

use thiserror::Error;

use crate::embedding::{MemoryBank, SoftmaxParams};
use crate::neighbors::NeighborSets;
use crate::tape::{Tape, TensorId};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("loss: video index {index} out of range for bank of {count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("la loss: neighbor sets are required for the LA objective")]
    MissingNeighbors,
    #[error("la loss: background neighbor set is empty")]
    EmptyBackground,
    #[error("ir loss: sampled partition mode requires a denominator subset")]
    MissingSubset,
    #[error("loss: embedding dimension {got} does not match bank dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
}

/// Which objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    InstanceRecognition,
    LocalAggregation,
}

/// Whether the IR denominator uses all bank rows or a rescaled subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Exact,
    Sampled,
}

/// Loss configuration; `la_neighbors` carries the per-video neighbor
/// sets and is required only by the LA objective.
#[derive(Debug, Clone)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
    pub softmax: SoftmaxParams,
    pub partition: PartitionMode,
    pub la_neighbors: Option<NeighborSets>,
}

/// A scalar loss on the tape plus a flag for the degenerate LA fallback
/// (empty close-and-background intersection replaced by the self term).
#[derive(Debug, Clone, Copy)]
pub struct LossTerm {
    pub value: TensorId,
    pub degenerate: bool,
}

/// Sum of squared entries over all given parameters (the memory bank is
/// never among them). Zero constant when there are no parameters.
pub fn regularizer(tape: &mut Tape, params: &[TensorId]) -> Result<TensorId, TensorError> {
    let mut total: Option<TensorId> = None;
    for &p in params {
        let sq = tape.dot(p, p)?;
        total = Some(match total {
            None => sq,
            Some(acc) => tape.add(acc, sq)?,
        });
    }
    match total {
        Some(id) => Ok(id),
        None => Ok(tape.constant(Tensor::scalar(0.0))),
    }
}

/// Temperature-scaled bank scores of `embedding`: a rank-1 tensor with
/// one dot product per bank row.
pub fn bank_scores(
    tape: &mut Tape,
    embedding: TensorId,
    bank: &MemoryBank,
    params: &SoftmaxParams,
) -> Result<TensorId, LossError> {
    let e_dim = tape.value(embedding).numel();
    if e_dim != bank.dim() {
        return Err(LossError::DimMismatch {
            expected: bank.dim(),
            got: e_dim,
        });
    }
    let rows = tape.constant(bank.to_tensor());
    let raw = tape.matmul(rows, embedding)?;
    Ok(tape.scalar_mul(1.0 / params.temperature, raw)?)
}

/// log(sum_{j in indices} exp(scores_j)) with max subtraction, on tape.
/// The subtracted max is a constant, which leaves both the value and the
/// gradient of the log-sum-exp unchanged.
fn log_sum_exp_over(
    tape: &mut Tape,
    scores: TensorId,
    indices: &[usize],
) -> Result<TensorId, LossError> {
    let gathered = tape.gather_rows(scores, indices)?;
    let max = tape
        .value(gathered)
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = tape.constant(Tensor::scalar(-max));
    let shifted = tape.add(gathered, shift)?;
    let exps = tape.exp(shifted)?;
    let total = tape.sum(exps)?;
    let log_total = tape.log(total)?;
    let max_const = tape.constant(Tensor::scalar(max));
    Ok(tape.add(log_total, max_const)?)
}

fn add_regularization(
    tape: &mut Tape,
    data_term: TensorId,
    lambda: f64,
    theta_norm_sq: Option<TensorId>,
) -> Result<TensorId, LossError> {
    match theta_norm_sq {
        Some(reg) if lambda != 0.0 => {
            let scaled = tape.scalar_mul(lambda, reg)?;
            Ok(tape.add(data_term, scaled)?)
        }
        _ => Ok(data_term),
    }
}

/// Instance-recognition loss for video `i`:
/// `-log P(i | e) + lambda * |theta|^2`.
///
/// In sampled mode the denominator is the `n/q`-rescaled partial sum
/// over `denominator_subset`; the numerator term is always present.
pub fn ir_loss(
    tape: &mut Tape,
    i: usize,
    embedding: TensorId,
    bank: &MemoryBank,
    cfg: &LossConfig,
    denominator_subset: Option<&[usize]>,
    theta_norm_sq: Option<TensorId>,
) -> Result<LossTerm, LossError> {
    let n = bank.count();
    if i >= n {
        return Err(LossError::IndexOutOfRange { index: i, count: n });
    }
    let scores = bank_scores(tape, embedding, bank, &cfg.softmax)?;

    let numer = tape.gather_rows(scores, &[i])?;
    let numer = tape.sum(numer)?;

    let log_den = match cfg.partition {
        PartitionMode::Exact => {
            let all: Vec<usize> = (0..n).collect();
            log_sum_exp_over(tape, scores, &all)?
        }
        PartitionMode::Sampled => {
            let subset = denominator_subset.ok_or(LossError::MissingSubset)?;
            for &j in subset {
                if j >= n {
                    return Err(LossError::IndexOutOfRange { index: j, count: n });
                }
            }
            let lse = log_sum_exp_over(tape, scores, subset)?;
            let rescale = (n as f64 / subset.len() as f64).ln();
            let rescale = tape.constant(Tensor::scalar(rescale));
            tape.add(lse, rescale)?
        }
    };

    let neg_numer = tape.scalar_mul(-1.0, numer)?;
    let data_term = tape.add(log_den, neg_numer)?;
    let value = add_regularization(tape, data_term, cfg.lambda, theta_norm_sq)?;
    Ok(LossTerm {
        value,
        degenerate: false,
    })
}

/// Local-aggregation loss for video `i`:
/// `-log [P(C_i n B_i | e) / P(B_i | e)] + lambda * |theta|^2`.
///
/// When the intersection is empty the numerator falls back to the self
/// term `{i}`, keeping the loss finite; the returned flag marks this.
pub fn la_loss(
    tape: &mut Tape,
    i: usize,
    embedding: TensorId,
    bank: &MemoryBank,
    cfg: &LossConfig,
    theta_norm_sq: Option<TensorId>,
) -> Result<LossTerm, LossError> {
    let n = bank.count();
    if i >= n {
        return Err(LossError::IndexOutOfRange { index: i, count: n });
    }
    let sets = cfg.la_neighbors.as_ref().ok_or(LossError::MissingNeighbors)?;
    if sets.background.is_empty() {
        return Err(LossError::EmptyBackground);
    }
    for &j in sets.close.iter().chain(&sets.background) {
        if j >= n {
            return Err(LossError::IndexOutOfRange { index: j, count: n });
        }
    }

    let mut numerator_set = intersect_sorted(&sets.close, &sets.background);
    let degenerate = numerator_set.is_empty();
    if degenerate {
        numerator_set.push(i);
    }

    let scores = bank_scores(tape, embedding, bank, &cfg.softmax)?;
    let log_num = log_sum_exp_over(tape, scores, &numerator_set)?;
    let log_den = log_sum_exp_over(tape, scores, &sets.background)?;

    let neg_num = tape.scalar_mul(-1.0, log_num)?;
    let data_term = tape.add(log_den, neg_num)?;
    let value = add_regularization(tape, data_term, cfg.lambda, theta_norm_sq)?;
    Ok(LossTerm { value, degenerate })
}

/// Dispatch on `cfg.kind`.
pub fn sample_loss(
    tape: &mut Tape,
    i: usize,
    embedding: TensorId,
    bank: &MemoryBank,
    cfg: &LossConfig,
    denominator_subset: Option<&[usize]>,
    theta_norm_sq: Option<TensorId>,
) -> Result<LossTerm, LossError> {
    match cfg.kind {
        LossKind::InstanceRecognition => ir_loss(
            tape,
            i,
            embedding,
            bank,
            cfg,
            denominator_subset,
            theta_norm_sq,
        ),
        LossKind::LocalAggregation => la_loss(tape, i, embedding, bank, cfg, theta_norm_sq),
    }
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}
