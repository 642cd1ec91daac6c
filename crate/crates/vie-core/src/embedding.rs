//! The unit-sphere embedding space and its probability model.
//!
//! Embeddings live on the sphere `S^D` in `R^{D+1}`. A [`MemoryBank`]
//! keeps one running-average embedding per training video; the
//! probability that a feature is recognized as video `i` is a
//! temperature-scaled softmax of bank dot products. The bank is never
//! differentiated through: it is updated out of graph after each step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::tensor::Tensor;

/// Checkpoint entry name for the bank rows. The bank is persisted next
/// to the encoder parameters but is never part of the gradient registry.
pub const BANK_CHECKPOINT_KEY: &str = "memory_bank.rows";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("normalize: zero vector cannot be projected onto the sphere")]
    ZeroVector,
    #[error("embedding: expected a unit vector, norm was {norm}")]
    NotUnit { norm: f64 },
    #[error("memory bank: index {index} out of range for {count} rows")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("memory bank: momentum must lie in (0, 1], got {0}")]
    BadMomentum(f64),
    #[error("memory bank: dimension mismatch ({expected} vs {got})")]
    DimMismatch { expected: usize, got: usize },
    #[error("softmax params: temperature must lie in (0, 1], got {0}")]
    BadTemperature(f64),
    #[error("softmax params: subset size {q} out of range [1, {n}]")]
    BadSubsetSize { q: usize, n: usize },
    #[error("set probability: empty index set")]
    EmptySet,
}

/// A point on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    coords: Vec<f64>,
}

impl Embedding {
    /// Accepts a vector that is already unit-norm within 1e-6.
    pub fn from_unit(coords: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = l2(&coords);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(EmbeddingError::NotUnit { norm });
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.coords, other.coords())
    }
}

/// Projects a vector onto the unit sphere. Errors on the zero vector
/// (and anything indistinguishable from it).
pub fn normalize(v: &[f64]) -> Result<Embedding, EmbeddingError> {
    let norm = l2(v);
    if norm <= 1e-12 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(Embedding {
        coords: v.iter().map(|x| x / norm).collect(),
    })
}

/// Temperature and denominator-subset size for the instance softmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxParams {
    pub temperature: f64,
    pub subset_size: usize,
}

impl SoftmaxParams {
    pub fn new(temperature: f64, subset_size: usize) -> Result<Self, EmbeddingError> {
        if !(temperature > 0.0 && temperature <= 1.0) {
            return Err(EmbeddingError::BadTemperature(temperature));
        }
        if subset_size == 0 {
            return Err(EmbeddingError::BadSubsetSize {
                q: subset_size,
                n: usize::MAX,
            });
        }
        Ok(Self {
            temperature,
            subset_size,
        })
    }
}

/// Per-video running-average embeddings, every row kept on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    rows: Vec<f64>,
    dim: usize,
    momentum: f64,
}

impl MemoryBank {
    /// Fresh bank of `count` rows drawn independently from the uniform
    /// distribution on the sphere (normal draws, normalized).
    /// Deterministic per seed.
    pub fn init(count: usize, dim: usize, momentum: f64, seed: u64) -> Result<Self, EmbeddingError> {
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(EmbeddingError::BadMomentum(momentum));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(count * dim);
        for _ in 0..count {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                if let Ok(e) = normalize(&v) {
                    rows.extend_from_slice(e.coords());
                    break;
                }
            }
        }
        Ok(Self {
            rows,
            dim,
            momentum,
        })
    }

    pub fn from_rows(rows: Vec<f64>, dim: usize, momentum: f64) -> Result<Self, EmbeddingError> {
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(EmbeddingError::BadMomentum(momentum));
        }
        if dim == 0 || rows.len() % dim != 0 {
            return Err(EmbeddingError::DimMismatch {
                expected: dim,
                got: rows.len(),
            });
        }
        Ok(Self {
            rows,
            dim,
            momentum,
        })
    }

    pub fn count(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn row(&self, i: usize) -> Result<&[f64], EmbeddingError> {
        if i >= self.count() {
            return Err(EmbeddingError::IndexOutOfRange {
                index: i,
                count: self.count(),
            });
        }
        Ok(&self.rows[i * self.dim..(i + 1) * self.dim])
    }

    /// Momentum update of a single row:
    /// `row_i <- normalize((1 - mu) * row_i + mu * e)`.
    pub fn update(&mut self, i: usize, e: &Embedding) -> Result<(), EmbeddingError> {
        if e.dim() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                got: e.dim(),
            });
        }
        let mu = self.momentum;
        let blended: Vec<f64> = self
            .row(i)?
            .iter()
            .zip(e.coords())
            .map(|(r, e)| (1.0 - mu) * r + mu * e)
            .collect();
        let unit = normalize(&blended)?;
        self.rows[i * self.dim..(i + 1) * self.dim].copy_from_slice(unit.coords());
        Ok(())
    }

    /// All rows as an `(N, dim)` tensor, for use as a constant on a tape
    /// or as a checkpoint entry.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.count(), self.dim], self.rows.clone()).expect("consistent layout")
    }

    pub fn from_tensor(t: &Tensor, momentum: f64) -> Result<Self, EmbeddingError> {
        let [_, dim] = t.shape() else {
            return Err(EmbeddingError::DimMismatch {
                expected: 2,
                got: t.rank(),
            });
        };
        Self::from_rows(t.data().to_vec(), *dim, momentum)
    }

    /// Dot products of every row against `e`, divided by `temperature`.
    pub fn scores(&self, e: &Embedding, temperature: f64) -> Vec<f64> {
        (0..self.count())
            .map(|i| dot(&self.rows[i * self.dim..(i + 1) * self.dim], e.coords()) / temperature)
            .collect()
    }
}

/// log(sum(exp(xs))) with max subtraction. Callers guarantee non-empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Uniform random subset of `{0..n}` of size `q`, returned in ascending
/// order. With `q == n` this is the identity permutation, which makes
/// the subset estimator reduce bitwise to the exact computation.
pub fn draw_subset(n: usize, q: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, EmbeddingError> {
    if q == 0 || q > n {
        return Err(EmbeddingError::BadSubsetSize { q, n });
    }
    // Partial Fisher-Yates over an index pool, then sort.
    let mut pool: Vec<usize> = (0..n).collect();
    let mut picked = Vec::with_capacity(q);
    for step in 0..q {
        let j = step + rand::Rng::random_range(rng, 0..(n - step));
        pool.swap(step, j);
        picked.push(pool[step]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Log of the (possibly subset-estimated) softmax denominator.
///
/// `subset = None` sums all `n` terms. Otherwise the partial sum over the
/// subset is rescaled by `n / q`, an unbiased estimate of the full sum.
pub fn log_partition(scores: &[f64], subset: Option<&[usize]>) -> Result<f64, EmbeddingError> {
    match subset {
        None => Ok(log_sum_exp(scores)),
        Some(ids) => {
            if ids.is_empty() || ids.len() > scores.len() {
                return Err(EmbeddingError::BadSubsetSize {
                    q: ids.len(),
                    n: scores.len(),
                });
            }
            for &j in ids {
                if j >= scores.len() {
                    return Err(EmbeddingError::IndexOutOfRange {
                        index: j,
                        count: scores.len(),
                    });
                }
            }
            let picked: Vec<f64> = ids.iter().map(|&j| scores[j]).collect();
            let rescale = (scores.len() as f64 / ids.len() as f64).ln();
            Ok(rescale + log_sum_exp(&picked))
        }
    }
}

/// Probability that feature `e` is recognized as video `i` (exact mode):
/// `exp(s_i) / sum_j exp(s_j)` with `s_j = <row_j, e> / temperature`.
pub fn instance_probability(
    i: usize,
    e: &Embedding,
    bank: &MemoryBank,
    params: &SoftmaxParams,
) -> Result<f64, EmbeddingError> {
    instance_probability_with_subset(i, e, bank, params, None)
}

/// Instance probability with an explicit denominator subset (estimated
/// mode). The numerator term `s_i` is always present regardless of
/// whether `i` was drawn into the subset.
pub fn instance_probability_with_subset(
    i: usize,
    e: &Embedding,
    bank: &MemoryBank,
    params: &SoftmaxParams,
    subset: Option<&[usize]>,
) -> Result<f64, EmbeddingError> {
    if i >= bank.count() {
        return Err(EmbeddingError::IndexOutOfRange {
            index: i,
            count: bank.count(),
        });
    }
    let scores = bank.scores(e, params.temperature);
    let log_den = log_partition(&scores, subset)?;
    Ok((scores[i] - log_den).exp())
}

/// Instance probability with a freshly drawn `Q`-subset denominator.
pub fn instance_probability_estimated(
    i: usize,
    e: &Embedding,
    bank: &MemoryBank,
    params: &SoftmaxParams,
    rng: &mut ChaCha8Rng,
) -> Result<f64, EmbeddingError> {
    let subset = draw_subset(bank.count(), params.subset_size, rng)?;
    instance_probability_with_subset(i, e, bank, params, Some(&subset))
}

/// Probability that `e` is recognized as belonging to the index set `A`:
/// the sum of instance probabilities over `A`, with one shared
/// denominator.
pub fn set_probability(
    set: &[usize],
    e: &Embedding,
    bank: &MemoryBank,
    params: &SoftmaxParams,
) -> Result<f64, EmbeddingError> {
    if set.is_empty() {
        return Err(EmbeddingError::EmptySet);
    }
    for &i in set {
        if i >= bank.count() {
            return Err(EmbeddingError::IndexOutOfRange {
                index: i,
                count: bank.count(),
            });
        }
    }
    let scores = bank.scores(e, params.temperature);
    let numer: Vec<f64> = set.iter().map(|&i| scores[i]).collect();
    Ok((log_sum_exp(&numer) - log_sum_exp(&scores)).exp())
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
