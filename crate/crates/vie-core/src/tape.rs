//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Tape`] owns every tensor produced during one forward pass, in
//! execution order, so the topological order needed by backpropagation is
//! the record order itself. Trainable tensors are registered as named
//! parameters; [`Tape::backward`] walks the record once in reverse and
//! returns a gradient for every registered parameter (zero when the loss
//! does not depend on it).
//!
//! Supported operations and their conformance rules:
//!
//! - `add(a, b)` — identical shapes, or one operand a one-element tensor
//!   which is broadcast against the other (the only broadcasting rule).
//! - `scalar_mul(c, a)` — multiply every element by the constant `c`.
//! - `matmul(a, b)` — `(m,k)x(k,n) -> (m,n)`, `(m,k)x(k) -> (m)`, or
//!   `(k)x(k,n) -> (n)`.
//! - `relu(a)` — elementwise `max(0, x)`; the derivative at zero is 0.
//! - `mean_axis(a, axis)` — average over one axis, dropping it.
//! - `concat(parts, axis)` — concatenate along an existing axis; all other
//!   axes must agree.
//! - `temporal_conv1d(input, kernel)` — input `(t,f)`, kernel `(k,f,g)`,
//!   valid convolution with stride 1 producing `(t-k+1, g)`.
//! - `l2_normalize(a)` — `x / sqrt(sum(x^2) + 1e-12)` over the whole
//!   tensor; the epsilon guard is treated as a constant by the gradient.
//! - `gather_rows(a, indices)` — select slices along axis 0, duplicates
//!   allowed; the gradient scatter-adds.
//! - `dot(a, b)` — identical shapes, sum of elementwise products, scalar.
//! - `exp(a)`, `log(a)` — elementwise; `log` rejects non-positive input
//!   and `exp` rejects overflow so finite inputs give finite outputs.
//! - `sum(a)` — sum of all elements, scalar.

use std::collections::HashMap;

use crate::tensor::{Tensor, TensorError};

/// Epsilon added inside the square root of `l2_normalize`.
pub const L2_NORM_EPS: f64 = 1e-12;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf,
    Add { lhs: TensorId, rhs: TensorId },
    ScalarMul { factor: f64, input: TensorId },
    MatMul { lhs: TensorId, rhs: TensorId },
    Relu { input: TensorId },
    MeanAxis { input: TensorId, axis: usize },
    Concat { inputs: Vec<TensorId>, axis: usize },
    TemporalConv1d { input: TensorId, kernel: TensorId },
    L2Normalize { input: TensorId },
    GatherRows { input: TensorId, indices: Vec<usize> },
    Dot { lhs: TensorId, rhs: TensorId },
    Exp { input: TensorId },
    Log { input: TensorId },
    Sum { input: TensorId },
}

/// Gradients of one scalar loss with respect to every registered
/// parameter, keyed by parameter tensor id and by name.
#[derive(Debug)]
pub struct Gradients {
    by_id: HashMap<usize, Tensor>,
    names: Vec<(String, TensorId)>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.by_id.get(&id.0)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, id)| self.by_id.get(&id.0))
    }

    /// Parameter names in registration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|(n, _)| n.as_str())
    }
}

/// An append-only record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    nodes: Vec<Node>,
    params: Vec<(String, TensorId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, node: Node, value: Tensor) -> TensorId {
        let id = TensorId(self.values.len());
        self.values.push(value);
        self.nodes.push(node);
        id
    }

    /// Records a constant input. No gradient is produced for it.
    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.push(Node::Leaf, value)
    }

    /// Records a trainable parameter under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> TensorId {
        let id = self.push(Node::Leaf, value);
        self.params.push((name.into(), id));
        id
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn params(&self) -> &[(String, TensorId)] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId, TensorError> {
        let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
        let value = if a.shape() == b.shape() {
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| x + y)
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        } else if b.is_scalar() {
            let s = b.item();
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x + s).collect())?
        } else if a.is_scalar() {
            let s = a.item();
            Tensor::new(b.shape().to_vec(), b.data().iter().map(|x| x + s).collect())?
        } else {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        };
        Ok(self.push(Node::Add { lhs, rhs }, value))
    }

    pub fn scalar_mul(&mut self, factor: f64, input: TensorId) -> Result<TensorId, TensorError> {
        if !factor.is_finite() {
            return Err(TensorError::Domain {
                op: "scalar-mul",
                detail: format!("non-finite factor {factor}"),
            });
        }
        let a = &self.values[input.0];
        let value = Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|x| factor * x).collect(),
        )?;
        Ok(self.push(Node::ScalarMul { factor, input }, value))
    }

    pub fn matmul(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId, TensorError> {
        let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let value = match (a.shape(), b.shape()) {
            ([m, k], [k2, n]) if k == k2 => {
                Tensor::new(vec![*m, *n], matmul_raw(a.data(), b.data(), *m, *k, *n))
            }
            ([m, k], [k2]) if k == k2 => {
                Tensor::new(vec![*m], matmul_raw(a.data(), b.data(), *m, *k, 1))
            }
            ([k], [k2, n]) if k == k2 => {
                Tensor::new(vec![*n], matmul_raw(a.data(), b.data(), 1, *k, *n))
            }
            _ => return Err(mismatch()),
        }?;
        Ok(self.push(Node::MatMul { lhs, rhs }, value))
    }

    pub fn relu(&mut self, input: TensorId) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        let value = Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|x| x.max(0.0)).collect(),
        )?;
        Ok(self.push(Node::Relu { input }, value))
    }

    pub fn mean_axis(&mut self, input: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        if axis >= a.rank() {
            return Err(TensorError::AxisOutOfRange {
                op: "mean-over-axis",
                axis,
                rank: a.rank(),
            });
        }
        let (outer, len, inner) = split_axis(a.shape(), axis);
        let mut out_shape = a.shape().to_vec();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += a.data()[(o * len + l) * inner + i];
                }
            }
        }
        let scale = 1.0 / len as f64;
        for v in &mut data {
            *v *= scale;
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Node::MeanAxis { input, axis }, value))
    }

    pub fn concat(&mut self, inputs: &[TensorId], axis: usize) -> Result<TensorId, TensorError> {
        if inputs.is_empty() {
            return Err(TensorError::EmptyInputs { op: "concat" });
        }
        let first = &self.values[inputs[0].0];
        if axis >= first.rank() {
            return Err(TensorError::AxisOutOfRange {
                op: "concat-along-axis",
                axis,
                rank: first.rank(),
            });
        }
        let mut axis_total = 0;
        for id in inputs {
            let t = &self.values[id.0];
            let same_rank = t.rank() == first.rank();
            let same_rest = same_rank
                && t.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !same_rest {
                return Err(TensorError::ShapeMismatch {
                    op: "concat-along-axis",
                    lhs: first.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            axis_total += t.shape()[axis];
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = axis_total;
        let mut data = vec![0.0; outer * axis_total * inner];
        for o in 0..outer {
            let mut offset = 0;
            for id in inputs {
                let t = &self.values[id.0];
                let len = t.shape()[axis];
                let block = len * inner;
                let src = &t.data()[o * block..(o + 1) * block];
                let dst_start = (o * axis_total + offset) * inner;
                data[dst_start..dst_start + block].copy_from_slice(src);
                offset += len;
            }
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            Node::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
        ))
    }

    pub fn temporal_conv1d(
        &mut self,
        input: TensorId,
        kernel: TensorId,
    ) -> Result<TensorId, TensorError> {
        let (x, w) = (&self.values[input.0], &self.values[kernel.0]);
        let ([t, f], [k, fk, g]) = (x.shape(), w.shape()) else {
            return Err(TensorError::ShapeMismatch {
                op: "temporal-conv1d",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        };
        if f != fk || *k > *t {
            return Err(TensorError::ShapeMismatch {
                op: "temporal-conv1d",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let (t, f, k, g) = (*t, *f, *k, *g);
        let t_out = t - k + 1;
        let mut data = vec![0.0; t_out * g];
        for to in 0..t_out {
            for kk in 0..k {
                for ff in 0..f {
                    let xv = x.data()[(to + kk) * f + ff];
                    let wrow = &w.data()[(kk * f + ff) * g..(kk * f + ff + 1) * g];
                    let out = &mut data[to * g..(to + 1) * g];
                    for (ov, wv) in out.iter_mut().zip(wrow) {
                        *ov += xv * wv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![t_out, g], data)?;
        Ok(self.push(Node::TemporalConv1d { input, kernel }, value))
    }

    pub fn l2_normalize(&mut self, input: TensorId) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        let norm = l2_guarded_norm(a.data());
        let value = Tensor::new(
            a.shape().to_vec(),
            a.data().iter().map(|x| x / norm).collect(),
        )?;
        Ok(self.push(Node::L2Normalize { input }, value))
    }

    pub fn gather_rows(
        &mut self,
        input: TensorId,
        indices: &[usize],
    ) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        if a.rank() == 0 {
            return Err(TensorError::AxisOutOfRange {
                op: "gather-rows",
                axis: 0,
                rank: 0,
            });
        }
        let rows = a.shape()[0];
        let inner: usize = a.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &idx in indices {
            if idx >= rows {
                return Err(TensorError::RowOutOfRange {
                    op: "gather-rows",
                    index: idx,
                    rows,
                });
            }
            data.extend_from_slice(&a.data()[idx * inner..(idx + 1) * inner]);
        }
        let mut shape = a.shape().to_vec();
        shape[0] = indices.len();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            Node::GatherRows {
                input,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    pub fn dot(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId, TensorError> {
        let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "dot",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let value = Tensor::scalar(a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum());
        Ok(self.push(Node::Dot { lhs, rhs }, value))
    }

    pub fn exp(&mut self, input: TensorId) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        let data: Vec<f64> = a.data().iter().map(|x| x.exp()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "exp" });
        }
        let value = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.push(Node::Exp { input }, value))
    }

    pub fn log(&mut self, input: TensorId) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        if a.data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Domain {
                op: "log",
                detail: "requires strictly positive input".into(),
            });
        }
        let value = Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.ln()).collect())?;
        Ok(self.push(Node::Log { input }, value))
    }

    pub fn sum(&mut self, input: TensorId) -> Result<TensorId, TensorError> {
        let a = &self.values[input.0];
        let value = Tensor::scalar(a.data().iter().sum());
        Ok(self.push(Node::Sum { input }, value))
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Returns the gradient of `loss` with respect to every registered
    /// parameter; parameters the loss does not reach get a zero tensor.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients, TensorError> {
        let loss_val = &self.values[loss.0];
        if !loss_val.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_val.shape().to_vec(),
            });
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoints[loss.0] = Some(Tensor::new(loss_val.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            self.accumulate_inputs(idx, &grad, &mut adjoints);
            adjoints[idx] = Some(grad);
        }

        let mut by_id = HashMap::new();
        for (_, id) in &self.params {
            let g = adjoints[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.values[id.0].shape().to_vec()));
            by_id.insert(id.0, g);
        }
        Ok(Gradients {
            by_id,
            names: self.params.clone(),
        })
    }

    fn accumulate_inputs(&self, idx: usize, grad: &Tensor, adjoints: &mut [Option<Tensor>]) {
        let acc = |adjoints: &mut [Option<Tensor>], id: TensorId, update: Tensor| {
            match &mut adjoints[id.0] {
                Some(existing) => {
                    for (e, u) in existing.data_mut().iter_mut().zip(update.data()) {
                        *e += u;
                    }
                }
                slot @ None => *slot = Some(update),
            }
        };
        match &self.nodes[idx] {
            Node::Leaf => {}
            Node::Add { lhs, rhs } => {
                let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
                if a.shape() == b.shape() {
                    acc(adjoints, *lhs, grad.clone());
                    acc(adjoints, *rhs, grad.clone());
                } else if b.is_scalar() {
                    acc(adjoints, *lhs, grad.clone());
                    acc(adjoints, *rhs, sum_to_scalar_like(b, grad));
                } else {
                    acc(adjoints, *lhs, sum_to_scalar_like(a, grad));
                    acc(adjoints, *rhs, grad.clone());
                }
            }
            Node::ScalarMul { factor, input } => {
                let data = grad.data().iter().map(|g| factor * g).collect();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(grad.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Node::MatMul { lhs, rhs } => {
                let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
                let (m, k, n) = matmul_dims(a.shape(), b.shape());
                // dA = G B^T, dB = A^T G (with G reshaped to (m, n)).
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for j in 0..n {
                        let g = grad.data()[i * n + j];
                        for p in 0..k {
                            da[i * k + p] += g * b.data()[p * n + j];
                            db[p * n + j] += g * a.data()[i * k + p];
                        }
                    }
                }
                acc(
                    adjoints,
                    *lhs,
                    Tensor::new(a.shape().to_vec(), da).expect("lhs shape"),
                );
                acc(
                    adjoints,
                    *rhs,
                    Tensor::new(b.shape().to_vec(), db).expect("rhs shape"),
                );
            }
            Node::Relu { input } => {
                let x = &self.values[input.0];
                let data = x
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Node::MeanAxis { input, axis } => {
                let x = &self.values[input.0];
                let (outer, len, inner) = split_axis(x.shape(), *axis);
                let scale = 1.0 / len as f64;
                let mut data = vec![0.0; x.numel()];
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            data[(o * len + l) * inner + i] = grad.data()[o * inner + i] * scale;
                        }
                    }
                }
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), data).expect("input shape"),
                );
            }
            Node::Concat { inputs, axis } => {
                let first = &self.values[inputs[0].0];
                let (outer, _, inner) = split_axis(first.shape(), *axis);
                let axis_total: usize = inputs
                    .iter()
                    .map(|id| self.values[id.0].shape()[*axis])
                    .sum();
                let mut offset = 0;
                for id in inputs {
                    let t = &self.values[id.0];
                    let len = t.shape()[*axis];
                    let block = len * inner;
                    let mut data = vec![0.0; t.numel()];
                    for o in 0..outer {
                        let src_start = (o * axis_total + offset) * inner;
                        data[o * block..(o + 1) * block]
                            .copy_from_slice(&grad.data()[src_start..src_start + block]);
                    }
                    acc(
                        adjoints,
                        *id,
                        Tensor::new(t.shape().to_vec(), data).expect("part shape"),
                    );
                    offset += len;
                }
            }
            Node::TemporalConv1d { input, kernel } => {
                let (x, w) = (&self.values[input.0], &self.values[kernel.0]);
                let (t, f) = (x.shape()[0], x.shape()[1]);
                let (k, g) = (w.shape()[0], w.shape()[2]);
                let t_out = t - k + 1;
                let mut dx = vec![0.0; t * f];
                let mut dw = vec![0.0; k * f * g];
                for to in 0..t_out {
                    for kk in 0..k {
                        for ff in 0..f {
                            let xv = x.data()[(to + kk) * f + ff];
                            for gg in 0..g {
                                let gv = grad.data()[to * g + gg];
                                dx[(to + kk) * f + ff] += gv * w.data()[(kk * f + ff) * g + gg];
                                dw[(kk * f + ff) * g + gg] += gv * xv;
                            }
                        }
                    }
                }
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), dx).expect("input shape"),
                );
                acc(
                    adjoints,
                    *kernel,
                    Tensor::new(w.shape().to_vec(), dw).expect("kernel shape"),
                );
            }
            Node::L2Normalize { input } => {
                let x = &self.values[input.0];
                let norm = l2_guarded_norm(x.data());
                let gdotx: f64 = grad.data().iter().zip(x.data()).map(|(g, x)| g * x).sum();
                let n3 = norm * norm * norm;
                let data = grad
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, x)| g / norm - x * gdotx / n3)
                    .collect();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Node::GatherRows { input, indices } => {
                let x = &self.values[input.0];
                let inner: usize = x.shape()[1..].iter().product();
                let mut data = vec![0.0; x.numel()];
                for (pos, &idx) in indices.iter().enumerate() {
                    for i in 0..inner {
                        data[idx * inner + i] += grad.data()[pos * inner + i];
                    }
                }
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), data).expect("input shape"),
                );
            }
            Node::Dot { lhs, rhs } => {
                let g = grad.item();
                let (a, b) = (&self.values[lhs.0], &self.values[rhs.0]);
                let da = b.data().iter().map(|v| g * v).collect();
                let db = a.data().iter().map(|v| g * v).collect();
                acc(
                    adjoints,
                    *lhs,
                    Tensor::new(a.shape().to_vec(), da).expect("lhs shape"),
                );
                acc(
                    adjoints,
                    *rhs,
                    Tensor::new(b.shape().to_vec(), db).expect("rhs shape"),
                );
            }
            Node::Exp { input } => {
                let y = &self.values[idx];
                let data = y
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(y, g)| y * g)
                    .collect();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(y.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Node::Log { input } => {
                let x = &self.values[input.0];
                let data = x
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(x, g)| g / x)
                    .collect();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Node::Sum { input } => {
                let x = &self.values[input.0];
                let g = grad.item();
                acc(
                    adjoints,
                    *input,
                    Tensor::new(x.shape().to_vec(), vec![g; x.numel()]).expect("input shape"),
                );
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn matmul_dims(lhs: &[usize], rhs: &[usize]) -> (usize, usize, usize) {
    match (lhs, rhs) {
        ([m, k], [_, n]) => (*m, *k, *n),
        ([m, k], [_]) => (*m, *k, 1),
        ([k], [_, n]) => (1, *k, *n),
        _ => unreachable!("validated at record time"),
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn l2_guarded_norm(data: &[f64]) -> f64 {
    let sq: f64 = data.iter().map(|v| v * v).sum();
    (sq + L2_NORM_EPS).sqrt()
}

fn sum_to_scalar_like(template: &Tensor, grad: &Tensor) -> Tensor {
    Tensor::new(template.shape().to_vec(), vec![grad.data().iter().sum()])
        .expect("one-element tensor")
}
