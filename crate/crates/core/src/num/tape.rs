//! Reverse-mode autodiff over a single-threaded computation tape.
//!
//! Every operation eagerly computes its value, records its inputs plus any
//! saved state (masks, indices), and returns a [`Var`] handle. [`Tape::backward`]
//! walks the nodes in reverse, dispatching one explicit gradient rule per
//! operation, and returns the accumulated gradients for every node that can
//! influence a parameter. Subgraphs that cannot reach a parameter
//! (`needs_grad == false`, e.g. frozen embedding tables) are skipped.
//!
//! A tape is deliberately not `Sync`: one tape belongs to one example on one
//! thread. Batch parallelism, if wanted, runs independent tapes.

use rand_core::RngCore;

use super::tensor::TensorData;
use super::{unit_f64, NumError, Scalar};

/// Probabilities below this are clamped before taking logs, both in the loss
/// value and in its gradient.
pub const PROB_EPS: f64 = 1e-10;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug)]
enum Op<S: Scalar> {
    Leaf,
    /// `a · b`, or `aᵀ · b` when `ta` is set; `a` is a matrix, `b` a vector
    /// or matrix.
    MatMul { a: Var, b: Var, ta: bool },
    Add { a: Var, b: Var },
    AddN { parts: Vec<Var> },
    /// Elementwise product.
    Mul { a: Var, b: Var },
    /// `x * mul + add` with constant coefficients; only the slope matters to
    /// the backward pass.
    Affine { x: Var, mul: f64 },
    /// Tensor scaled by a one-element tensor.
    MulScalar { x: Var, s: Var },
    Concat { parts: Vec<Var> },
    Slice { x: Var, start: usize },
    /// Vectors of equal length stacked into matrix rows.
    Stack { rows: Vec<Var> },
    Tanh { x: Var },
    Sigmoid { x: Var },
    /// Masked positions (mask false) are exactly zero in the output.
    SoftmaxMasked { x: Var, mask: Option<Vec<bool>> },
    EmbedRow { table: Var, row: usize },
    /// Mask entries are 0 or 1/(1-rate), pre-scaled at sampling time.
    Dropout { x: Var, mask: Vec<S> },
    PadZeros { x: Var },
    /// `out[idx[k]] += src[k]`; `None` entries contribute nothing.
    ScatterAdd { src: Var, idx: Vec<Option<usize>> },
    /// `-ln(max(x[index], PROB_EPS))`.
    NegLogPick { x: Var, index: usize },
    SumAll { x: Var },
}

struct Node<S: Scalar> {
    value: TensorData<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
pub struct Gradients<S: Scalar> {
    slots: Vec<Option<TensorData<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&TensorData<S>> {
        self.slots[v.idx()].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<TensorData<S>> {
        self.slots[v.idx()].take()
    }
}

/// Single-threaded computation tape; see the module docs.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The forward value of a node.
    pub fn value(&self, v: Var) -> &TensorData<S> {
        &self.nodes[v.idx()].value
    }

    fn push(&mut self, value: TensorData<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.idx()].needs_grad
    }

    /// Trainable input (parameters).
    pub fn param(&mut self, value: TensorData<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input (data, frozen tables, fixed gates).
    pub fn constant(&mut self, value: TensorData<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, v: f64) -> Var {
        self.constant(TensorData::scalar(S::from_f64(v)))
    }

    /// `a · b` for matrix `a` and vector or matrix `b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.matmul_impl(a, b, false)
    }

    /// `aᵀ · b` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, ta: bool) -> Result<Var, NumError> {
        let value = matmul_value(self.value(a), ta, self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul { a, b, ta }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumError::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut out = va.clone();
        out.add_assign(vb)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    /// Sum of same-shaped tensors.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let Some((&first, rest)) = parts.split_first() else {
            return Err(NumError::EmptySequence { op: "add_n" });
        };
        let mut out = self.value(first).clone();
        for &p in rest {
            let v = self.value(p);
            if v.shape() != out.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "add_n",
                    lhs: out.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            out.add_assign(v)?;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::AddN { parts: parts.to_vec() }, needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumError::ShapeMismatch {
                op: "mul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = TensorData::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    /// `x * mul + add` elementwise with constant coefficients.
    pub fn affine(&mut self, x: Var, mul: f64, add: f64) -> Var {
        let (m, c) = (S::from_f64(mul), S::from_f64(add));
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| v * m + c).collect();
        let value = TensorData::new(vx.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Affine { x, mul }, needs)
    }

    /// Whole tensor scaled by a one-element tensor (e.g. a gate).
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var, NumError> {
        let vs = self.value(s);
        if !vs.is_scalar() {
            return Err(NumError::BadShape {
                op: "mul_scalar",
                expected: "one-element scale",
                shape: vs.shape().to_vec(),
            });
        }
        let sv = vs.item();
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| v * sv).collect();
        let value = TensorData::new(vx.shape().to_vec(), data)?;
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(value, Op::MulScalar { x, s }, needs))
    }

    /// Concatenation of vectors into one longer vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        if parts.is_empty() {
            return Err(NumError::EmptySequence { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if !v.is_vector() {
                return Err(NumError::BadShape {
                    op: "concat",
                    expected: "vector parts",
                    shape: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            TensorData::vector(data),
            Op::Concat { parts: parts.to_vec() },
            needs,
        ))
    }

    /// Contiguous sub-vector `x[start .. start + len]`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let vx = self.value(x);
        if !vx.is_vector() {
            return Err(NumError::BadShape {
                op: "slice",
                expected: "vector input",
                shape: vx.shape().to_vec(),
            });
        }
        if start + len > vx.len() {
            return Err(NumError::IndexOutOfBounds {
                op: "slice",
                index: start + len,
                bound: vx.len(),
            });
        }
        let value = TensorData::vector(vx.data()[start..start + len].to_vec());
        let needs = self.needs(x);
        Ok(self.push(value, Op::Slice { x, start }, needs))
    }

    /// Equal-length vectors stacked into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var, NumError> {
        if rows.is_empty() {
            return Err(NumError::EmptySequence { op: "stack" });
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let v = self.value(r);
            if !v.is_vector() || v.len() != width {
                return Err(NumError::ShapeMismatch {
                    op: "stack",
                    lhs: vec![width],
                    rhs: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let value = TensorData::matrix(rows.len(), width, data)?;
        let needs = rows.iter().any(|&r| self.needs(r));
        Ok(self.push(value, Op::Stack { rows: rows.to_vec() }, needs))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| v.tanh()).collect();
        let value = TensorData::new(vx.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Tanh { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let one = S::ONE;
        let data = vx
            .data()
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let value = TensorData::new(vx.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid { x }, needs)
    }

    /// Numerically stable softmax over a vector. Positions with `mask ==
    /// false` take no part in the normalization and are exactly 0 in the
    /// output; an all-false mask is an error.
    pub fn softmax_masked(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, NumError> {
        let vx = self.value(x);
        if !vx.is_vector() {
            return Err(NumError::BadShape {
                op: "softmax",
                expected: "vector input",
                shape: vx.shape().to_vec(),
            });
        }
        if let Some(m) = mask {
            if m.len() != vx.len() {
                return Err(NumError::ShapeMismatch {
                    op: "softmax",
                    lhs: vx.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        let mut max: Option<S> = None;
        for (i, &v) in vx.data().iter().enumerate() {
            if keep(i) && max.map_or(true, |m| v > m) {
                max = Some(v);
            }
        }
        let max = max.ok_or(NumError::AllMasked)?;
        let mut data = vec![S::ZERO; vx.len()];
        let mut total = S::ZERO;
        for (i, &v) in vx.data().iter().enumerate() {
            if keep(i) {
                let e = (v - max).exp();
                data[i] = e;
                total += e;
            }
        }
        for d in &mut data {
            *d = *d / total;
        }
        let needs = self.needs(x);
        Ok(self.push(
            TensorData::vector(data),
            Op::SoftmaxMasked {
                x,
                mask: mask.map(<[bool]>::to_vec),
            },
            needs,
        ))
    }

    /// One row of an embedding table as a vector.
    pub fn embed_row(&mut self, table: Var, row: usize) -> Result<Var, NumError> {
        let vt = self.value(table);
        if !vt.is_matrix() {
            return Err(NumError::BadShape {
                op: "embed_row",
                expected: "matrix table",
                shape: vt.shape().to_vec(),
            });
        }
        if row >= vt.rows() {
            return Err(NumError::IndexOutOfBounds {
                op: "embed_row",
                index: row,
                bound: vt.rows(),
            });
        }
        let value = TensorData::vector(vt.row(row).to_vec());
        let needs = self.needs(table);
        Ok(self.push(value, Op::EmbedRow { table, row }, needs))
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales survivors by `1 / (1 - rate)`, so expectations match the
    /// identity map used at inference time.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut impl RngCore,
    ) -> Result<Var, NumError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumError::InvalidArg {
                op: "dropout",
                message: format!("rate {rate} outside [0, 1)"),
            });
        }
        let scale = S::from_f64(1.0 / (1.0 - rate));
        let mask = (0..self.value(x).len())
            .map(|_| if unit_f64(rng) < rate { S::ZERO } else { scale })
            .collect();
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with a caller-supplied mask of `0` / `1/(1-rate)` entries;
    /// used directly by tests that need a deterministic mask.
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<S>) -> Result<Var, NumError> {
        let vx = self.value(x);
        if mask.len() != vx.len() {
            return Err(NumError::ShapeMismatch {
                op: "dropout",
                lhs: vx.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = vx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = TensorData::new(vx.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout { x, mask }, needs))
    }

    /// Extends a vector with `extra` trailing zeros.
    pub fn pad_zeros(&mut self, x: Var, extra: usize) -> Result<Var, NumError> {
        let vx = self.value(x);
        if !vx.is_vector() {
            return Err(NumError::BadShape {
                op: "pad_zeros",
                expected: "vector input",
                shape: vx.shape().to_vec(),
            });
        }
        let mut data = vx.data().to_vec();
        data.resize(data.len() + extra, S::ZERO);
        let needs = self.needs(x);
        Ok(self.push(TensorData::vector(data), Op::PadZeros { x }, needs))
    }

    /// Scatters `src[k]` into `out[idx[k]]`, summing collisions; `None`
    /// indices are dropped. Used to project attention weights onto an
    /// extended vocabulary.
    pub fn scatter_add(
        &mut self,
        src: Var,
        idx: &[Option<usize>],
        out_len: usize,
    ) -> Result<Var, NumError> {
        let vs = self.value(src);
        if !vs.is_vector() || vs.len() != idx.len() {
            return Err(NumError::ShapeMismatch {
                op: "scatter_add",
                lhs: vs.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let mut data = vec![S::ZERO; out_len];
        for (&v, &slot) in vs.data().iter().zip(idx) {
            if let Some(i) = slot {
                if i >= out_len {
                    return Err(NumError::IndexOutOfBounds {
                        op: "scatter_add",
                        index: i,
                        bound: out_len,
                    });
                }
                data[i] += v;
            }
        }
        let needs = self.needs(src);
        Ok(self.push(
            TensorData::vector(data),
            Op::ScatterAdd {
                src,
                idx: idx.to_vec(),
            },
            needs,
        ))
    }

    /// `-ln(x[index])` with the argument clamped to [`PROB_EPS`].
    pub fn neg_log_pick(&mut self, x: Var, index: usize) -> Result<Var, NumError> {
        let vx = self.value(x);
        if index >= vx.len() {
            return Err(NumError::IndexOutOfBounds {
                op: "neg_log_pick",
                index,
                bound: vx.len(),
            });
        }
        let eps = S::from_f64(PROB_EPS);
        let p = vx.data()[index];
        let clamped = if p > eps { p } else { eps };
        let value = TensorData::scalar(-clamped.ln());
        let needs = self.needs(x);
        Ok(self.push(value, Op::NegLogPick { x, index }, needs))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let needs = self.needs(x);
        self.push(TensorData::scalar(total), Op::SumAll { x }, needs)
    }

    /// Mean of `-ln p̂[target]` over unmasked positions: the sequence
    /// cross-entropy used for training and perplexity.
    pub fn cross_entropy_masked(
        &mut self,
        dists: &[Var],
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var, NumError> {
        if dists.len() != targets.len() || dists.len() != mask.len() {
            return Err(NumError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![dists.len()],
                rhs: vec![targets.len().max(mask.len())],
            });
        }
        let mut losses = Vec::new();
        for ((&d, &t), &keep) in dists.iter().zip(targets).zip(mask) {
            if keep {
                losses.push(self.neg_log_pick(d, t)?);
            }
        }
        if losses.is_empty() {
            return Err(NumError::AllMasked);
        }
        let n = losses.len() as f64;
        let total = self.add_n(&losses)?;
        Ok(self.affine(total, 1.0 / n, 0.0))
    }

    /// Reverse-mode sweep from a scalar loss; returns per-node gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, NumError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        let mut slots: Vec<Option<TensorData<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.idx()].needs_grad {
            slots[loss.idx()] = Some(TensorData::scalar(S::ONE));
        }
        for id in (0..=loss.idx()).rev() {
            let Some(gout) = slots[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            self.dispatch_backward(node, &gout, &mut slots)?;
            // Leaves keep their accumulated gradient; interior nodes have
            // fully propagated theirs and can drop it.
            if matches!(node.op, Op::Leaf) {
                slots[id] = Some(gout);
            }
        }
        Ok(Gradients { slots })
    }

    fn dispatch_backward(
        &self,
        node: &Node<S>,
        gout: &TensorData<S>,
        slots: &mut [Option<TensorData<S>>],
    ) -> Result<(), NumError> {
        // Accumulates `write(buffer)` into `target`'s gradient slot, but only
        // if that input can reach a parameter.
        macro_rules! accum {
            ($target:expr, $write:expr) => {{
                let t: Var = $target;
                if self.needs(t) {
                    let shape = self.value(t).shape().to_vec();
                    let slot = slots[t.idx()].get_or_insert_with(|| TensorData::zeros(shape));
                    #[allow(clippy::redundant_closure_call)]
                    ($write)(slot);
                }
            }};
        }

        match &node.op {
            Op::Leaf => {}

            Op::MatMul { a, b, ta } => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let (ar, ac) = (va.rows(), va.cols());
                if vb.is_vector() {
                    accum!(*a, |da: &mut TensorData<S>| {
                        if *ta {
                            outer_acc(vb.data(), gout.data(), da.data_mut());
                        } else {
                            outer_acc(gout.data(), vb.data(), da.data_mut());
                        }
                    });
                    accum!(*b, |db: &mut TensorData<S>| {
                        if *ta {
                            matvec(va.data(), ar, ac, gout.data(), db.data_mut());
                        } else {
                            matvec_t(va.data(), ar, ac, gout.data(), db.data_mut());
                        }
                    });
                } else {
                    let (m, k) = if *ta { (ac, ar) } else { (ar, ac) };
                    let bc = vb.cols();
                    accum!(*a, |da: &mut TensorData<S>| {
                        // dAe[i,t] = Σ_j gout[i,j] · b[t,j]
                        for i in 0..m {
                            let grow = &gout.data()[i * bc..(i + 1) * bc];
                            for t in 0..k {
                                let brow = vb.row(t);
                                let mut s = S::ZERO;
                                for j in 0..bc {
                                    s += grow[j] * brow[j];
                                }
                                let at = if *ta { t * ac + i } else { i * ac + t };
                                da.data_mut()[at] += s;
                            }
                        }
                    });
                    accum!(*b, |db: &mut TensorData<S>| {
                        // dB[t,j] = Σ_i Ae[i,t] · gout[i,j]
                        for i in 0..m {
                            let grow = &gout.data()[i * bc..(i + 1) * bc];
                            for t in 0..k {
                                let av = if *ta {
                                    va.data()[t * ac + i]
                                } else {
                                    va.data()[i * ac + t]
                                };
                                let brow = &mut db.data_mut()[t * bc..(t + 1) * bc];
                                for j in 0..bc {
                                    brow[j] += av * grow[j];
                                }
                            }
                        }
                    });
                }
            }

            Op::Add { a, b } => {
                accum!(*a, |da: &mut TensorData<S>| da
                    .add_assign(gout)
                    .expect("same shape"));
                accum!(*b, |db: &mut TensorData<S>| db
                    .add_assign(gout)
                    .expect("same shape"));
            }

            Op::AddN { parts } => {
                for &p in parts {
                    accum!(p, |dp: &mut TensorData<S>| dp
                        .add_assign(gout)
                        .expect("same shape"));
                }
            }

            Op::Mul { a, b } => {
                let va = self.value(*a);
                let vb = self.value(*b);
                accum!(*a, |da: &mut TensorData<S>| {
                    for ((d, &g), &bv) in da.data_mut().iter_mut().zip(gout.data()).zip(vb.data())
                    {
                        *d += g * bv;
                    }
                });
                accum!(*b, |db: &mut TensorData<S>| {
                    for ((d, &g), &av) in db.data_mut().iter_mut().zip(gout.data()).zip(va.data())
                    {
                        *d += g * av;
                    }
                });
            }

            Op::Affine { x, mul } => {
                let m = S::from_f64(*mul);
                accum!(*x, |dx: &mut TensorData<S>| {
                    for (d, &g) in dx.data_mut().iter_mut().zip(gout.data()) {
                        *d += g * m;
                    }
                });
            }

            Op::MulScalar { x, s } => {
                let sv = self.value(*s).item();
                let vx = self.value(*x);
                accum!(*x, |dx: &mut TensorData<S>| {
                    for (d, &g) in dx.data_mut().iter_mut().zip(gout.data()) {
                        *d += g * sv;
                    }
                });
                accum!(*s, |ds: &mut TensorData<S>| {
                    let mut dot = S::ZERO;
                    for (&g, &xv) in gout.data().iter().zip(vx.data()) {
                        dot += g * xv;
                    }
                    ds.data_mut()[0] += dot;
                });
            }

            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    accum!(p, |dp: &mut TensorData<S>| {
                        for (d, &g) in dp
                            .data_mut()
                            .iter_mut()
                            .zip(&gout.data()[offset..offset + len])
                        {
                            *d += g;
                        }
                    });
                    offset += len;
                }
            }

            Op::Slice { x, start } => {
                accum!(*x, |dx: &mut TensorData<S>| {
                    for (d, &g) in dx.data_mut()[*start..*start + gout.len()]
                        .iter_mut()
                        .zip(gout.data())
                    {
                        *d += g;
                    }
                });
            }

            Op::Stack { rows } => {
                let width = gout.cols();
                for (r, &row) in rows.iter().enumerate() {
                    accum!(row, |dr: &mut TensorData<S>| {
                        for (d, &g) in dr
                            .data_mut()
                            .iter_mut()
                            .zip(&gout.data()[r * width..(r + 1) * width])
                        {
                            *d += g;
                        }
                    });
                }
            }

            Op::Tanh { x } => {
                let y = &node.value;
                accum!(*x, |dx: &mut TensorData<S>| {
                    for ((d, &g), &yv) in dx.data_mut().iter_mut().zip(gout.data()).zip(y.data()) {
                        *d += g * (S::ONE - yv * yv);
                    }
                });
            }

            Op::Sigmoid { x } => {
                let y = &node.value;
                accum!(*x, |dx: &mut TensorData<S>| {
                    for ((d, &g), &yv) in dx.data_mut().iter_mut().zip(gout.data()).zip(y.data()) {
                        *d += g * yv * (S::ONE - yv);
                    }
                });
            }

            Op::SoftmaxMasked { x, mask } => {
                let y = &node.value;
                // Masked outputs are exactly zero, so the dot product runs
                // safely over the whole vector.
                let mut dot = S::ZERO;
                for (&g, &yv) in gout.data().iter().zip(y.data()) {
                    dot += g * yv;
                }
                accum!(*x, |dx: &mut TensorData<S>| {
                    for (i, ((d, &g), &yv)) in dx
                        .data_mut()
                        .iter_mut()
                        .zip(gout.data())
                        .zip(y.data())
                        .enumerate()
                    {
                        if mask.as_ref().map_or(true, |m| m[i]) {
                            *d += yv * (g - dot);
                        }
                    }
                });
            }

            Op::EmbedRow { table, row } => {
                let cols = self.value(*table).cols();
                accum!(*table, |dt: &mut TensorData<S>| {
                    for (d, &g) in dt.data_mut()[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(gout.data())
                    {
                        *d += g;
                    }
                });
            }

            Op::Dropout { x, mask } => {
                accum!(*x, |dx: &mut TensorData<S>| {
                    for ((d, &g), &m) in dx.data_mut().iter_mut().zip(gout.data()).zip(mask) {
                        *d += g * m;
                    }
                });
            }

            Op::PadZeros { x } => {
                let len = self.value(*x).len();
                accum!(*x, |dx: &mut TensorData<S>| {
                    for (d, &g) in dx.data_mut().iter_mut().zip(&gout.data()[..len]) {
                        *d += g;
                    }
                });
            }

            Op::ScatterAdd { src, idx } => {
                accum!(*src, |ds: &mut TensorData<S>| {
                    for (d, &slot) in ds.data_mut().iter_mut().zip(idx) {
                        if let Some(i) = slot {
                            *d += gout.data()[i];
                        }
                    }
                });
            }

            Op::NegLogPick { x, index } => {
                let eps = S::from_f64(PROB_EPS);
                let p = self.value(*x).data()[*index];
                // Inside the clamp region the loss is flat in x.
                if p > eps {
                    let g = gout.item();
                    accum!(*x, |dx: &mut TensorData<S>| {
                        dx.data_mut()[*index] += -(g / p);
                    });
                }
            }

            Op::SumAll { x } => {
                let g = gout.item();
                accum!(*x, |dx: &mut TensorData<S>| {
                    for d in dx.data_mut() {
                        *d += g;
                    }
                });
            }
        }
        Ok(())
    }
}

/// `out[i] += Σ_j m[i,j] v[j]` — row-major matrix × vector.
fn matvec<S: Scalar>(m: &[S], rows: usize, cols: usize, v: &[S], out: &mut [S]) {
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        let (mut a0, mut a1, mut a2, mut a3) = (S::ZERO, S::ZERO, S::ZERO, S::ZERO);
        let mut chunks = row.chunks_exact(4).zip(v.chunks_exact(4));
        for (r, x) in &mut chunks {
            a0 += r[0] * x[0];
            a1 += r[1] * x[1];
            a2 += r[2] * x[2];
            a3 += r[3] * x[3];
        }
        let mut acc = (a0 + a1) + (a2 + a3);
        let rem = cols - cols % 4;
        for (r, x) in row[rem..].iter().zip(&v[rem..]) {
            acc += *r * *x;
        }
        out[i] += acc;
    }
}

/// `out[j] += Σ_i m[i,j] v[i]` — transposed matrix × vector, still streaming
/// rows contiguously.
fn matvec_t<S: Scalar>(m: &[S], rows: usize, cols: usize, v: &[S], out: &mut [S]) {
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        let vi = v[i];
        for (o, &r) in out.iter_mut().zip(row) {
            *o += vi * r;
        }
    }
}

/// `out[i,j] += a[i] * b[j]`.
fn outer_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S]) {
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut out[i * b.len()..(i + 1) * b.len()];
        for (o, &bj) in row.iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
}

fn matmul_value<S: Scalar>(
    a: &TensorData<S>,
    ta: bool,
    b: &TensorData<S>,
) -> Result<TensorData<S>, NumError> {
    if !a.is_matrix() {
        return Err(NumError::BadShape {
            op: "matmul",
            expected: "matrix lhs",
            shape: a.shape().to_vec(),
        });
    }
    let (ar, ac) = (a.rows(), a.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    if b.is_vector() {
        if b.len() != k {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut out = vec![S::ZERO; m];
        if ta {
            matvec_t(a.data(), ar, ac, b.data(), &mut out);
        } else {
            matvec(a.data(), ar, ac, b.data(), &mut out);
        }
        Ok(TensorData::vector(out))
    } else {
        let (br, bc) = (b.rows(), b.cols());
        if br != k {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut out = vec![S::ZERO; m * bc];
        for i in 0..m {
            for t in 0..k {
                let av = if ta {
                    a.data()[t * ac + i]
                } else {
                    a.data()[i * ac + t]
                };
                let brow = &b.data()[t * bc..(t + 1) * bc];
                let orow = &mut out[i * bc..(i + 1) * bc];
                for j in 0..bc {
                    orow[j] += av * brow[j];
                }
            }
        }
        TensorData::matrix(m, bc, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(t: &TensorData<f64>) -> Vec<f64> {
        t.data().to_vec()
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(TensorData::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = tape.param(TensorData::vector(vec![1.0, 0.0, -1.0]));
        let y = tape.matmul(a, x).unwrap();
        assert_eq!(vec_of(tape.value(y)), vec![-2.0, -2.0]);
        // Transposed: aᵀ (3x2) times a 2-vector.
        let z = tape.matmul_t(a, y).unwrap();
        assert_eq!(vec_of(tape.value(z)), vec![-10.0, -14.0, -18.0]);
    }

    #[test]
    fn matmul_backward_vector_case() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(TensorData::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = tape.param(TensorData::vector(vec![5.0, 6.0]));
        let y = tape.matmul(a, x).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        // d/dA sum(Ax) = [x; x] rows, d/dx = Aᵀ·1.
        assert_eq!(vec_of(grads.get(a).unwrap()), vec![5.0, 6.0, 5.0, 6.0]);
        assert_eq!(vec_of(grads.get(x).unwrap()), vec![4.0, 6.0]);
    }

    #[test]
    fn softmax_masked_zeroes_excluded_positions() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(TensorData::vector(vec![1.0, 100.0, 1.0]));
        let y = tape
            .softmax_masked(x, Some(&[true, false, true]))
            .unwrap();
        let v = vec_of(tape.value(y));
        assert_eq!(v[1], 0.0);
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_all_masked_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(TensorData::vector(vec![1.0, 2.0]));
        assert!(matches!(
            tape.softmax_masked(x, Some(&[false, false])),
            Err(NumError::AllMasked)
        ));
    }

    #[test]
    fn softmax_single_position_is_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(TensorData::vector(vec![-3.5]));
        let y = tape.softmax_masked(x, None).unwrap();
        assert_eq!(vec_of(tape.value(y)), vec![1.0]);
    }

    #[test]
    fn scatter_add_sums_collisions_and_drops_none() {
        let mut tape = Tape::<f64>::new();
        let src = tape.param(TensorData::vector(vec![0.25, 0.25, 0.5]));
        let out = tape
            .scatter_add(src, &[Some(1), Some(1), None], 3)
            .unwrap();
        assert_eq!(vec_of(tape.value(out)), vec![0.0, 0.5, 0.0]);
        let loss = tape.neg_log_pick(out, 1).unwrap();
        let grads = tape.backward(loss).unwrap();
        // dL/dsrc_k = -1/p for slots feeding index 1, zero for the dropped one.
        assert_eq!(vec_of(grads.get(src).unwrap()), vec![-2.0, -2.0, 0.0]);
    }

    #[test]
    fn neg_log_pick_clamps_tiny_probabilities() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(TensorData::vector(vec![0.0, 1.0]));
        let loss = tape.neg_log_pick(x, 0).unwrap();
        assert!((tape.value(loss).item() - -(PROB_EPS.ln())).abs() < 1e-9);
        // Inside the clamp the loss is flat, so no gradient reaches x at all.
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn cross_entropy_masked_averages_unmasked_positions() {
        let mut tape = Tape::<f64>::new();
        let d1 = tape.param(TensorData::vector(vec![0.5, 0.5]));
        let d2 = tape.param(TensorData::vector(vec![1.0, 0.0]));
        let d3 = tape.param(TensorData::vector(vec![0.1, 0.9]));
        let loss = tape
            .cross_entropy_masked(&[d1, d2, d3], &[0, 0, 1], &[true, true, false])
            .unwrap();
        let expected = (0.5f64.ln() + 1.0f64.ln()) / -2.0;
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn frozen_subgraphs_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let frozen = tape.constant(TensorData::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = tape.param(TensorData::vector(vec![1.0, 1.0]));
        let y = tape.matmul(frozen, x).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(frozen).is_none());
        assert!(grads.get(x).is_some());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(TensorData::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let y = tape
            .dropout_with_mask(x, vec![0.0, 1.25, 0.0, 1.25])
            .unwrap();
        assert_eq!(vec_of(tape.value(y)), vec![0.0, 2.5, 0.0, 5.0]);
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(vec_of(grads.get(x).unwrap()), vec![0.0, 1.25, 0.0, 1.25]);
    }

    #[test]
    fn shape_mismatches_name_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.param(TensorData::vector(vec![1.0, 2.0]));
        let b = tape.param(TensorData::vector(vec![1.0, 2.0, 3.0]));
        match tape.add(a, b) {
            Err(NumError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2]);
                assert_eq!(rhs, vec![3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn gradients_flow_through_stacked_attention_shapes() {
        // Mimics the attention pattern: stack step vectors, score them
        // against a query, softmax, and take the weighted sum.
        let mut tape = Tape::<f64>::new();
        let h1 = tape.param(TensorData::vector(vec![1.0, 0.0]));
        let h2 = tape.param(TensorData::vector(vec![0.0, 1.0]));
        let q = tape.param(TensorData::vector(vec![2.0, 1.0]));
        let h = tape.stack(&[h1, h2]).unwrap();
        let logits = tape.matmul(h, q).unwrap();
        let attn = tape.softmax_masked(logits, None).unwrap();
        let ctx = tape.matmul_t(h, attn).unwrap();
        let loss = tape.sum_all(ctx);
        let grads = tape.backward(loss).unwrap();
        for v in [h1, h2, q] {
            assert!(grads.get(v).is_some());
            assert!(grads.get(v).unwrap().data().iter().all(|g| g.is_finite()));
        }
    }
}
