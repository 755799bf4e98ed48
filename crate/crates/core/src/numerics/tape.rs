//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its output value. [`Tape::backward`] replays the nodes in reverse
//! insertion order, which is a topological order, so gradient accumulation
//! is deterministic. Parameters are borrowed from a [`ParamStore`] instead
//! of copied, and constants may borrow caller-owned tensors.
//!
//! Matrices are row-major; rank-1 values behave as `[1, n]` rows (see
//! [`Tensor::dims2`]). Scalars are rank-1 tensors of length one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, ConvShape};
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
    Param(usize),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Reshape(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    AddN(Vec<Var>),
    WeightedSum(Var, Vec<f64>),
    Pick(Var, usize),
    Conv1d { signal: Var, filters: Var, shape: ConvShape },
}

#[derive(Debug)]
struct Node<'a> {
    op: Op,
    value: Value<'a>,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug)]
pub struct Tape<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node<'a>>,
    param_nodes: Vec<Option<Var>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    /// Tape without parameters; only leaves added by the caller can be differentiated.
    pub fn new() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            param_nodes: Vec::new(),
        }
    }

    pub fn with_params(store: &'a ParamStore) -> Self {
        Tape {
            store: Some(store),
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
            Value::Param(i) => self.store.expect("param node without store").tensor(*i),
        }
    }

    /// Scalar value of a length-one node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// Borrowed leaf that receives no gradient.
    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Value::Borrowed(t),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Gradients::of`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    pub fn scalar_constant(&mut self, x: f64) -> Var {
        self.constant(Tensor::vector(&[x]))
    }

    /// Node for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let store = self
            .store
            .ok_or_else(|| Error::invalid("tape has no parameter store"))?;
        let id = store
            .index_of(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))?;
        if let Some(v) = self.param_nodes[id] {
            return Ok(v);
        }
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Value::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id] = Some(v);
        Ok(v)
    }

    /// `x · Wᵀ + b` with `x: [r, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (r, n_in) = self.value(x).dims2();
        let (n_out, w_in) = self.value(w).dims2();
        if n_in != w_in {
            return Err(Error::invalid(format!(
                "linear: input width {n_in} but weight is [{n_out}, {w_in}]"
            )));
        }
        if let Some(b) = b {
            if self.value(b).len() != n_out {
                return Err(Error::invalid(format!(
                    "linear: bias length {} but {n_out} outputs",
                    self.value(b).len()
                )));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; r * n_out];
        for i in 0..r {
            let xr = &xv[i * n_in..(i + 1) * n_in];
            let orow = &mut out[i * n_out..(i + 1) * n_out];
            for (o, slot) in orow.iter_mut().enumerate() {
                let wr = &wv[o * n_in..(o + 1) * n_in];
                *slot = dot(xr, wr);
            }
            if let Some(b) = b {
                for (slot, bb) in orow.iter_mut().zip(self.value(b).data()) {
                    *slot += bb;
                }
            }
        }
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(Op::Linear { x, w, b }, Tensor::matrix(r, n_out, out)?, ng))
    }

    /// Matrix product `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        if k != k2 {
            return Err(Error::invalid(format!("matmul: [{m}, {k}] x [{k2}, {n}]")));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, bb) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                    *o += aip * bb;
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(m, n, out)?, ng))
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::invalid(format!("{what}: lengths {la} and {lb} differ")));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let shape = self.value(a).shape().to_vec();
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(op, Tensor::new(shape, data).expect("shape preserved"), ng)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let shape = self.value(a).shape().to_vec();
        let data: Vec<f64> = self.value(a).data().iter().map(|x| f(*x)).collect();
        let ng = self.ng(a);
        self.push(op, Tensor::new(shape, data).expect("shape preserved"), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "sub")?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "mul")?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds row vector `v` (length `c`) to every row of `m: [r, c]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.value(m).dims2();
        if self.value(v).len() != c {
            return Err(Error::invalid(format!(
                "add_row: row length {} but matrix has {c} columns",
                self.value(v).len()
            )));
        }
        let vv = self.value(v).data();
        let mut out = self.value(m).data().to_vec();
        for i in 0..r {
            for (o, x) in out[i * c..(i + 1) * c].iter_mut().zip(vv) {
                *o += x;
            }
        }
        let shape = self.value(m).shape().to_vec();
        let ng = self.ng(m) || self.ng(v);
        Ok(self.push(Op::AddRow(m, v), Tensor::new(shape, out)?, ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    /// Multiplies every entry of `a` by the scalar node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::invalid("mul_scalar: second operand must be a scalar"));
        }
        let sv = self.scalar(s);
        let shape = self.value(a).shape().to_vec();
        let data = self.value(a).data().iter().map(|x| x * sv).collect();
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(Op::MulScalar(a, s), Tensor::new(shape, data)?, ng))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), ops::sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), libm::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), libm::exp)
    }

    /// Natural log; non-positive inputs are a numeric-domain error.
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return Err(Error::numeric("ln of a non-positive or non-finite value"));
        }
        Ok(self.map(a, Op::Ln(a), libm::log))
    }

    /// Concatenates along columns; all parts must have the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols of nothing"));
        }
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(Error::invalid(format!("concat_cols: row counts {rows} and {r}")));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), Tensor::matrix(rows, total, out)?, ng))
    }

    /// Stacks along rows; all parts must have the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_rows of nothing"));
        }
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        for &p in parts {
            let c = self.value(p).cols();
            if c != cols {
                return Err(Error::invalid(format!("concat_rows: column counts {cols} and {c}")));
            }
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / cols;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Tensor::matrix(rows, cols, out)?, ng))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2();
        if len == 0 || start + len > c {
            return Err(Error::invalid(format!("slice_cols {start}+{len} of {c} columns")));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&self.value(a).row_slice(i)[start..start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(Op::SliceCols(a, start), Tensor::matrix(r, len, out)?, ng))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2();
        if len == 0 || start + len > r {
            return Err(Error::invalid(format!("slice_rows {start}+{len} of {r} rows")));
        }
        let out = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let ng = self.ng(a);
        Ok(self.push(Op::SliceRows(a, start), Tensor::matrix(len, c, out)?, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape.to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(Op::Reshape(a), t, ng))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.rowwise(a, Op::Softmax(a), ops::softmax_into)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.rowwise(a, Op::LogSoftmax(a), ops::log_softmax_into)
    }

    fn rowwise(&mut self, a: Var, op: Op, f: fn(&[f64], &mut [f64])) -> Result<Var> {
        if !self.value(a).is_finite() {
            return Err(Error::numeric("softmax input is not finite"));
        }
        let (r, c) = self.value(a).dims2();
        let shape = self.value(a).shape().to_vec();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            f(self.value(a).row_slice(i), &mut out[i * c..(i + 1) * c]);
        }
        let ng = self.ng(a);
        Ok(self.push(op, Tensor::new(shape, out)?, ng))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Op::Sum(a), Tensor::vector(&[s]), ng)
    }

    /// Elementwise sum of equally sized nodes.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("add_n of nothing"))?;
        let shape = self.value(first).shape().to_vec();
        let mut out = vec![0.0; self.value(first).len()];
        for &p in parts {
            if self.value(p).len() != out.len() {
                return Err(Error::invalid("add_n: length mismatch"));
            }
            for (o, x) in out.iter_mut().zip(self.value(p).data()) {
                *o += x;
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Op::AddN(parts.to_vec()), Tensor::new(shape, out)?, ng))
    }

    /// `Σ_i weights[i] · a[i]`, as a scalar. Weights are constants.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        if self.value(a).len() != weights.len() {
            return Err(Error::invalid(format!(
                "weighted_sum: {} values, {} weights",
                self.value(a).len(),
                weights.len()
            )));
        }
        let s = dot(self.value(a).data(), weights);
        let ng = self.ng(a);
        Ok(self.push(Op::WeightedSum(a, weights.to_vec()), Tensor::vector(&[s]), ng))
    }

    /// Scalar entry `a[index]` of the flattened values.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let len = self.value(a).len();
        if index >= len {
            return Err(Error::invalid(format!("pick index {index} of {len}")));
        }
        let x = self.value(a).data()[index];
        let ng = self.ng(a);
        Ok(self.push(Op::Pick(a, index), Tensor::vector(&[x]), ng))
    }

    /// Same-padded 1-D convolution, see [`ops::conv1d`].
    pub fn conv1d(&mut self, signal: Var, filters: Var) -> Result<Var> {
        let shape = ops::conv_shape(self.value(signal), self.value(filters))?;
        let mut out = vec![0.0; shape.len * shape.filters];
        ops::conv1d_forward(
            shape,
            self.value(signal).data(),
            self.value(filters).data(),
            &mut out,
        );
        let ng = self.ng(signal) || self.ng(filters);
        let t = Tensor::matrix(shape.len, shape.filters, out)?;
        Ok(self.push(Op::Conv1d { signal, filters, shape }, t, ng))
    }

    /// Propagates `d loss / d node` from the scalar `loss` to every node.
    ///
    /// Every parameter of the store gets a gradient slot; parameters that do
    /// not influence the loss get exact zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &dy, &mut grads);
            }
            grads[i] = Some(dy);
        }

        let mut params = Vec::new();
        if let Some(store) = self.store {
            for (id, node) in self.param_nodes.iter().enumerate() {
                let shape = store.tensor(id).shape();
                let t = match node.and_then(|v| grads[v.0].clone()) {
                    Some(g) => Tensor::new(shape.to_vec(), g)?,
                    None => Tensor::zeros(shape),
                };
                if !t.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite gradient for parameter {}",
                        store.name(id)
                    )));
                }
                params.push(t);
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.value(v);
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (r, n_in) = val(*x).dims2();
                let n_out = val(*w).rows();
                if self.ng(*x) {
                    let wv = val(*w).data();
                    let dx = self.slot(grads, *x);
                    for row in 0..r {
                        let gy = &dy[row * n_out..(row + 1) * n_out];
                        let dxr = &mut dx[row * n_in..(row + 1) * n_in];
                        for (o, g) in gy.iter().enumerate() {
                            if *g != 0.0 {
                                axpy(*g, &wv[o * n_in..(o + 1) * n_in], dxr);
                            }
                        }
                    }
                }
                if self.ng(*w) {
                    let xv = val(*x).data();
                    let dw = self.slot(grads, *w);
                    for row in 0..r {
                        let xr = &xv[row * n_in..(row + 1) * n_in];
                        for o in 0..n_out {
                            let g = dy[row * n_out + o];
                            if g != 0.0 {
                                axpy(g, xr, &mut dw[o * n_in..(o + 1) * n_in]);
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if self.ng(*b) {
                        let db = self.slot(grads, *b);
                        for row in 0..r {
                            axpy(1.0, &dy[row * n_out..(row + 1) * n_out], db);
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2();
                let n = val(*b).cols();
                if self.ng(*a) {
                    let bv = val(*b).data();
                    let da = self.slot(grads, *a);
                    for row in 0..m {
                        for p in 0..k {
                            da[row * k + p] += dot(&dy[row * n..(row + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                }
                if self.ng(*b) {
                    let av = val(*a).data();
                    let db = self.slot(grads, *b);
                    for row in 0..m {
                        for p in 0..k {
                            let aip = av[row * k + p];
                            if aip != 0.0 {
                                axpy(aip, &dy[row * n..(row + 1) * n], &mut db[p * n..(p + 1) * n]);
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, dy, 1.0);
                self.acc(grads, *b, dy, 1.0);
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, dy, 1.0);
                self.acc(grads, *b, dy, -1.0);
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = val(*b).data();
                    let da = self.slot(grads, *a);
                    for ((d, g), y) in da.iter_mut().zip(dy).zip(bv) {
                        *d += g * y;
                    }
                }
                if self.ng(*b) {
                    let av = val(*a).data();
                    let db = self.slot(grads, *b);
                    for ((d, g), x) in db.iter_mut().zip(dy).zip(av) {
                        *d += g * x;
                    }
                }
            }
            Op::AddRow(m, v) => {
                self.acc(grads, *m, dy, 1.0);
                if self.ng(*v) {
                    let c = val(*v).len();
                    let dv = self.slot(grads, *v);
                    for chunk in dy.chunks(c) {
                        axpy(1.0, chunk, dv);
                    }
                }
            }
            Op::Scale(a, c) => self.acc(grads, *a, dy, *c),
            Op::MulScalar(a, s) => {
                let sv = self.scalar(*s);
                self.acc(grads, *a, dy, sv);
                if self.ng(*s) {
                    let ds = dot(dy, val(*a).data());
                    self.slot(grads, *s)[0] += ds;
                }
            }
            Op::Sigmoid(a) => {
                let y = self.value(Var(i)).data();
                self.acc_with(grads, *a, |k| dy[k] * y[k] * (1.0 - y[k]));
            }
            Op::Tanh(a) => {
                let y = self.value(Var(i)).data();
                self.acc_with(grads, *a, |k| dy[k] * (1.0 - y[k] * y[k]));
            }
            Op::Exp(a) => {
                let y = self.value(Var(i)).data();
                self.acc_with(grads, *a, |k| dy[k] * y[k]);
            }
            Op::Ln(a) => {
                let x = val(*a).data();
                self.acc_with(grads, *a, |k| dy[k] / x[k]);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = self.value(Var(i)).dims2();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if self.ng(p) {
                        let dp = self.slot(grads, p);
                        for row in 0..rows {
                            axpy(
                                1.0,
                                &dy[row * total + offset..row * total + offset + c],
                                &mut dp[row * c..(row + 1) * c],
                            );
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    if self.ng(p) {
                        axpy(1.0, &dy[offset..offset + n], self.slot(grads, p));
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                if self.ng(*a) {
                    let (r, len) = self.value(Var(i)).dims2();
                    let c = val(*a).cols();
                    let da = self.slot(grads, *a);
                    for row in 0..r {
                        axpy(
                            1.0,
                            &dy[row * len..(row + 1) * len],
                            &mut da[row * c + start..row * c + start + len],
                        );
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if self.ng(*a) {
                    let c = val(*a).cols();
                    let da = self.slot(grads, *a);
                    axpy(1.0, dy, &mut da[start * c..start * c + dy.len()]);
                }
            }
            Op::Reshape(a) => self.acc(grads, *a, dy, 1.0),
            Op::Softmax(a) => {
                if self.ng(*a) {
                    let y = self.value(Var(i));
                    let c = y.cols();
                    let yv = y.data();
                    let da = self.slot(grads, *a);
                    for ((gy, yy), d) in dy.chunks(c).zip(yv.chunks(c)).zip(da.chunks_mut(c)) {
                        let inner = dot(gy, yy);
                        for k in 0..c {
                            d[k] += yy[k] * (gy[k] - inner);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if self.ng(*a) {
                    let y = self.value(Var(i));
                    let c = y.cols();
                    let yv = y.data();
                    let da = self.slot(grads, *a);
                    for ((gy, yy), d) in dy.chunks(c).zip(yv.chunks(c)).zip(da.chunks_mut(c)) {
                        let total: f64 = gy.iter().sum();
                        for k in 0..c {
                            d[k] += gy[k] - libm::exp(yy[k]) * total;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let g = dy[0];
                self.acc_with(grads, *a, |_| g);
            }
            Op::AddN(parts) => {
                for &p in parts {
                    self.acc(grads, p, dy, 1.0);
                }
            }
            Op::WeightedSum(a, w) => {
                let g = dy[0];
                self.acc_with(grads, *a, |k| g * w[k]);
            }
            Op::Pick(a, index) => {
                if self.ng(*a) {
                    self.slot(grads, *a)[*index] += dy[0];
                }
            }
            Op::Conv1d { signal, filters, shape } => {
                let xv = val(*signal).data();
                let wv = val(*filters).data();
                let mut dx = self.ng(*signal).then(|| vec![0.0; xv.len()]);
                let mut dw = self.ng(*filters).then(|| vec![0.0; wv.len()]);
                ops::conv1d_backward(*shape, xv, wv, dy, dx.as_deref_mut(), dw.as_deref_mut());
                if let Some(dx) = dx {
                    self.acc(grads, *signal, &dx, 1.0);
                }
                if let Some(dw) = dw {
                    self.acc(grads, *filters, &dw, 1.0);
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, dy: &[f64], c: f64) {
        if self.ng(v) {
            axpy(c, dy, self.slot(grads, v));
        }
    }

    fn acc_with(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(usize) -> f64) {
        if self.ng(v) {
            for (k, d) in self.slot(grads, v).iter_mut().enumerate() {
                *d += f(k);
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Tensor>,
}

impl Gradients {
    /// Gradient with respect to a node, `None` if the loss does not depend on it.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    /// One gradient per store parameter, in store order.
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }

    pub fn param(&self, store: &ParamStore, name: &str) -> Option<&Tensor> {
        store.index_of(name).and_then(|i| self.params.get(i))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}
