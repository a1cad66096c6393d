//! Dense row-major matrices with a reverse-mode gradient tape.
//!
//! Every value in the model is a two-dimensional [`Tensor`]; vectors are
//! `1 x n` rows and scalars are `1 x 1`. Each operation records its inputs
//! so that [`Tensor::backward`] can walk the resulting DAG in reverse
//! topological order. Gradients accumulate into every tensor that requires
//! them, so calling `backward` twice on the same graph doubles them.

mod backward;
mod optim;
mod params;

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub use optim::{Adam, AdamConfig};
pub use params::{init_uniform, ModelParams};

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` without recording any operation on the tape.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = NO_GRAD.with(|flag| flag.replace(true));
    let out = f();
    NO_GRAD.with(|flag| flag.set(prev));
    out
}

fn grad_enabled() -> bool {
    !NO_GRAD.with(Cell::get)
}

/// Per-pair edge-type bitmasks for an `m x m` node grid.
///
/// Bit `t` of entry `(i, j)` is set when an edge of type `t` connects the
/// pair in either direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTypes {
    pub m: usize,
    pub masks: Vec<u8>,
}

impl PairTypes {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.masks[i * self.m + j]
    }
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Matmul(Tensor, Tensor),
    Transpose(Tensor),
    Add(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Affine(Tensor, f64),
    Relu(Tensor),
    Sigmoid(Tensor),
    Tanh(Tensor),
    SoftmaxRows(Tensor),
    LogSoftmaxRows(Tensor),
    SumAll(Tensor),
    MaxRows(Tensor, Rc<Vec<usize>>),
    ConcatCols(Vec<Tensor>),
    ConcatRows(Vec<Tensor>),
    SliceCols(Tensor, usize),
    SliceRows(Tensor, usize),
    GatherRows(Tensor, Rc<Vec<usize>>),
    BlendRows(Tensor, Tensor, Rc<Vec<bool>>),
    GatedMix(Tensor, Tensor, Tensor),
    Pick(Tensor, Rc<Vec<usize>>),
    PairGather(Tensor, Rc<Vec<Option<usize>>>),
    PairTypeMass(Tensor, Rc<PairTypes>),
}

impl Op {
    pub(crate) fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine(..) => "affine",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LogSoftmaxRows(..) => "log_softmax_rows",
            Op::SumAll(..) => "sum",
            Op::MaxRows(..) => "max_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::BlendRows(..) => "blend_rows",
            Op::GatedMix(..) => "gated_mix",
            Op::Pick(..) => "pick",
            Op::PairGather(..) => "pair_gather",
            Op::PairTypeMass(..) => "pair_type_mass",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Matmul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::BlendRows(a, b, _) => vec![a, b],
            Op::Transpose(a)
            | Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::SumAll(a)
            | Op::MaxRows(a, _)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _)
            | Op::Pick(a, _)
            | Op::PairGather(a, _)
            | Op::PairTypeMass(a, _) => vec![a],
            Op::GatedMix(z, a, b) => vec![z, a, b],
            Op::ConcatCols(parts) | Op::ConcatRows(parts) => parts.iter().collect(),
        }
    }
}

pub(crate) struct Inner {
    rows: usize,
    cols: usize,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    op: Op,
}

/// A dense `rows x cols` matrix of `f64`, optionally tracked by the tape.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("op", &self.0.op.kind())
            .field("data", &*self.data())
            .finish()
    }
}

impl Tensor {
    fn build(rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Tensor {
        debug_assert_eq!(rows * cols, data.len());
        let requires_grad = grad_enabled() && op.inputs().iter().any(|t| t.requires_grad());
        let op = if requires_grad { op } else { Op::Leaf };
        Tensor(Rc::new(Inner { rows, cols, data: RefCell::new(data), grad: RefCell::new(None), requires_grad, op }))
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if rows * cols != data.len() {
            return Err(Error::Contract(format!(
                "shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor::build(rows, cols, data, Op::Leaf))
    }

    /// Learnable leaf tensor.
    pub fn parameter(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if rows * cols != data.len() {
            return Err(Error::Contract(format!(
                "parameter shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor(Rc::new(Inner {
            rows,
            cols,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: true,
            op: Op::Leaf,
        })))
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor::build(rows, cols, vec![0.0; rows * cols], Op::Leaf)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Tensor {
        Tensor::build(rows, cols, vec![value; rows * cols], Op::Leaf)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::build(1, 1, vec![value], Op::Leaf)
    }

    pub fn row(values: &[f64]) -> Tensor {
        Tensor::build(1, values.len(), values.to_vec(), Op::Leaf)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("ragged rows".into()));
        }
        Tensor::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn eye(n: usize) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::build(n, n, data, Op::Leaf)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.rows, self.0.cols)
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn len(&self) -> usize {
        self.0.rows * self.0.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op_kind(&self) -> &'static str {
        self.0.op.kind()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values. Only meaningful on leaves, e.g. for an
    /// optimizer update between forward passes.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data().clone()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data().chunks(self.cols().max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data()[r * self.0.cols + c]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = Some(vec![0.0; self.len()]);
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn take_grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow_mut().take()
    }

    /// Same values, cut off from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor::build(self.rows(), self.cols(), self.to_vec(), Op::Leaf)
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension { op, lhs: self.shape(), rhs: other.shape() });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.data().iter().zip(other.data().iter()).map(|(&a, &b)| f(a, b)).collect()
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.data().iter().map(|&x| f(x)).collect()
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.shape();
        let (k2, n) = other.shape();
        if k != k2 {
            return Err(Error::Dimension { op: "matmul", lhs: self.shape(), rhs: other.shape() });
        }
        let out = matmul_raw(&self.data(), &other.data(), m, k, n);
        Ok(Tensor::build(m, n, out, Op::Matmul(self.clone(), other.clone())))
    }

    pub fn t(&self) -> Tensor {
        let (m, n) = self.shape();
        let out = transpose_raw(&self.data(), m, n);
        Tensor::build(n, m, out, Op::Transpose(self.clone()))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "add")?;
        let out = self.zip_with(other, |a, b| a + b);
        Ok(Tensor::build(self.rows(), self.cols(), out, Op::Add(self.clone(), other.clone())))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if row.rows() != 1 || row.cols() != self.cols() {
            return Err(Error::Dimension { op: "add_row", lhs: self.shape(), rhs: row.shape() });
        }
        let n = self.cols();
        let r = row.data();
        let out: Vec<f64> = self.data().iter().enumerate().map(|(i, &x)| x + r[i % n]).collect();
        drop(r);
        Ok(Tensor::build(self.rows(), n, out, Op::AddRow(self.clone(), row.clone())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        let out = self.zip_with(other, |a, b| a - b);
        Ok(Tensor::build(self.rows(), self.cols(), out, Op::Sub(self.clone(), other.clone())))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "mul")?;
        let out = self.zip_with(other, |a, b| a * b);
        Ok(Tensor::build(self.rows(), self.cols(), out, Op::Mul(self.clone(), other.clone())))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out = self.map(|x| x * factor);
        Tensor::build(self.rows(), self.cols(), out, Op::Affine(self.clone(), factor))
    }

    /// `x * factor + shift`, elementwise.
    pub fn affine(&self, factor: f64, shift: f64) -> Tensor {
        let out = self.map(|x| x * factor + shift);
        Tensor::build(self.rows(), self.cols(), out, Op::Affine(self.clone(), factor))
    }

    /// Rectifier; the subgradient at exactly zero is taken as zero.
    pub fn relu(&self) -> Tensor {
        let out = self.map(|x| if x > 0.0 { x } else { 0.0 });
        Tensor::build(self.rows(), self.cols(), out, Op::Relu(self.clone()))
    }

    pub fn sigmoid(&self) -> Tensor {
        let out = self.map(sigmoid);
        Tensor::build(self.rows(), self.cols(), out, Op::Sigmoid(self.clone()))
    }

    pub fn tanh(&self) -> Tensor {
        let out = self.map(f64::tanh);
        Tensor::build(self.rows(), self.cols(), out, Op::Tanh(self.clone()))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        self.check_finite("softmax_rows")?;
        let out = softmax_raw(&self.data(), self.cols());
        Ok(Tensor::build(self.rows(), self.cols(), out, Op::SoftmaxRows(self.clone())))
    }

    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        self.check_finite("log_softmax_rows")?;
        let n = self.cols();
        let mut out = self.to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        Ok(Tensor::build(self.rows(), n, out, Op::LogSoftmaxRows(self.clone())))
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::build(1, 1, vec![s], Op::SumAll(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Column-wise maximum over rows, giving a `1 x n` row. Ties route the
    /// gradient to the lowest row index.
    pub fn max_rows(&self) -> Result<Tensor> {
        let (m, n) = self.shape();
        if m == 0 {
            return Err(Error::Contract("max_rows on an empty matrix".into()));
        }
        let data = self.data();
        let mut arg = vec![0usize; n];
        let mut out = data[..n].to_vec();
        for r in 1..m {
            for c in 0..n {
                let v = data[r * n + c];
                if v > out[c] {
                    out[c] = v;
                    arg[c] = r;
                }
            }
        }
        drop(data);
        Ok(Tensor::build(1, n, out, Op::MaxRows(self.clone(), Rc::new(arg))))
    }

    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let m = first.rows();
        for p in parts {
            if p.rows() != m {
                return Err(Error::Dimension { op: "concat_cols", lhs: first.shape(), rhs: p.shape() });
            }
        }
        let n: usize = parts.iter().map(Tensor::cols).sum();
        let mut out = Vec::with_capacity(m * n);
        let datas: Vec<_> = parts.iter().map(Tensor::data).collect();
        for r in 0..m {
            for (p, d) in parts.iter().zip(&datas) {
                let c = p.cols();
                out.extend_from_slice(&d[r * c..(r + 1) * c]);
            }
        }
        drop(datas);
        Ok(Tensor::build(m, n, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let n = first.cols();
        for p in parts {
            if p.cols() != n {
                return Err(Error::Dimension { op: "concat_rows", lhs: first.shape(), rhs: p.shape() });
            }
        }
        let m: usize = parts.iter().map(Tensor::rows).sum();
        let mut out = Vec::with_capacity(m * n);
        for p in parts {
            out.extend_from_slice(&p.data());
        }
        Ok(Tensor::build(m, n, out, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.shape();
        if start > end || end > n {
            return Err(Error::Contract(format!("slice_cols {start}..{end} of {n} columns")));
        }
        let w = end - start;
        let data = self.data();
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&data[r * n + start..r * n + end]);
        }
        drop(data);
        Ok(Tensor::build(m, w, out, Op::SliceCols(self.clone(), start)))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.shape();
        if start > end || end > m {
            return Err(Error::Contract(format!("slice_rows {start}..{end} of {m} rows")));
        }
        let out = self.data()[start * n..end * n].to_vec();
        Ok(Tensor::build(end - start, n, out, Op::SliceRows(self.clone(), start)))
    }

    /// Row lookup, e.g. embedding tables. Repeated indices accumulate
    /// gradient.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Tensor> {
        let (m, n) = self.shape();
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::Contract(format!("row index {bad} out of range for {m} rows")));
        }
        let data = self.data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            out.extend_from_slice(&data[i * n..(i + 1) * n]);
        }
        drop(data);
        Ok(Tensor::build(index.len(), n, out, Op::GatherRows(self.clone(), Rc::new(index.to_vec()))))
    }

    /// Row `r` comes from `self` when `mask[r]`, otherwise from `other`.
    pub fn blend_rows(&self, other: &Tensor, mask: &[bool]) -> Result<Tensor> {
        self.same_shape(other, "blend_rows")?;
        if mask.len() != self.rows() {
            return Err(Error::Contract("blend_rows mask length".into()));
        }
        let n = self.cols();
        let a = self.data();
        let b = other.data();
        let mut out = Vec::with_capacity(a.len());
        for (r, &keep) in mask.iter().enumerate() {
            let src = if keep { &a } else { &b };
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        drop((a, b));
        Ok(Tensor::build(self.rows(), n, out, Op::BlendRows(self.clone(), other.clone(), Rc::new(mask.to_vec()))))
    }

    /// `gate * a + (1 - gate) * b`, elementwise, clamped into the interval
    /// spanned by `a` and `b` so rounding never leaves the convex hull.
    pub fn gated_mix(gate: &Tensor, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        gate.same_shape(a, "gated_mix")?;
        a.same_shape(b, "gated_mix")?;
        let (z, av, bv) = (gate.data(), a.data(), b.data());
        let out: Vec<f64> = z
            .iter()
            .zip(av.iter().zip(bv.iter()))
            .map(|(&z, (&x, &y))| {
                let v = z * x + (1.0 - z) * y;
                v.clamp(x.min(y), x.max(y))
            })
            .collect();
        drop((z, av, bv));
        Ok(Tensor::build(a.rows(), a.cols(), out, Op::GatedMix(gate.clone(), a.clone(), b.clone())))
    }

    /// Selects entry `index[r]` from each row `r`, giving an `m x 1` column.
    pub fn pick(&self, index: &[usize]) -> Result<Tensor> {
        let (m, n) = self.shape();
        if index.len() != m || index.iter().any(|&i| i >= n) {
            return Err(Error::Contract("pick index out of range".into()));
        }
        let data = self.data();
        let out = index.iter().enumerate().map(|(r, &c)| data[r * n + c]).collect();
        drop(data);
        Ok(Tensor::build(m, 1, out, Op::Pick(self.clone(), Rc::new(index.to_vec()))))
    }

    /// Builds an `m x m` matrix whose `(i, j)` entry is `self[i][index(i, j)]`
    /// or zero where the index is absent. `self` is `m x C`.
    pub fn pair_gather(&self, index: Rc<Vec<Option<usize>>>) -> Result<Tensor> {
        let (m, c) = self.shape();
        if index.len() != m * m || index.iter().flatten().any(|&k| k >= c) {
            return Err(Error::Contract("pair_gather index".into()));
        }
        let data = self.data();
        let out = index.iter().enumerate().map(|(p, k)| k.map_or(0.0, |k| data[(p / m) * c + k])).collect();
        drop(data);
        Ok(Tensor::build(m, m, out, Op::PairGather(self.clone(), index)))
    }

    /// For an `m x m` weight matrix, returns the `m x k` matrix whose entry
    /// `(v, t)` is the total weight row `v` puts on partners linked by an edge
    /// of type `t`.
    pub fn pair_type_mass(&self, types: Rc<PairTypes>, k: usize) -> Result<Tensor> {
        let (m, n) = self.shape();
        if m != n || types.m != m {
            return Err(Error::Dimension { op: "pair_type_mass", lhs: self.shape(), rhs: (types.m, types.m) });
        }
        let data = self.data();
        let mut out = vec![0.0; m * k];
        for v in 0..m {
            for j in 0..m {
                let bits = types.get(v, j);
                if bits == 0 {
                    continue;
                }
                for t in 0..k {
                    if bits & (1 << t) != 0 {
                        out[v * k + t] += data[v * m + j];
                    }
                }
            }
        }
        drop(data);
        Ok(Tensor::build(m, k, out, Op::PairTypeMass(self.clone(), types)))
    }

    fn check_finite(&self, op: &str) -> Result<()> {
        if self.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("{op}: non-finite input")));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

pub(crate) fn softmax_raw(data: &[f64], n: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    if n == 0 {
        return out;
    }
    for row in out.chunks_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let b = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(Tensor::eye(3).matmul(&b).unwrap().to_vec(), b.to_vec());

        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(a.matmul(&x).unwrap().to_vec(), vec![2.0, 4.0]);

        let z = Tensor::zeros(2, 3).matmul(&Tensor::full(3, 4, 7.5)).unwrap();
        assert_eq!(z.shape(), (2, 4));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(err, Error::Dimension { lhs: (2, 3), rhs: (2, 3), .. }));
    }

    #[test]
    fn softmax_examples() {
        let s = Tensor::row(&[0.0, 0.0, 0.0]).softmax_rows().unwrap();
        for &v in s.data().iter() {
            assert!(close(v, 1.0 / 3.0, 1e-15));
        }
        let s = Tensor::row(&[1000.0, 0.0]).softmax_rows().unwrap();
        assert!(close(s.get(0, 0), 1.0, 1e-12) && s.get(0, 1) >= 0.0);
        let s = Tensor::row(&[2f64.ln(), 0.0]).softmax_rows().unwrap();
        assert!(close(s.get(0, 0), 2.0 / 3.0, 1e-12));
        assert!(close(s.get(0, 1), 1.0 / 3.0, 1e-12));
        assert!(matches!(Tensor::row(&[f64::NAN, 1.0]).softmax_rows(), Err(Error::Numeric(_))));
    }

    #[test]
    fn activations() {
        let x = Tensor::row(&[-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().to_vec(), vec![0.0, 0.0, 2.0]);
        assert_eq!(Tensor::scalar(0.0).sigmoid().item(), 0.5);
        assert_eq!(Tensor::scalar(0.0).tanh().item(), 0.0);
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let w = Tensor::parameter(1, 1, vec![0.0]).unwrap();
        w.relu().sum().backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![0.0]);
    }

    #[test]
    fn sigmoid_backward_at_zero() {
        let w = Tensor::parameter(1, 1, vec![0.0]).unwrap();
        w.sigmoid().scale(2.0).backward().unwrap();
        assert!(close(w.grad().unwrap()[0], 0.5, 1e-15));
    }

    #[test]
    fn independent_loss_gives_zero_grad() {
        let w = Tensor::parameter(2, 2, vec![1.0; 4]).unwrap();
        let x = Tensor::parameter(1, 2, vec![3.0, 4.0]).unwrap();
        x.sum().backward().unwrap();
        assert!(w.grad().is_none_or(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let w = Tensor::parameter(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(w.relu().backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn double_backward_accumulates() {
        let w = Tensor::parameter(2, 2, vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let loss = w.matmul(&x).unwrap().tanh().sum();
        loss.backward().unwrap();
        let once = w.grad().unwrap();
        loss.backward().unwrap();
        let twice = w.grad().unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn no_grad_records_nothing() {
        let w = Tensor::parameter(1, 1, vec![2.0]).unwrap();
        let y = no_grad(|| w.scale(3.0));
        assert!(!y.requires_grad());
        assert_eq!(y.op_kind(), "leaf");
    }

    #[test]
    fn gated_mix_identical_inputs_is_exact() {
        let a = Tensor::row(&[0.1, -7.25, 1e-300]);
        let z = Tensor::row(&[0.3, 0.99, 0.5]);
        let out = Tensor::gated_mix(&z, &a, &a).unwrap();
        assert_eq!(out.to_vec(), a.to_vec());
    }
}
