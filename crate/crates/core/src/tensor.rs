//! Dense `f64` tensors and a tape-style reverse-mode differentiation graph.
//!
//! Every operation on a [`Graph`] appends a node holding its forward value.
//! When tracing is enabled the node also remembers the primitive and its
//! inputs so [`Graph::backward`] can walk the tape in reverse. With tracing
//! disabled the same forward arithmetic runs and the node is stored as a
//! constant, so values are bitwise-identical in both modes.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::spline::SplineSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
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

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Rows `idx` of a matrix, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Plain matrix product (no graph recording).
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {m}x{k} by {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            (&self.data, k as isize, 1),
            (&other.data, n as isize, 1),
            0.0,
            &mut out,
        );
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = alpha·a·b + beta·c` for row-major `c` of `m×n`. `a` and `b` are
/// given with explicit (row, col) strides so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover every element addressed by the given extents
    // and strides; callers derive the strides from those same extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// A learnable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.fill(0.0);
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate(&mut self, g: &Tensor) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(Error::Contract(format!(
                "gradient shape {:?} does not match parameter {:?}",
                g.shape(),
                self.value.shape()
            )));
        }
        self.grad.add_assign(g);
        Ok(())
    }
}

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// matrix plus a row vector broadcast over rows
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Map(Var, Activation),
    Sum(Var),
    Mean(Var),
    /// repeat every column `n` times: `[r×c] -> [r×(c·n)]`
    RepeatCols(Var, usize),
    /// B-spline basis of every entry: `[r×c] -> [r×(c·nb)]`
    Basis(Var, SplineSpec),
    /// mean softmax cross-entropy against a fixed target distribution
    SoftmaxXent(Var, Tensor),
    /// Gaussian Gram matrix of the rows, bandwidth σ
    GaussianKernel(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A recorded computation. Nodes are appended in evaluation order, so the
/// tape is always topologically sorted.
pub struct Graph {
    nodes: Vec<Node>,
    tracing: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            tracing: true,
        }
    }

    /// A graph that evaluates but records nothing differentiable.
    pub fn untraced() -> Self {
        Graph {
            nodes: Vec::new(),
            tracing: false,
        }
    }

    pub fn is_tracing(&self) -> bool {
        self.tracing
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Same as [`Graph::leaf`]; named separately at call sites that feed
    /// data rather than parameters.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.tracing { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (n, k2) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {m}x{k} by ({n}x{k2})ᵀ"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            (self.value(a).data(), k as isize, 1),
            (self.value(b).data(), 1, k as isize),
            0.0,
            &mut out,
        );
        let value = Tensor {
            shape: vec![m, n],
            data: out,
        };
        Ok(self.push(value, Op::MatMulT(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data.iter_mut().zip(self.value(b).data()) {
            *x -= y;
        }
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Bias add: `x[r×c] + b[c]`, the only broadcast supported.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.value(x).dims2()?;
        if self.value(bias).len() != c {
            return Err(Error::Dimension(format!(
                "bias of length {} cannot broadcast over {c} columns",
                self.value(bias).len()
            )));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data();
        for row in value.data.chunks_mut(c) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(self.push(value, Op::AddRow(x, bias)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data.iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn map(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let value = self.value(a).map(|v| act.apply(v));
        self.push(value, Op::Map(a, act))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean(a))
    }

    pub fn repeat_cols(&mut self, a: Var, times: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if times == 0 {
            return Err(Error::Parameter("repeat count must be >= 1".into()));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(r * c * times);
        for &v in src {
            data.extend(std::iter::repeat_n(v, times));
        }
        let value = Tensor {
            shape: vec![r, c * times],
            data,
        };
        Ok(self.push(value, Op::RepeatCols(a, times)))
    }

    /// Expands every entry of `x[r×c]` into its `nb` B-spline basis values,
    /// producing `[r × c·nb]` with the basis index varying fastest.
    pub fn basis(&mut self, x: Var, spec: &SplineSpec) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        let nb = spec.basis_count();
        let k1 = spec.degree() + 1;
        let mut data = vec![0.0; r * c * nb];
        for (e, &xv) in self.value(x).data().iter().enumerate() {
            let (first, vals, _) = spec.eval_local(xv);
            let base = e * nb + first;
            data[base..base + k1].copy_from_slice(&vals[..k1]);
        }
        let value = Tensor {
            shape: vec![r, c * nb],
            data,
        };
        Ok(self.push(value, Op::Basis(x, spec.clone())))
    }

    /// Mean over rows of `-Σ_j t_ij · log softmax(z_i)_j`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let (m, c) = self.value(logits).dims2()?;
        if targets.shape() != [m, c] {
            return Err(Error::Dimension(format!(
                "targets {:?} do not match logits [{m}, {c}]",
                targets.shape()
            )));
        }
        let z = self.value(logits).data();
        let mut total = 0.0;
        for i in 0..m {
            let row = &z[i * c..(i + 1) * c];
            let lse = log_sum_exp(row);
            let t = &targets.data()[i * c..(i + 1) * c];
            total += row.iter().zip(t).map(|(&zj, &tj)| tj * (lse - zj)).sum::<f64>();
        }
        let value = Tensor::scalar(total / m as f64);
        Ok(self.push(value, Op::SoftmaxXent(logits, targets.clone())))
    }

    /// `K_ij = exp(-‖z_i - z_j‖² / (2σ²))` over the rows of `z`.
    pub fn gaussian_kernel(&mut self, z: Var, sigma: f64) -> Result<Var> {
        let value = gaussian_gram(self.value(z), sigma)?;
        Ok(self.push(value, Op::GaussianKernel(z, sigma)))
    }

    /// Gradients of the scalar node `loss` with respect to every node on the
    /// tape. Contributions over fan-out are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = av.dims2()?;
                let (_, n) = bv.dims2()?;
                // dA = G·Bᵀ, dB = Aᵀ·G
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, 1.0, (g.data(), n as isize, 1), (bv.data(), 1, n as isize), 0.0, &mut da);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, 1.0, (av.data(), 1, k as isize), (g.data(), n as isize, 1), 0.0, &mut db);
                accumulate(grads, *a, Tensor { shape: vec![m, k], data: da });
                accumulate(grads, *b, Tensor { shape: vec![k, n], data: db });
            }
            Op::MatMulT(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = av.dims2()?;
                let (n, _) = bv.dims2()?;
                // C = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, 1.0, (g.data(), n as isize, 1), (bv.data(), k as isize, 1), 0.0, &mut da);
                let mut db = vec![0.0; n * k];
                gemm(n, m, k, 1.0, (g.data(), 1, n as isize), (av.data(), k as isize, 1), 0.0, &mut db);
                accumulate(grads, *a, Tensor { shape: vec![m, k], data: da });
                accumulate(grads, *b, Tensor { shape: vec![n, k], data: db });
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::AddRow(x, bias) => {
                let c = g.cols();
                let mut db = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                let shape = self.value(*bias).shape().to_vec();
                accumulate(grads, *bias, Tensor { shape, data: db });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let ga = g.data().iter().zip(bv).map(|(g, b)| g * b).collect();
                let gb = g.data().iter().zip(av).map(|(g, a)| g * a).collect();
                let shape = g.shape().to_vec();
                accumulate(grads, *a, Tensor { shape: shape.clone(), data: ga });
                accumulate(grads, *b, Tensor { shape, data: gb });
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.map(|v| v * f)),
            Op::Map(a, act) => {
                let x = self.value(*a).data();
                let data = g.data().iter().zip(x).map(|(g, &x)| g * act.derivative(x)).collect();
                accumulate(grads, *a, Tensor { shape: g.shape().to_vec(), data });
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape();
                accumulate(grads, *a, Tensor::full(shape, g.data()[0]));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                accumulate(grads, *a, Tensor::full(t.shape(), g.data()[0] / t.len() as f64));
            }
            Op::RepeatCols(a, times) => {
                let data = g.data().chunks(*times).map(|c| c.iter().sum()).collect();
                let shape = self.value(*a).shape().to_vec();
                accumulate(grads, *a, Tensor { shape, data });
            }
            Op::Basis(x, spec) => {
                let nb = spec.basis_count();
                let k1 = spec.degree() + 1;
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(e, &v)| {
                        let (first, _, ders) = spec.eval_local(v);
                        let gs = &g.data()[e * nb + first..e * nb + first + k1];
                        gs.iter().zip(&ders[..k1]).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data });
            }
            Op::SoftmaxXent(logits, targets) => {
                let z = self.value(*logits);
                let (m, c) = z.dims2()?;
                let scale = g.data()[0] / m as f64;
                let mut data = vec![0.0; m * c];
                for i in 0..m {
                    let row = z.row(i);
                    let lse = log_sum_exp(row);
                    let t = targets.row(i);
                    let tsum: f64 = t.iter().sum();
                    for j in 0..c {
                        data[i * c + j] = scale * ((row[j] - lse).exp() * tsum - t[j]);
                    }
                }
                accumulate(grads, *logits, Tensor { shape: vec![m, c], data });
            }
            Op::GaussianKernel(z, sigma) => {
                let zv = self.value(*z);
                let k = &node.value;
                let (m, d) = zv.dims2()?;
                let inv = 1.0 / (sigma * sigma);
                let mut data = vec![0.0; m * d];
                for i in 0..m {
                    let zi = zv.row(i);
                    for j in 0..m {
                        if i == j {
                            continue;
                        }
                        let w = (g.get2(i, j) + g.get2(j, i)) * k.get2(i, j) * inv;
                        let zj = zv.row(j);
                        for t in 0..d {
                            data[i * d + t] -= w * (zi[t] - zj[t]);
                        }
                    }
                }
                accumulate(grads, *z, Tensor { shape: vec![m, d], data });
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Gaussian Gram matrix over the rows of `x`.
pub(crate) fn gaussian_gram(x: &Tensor, sigma: f64) -> Result<Tensor> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Parameter(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    let (m, _) = x.dims2()?;
    let denom = 2.0 * sigma * sigma;
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        data[i * m + i] = 1.0;
        for j in i + 1..m {
            let d2 = squared_distance(x.row(i), x.row(j));
            let v = (-d2 / denom).exp();
            data[i * m + j] = v;
            data[j * m + i] = v;
        }
    }
    Ok(Tensor {
        shape: vec![m, m],
        data,
    })
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` if `v` does not
    /// influence the loss (or was recorded after it).
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient, or zeros shaped like `v` when it does not reach the loss.
    pub fn get_or_zeros(&self, v: Var, g: &Graph) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(g.value(v).shape()))
    }
}

/// Largest per-coordinate discrepancy between the analytic gradient of `f`
/// at `point` and a central difference with step `h`, measured as
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `f` builds its computation on the supplied graph from the input variable
/// and returns the scalar output variable.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Parameter(format!("step must be positive, got {h}")));
    }
    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let y = f(&mut g, x)?;
    let analytic = g.backward(y)?.get_or_zeros(x, &g);

    let eval = |p: Tensor| -> Result<f64> {
        let mut g = Graph::untraced();
        let x = g.leaf(p);
        let y = f(&mut g, x)?;
        Ok(g.value(y).data()[0])
    };
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut up = point.clone();
        up.data[i] += h;
        let mut dn = point.clone();
        dn.data[i] -= h;
        let numeric = (eval(up)? - eval(dn)?) / (2.0 * h);
        let a = analytic.data[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for t in 0..k {
                    out[i * n + j] += a.get2(i, t) * b.get2(t, j);
                }
            }
        }
        out
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_small_cases() {
        let i2 = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(i2.matmul(&b).unwrap(), b);

        let r = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(r.matmul(&c).unwrap().data(), &[11.0]);

        assert!(matches!(b.matmul(&r), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[5, 7]);
        let b = random(&mut rng, &[7, 3]);
        let fast = a.matmul(&b).unwrap();
        for (x, y) in fast.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut g = Graph::new();
        let av = g.leaf(a.clone());
        let bt = g.leaf(b.transpose().unwrap());
        let c = g.matmul_t(av, bt).unwrap();
        for (x, y) in g.value(c).data().iter().zip(fast.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_simple_cases() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        let y = g.add(x, x).unwrap();
        assert_eq!(g.backward(y).unwrap().get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn dense_relu_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = random(&mut rng, &[4, 3]);
            let b = random(&mut rng, &[4]);
            let x = random(&mut rng, &[5, 3]);
            let f = |g: &mut Graph, wv: Var| {
                let xv = g.constant(x.clone());
                let bv = g.constant(b.clone());
                let z = g.matmul_t(xv, wv)?;
                let z = g.add_row(z, bv)?;
                let a = g.map(z, Activation::Relu);
                Ok(g.sum(a))
            };
            assert!(grad_check(f, &w, 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn sum_grad_check_is_exact() {
        let p = Tensor::new(vec![4], vec![0.3, -1.0, 2.0, 5.0]).unwrap();
        let err = grad_check(|g, x| Ok(g.sum(x)), &p, 1e-5).unwrap();
        assert!(err < 1e-10);
    }

    #[test]
    fn untraced_forward_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, &[6, 5]);
        let b = random(&mut rng, &[4, 5]);
        let run = |g: &mut Graph| {
            let av = g.leaf(a.clone());
            let bv = g.leaf(b.clone());
            let c = g.matmul_t(av, bv).unwrap();
            let d = g.map(c, Activation::Gelu);
            g.mean(d)
        };
        let mut traced = Graph::new();
        let mut plain = Graph::untraced();
        let y1 = run(&mut traced);
        let y2 = run(&mut plain);
        assert_eq!(
            traced.value(y1).data()[0].to_bits(),
            plain.value(y2).data()[0].to_bits()
        );
        assert!(plain.backward(y2).unwrap().get(Var(0)).is_none());
    }
}
