//! Dense row-major tensors and the reverse-mode tape built on them.

mod gradcheck;
pub mod ops;
mod tape;

pub use gradcheck::{gradcheck, gradcheck_many, GradcheckOptions, GradcheckReport};
pub use tape::{Gradients, Tape, Var};

use crate::error::{ensure, Error, Result};
use crate::Scalar;

/// Dense n-dimensional array with an optional gradient buffer.
///
/// Constructors reject non-finite data; every stored value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        ensure!(
            numel(shape) == data.len(),
            Dimension,
            "shape {:?} holds {} values, got {}",
            shape,
            numel(shape),
            data.len()
        );
        ensure_finite(&data, "tensor data")?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// Trusted constructor for kernel outputs; shape is asserted, finiteness is
    /// left to the caller (the tape checks it on push).
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(numel(&shape), data.len(), "shape/data mismatch");
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![T::zero(); numel(shape)])
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_parts(shape.to_vec(), vec![value; numel(shape)])
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        Self::from_parts(shape.to_vec(), (0..numel(shape)).map(&mut f).collect())
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| T::of(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to values. Callers must keep them finite; see
    /// [`Tensor::check_finite`].
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self) -> T {
        assert_eq!(
            self.data.len(),
            1,
            "item() on a tensor of {} values",
            self.data.len()
        );
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            r => self.shape[..r - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        ensure!(
            grad.len() == self.data.len(),
            Dimension,
            "gradient of length {} for tensor {:?}",
            grad.len(),
            self.shape
        );
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn check_finite(&self) -> Result<()> {
        ensure_finite(&self.data, "tensor data")
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        ensure!(
            numel(shape) == self.data.len(),
            Dimension,
            "cannot reshape {:?} into {:?}",
            self.shape,
            shape
        );
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    fn matrix_dims(&self, what: &str) -> Result<(usize, usize)> {
        ensure!(
            self.shape.len() == 2,
            Dimension,
            "{what} expects a matrix, got shape {:?}",
            self.shape
        );
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.matrix_dims("matmul")?;
        let (k2, n) = rhs.matrix_dims("matmul")?;
        ensure!(
            k == k2,
            Dimension,
            "matmul inner dimensions {k} and {k2} differ"
        );
        Ok(Tensor::from_parts(
            vec![m, n],
            ops::matmul(&self.data, &rhs.data, m, k, n),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (r, c) = self.matrix_dims("transpose")?;
        Ok(Tensor::from_parts(
            vec![c, r],
            ops::transpose(&self.data, r, c),
        ))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(rhs, "add")?;
        Ok(self.zip_map(rhs, |a, b| a + b))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.same_shape(rhs, "mul")?;
        Ok(self.zip_map(rhs, |a, b| a * b))
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        self.map(|x| x * c)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.map(ops::sigmoid)
    }

    pub fn silu(&self) -> Tensor<T> {
        self.map(|x| x * ops::sigmoid(x))
    }

    pub fn gelu(&self) -> Tensor<T> {
        self.map(ops::gelu)
    }

    /// Softmax along `axis`, stabilized by subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        let (outer, len, inner) = self.axis_split(axis)?;
        ensure!(len > 0, Dimension, "softmax over an empty axis");
        let mut out = self.data.clone();
        ops::softmax_strided(&mut out, outer, len, inner);
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Root-mean-square normalization over the last axis with a learned gain.
    pub fn rms_norm(&self, gain: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let d = self.cols();
        ensure!(
            gain.numel() == d,
            Dimension,
            "rms_norm gain of length {} for rows of width {d}",
            gain.numel()
        );
        let (out, _) = ops::rms_norm(&self.data, &gain.data, d, eps);
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Gather rows of an embedding table `[vocab × d]`.
    pub fn embedding(table: &Tensor<T>, ids: &[usize]) -> Result<Tensor<T>> {
        let (vocab, d) = table.matrix_dims("embedding")?;
        ops::check_ids(ids, vocab)?;
        Ok(Tensor::from_parts(
            vec![ids.len(), d],
            ops::gather_rows(&table.data, d, ids),
        ))
    }

    /// Mean cross-entropy of `logits [rows × vocab]` against integer targets.
    pub fn cross_entropy(logits: &Tensor<T>, targets: &[usize]) -> Result<T> {
        let (rows, vocab) = logits.matrix_dims("cross_entropy")?;
        ensure!(
            rows == targets.len(),
            Dimension,
            "{rows} logit rows but {} targets",
            targets.len()
        );
        ensure!(rows > 0, Dimension, "cross_entropy over zero rows");
        ops::check_ids(targets, vocab)?;
        Ok(ops::cross_entropy(&logits.data, targets, vocab).0)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    fn zip_map(&self, rhs: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    fn same_shape(&self, rhs: &Tensor<T>, what: &str) -> Result<()> {
        ensure!(
            self.shape == rhs.shape,
            Dimension,
            "{what}: shapes {:?} and {:?} differ",
            self.shape,
            rhs.shape
        );
        Ok(())
    }

    pub(crate) fn axis_split(&self, axis: usize) -> Result<(usize, usize, usize)> {
        ensure!(
            axis < self.shape.len(),
            Dimension,
            "axis {axis} out of range for shape {:?}",
            self.shape
        );
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }
}

pub(crate) fn ensure_finite<T: Scalar>(data: &[T], what: &str) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", data[i]))),
    }
}
