//! Row-major dense tensors of rank 1 or 2.

use rand_core::RngCore;

use super::{uniform_in, NumError, Scalar};

/// Plain tensor storage: a shape and a flat row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> TensorData<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, NumError> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 2 || expected != data.len() {
            return Err(NumError::BadShape {
                op: "tensor",
                expected: "rank 1 or 2 with matching element count",
                shape,
            });
        }
        Ok(TensorData { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        TensorData {
            shape,
            data: vec![S::ZERO; len],
        }
    }

    pub fn scalar(v: S) -> Self {
        TensorData {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<S>) -> Self {
        TensorData {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self, NumError> {
        Self::new(vec![rows, cols], data)
    }

    /// Fresh tensor with entries drawn uniformly from `[lo, hi)`.
    pub fn uniform<R: RngCore + ?Sized>(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        TensorData {
            shape,
            data: (0..len).map(|_| uniform_in(rng, lo, hi)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Row count for matrices, element count for vectors.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count for matrices, 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// First element; panics on empty tensors (they cannot be constructed).
    pub fn item(&self) -> S {
        self.data[0]
    }

    /// Elementwise accumulate; shapes must match.
    pub fn add_assign(&mut self, other: &TensorData<S>) -> Result<(), NumError> {
        if self.shape != other.shape {
            return Err(NumError::ShapeMismatch {
                op: "add_assign",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// Lossy element cast between scalar types (used when checkpointing
    /// `f64`-verified parameters as `f32` blobs and back).
    pub fn cast<T: Scalar>(&self) -> TensorData<T> {
        TensorData {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
