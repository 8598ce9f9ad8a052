//! Dense-tensor numeric core with reverse-mode autodiff.
//!
//! Everything the edit model needs and nothing more: row-major tensors of
//! rank 1 or 2, a single-threaded computation [`Tape`](tape::Tape) with an
//! auditable backward rule per operation, LSTM building blocks, Adam with
//! gradient clipping, and a central-difference gradient checker.
//!
//! All of it is generic over [`Scalar`]: training runs in `f32`, while
//! gradient verification instantiates the same code with `f64`.

pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{bilstm_run, lstm_cell_step, lstm_run, BiLstmOut, LstmParams, LstmVars};
pub use optim::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var, PROB_EPS};
pub use tensor::TensorData;

use rand_core::RngCore;

/// Floating-point element type for tensors; implemented for `f32` and `f64`.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($ty:ty) => {
        impl Scalar for $ty {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $ty
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$ty>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$ty>::ln(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$ty>::tanh(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$ty>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$ty>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$ty>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Numeric-core failure: shape disagreements, bad indices, degenerate
/// softmax masks, and the like.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {shape:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of bounds ({bound})")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("softmax: every position is masked")]
    AllMasked,
    #[error("{op}: empty sequence")]
    EmptySequence { op: &'static str },
    #[error("{op}: {message}")]
    InvalidArg { op: &'static str, message: String },
    #[error("backward target must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}

/// Uniform draw in `[0, 1)` with 53 bits of precision, identical across
/// platforms for a given generator state.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform_in<S: Scalar, R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> S {
    S::from_f64(lo + unit_f64(rng) * (hi - lo))
}
