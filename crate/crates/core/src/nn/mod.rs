//! A small, purpose-built differentiable network kernel.
//!
//! Only the two fixed architectures used by the learners are supported: a
//! recurrent agent network (dense + ReLU, GRU cell, linear heads) and a
//! three-layer central critic. Both run batched over row-major matrices and
//! carry hand-written reverse-mode gradients, including backpropagation
//! through time for the GRU. Everything is generic over [`Real`] so the same
//! code trains in `f32` and is checked against finite differences in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;

mod agent;
mod central;
pub mod checkpoint;
mod gradcheck;
mod gru;
mod optim;

pub use agent::{AgentNet, AgentTape};
pub use central::{CentralNet, CentralTape};
pub use gradcheck::{grad_check, relative_error};
pub use gru::{gru_step, GruCell};
pub use optim::{clip_grad_norm, RmsProp};

pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite value")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite value")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A fixed collection of named tensors: network weights, their gradients,
/// or optimizer moments of the same shape.
pub trait Parameters<F: Real>: Clone {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, F>)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, F>)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(F::zero());
        }
        z
    }

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn squared_norm(&self) -> F {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|&x| x * x).sum::<F>())
            .sum()
    }

    fn scale(&mut self, k: F) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|x| x * k);
        }
    }

    /// Visits every scalar in tensor order.
    fn flat(&self) -> Vec<F> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    fn copy_from(&mut self, other: &Self) {
        let src = other.tensors();
        for ((_, mut dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            dst.assign(&s);
        }
    }
}

/// Fully connected layer computing `x · weight + bias` on row batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `[in, out]`
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    /// Uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Dense {
            weight: uniform_matrix(fan_in, fan_out, fan_in, rng),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates `dW += xᵀ dy`, `db += Σ dy` and returns `dy · Wᵀ`.
    fn backward_into(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, grad: &mut Dense<F>) -> Array2<F> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    fn accumulate(&self, x: ArrayView2<'_, F>, dy: ArrayView2<'_, F>, grad: &mut Dense<F>) {
        ndarray::linalg::general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }

    pub fn cast<G: Real>(&self) -> Dense<G> {
        Dense {
            weight: cast_array(&self.weight),
            bias: cast_array(&self.bias),
        }
    }
}

pub(crate) fn uniform_matrix<F: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Array2<F> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || F::from_f64_lossy(rng.gen_range(-bound..bound)))
}

pub(crate) fn cast_array<F: Real, G: Real, D: ndarray::Dimension>(a: &ndarray::Array<F, D>) -> ndarray::Array<G, D> {
    a.mapv(|x| G::from_f64_lossy(x.as_f64()))
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
pub(crate) fn relu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best = 0;
    let mut best_v: Option<F> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best_v {
            Some(b) if !(v > b) => {}
            _ => {
                best = i;
                best_v = Some(v);
            }
        }
    }
    best
}
