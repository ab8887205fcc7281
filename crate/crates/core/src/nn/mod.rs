//! Fixed actor-critic network: four 3x3 convolutions, one dense layer and three
//! heads (policy softmax, linear value, sigmoid terminal prediction).
//!
//! Everything is generic over the element type so the same code trains in
//! `f32` and is gradient-checked in `f64`.

mod adam;
mod layers;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::{Float, NumAssign};
use rand::Rng as _;

pub use adam::{AdamConfig, AdamState};
pub use layers::ActivationCache;

use crate::env::{Action, FeatureStack, CHANNELS};

/// Element type of tensors.
pub trait Scalar: Float + NumAssign + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("activation cache is stale (cache version {cache}, params version {params})")]
    StaleCache { cache: u64, params: u64 },
    #[error("non-finite gradient in tensor {tensor}; update rejected")]
    NonFinite { tensor: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_data(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("shape {:?} needs {} values, got {}", shape, n, data.len())));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }
}

/// Layer widths. The published network is `Arch::standard`; narrower variants
/// exist for gradient checks and quick experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub board: usize,
    pub in_channels: usize,
    pub conv: [usize; 4],
    pub hidden: usize,
}

/// Name, shape and fan of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
    pub is_bias: bool,
}

pub const TENSOR_NAMES: [&str; 16] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "conv4.weight",
    "conv4.bias",
    "dense.weight",
    "dense.bias",
    "policy.weight",
    "policy.bias",
    "value.weight",
    "value.bias",
    "tp.weight",
    "tp.bias",
];

// Tensor slots.
pub(crate) const DENSE_W: usize = 8;
pub(crate) const DENSE_B: usize = 9;
pub(crate) const POLICY_W: usize = 10;
pub(crate) const POLICY_B: usize = 11;
pub(crate) const VALUE_W: usize = 12;
pub(crate) const VALUE_B: usize = 13;
pub(crate) const TP_W: usize = 14;
pub(crate) const TP_B: usize = 15;

impl Arch {
    pub fn standard(board: usize) -> Self {
        Arch { board, in_channels: CHANNELS, conv: [32; 4], hidden: 128 }
    }

    pub fn narrow(board: usize, conv: usize, hidden: usize) -> Self {
        Arch { board, in_channels: CHANNELS, conv: [conv; 4], hidden }
    }

    pub fn flat_len(&self) -> usize {
        self.conv[3] * self.board * self.board
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::with_capacity(16);
        let mut cin = self.in_channels;
        for (l, &cout) in self.conv.iter().enumerate() {
            specs.push(TensorSpec { name: TENSOR_NAMES[2 * l], shape: vec![cout, cin, 3, 3], fan_in: cin * 9, fan_out: cout * 9, is_bias: false });
            specs.push(TensorSpec { name: TENSOR_NAMES[2 * l + 1], shape: vec![cout], fan_in: cin * 9, fan_out: cout * 9, is_bias: true });
            cin = cout;
        }
        let dense = |name, rows: usize, cols: usize, is_bias| TensorSpec {
            name,
            shape: if is_bias { vec![rows] } else { vec![rows, cols] },
            fan_in: cols,
            fan_out: rows,
            is_bias,
        };
        let flat = self.flat_len();
        specs.push(dense(TENSOR_NAMES[8], self.hidden, flat, false));
        specs.push(dense(TENSOR_NAMES[9], self.hidden, flat, true));
        specs.push(dense(TENSOR_NAMES[10], Action::COUNT, self.hidden, false));
        specs.push(dense(TENSOR_NAMES[11], Action::COUNT, self.hidden, true));
        specs.push(dense(TENSOR_NAMES[12], 1, self.hidden, false));
        specs.push(dense(TENSOR_NAMES[13], 1, self.hidden, true));
        specs.push(dense(TENSOR_NAMES[14], 1, self.hidden, false));
        specs.push(dense(TENSOR_NAMES[15], 1, self.hidden, true));
        specs
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut cin = self.in_channels;
        for &cout in &self.conv {
            n += cout * cin * 9 + cout;
            cin = cout;
        }
        n += self.hidden * self.flat_len() + self.hidden;
        n += (self.hidden + 1) * (Action::COUNT + 2);
        n
    }
}

/// Learnable weights plus the global update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Arch,
    pub tensors: Vec<Tensor<T>>,
    pub version: u64,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(arch: Arch) -> Self {
        let tensors = arch.tensor_specs().iter().map(|s| Tensor::zeros(&s.shape)).collect();
        NetworkParams { arch, tensors, version: 0 }
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = crate::rng_from_seed(seed);
        let specs = arch.tensor_specs();
        let tensors = specs
            .iter()
            .map(|s| {
                let mut t = Tensor::zeros(&s.shape);
                if !s.is_bias {
                    let bound = libm::sqrt(6.0 / (s.fan_in + s.fan_out) as f64);
                    for v in &mut t.data {
                        *v = T::of(rng.gen_range(-bound..bound));
                    }
                }
                t
            })
            .collect();
        NetworkParams { arch, tensors, version: 0 }
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams { arch: self.arch, tensors: self.tensors.iter().map(Tensor::cast).collect(), version: self.version }
    }

    /// Flat view over every parameter in tensor order.
    pub fn flat(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }
}

/// Gradient mirror of [`NetworkParams`]; accumulation is elementwise addition.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Gradients { tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) -> Result<(), NnError> {
        if self.tensors.len() != other.tensors.len() {
            return Err(NnError::Shape(String::from("gradient tensor counts differ")));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(NnError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= k;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self.flat().map(|v| v.f64() * v.f64()).sum();
        libm::sqrt(sq)
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(T::of(max_norm / norm));
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|v| v.is_finite())
    }

    pub fn flat(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn cast<U: Scalar>(&self) -> Gradients<U> {
        Gradients { tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOutput<T> {
    pub policy: [T; Action::COUNT],
    pub value: T,
    pub terminal_pred: T,
}

impl<T: Scalar> NetworkOutput<T> {
    pub fn greedy_action(&self) -> Action {
        let mut best = 0;
        for i in 1..Action::COUNT {
            if self.policy[i] > self.policy[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn to_f64(&self) -> NetworkOutput<f64> {
        NetworkOutput { policy: self.policy.map(|p| p.f64()), value: self.value.f64(), terminal_pred: self.terminal_pred.f64() }
    }
}

/// Partial derivatives of a scalar loss with respect to the head outputs:
/// the six policy probabilities, the value and the terminal prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadGrads<T> {
    pub policy: [T; Action::COUNT],
    pub value: T,
    pub tp: T,
}

impl<T: Scalar> HeadGrads<T> {
    pub fn zero() -> Self {
        HeadGrads { policy: [T::zero(); Action::COUNT], value: T::zero(), tp: T::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.value == T::zero() && self.tp == T::zero() && self.policy.iter().all(|v| *v == T::zero())
    }

    pub fn cast<U: Scalar>(&self) -> HeadGrads<U> {
        HeadGrads { policy: self.policy.map(|p| U::of(p.f64())), value: U::of(self.value.f64()), tp: U::of(self.tp.f64()) }
    }
}

/// Converts the encoder's `f32` planes into the network's element type.
pub fn input_from_features<T: Scalar>(fs: &FeatureStack) -> Vec<T> {
    fs.data.iter().map(|v| T::of(*v as f64)).collect()
}
