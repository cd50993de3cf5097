//! A small layer toolkit with hand-written backward passes: convolution,
//! transposed convolution, Haar wavelet pooling, dense layers, activations,
//! losses and Adam.
//!
//! Layers cache what they need during [`Layer::forward`] and accumulate
//! parameter gradients in [`Layer::backward`]. [`Layer::infer`] is the
//! cache-free path for prediction.

mod activation;
mod adam;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod pool;
mod serialize;
mod tensor;

pub use activation::{leaky_relu, relu, sigmoid, LeakyRelu, Relu, Sigmoid, Tanh};
pub use adam::{adam_step, Adam, AdamHyper, AdamSlot};
pub use conv::{conv2d_backward, conv2d_forward, conv_out_len, deconv_out_len, Conv2d, ConvGrad, ConvTranspose2d};
pub use dense::{dense_backward, dense_forward, Dense, DenseGrad};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradReport, Objective, ParamCheck, GRAD_FLOOR};
pub use loss::{bce, bce_grad, cross_entropy, cross_entropy_grad, softmax, softmax_backward, PROB_FLOOR};
pub use pool::{average_pool2, haar_pool_backward, haar_pool_forward, HaarPool};
pub use serialize::{decode_params, encode_params, MAGIC};
pub use tensor::Tensor4;

use rand::Rng;
use rand_distr::Normal;

use crate::error::{arg_err, Result};

/// A parameter tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), value: vec![0.0; n], grad: vec![0.0; n] }
    }

    /// Normal initialisation with the given standard deviation.
    pub fn normal(shape: &[usize], sd: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(shape);
        let dist = Normal::new(0.0, sd).expect("finite sd");
        for v in &mut p.value {
            *v = rng.sample(dist);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

pub trait Layer: std::fmt::Debug + Send + Sync {
    fn name(&self) -> String;

    /// Forward pass without caching.
    fn infer(&self, x: &Tensor4) -> Result<Tensor4>;

    /// Forward pass that remembers what backward needs.
    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4>;

    /// Adds parameter gradients for `grad_out` and returns the input gradient.
    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Which side of each non-differentiable point the cached input sits on.
    /// Gradient checking skips perturbations that change this.
    fn kink_pattern(&self, _out: &mut Vec<bool>) {}

    fn clone_box(&self) -> Box<dyn Layer>;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Reinterprets `(n, c·h·w)` data as `(n, c, h, w)`.
#[derive(Debug, Clone)]
pub struct Reshape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    input_dims: Option<[usize; 4]>,
}

impl Reshape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, input_dims: None }
    }
}

impl Layer for Reshape {
    fn name(&self) -> String {
        format!("reshape({}x{}x{})", self.channels, self.height, self.width)
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        x.clone().reshape([x.n(), self.channels, self.height, self.width])
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.input_dims = Some(x.dims());
        self.infer(x)
    }

    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        match self.input_dims {
            Some(d) => grad_out.clone().reshape(d),
            None => arg_err("reshape backward before forward"),
        }
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    /// A new network running `self` then `next`, with cloned layers.
    pub fn chain(&self, next: &Sequential) -> Sequential {
        Sequential { layers: self.layers.iter().chain(&next.layers).cloned().collect() }
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer>] {
        &mut self.layers
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.infer(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// `index:layer.weight` style labels in [`Sequential::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let suffixes = ["weight", "bias"];
            for (j, _) in l.params().iter().enumerate() {
                out.push(format!("{i}:{}.{}", l.name(), suffixes.get(j).copied().unwrap_or("param")));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.kink_pattern(&mut out);
        }
        out
    }

    /// Serialises every parameter tensor.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_params(&self.params())
    }

    /// Loads parameters saved by [`Sequential::to_bytes`] into a network of
    /// the same architecture.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let tensors = decode_params(bytes)?;
        let mut params = self.params_mut();
        if tensors.len() != params.len() {
            return Err(crate::Error::Format(format!(
                "file holds {} tensors, network has {}",
                tensors.len(),
                params.len()
            )));
        }
        for (i, ((shape, values), p)) in tensors.into_iter().zip(params.iter_mut()).enumerate() {
            if shape != p.shape {
                return Err(crate::Error::Format(format!("tensor {i} has shape {shape:?}, expected {:?}", p.shape)));
            }
            p.value = values;
        }
        Ok(())
    }
}

/// `C = A·B + beta·C` for row-major matrices, `A` is `m x k`, `B` is `k x n`.
/// `at` / `bt` say the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool, c: &mut [f64], beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the bounds above cover every element the strides address.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}
