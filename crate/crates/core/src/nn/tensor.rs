use crate::error::{arg_err, Result};

/// Dense `(batch, channels, height, width)` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return arg_err(format!("dims {dims:?} do not match {} values", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return arg_err("tensor values must be finite");
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_fn(dims: [usize; 4], f: impl FnMut(usize) -> f64) -> Self {
        Self { dims, data: (0..dims.iter().product()).map(f).collect() }
    }

    /// Unchecked constructor for values produced by the layers themselves.
    pub(crate) fn from_parts(dims: [usize; 4], data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    /// Values per batch item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[i * l..(i + 1) * l]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let [_, cc, h, w] = self.dims;
        self.data[((n * cc + c) * h + y) * w + x]
    }

    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.data.len() {
            return arg_err(format!("cannot reshape {:?} to {dims:?}", self.dims));
        }
        Ok(Self { dims, data: self.data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    /// Stacks batch items along the batch axis.
    pub fn stack(items: &[&[f64]], item_dims: [usize; 3]) -> Result<Self> {
        let l: usize = item_dims.iter().product();
        let mut data = Vec::with_capacity(items.len() * l);
        for it in items {
            if it.len() != l {
                return arg_err("batch items differ in size");
            }
            data.extend_from_slice(it);
        }
        Ok(Self { dims: [items.len(), item_dims[0], item_dims[1], item_dims[2]], data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
