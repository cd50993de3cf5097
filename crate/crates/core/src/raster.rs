//! Single-channel rasters and the convolution/normalisation primitives the
//! rest of the pipeline is built on.
//!
//! Samples are stored row-major as `f64`; quantisation only happens when a
//! raster is written to disk (see [`crate::pgm`]).

use crate::error::{arg_err, Error, Result};

/// A 2-D grid of finite real samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return arg_err(format!("raster dimensions must be positive, got {width}x{height}"));
        }
        if width * height != data.len() {
            return arg_err(format!(
                "{width}x{height} raster needs {} samples, got {}",
                width * height,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return arg_err(format!("sample {i} is not finite"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds a raster by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Sample at a possibly out-of-bounds position, mirrored back inside.
    #[inline]
    pub fn get_mirrored(&self, row: isize, col: isize) -> f64 {
        self.get(reflect(row, self.height), reflect(col, self.width))
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

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Combines two rasters of equal shape pixel by pixel.
    pub fn zip_map(&self, other: &Raster, f: impl Fn(f64, f64) -> f64) -> Result<Raster> {
        if !self.same_shape(other) {
            return arg_err(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Raster { width: self.width, height: self.height, data })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    /// Linear rescale of `[lo, hi]` onto `[new_lo, new_hi]`. A degenerate
    /// source range maps everything to `new_lo`.
    pub fn rescale(&self, lo: f64, hi: f64, new_lo: f64, new_hi: f64) -> Raster {
        let span = hi - lo;
        if span <= 0.0 {
            return Raster::filled(self.width, self.height, new_lo);
        }
        let scale = (new_hi - new_lo) / span;
        self.map(|v| new_lo + (v - lo) * scale)
    }
}

/// Mirror (reflect, edge sample not repeated) an index into `[0, n)`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// An odd-sized square convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return arg_err(format!("kernel size must be odd and positive, got {size}"));
        }
        if weights.len() != size * size {
            return arg_err(format!("{size}x{size} kernel needs {} weights, got {}", size * size, weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return arg_err("kernel weights must be finite");
        }
        Ok(Self { size, weights })
    }

    pub fn identity() -> Self {
        Self { size: 1, weights: vec![1.0] }
    }

    /// Uniform `size x size` box filter.
    pub fn mean(size: usize) -> Result<Self> {
        Self::new(size, vec![1.0 / (size * size) as f64; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Divides every weight by the weight sum.
    pub fn normalized(&self) -> Result<Self> {
        let sum = self.sum();
        if sum == 0.0 {
            return Err(Error::Degenerate("kernel weights sum to zero".into()));
        }
        Ok(Self { size: self.size, weights: self.weights.iter().map(|w| w / sum).collect() })
    }
}

/// 2-D convolution with mirror padding at the borders; output has the
/// input's shape.
pub fn convolve2d(r: &Raster, k: &Kernel) -> Raster {
    let half = (k.size / 2) as isize;
    let (w, h) = (r.width, r.height);
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for kr in 0..k.size {
                // true convolution: kernel index runs opposite to the image offset
                let src_r = row as isize + half - kr as isize;
                let rr = reflect(src_r, h);
                let base = rr * w;
                for kc in 0..k.size {
                    let src_c = col as isize + half - kc as isize;
                    acc += k.at(kr, kc) * r.data[base + reflect(src_c, w)];
                }
            }
            out[row * w + col] = acc;
        }
    }
    Raster { width: w, height: h, data: out }
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
pub fn standardize(r: &Raster) -> Result<Raster> {
    let mean = r.mean();
    let sd = r.std_dev();
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::Degenerate("cannot standardize a constant raster".into()));
    }
    Ok(r.map(|v| (v - mean) / sd))
}
