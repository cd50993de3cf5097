//! Sigmoid intensity mapping and Gabor filter-bank features.
//!
//! The bank holds `γ` scales x 8 orientations of complex, zero-mean Gabor
//! kernels. The feature at a pixel and scale is the largest response
//! modulus over the eight orientations. Convolution goes through the FFT
//! on a mirror-padded copy of the image, so borders behave like
//! [`crate::raster::convolve2d`].

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{arg_err, Result};
use crate::raster::{reflect, Raster};

pub const ORIENTATIONS: usize = 8;
/// Wavelength of the finest scale, in pixels.
pub const BASE_WAVELENGTH: f64 = 4.0;
/// Envelope width relative to the wavelength.
pub const SIGMA_PER_WAVELENGTH: f64 = 0.56;
pub const ASPECT_RATIO: f64 = 0.5;
/// Kernels are truncated at this many envelope standard deviations.
pub const TRUNCATION: f64 = 3.0;

/// `1 / (1 + exp(-(x + mu)))` per pixel.
pub fn sigmoid_map(r: &Raster, mu: f64) -> Raster {
    r.map(|x| 1.0 / (1.0 + (-(x + mu)).exp()))
}

/// A per-pixel feature vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureField {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != width * height * dim {
            return arg_err(format!("feature field {width}x{height}x{dim} cannot hold {} values", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return arg_err("feature values must be finite");
        }
        Ok(Self { width, height, dim, data })
    }

    /// Each pixel's single feature is its raster value.
    pub fn from_raster(r: &Raster) -> Self {
        Self { width: r.width(), height: r.height(), dim: 1, data: r.as_slice().to_vec() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vector(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dim..(pixel + 1) * self.dim]
    }

    /// All vectors back to back, pixel-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// One feature channel as a raster.
    pub fn channel(&self, s: usize) -> Raster {
        let data = (0..self.len()).map(|p| self.data[p * self.dim + s]).collect();
        Raster::new(self.width, self.height, data).expect("finite by construction")
    }
}

/// One complex Gabor kernel, stored row-major over a `(2r+1)^2` grid.
#[derive(Debug, Clone)]
pub struct GaborKernel {
    pub scale: usize,
    pub orientation: usize,
    pub theta: f64,
    pub wavelength: f64,
    pub sigma: f64,
    pub radius: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GaborKernel {
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Value at offset `(dy, dx)` from the centre.
    pub fn at(&self, dy: isize, dx: isize) -> Complex64 {
        let r = self.radius as isize;
        let idx = ((dy + r) * (2 * r + 1) + dx + r) as usize;
        Complex64::new(self.re[idx], self.im[idx])
    }
}

#[derive(Debug, Clone)]
pub struct GaborBank {
    scales: usize,
    kernels: Vec<GaborKernel>,
}

impl GaborBank {
    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations(&self) -> usize {
        ORIENTATIONS
    }

    pub fn kernels(&self) -> &[GaborKernel] {
        &self.kernels
    }

    pub fn kernel(&self, scale: usize, orientation: usize) -> &GaborKernel {
        &self.kernels[scale * ORIENTATIONS + orientation]
    }

    pub fn max_radius(&self) -> usize {
        self.kernels.iter().map(|k| k.radius).max().unwrap_or(0)
    }
}

pub fn wavelength(scale: usize) -> f64 {
    BASE_WAVELENGTH * 2f64.powf(scale as f64 / 2.0)
}

/// Builds `gamma` scales x 8 orientations. The carrier has its mean over
/// the envelope removed, so every kernel sums to zero, and the envelope has
/// unit sum, so responses are comparable across scales.
pub fn build_gabor_bank(gamma: usize) -> Result<GaborBank> {
    if gamma < 1 {
        return arg_err("Gabor bank needs at least one scale");
    }
    let mut kernels = Vec::with_capacity(gamma * ORIENTATIONS);
    for s in 0..gamma {
        let lambda = wavelength(s);
        let sigma = SIGMA_PER_WAVELENGTH * lambda;
        let radius = (TRUNCATION * sigma / ASPECT_RATIO).ceil() as usize;
        for o in 0..ORIENTATIONS {
            kernels.push(gabor_kernel(s, o, lambda, sigma, radius));
        }
    }
    Ok(GaborBank { scales: gamma, kernels })
}

fn gabor_kernel(scale: usize, orientation: usize, lambda: f64, sigma: f64, radius: usize) -> GaborKernel {
    let theta = orientation as f64 * PI / ORIENTATIONS as f64;
    let (sin, cos) = theta.sin_cos();
    let r = radius as isize;
    let n = (2 * radius + 1) * (2 * radius + 1);
    let mut env = Vec::with_capacity(n);
    let mut phase = Vec::with_capacity(n);
    // x to the right, y downwards; the carrier runs along the rotated x axis
    for y in -r..=r {
        for x in -r..=r {
            let (x, y) = (x as f64, y as f64);
            let xr = x * cos + y * sin;
            let yr = -x * sin + y * cos;
            env.push((-(xr * xr + ASPECT_RATIO * ASPECT_RATIO * yr * yr) / (2.0 * sigma * sigma)).exp());
            phase.push(2.0 * PI * xr / lambda);
        }
    }
    let env_sum: f64 = env.iter().sum();
    let dc_re = env.iter().zip(&phase).map(|(e, p)| e * p.cos()).sum::<f64>() / env_sum;
    let dc_im = env.iter().zip(&phase).map(|(e, p)| e * p.sin()).sum::<f64>() / env_sum;
    let re = env.iter().zip(&phase).map(|(e, p)| e * (p.cos() - dc_re) / env_sum).collect();
    let im = env.iter().zip(&phase).map(|(e, p)| e * (p.sin() - dc_im) / env_sum).collect();
    GaborKernel { scale, orientation, theta, wavelength: lambda, sigma, radius, re, im }
}

/// Response modulus of every kernel of the bank, indexed like
/// [`GaborBank::kernels`].
pub fn gabor_responses(r: &Raster, bank: &GaborBank) -> Vec<Raster> {
    let conv = FftConvolver::new(r, bank.max_radius());
    bank.kernels.iter().map(|k| conv.response_modulus(k)).collect()
}

/// Per-pixel max over orientations of the response modulus, one feature per
/// scale.
pub fn gabor_features(r: &Raster, bank: &GaborBank) -> FeatureField {
    let conv = FftConvolver::new(r, bank.max_radius());
    let n = r.len();
    let dim = bank.scales;
    let mut data = vec![0.0f64; n * dim];
    for k in &bank.kernels {
        let resp = conv.response_modulus(k);
        for (p, &v) in resp.as_slice().iter().enumerate() {
            let slot = &mut data[p * dim + k.scale];
            if v > *slot {
                *slot = v;
            }
        }
    }
    FeatureField { width: r.width(), height: r.height(), dim, data }
}

/// Holds the spectrum of a mirror-padded image for repeated convolutions.
struct FftConvolver {
    width: usize,
    height: usize,
    pad: usize,
    pw: usize,
    ph: usize,
    spectrum: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl FftConvolver {
    fn new(r: &Raster, pad: usize) -> Self {
        let (w, h) = (r.width(), r.height());
        let pw = fast_len(w + 2 * pad);
        let ph = fast_len(h + 2 * pad);
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(pw);
        let col_fwd = planner.plan_fft_forward(ph);
        let row_inv = planner.plan_fft_inverse(pw);
        let col_inv = planner.plan_fft_inverse(ph);
        let mut buf = vec![Complex64::new(0.0, 0.0); pw * ph];
        for y in 0..ph {
            let sy = reflect(y as isize - pad as isize, h);
            for x in 0..pw {
                let sx = reflect(x as isize - pad as isize, w);
                buf[y * pw + x] = Complex64::new(r.get(sy, sx), 0.0);
            }
        }
        let mut conv = Self { width: w, height: h, pad, pw, ph, spectrum: Vec::new(), row_fwd, col_fwd, row_inv, col_inv };
        conv.transform(&mut buf, false);
        conv.spectrum = buf;
        conv
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        for line in buf.chunks_exact_mut(self.pw) {
            row.process(line);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.ph];
        for x in 0..self.pw {
            for y in 0..self.ph {
                column[y] = buf[y * self.pw + x];
            }
            col.process(&mut column);
            for y in 0..self.ph {
                buf[y * self.pw + x] = column[y];
            }
        }
    }

    fn response_modulus(&self, k: &GaborKernel) -> Raster {
        let (pw, ph) = (self.pw, self.ph);
        let mut kbuf = vec![Complex64::new(0.0, 0.0); pw * ph];
        let r = k.radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let y = dy.rem_euclid(ph as isize) as usize;
                let x = dx.rem_euclid(pw as isize) as usize;
                kbuf[y * pw + x] += k.at(dy, dx);
            }
        }
        self.transform(&mut kbuf, false);
        for (a, b) in kbuf.iter_mut().zip(&self.spectrum) {
            *a *= b;
        }
        self.transform(&mut kbuf, true);
        let norm = (pw * ph) as f64;
        Raster::from_fn(self.width, self.height, |i, j| kbuf[(i + self.pad) * pw + j + self.pad].norm() / norm)
    }
}

/// Smallest length `>= n` whose only prime factors are 2, 3 and 5.
fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut v = m;
        for p in [2, 3, 5] {
            while v % p == 0 {
                v /= p;
            }
        }
        if v == 1 {
            return m;
        }
        m += 1;
    }
}
