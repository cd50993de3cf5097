//! Cross-correlation and its transpose via im2col and matrix products.
//!
//! Weights of [`Conv2d`] are laid out `[out][in][ky][kx]`; weights of
//! [`ConvTranspose2d`] are `[in][out][ky][kx]`, so a transposed convolution
//! shares its weight tensor layout with the convolution it is the adjoint of.

use rand::Rng;

use super::{gemm, Layer, Param, Tensor4};
use crate::error::{arg_err, Result};

/// `(len + 2·pad - k) / stride + 1`, or `None` if the window does not fit.
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// `(len - 1)·stride - 2·pad + k`.
pub fn deconv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((len.checked_sub(1)? * stride) + k).checked_sub(2 * pad).filter(|&v| v > 0)
}

/// Geometry of one convolution: `channels x h x w` images seen by a
/// `k x k` window with `stride` and zero padding `pad`, producing `oh x ow`.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one image into a `(channels·k·k) x (oh·ow)` matrix.
fn im2col(img: &[f64], g: &Geometry, out: &mut [f64]) {
    let p = g.cols();
    for c in 0..g.channels {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut out[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if y < 0 || y >= g.h as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &img[(c * g.h + y as usize) * g.w..(c * g.h + y as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if x < 0 || x >= g.w as isize { 0.0 } else { src[x as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters the matrix back, summing overlaps.
fn col2im(cols: &[f64], g: &Geometry, img: &mut [f64]) {
    img.iter_mut().for_each(|v| *v = 0.0);
    let p = g.cols();
    for c in 0..g.channels {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + y as usize) * g.w;
                    for ox in 0..g.ow {
                        let x = (ox * g.stride + kx) as isize - g.pad as isize;
                        if x >= 0 && x < g.w as isize {
                            img[base + x as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_weights(w: &[f64], b: &[f64], out_c: usize, in_c: usize, k: usize) -> Result<()> {
    if w.len() != out_c * in_c * k * k {
        return arg_err(format!("weight tensor has {} values, expected {out_c}x{in_c}x{k}x{k}", w.len()));
    }
    if b.len() != out_c {
        return arg_err(format!("bias has {} values, expected {out_c}", b.len()));
    }
    Ok(())
}

fn conv_geometry(x: &Tensor4, in_c: usize, k: usize, stride: usize, pad: usize) -> Result<Geometry> {
    if x.c() != in_c {
        return arg_err(format!("input has {} channels, layer expects {in_c}", x.c()));
    }
    match (conv_out_len(x.h(), k, stride, pad), conv_out_len(x.w(), k, stride, pad)) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {
            Ok(Geometry { channels: in_c, h: x.h(), w: x.w(), k, stride, pad, oh, ow })
        }
        _ => arg_err(format!("{}x{} input too small for a {k}x{k} window", x.h(), x.w())),
    }
}

/// Cross-correlation of `x` with `w` (`out_c x in_c x k x k`) plus bias.
pub fn conv2d_forward(x: &Tensor4, w: &[f64], b: &[f64], k: usize, stride: usize, pad: usize) -> Result<Tensor4> {
    let out_c = b.len();
    let g = conv_geometry(x, x.c(), k, stride, pad)?;
    check_weights(w, b, out_c, x.c(), k)?;
    let (rows, p) = (g.rows(), g.cols());
    let mut cols = vec![0.0; rows * p];
    let mut out = vec![0.0; x.n() * out_c * p];
    for n in 0..x.n() {
        im2col(x.item(n), &g, &mut cols);
        let y = &mut out[n * out_c * p..(n + 1) * out_c * p];
        gemm(out_c, rows, p, w, false, &cols, false, y, 0.0);
        for (o, &bo) in b.iter().enumerate() {
            y[o * p..(o + 1) * p].iter_mut().for_each(|v| *v += bo);
        }
    }
    Ok(Tensor4::from_parts([x.n(), out_c, g.oh, g.ow], out))
}

/// Gradients of a convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dx: Tensor4,
}

/// Gradients of [`conv2d_forward`] for upstream gradient `grad_out`.
pub fn conv2d_backward(x: &Tensor4, w: &[f64], out_c: usize, k: usize, stride: usize, pad: usize, grad_out: &Tensor4) -> Result<ConvGrad> {
    let g = conv_geometry(x, x.c(), k, stride, pad)?;
    check_weights(w, &vec![0.0; out_c], out_c, x.c(), k)?;
    if grad_out.dims() != [x.n(), out_c, g.oh, g.ow] {
        return arg_err(format!("gradient dims {:?} do not match the forward output", grad_out.dims()));
    }
    let (rows, p) = (g.rows(), g.cols());
    let mut cols = vec![0.0; rows * p];
    let mut dcols = vec![0.0; rows * p];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; out_c];
    let mut dx = vec![0.0; x.len()];
    let il = x.item_len();
    for n in 0..x.n() {
        let go = grad_out.item(n);
        im2col(x.item(n), &g, &mut cols);
        gemm(out_c, p, rows, go, false, &cols, true, &mut dw, 1.0);
        for (o, d) in db.iter_mut().enumerate() {
            *d += go[o * p..(o + 1) * p].iter().sum::<f64>();
        }
        gemm(rows, out_c, p, w, true, go, false, &mut dcols, 0.0);
        col2im(&dcols, &g, &mut dx[n * il..(n + 1) * il]);
    }
    Ok(ConvGrad { dw, db, dx: Tensor4::from_parts(x.dims(), dx) })
}

fn he_sd(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor4>,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::normal(&[out_c, in_c, k, k], he_sd(in_c * k * k), rng),
            bias: Param::zeros(&[out_c]),
            input: None,
        }
    }
}

impl Layer for Conv2d {
    fn name(&self) -> String {
        format!("conv{}x{}({}->{},s{},p{})", self.k, self.k, self.in_c, self.out_c, self.stride, self.pad)
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.c() != self.in_c {
            return arg_err(format!("{}: input has {} channels", self.name(), x.c()));
        }
        conv2d_forward(x, &self.weight.value, &self.bias.value, self.k, self.stride, self.pad)
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let Some(x) = &self.input else { return arg_err("conv backward before forward") };
        let g = conv2d_backward(x, &self.weight.value, self.out_c, self.k, self.stride, self.pad, grad_out)?;
        self.weight.grad.iter_mut().zip(&g.dw).for_each(|(a, b)| *a += b);
        self.bias.grad.iter_mut().zip(&g.db).for_each(|(a, b)| *a += b);
        Ok(g.dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Transposed convolution (fractionally strided), the adjoint of [`Conv2d`]
/// with the same `k`, `stride` and `pad`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor4>,
}

impl ConvTranspose2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut impl Rng) -> Self {
        // each output sees about in_c·k²/stride² inputs
        let fan_in = (in_c * k * k / (stride * stride)).max(1);
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::normal(&[in_c, out_c, k, k], he_sd(fan_in), rng),
            bias: Param::zeros(&[out_c]),
            input: None,
        }
    }

    fn geometry(&self, x: &Tensor4) -> Result<Geometry> {
        if x.c() != self.in_c {
            return arg_err(format!("{}: input has {} channels", self.name(), x.c()));
        }
        let (Some(oh), Some(ow)) =
            (deconv_out_len(x.h(), self.k, self.stride, self.pad), deconv_out_len(x.w(), self.k, self.stride, self.pad))
        else {
            return arg_err(format!("{}: {}x{} input gives an empty output", self.name(), x.h(), x.w()));
        };
        // the forward convolution this layer is the adjoint of maps oh x ow back to h x w
        let g = Geometry { channels: self.out_c, h: oh, w: ow, k: self.k, stride: self.stride, pad: self.pad, oh: x.h(), ow: x.w() };
        if conv_out_len(oh, self.k, self.stride, self.pad) != Some(x.h()) || conv_out_len(ow, self.k, self.stride, self.pad) != Some(x.w()) {
            return arg_err(format!("{}: geometry does not invert", self.name()));
        }
        Ok(g)
    }
}

impl Layer for ConvTranspose2d {
    fn name(&self) -> String {
        format!("deconv{}x{}({}->{},s{},p{})", self.k, self.k, self.in_c, self.out_c, self.stride, self.pad)
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        let g = self.geometry(x)?;
        let (rows, p) = (g.rows(), g.cols());
        let mut cols = vec![0.0; rows * p];
        let ol = self.out_c * g.h * g.w;
        let mut out = vec![0.0; x.n() * ol];
        for n in 0..x.n() {
            gemm(rows, self.in_c, p, &self.weight.value, true, x.item(n), false, &mut cols, 0.0);
            let y = &mut out[n * ol..(n + 1) * ol];
            col2im(&cols, &g, y);
            let plane = g.h * g.w;
            for (o, &bo) in self.bias.value.iter().enumerate() {
                y[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bo);
            }
        }
        Ok(Tensor4::from_parts([x.n(), self.out_c, g.h, g.w], out))
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let Some(x) = self.input.take() else { return arg_err("deconv backward before forward") };
        let g = self.geometry(&x)?;
        if grad_out.dims() != [x.n(), self.out_c, g.h, g.w] {
            self.input = Some(x);
            return arg_err("deconv gradient has the wrong shape");
        }
        let (rows, p) = (g.rows(), g.cols());
        let mut gcols = vec![0.0; rows * p];
        let mut dx = vec![0.0; x.len()];
        let il = x.item_len();
        let plane = g.h * g.w;
        for n in 0..x.n() {
            let go = grad_out.item(n);
            im2col(go, &g, &mut gcols);
            gemm(self.in_c, rows, p, &self.weight.value, false, &gcols, false, &mut dx[n * il..(n + 1) * il], 0.0);
            gemm(self.in_c, p, rows, x.item(n), false, &gcols, true, &mut self.weight.grad, 1.0);
            for (o, d) in self.bias.grad.iter_mut().enumerate() {
                *d += go[o * plane..(o + 1) * plane].iter().sum::<f64>();
            }
        }
        let dims = x.dims();
        self.input = Some(x);
        Ok(Tensor4::from_parts(dims, dx))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct six-loop cross-correlation.
    fn naive_conv(x: &Tensor4, w: &[f64], b: &[f64], k: usize, stride: usize, pad: usize) -> Tensor4 {
        let out_c = b.len();
        let oh = (x.h() + 2 * pad - k) / stride + 1;
        let ow = (x.w() + 2 * pad - k) / stride + 1;
        let mut out = Tensor4::zeros([x.n(), out_c, oh, ow]);
        let od = out.dims();
        for n in 0..x.n() {
            for o in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[o];
                        for c in 0..x.c() {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let y = (oy * stride + ky) as isize - pad as isize;
                                    let xx = (ox * stride + kx) as isize - pad as isize;
                                    if y >= 0 && xx >= 0 && (y as usize) < x.h() && (xx as usize) < x.w() {
                                        acc += w[((o * x.c() + c) * k + ky) * k + kx] * x.at(n, c, y as usize, xx as usize);
                                    }
                                }
                            }
                        }
                        out.as_mut_slice()[((n * od[1] + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_sum() {
        let x = Tensor4::from_fn([1, 1, 3, 3], |_| 1.0);
        let y = conv2d_forward(&x, &[1.0; 9], &[0.0], 3, 1, 0).unwrap();
        assert_eq!(y.dims(), [1, 1, 1, 1]);
        assert_eq!(y.as_slice(), &[9.0]);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random([2, 1, 6, 5], &mut rng);
        let mut w = [0.0; 25];
        w[12] = 1.0;
        assert_eq!(conv2d_forward(&x, &w, &[0.0], 5, 1, 2).unwrap(), x);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random([2, 3, 8, 8], &mut rng);
        for &(k, stride, pad) in &[(3, 1, 1), (4, 2, 1), (5, 1, 2), (3, 2, 0)] {
            let w: Vec<f64> = (0..4 * 3 * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = conv2d_forward(&x, &w, &b, k, stride, pad).unwrap();
            let slow = naive_conv(&x, &w, &b, k, stride, pad);
            assert_eq!(fast.dims(), slow.dims());
            for (a, e) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert_abs_diff_eq!(a, e, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        assert!(conv2d_forward(&x, &[0.0; 9], &[0.0], 3, 1, 0).is_err());
        let x = Tensor4::zeros([1, 1, 2, 2]);
        assert!(conv2d_forward(&x, &[0.0; 9], &[0.0], 3, 1, 0).is_err());
    }

    #[test]
    fn backward_linear_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([2, 2, 5, 5], &mut rng);
        let w: Vec<f64> = (0..3 * 2 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = random([2, 3, 5, 5], &mut rng);
        let a = conv2d_backward(&x, &w, 3, 3, 1, 1, &g).unwrap();
        let b = conv2d_backward(&x, &w, 3, 3, 1, 1, &g.scale(2.0)).unwrap();
        for (u, v) in a.dw.iter().zip(&b.dw) {
            assert_abs_diff_eq!(2.0 * u, v, epsilon = 1e-12);
        }
        for (u, v) in a.dx.as_slice().iter().zip(b.dx.as_slice()) {
            assert_abs_diff_eq!(2.0 * u, v, epsilon = 1e-12);
        }
        let z = conv2d_backward(&x, &w, 3, 3, 1, 1, &Tensor4::zeros([2, 3, 5, 5])).unwrap();
        assert!(z.dw.iter().chain(&z.db).chain(z.dx.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // <conv(y), x> = <y, deconv(x)> with shared weights and zero bias
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng);
        let x = random([1, 3, 7, 7], &mut rng);
        let y = random([1, 2, 14, 14], &mut rng);
        let dx = d.infer(&x).unwrap();
        assert_eq!(dx.dims(), [1, 2, 14, 14]);
        let cy = conv2d_forward(&y, &d.weight.value, &[0.0; 3], 4, 2, 1).unwrap();
        let lhs: f64 = cy.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        d.bias.value = vec![0.5, -0.5];
        let shifted = d.infer(&x).unwrap();
        assert_abs_diff_eq!(shifted.at(0, 0, 3, 3) - dx.at(0, 0, 3, 3), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn generator_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor4::zeros([1, 8, 4, 4]);
        let y = ConvTranspose2d::new(8, 4, 4, 1, 0, &mut rng).infer(&x).unwrap();
        assert_eq!(y.dims(), [1, 4, 7, 7]);
        let y = ConvTranspose2d::new(4, 2, 4, 2, 1, &mut rng).infer(&y).unwrap();
        assert_eq!(y.dims(), [1, 2, 14, 14]);
        let y = ConvTranspose2d::new(2, 1, 4, 2, 1, &mut rng).infer(&y).unwrap();
        assert_eq!(y.dims(), [1, 1, 28, 28]);
    }
}
