//! Haar wavelet pooling: only the LL subband of a one-level orthonormal Haar
//! transform is kept, `(a + b + c + d) / 2` per 2x2 block.

use super::{Layer, Tensor4};
use crate::error::{arg_err, Result};

fn check_even(x: &Tensor4) -> Result<()> {
    if x.h() % 2 != 0 || x.w() % 2 != 0 {
        return arg_err(format!("2x2 pooling needs even dimensions, got {}x{}", x.h(), x.w()));
    }
    Ok(())
}

fn block_sums(x: &Tensor4, scale: f64) -> Result<Tensor4> {
    check_even(x)?;
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let src = x.as_slice();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let r0 = base + 2 * oy * w;
            let r1 = r0 + w;
            for ox in 0..ow {
                let (a, b) = (src[r0 + 2 * ox], src[r0 + 2 * ox + 1]);
                let (cc, d) = (src[r1 + 2 * ox], src[r1 + 2 * ox + 1]);
                out.push((((a + b) + cc) + d) * scale);
            }
        }
    }
    Ok(Tensor4::from_parts([n, c, oh, ow], out))
}

pub fn haar_pool_forward(x: &Tensor4) -> Result<Tensor4> {
    block_sums(x, 0.5)
}

/// 2x2 average pooling, stride 2.
pub fn average_pool2(x: &Tensor4) -> Result<Tensor4> {
    block_sums(x, 0.25)
}

/// Every position of a block receives half the block's output gradient.
pub fn haar_pool_backward(grad_out: &Tensor4) -> Tensor4 {
    let [n, c, oh, ow] = grad_out.dims();
    let (h, w) = (2 * oh, 2 * ow);
    let g = grad_out.as_slice();
    let mut dx = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        for y in 0..h {
            for x in 0..w {
                dx[(plane * h + y) * w + x] = 0.5 * g[(plane * oh + y / 2) * ow + x / 2];
            }
        }
    }
    Tensor4::from_parts([n, c, h, w], dx)
}

#[derive(Debug, Clone, Default)]
pub struct HaarPool {
    input_dims: Option<[usize; 4]>,
}

impl HaarPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for HaarPool {
    fn name(&self) -> String {
        "haar_ll".into()
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        haar_pool_forward(x)
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.input_dims = Some(x.dims());
        haar_pool_forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        match self.input_dims {
            Some([n, c, h, w]) if grad_out.dims() == [n, c, h / 2, w / 2] => Ok(haar_pool_backward(grad_out)),
            Some(_) => arg_err("pool gradient has the wrong shape"),
            None => arg_err("pool backward before forward"),
        }
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
