use rand::Rng;

use super::{gemm, Layer, Param, Tensor4};
use crate::error::{arg_err, Result};

/// `y = W x + b` on the flattened batch items; `W` is `out x in`. Output
/// dims are `(n, out, 1, 1)`.
pub fn dense_forward(x: &Tensor4, w: &[f64], b: &[f64]) -> Result<Tensor4> {
    let (n, fan_in, out) = (x.n(), x.item_len(), b.len());
    if w.len() != out * fan_in {
        return arg_err(format!("dense weights have {} values, expected {out}x{fan_in}", w.len()));
    }
    let mut y = vec![0.0; n * out];
    gemm(n, fan_in, out, x.as_slice(), false, w, true, &mut y, 0.0);
    for row in y.chunks_exact_mut(out.max(1)) {
        row.iter_mut().zip(b).for_each(|(v, bo)| *v += bo);
    }
    Ok(Tensor4::from_parts([n, out, 1, 1], y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub dx: Tensor4,
}

pub fn dense_backward(x: &Tensor4, w: &[f64], grad_out: &Tensor4) -> Result<DenseGrad> {
    let (n, fan_in, out) = (x.n(), x.item_len(), grad_out.item_len());
    if grad_out.n() != n || w.len() != out * fan_in {
        return arg_err("dense gradient shape mismatch");
    }
    let g = grad_out.as_slice();
    let mut dw = vec![0.0; out * fan_in];
    gemm(out, n, fan_in, g, true, x.as_slice(), false, &mut dw, 0.0);
    let mut db = vec![0.0; out];
    for row in g.chunks_exact(out.max(1)) {
        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
    }
    let mut dx = vec![0.0; n * fan_in];
    gemm(n, out, fan_in, g, false, w, false, &mut dx, 0.0);
    Ok(DenseGrad { dw, db, dx: Tensor4::from_parts(x.dims(), dx) })
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub fan_in: usize,
    pub out: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor4>,
}

impl Dense {
    /// He-normal weights, zero bias.
    pub fn new(fan_in: usize, out: usize, rng: &mut impl Rng) -> Self {
        Self::with_sd(fan_in, out, (2.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn with_sd(fan_in: usize, out: usize, sd: f64, rng: &mut impl Rng) -> Self {
        Self { fan_in, out, weight: Param::normal(&[out, fan_in], sd, rng), bias: Param::zeros(&[out]), input: None }
    }
}

impl Layer for Dense {
    fn name(&self) -> String {
        format!("dense({}->{})", self.fan_in, self.out)
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.item_len() != self.fan_in {
            return arg_err(format!("{}: input items have {} values", self.name(), x.item_len()));
        }
        dense_forward(x, &self.weight.value, &self.bias.value)
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let Some(x) = &self.input else { return arg_err("dense backward before forward") };
        let g = dense_backward(x, &self.weight.value, grad_out)?;
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
