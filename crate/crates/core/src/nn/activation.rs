use super::{Layer, Tensor4};
use crate::error::{arg_err, Result};

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cached<'a>(c: &'a Option<Tensor4>, g: &Tensor4, name: &str) -> Result<&'a Tensor4> {
    match c {
        Some(t) if t.dims() == g.dims() => Ok(t),
        Some(_) => arg_err(format!("{name}: gradient has the wrong shape")),
        None => arg_err(format!("{name}: backward before forward")),
    }
}

fn zip(a: &Tensor4, b: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
    Tensor4::from_parts(a.dims(), a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect())
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    input: Option<Tensor4>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn name(&self) -> String {
        "relu".into()
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(x.map(relu))
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let x = cached(&self.input, g, "relu")?;
        Ok(zip(x, g, |x, g| if x > 0.0 { g } else { 0.0 }))
    }

    fn kink_pattern(&self, out: &mut Vec<bool>) {
        if let Some(x) = &self.input {
            out.extend(x.as_slice().iter().map(|&v| v > 0.0));
        }
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    input: Option<Tensor4>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, input: None }
    }
}

impl Layer for LeakyRelu {
    fn name(&self) -> String {
        format!("leaky_relu({})", self.slope)
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(x.map(|v| leaky_relu(v, self.slope)))
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let x = cached(&self.input, g, "leaky_relu")?;
        let s = self.slope;
        Ok(zip(x, g, |x, g| if x > 0.0 { g } else { s * g }))
    }

    fn kink_pattern(&self, out: &mut Vec<bool>) {
        if let Some(x) = &self.input {
            out.extend(x.as_slice().iter().map(|&v| v > 0.0));
        }
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh {
    output: Option<Tensor4>,
}

impl Tanh {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Tanh {
    fn name(&self) -> String {
        "tanh".into()
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(x.map(f64::tanh))
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let y = cached(&self.output, g, "tanh")?;
        Ok(zip(y, g, |y, g| (1.0 - y * y) * g))
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    output: Option<Tensor4>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Sigmoid {
    fn name(&self) -> String {
        "sigmoid".into()
    }

    fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(x.map(sigmoid))
    }

    fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let y = cached(&self.output, g, "sigmoid")?;
        Ok(zip(y, g, |y, g| y * (1.0 - y) * g))
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
