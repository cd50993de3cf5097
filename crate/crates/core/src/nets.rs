//! The wavelet-pooled classifier (CWNN) and the DCGAN patch generator.
//!
//! Both work on `2λ x 2λ` single-channel patches scaled to `[-1, 1]`. With
//! `λ = 14` the classifier runs 28 → 14 → 7 and the generator
//! 4 → 7 → 14 → 28.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::nn::{
    grad_check, softmax, Adam, AdamHyper, Conv2d, ConvTranspose2d, Dense, GradCheckOptions, GradReport, HaarPool,
    LeakyRelu, Objective, Relu, Reshape, Sequential, Sigmoid, Tanh, Tensor4,
};

/// Label of the changed class.
pub const CHANGED: usize = 1;
pub const UNCHANGED: usize = 0;

fn check_lambda(lambda: usize) -> Result<()> {
    if lambda < 8 || lambda % 2 != 0 {
        return arg_err(format!("lambda must be even and at least 8, got {lambda}"));
    }
    Ok(())
}

fn batch(patches: &[&[f64]], side: usize) -> Result<Tensor4> {
    Tensor4::stack(patches, [1, side, side])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwnnConfig {
    pub lambda: usize,
    pub channels: [usize; 2],
    pub kernel: usize,
}

impl Default for CwnnConfig {
    fn default() -> Self {
        Self { lambda: 14, channels: [16, 32], kernel: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwnnTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for CwnnTrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, epochs: 30, batch: 32, seed: 0 }
    }
}

/// conv5 → Haar LL → conv5 → Haar LL → dense → softmax.
#[derive(Debug, Clone)]
pub struct Cwnn {
    pub config: CwnnConfig,
    pub net: Sequential,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl Cwnn {
    pub fn new(config: CwnnConfig, seed: u64) -> Result<Self> {
        check_lambda(config.lambda)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2] = config.channels;
        let (k, q) = (config.kernel, config.lambda / 2);
        if k % 2 == 0 {
            return arg_err("kernel size must be odd");
        }
        let net = Sequential::new()
            .push(Conv2d::new(1, c1, k, 1, k / 2, &mut rng))
            .push(Relu::new())
            .push(HaarPool::new())
            .push(Conv2d::new(c1, c2, k, 1, k / 2, &mut rng))
            .push(Relu::new())
            .push(HaarPool::new())
            .push(Dense::with_sd(c2 * q * q, 2, (1.0 / (c2 * q * q) as f64).sqrt(), &mut rng));
        Ok(Self { config, net, loss_trace: Vec::new() })
    }

    pub fn side(&self) -> usize {
        2 * self.config.lambda
    }

    /// Class probabilities `[unchanged, changed]` per patch.
    pub fn probabilities(&self, patches: &[&[f64]]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(64) {
            let logits = self.net.infer(&batch(chunk, self.side())?)?;
            for i in 0..logits.n() {
                let p = softmax(logits.item(i));
                out.push([p[0], p[1]]);
            }
        }
        Ok(out)
    }

    /// 1 for changed, 0 for unchanged; ties go to unchanged.
    pub fn classify(&self, patches: &[&[f64]]) -> Result<Vec<u8>> {
        Ok(self.probabilities(patches)?.iter().map(|p| u8::from(p[CHANGED] > p[UNCHANGED])).collect())
    }

    /// Central-difference check of every parameter on one labelled batch.
    pub fn grad_check(&mut self, patches: &[&[f64]], labels: &[usize], opts: &GradCheckOptions) -> Result<GradReport> {
        let x = batch(patches, self.side())?;
        grad_check(&mut self.net, &x, &Objective::SoftmaxCrossEntropy(labels.to_vec()), opts)
    }
}

/// Mini-batch cross-entropy training with Adam.
pub fn cwnn_train(model_cfg: CwnnConfig, patches: &[&[f64]], labels: &[usize], cfg: &CwnnTrainConfig) -> Result<Cwnn> {
    if patches.len() != labels.len() {
        return arg_err("one label per patch required");
    }
    for class in [UNCHANGED, CHANGED] {
        if !labels.contains(&class) {
            return arg_err(format!("training set has no patch of class {class}"));
        }
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return arg_err(format!("label {l} is not binary"));
    }
    if cfg.batch == 0 {
        return arg_err("batch size must be positive");
    }
    let mut model = Cwnn::new(model_cfg, cfg.seed)?;
    let side = model.side();
    if let Some(p) = patches.iter().find(|p| p.len() != side * side) {
        return arg_err(format!("patch of {} values does not match {side}x{side}", p.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut adam = Adam::new(AdamHyper::new(cfg.lr));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let items: Vec<&[f64]> = chunk.iter().map(|&i| patches[i]).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let x = batch(&items, side)?;
            model.net.zero_grad();
            let logits = model.net.forward(&x)?;
            let (loss, g) = Objective::SoftmaxCrossEntropy(ys).evaluate(&logits)?;
            model.net.backward(&g)?;
            adam.step(model.net.params_mut());
            total += loss * chunk.len() as f64;
        }
        model.loss_trace.push(total / patches.len() as f64);
    }
    model.net.zero_grad();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcganConfig {
    pub lambda: usize,
    pub noise_dim: usize,
    /// Channels after the dense layer and the first two transposed convolutions.
    pub g_channels: [usize; 3],
    pub d_channels: [usize; 2],
    pub lr_g: f64,
    pub lr_d: f64,
    /// Passes over the real set, one discriminator and one generator step
    /// per batch.
    pub epochs: usize,
    pub batch: usize,
    /// Larger real sets are subsampled to this many patches.
    pub max_real: usize,
    /// Discriminator-only steps against the untrained generator first.
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    /// Target ranges for real and fake scores.
    pub real_target: (f64, f64),
    pub fake_target: (f64, f64),
    pub seed: u64,
}

impl Default for DcganConfig {
    fn default() -> Self {
        Self {
            lambda: 14,
            noise_dim: 100,
            g_channels: [128, 64, 32],
            d_channels: [32, 64],
            lr_g: 3e-4,
            lr_d: 6e-4,
            epochs: 300,
            batch: 64,
            max_real: 640,
            pretrain_steps: 10,
            pretrain_lr: 1e-4,
            real_target: (0.8, 1.0),
            fake_target: (0.0, 0.2),
            seed: 0,
        }
    }
}

/// Smallest real set the generator is trained on.
pub const MIN_REAL_PATCHES: usize = 16;

#[derive(Debug, Clone)]
pub struct Dcgan {
    pub config: DcganConfig,
    pub generator: Sequential,
    pub discriminator: Sequential,
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DcganTrace {
    pub pretrain_d_loss: Vec<f64>,
    /// Smoothed BCE of the discriminator step.
    pub d_loss: Vec<f64>,
    /// `-mean ln D(G(z))` of the generator step.
    pub g_loss: Vec<f64>,
    /// `mean ln D(x) + mean ln(1 - D(G(z)))`, the minimax value.
    pub minimax: Vec<f64>,
}

impl Dcgan {
    pub fn new(config: DcganConfig) -> Result<Self> {
        check_lambda(config.lambda)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let q = config.lambda / 2;
        let start = q - 3;
        let [g0, g1, g2] = config.g_channels;
        let generator = Sequential::new()
            .push(Dense::new(config.noise_dim, g0 * start * start, &mut rng))
            .push(Reshape::new(g0, start, start))
            .push(Relu::new())
            .push(ConvTranspose2d::new(g0, g1, 4, 1, 0, &mut rng))
            .push(Relu::new())
            .push(ConvTranspose2d::new(g1, g2, 4, 2, 1, &mut rng))
            .push(Relu::new())
            .push(ConvTranspose2d::new(g2, 1, 4, 2, 1, &mut rng))
            .push(Tanh::new());
        let [d0, d1] = config.d_channels;
        let discriminator = Sequential::new()
            .push(Conv2d::new(1, d0, 4, 2, 1, &mut rng))
            .push(LeakyRelu::new(0.2))
            .push(Conv2d::new(d0, d1, 4, 2, 1, &mut rng))
            .push(LeakyRelu::new(0.2))
            .push(Dense::with_sd(d1 * q * q, 1, (1.0 / (d1 * q * q) as f64).sqrt(), &mut rng))
            .push(Sigmoid::new());
        Ok(Self { config, generator, discriminator })
    }

    pub fn side(&self) -> usize {
        2 * self.config.lambda
    }

    fn noise(&self, n: usize, rng: &mut impl Rng) -> Tensor4 {
        Tensor4::from_fn([n, self.config.noise_dim, 1, 1], |_| rng.sample(StandardNormal))
    }

    /// `n` generated patches from standard-normal noise.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let b = left.min(64);
            let z = self.noise(b, &mut rng);
            let g = self.generator.infer(&z)?;
            out.extend((0..b).map(|i| g.item(i).to_vec()));
            left -= b;
        }
        Ok(out)
    }

    /// Discriminator scores in (0, 1).
    pub fn score(&self, patches: &[&[f64]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(64) {
            out.extend_from_slice(self.discriminator.infer(&batch(chunk, self.side())?)?.as_slice());
        }
        Ok(out)
    }

    /// Checks the discriminator under its smoothed loss on `real` and fresh
    /// fakes, and the generator (through the discriminator) under the
    /// non-saturating loss.
    pub fn grad_check(&self, real: &[&[f64]], seed: u64, opts: &GradCheckOptions) -> Result<(GradReport, GradReport)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fakes = self.generator.infer(&self.noise(real.len(), &mut rng))?;
        let mut items: Vec<&[f64]> = real.to_vec();
        items.extend((0..fakes.n()).map(|i| fakes.item(i)));
        let mut targets = draw_targets(real.len(), self.config.real_target, &mut rng);
        targets.extend(draw_targets(fakes.n(), self.config.fake_target, &mut rng));
        let mut d = self.discriminator.clone();
        let d_report = grad_check(&mut d, &batch(&items, self.side())?, &Objective::Bce(targets), opts)?;

        let mut gd = self.generator.chain(&self.discriminator);
        let z = self.noise(real.len().max(1), &mut rng);
        let g_report = grad_check(&mut gd, &z, &Objective::Bce(vec![1.0; z.n()]), opts)?;
        Ok((d_report, g_report))
    }
}

fn draw_targets(n: usize, range: (f64, f64), rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| if range.0 < range.1 { rng.random_range(range.0..range.1) } else { range.0 }).collect()
}

/// One discriminator update on `x` with `targets`; returns the loss before
/// the update.
fn discriminator_step(model: &mut Dcgan, adam: &mut Adam, x: &Tensor4, targets: Vec<f64>) -> Result<(f64, Tensor4)> {
    model.discriminator.zero_grad();
    let s = model.discriminator.forward(x)?;
    let (loss, g) = Objective::Bce(targets).evaluate(&s)?;
    model.discriminator.backward(&g)?;
    adam.step(model.discriminator.params_mut());
    model.discriminator.zero_grad();
    Ok((loss, s))
}

/// Full-batch discriminator training against fixed `fake` patches; returns
/// the loss before each step.
pub fn pretrain_discriminator(model: &mut Dcgan, real: &[&[f64]], fake: &[&[f64]], steps: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = real.to_vec();
    items.extend_from_slice(fake);
    let x = batch(&items, model.side())?;
    let mut targets = draw_targets(real.len(), model.config.real_target, &mut rng);
    targets.extend(draw_targets(fake.len(), model.config.fake_target, &mut rng));
    let mut adam = Adam::new(AdamHyper::new(model.config.pretrain_lr));
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        trace.push(discriminator_step(model, &mut adam, &x, targets.clone())?.0);
    }
    Ok(trace)
}

/// Adversarial training on real changed patches in `[-1, 1]`.
pub fn dcgan_train(real: &[&[f64]], cfg: &DcganConfig) -> Result<(Dcgan, DcganTrace)> {
    if real.len() < MIN_REAL_PATCHES {
        return arg_err(format!("need at least {MIN_REAL_PATCHES} real patches, got {}", real.len()));
    }
    if cfg.batch == 0 {
        return arg_err("batch size must be positive");
    }
    if cfg.max_real < MIN_REAL_PATCHES {
        return arg_err(format!("max_real must be at least {MIN_REAL_PATCHES}, got {}", cfg.max_real));
    }
    let mut model = Dcgan::new(*cfg)?;
    let side = model.side();
    if let Some(p) = real.iter().find(|p| p.len() != side * side) {
        return arg_err(format!("patch of {} values does not match {side}x{side}", p.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6a11));
    let real: Vec<&[f64]> = if real.len() > cfg.max_real {
        let mut idx = rand::seq::index::sample(&mut rng, real.len(), cfg.max_real).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| real[i]).collect()
    } else {
        real.to_vec()
    };
    let mut trace = DcganTrace::default();

    if cfg.pretrain_steps > 0 {
        let n = real.len().min(cfg.batch);
        let picked: Vec<&[f64]> = rand::seq::index::sample(&mut rng, real.len(), n).iter().map(|i| real[i]).collect();
        let fake = model.generator.infer(&model.noise(n, &mut rng))?;
        let fake_items: Vec<&[f64]> = (0..n).map(|i| fake.item(i)).collect();
        let seed = rng.random();
        trace.pretrain_d_loss = pretrain_discriminator(&mut model, &picked, &fake_items, cfg.pretrain_steps, seed)?;
    }

    let mut adam_d = Adam::new(AdamHyper::new(cfg.lr_d));
    let mut adam_g = Adam::new(AdamHyper::new(cfg.lr_g));
    let ln = |v: f64| v.clamp(crate::nn::PROB_FLOOR, 1.0).ln();
    let mut order: Vec<usize> = (0..real.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let batches = order.len().div_ceil(cfg.batch);
        for chunk in order.chunks(cfg.batch) {
            let b = chunk.len();
            let mut items: Vec<&[f64]> = chunk.iter().map(|&i| real[i]).collect();
            let fake = model.generator.infer(&model.noise(b, &mut rng))?;
            items.extend((0..b).map(|i| fake.item(i)));
            let mut targets = draw_targets(b, cfg.real_target, &mut rng);
            targets.extend(draw_targets(b, cfg.fake_target, &mut rng));
            let (d_loss, scores) = discriminator_step(&mut model, &mut adam_d, &batch(&items, side)?, targets)?;
            let s = scores.as_slice();
            let minimax = s[..b].iter().map(|&v| ln(v)).sum::<f64>() / b as f64
                + s[b..].iter().map(|&v| ln(1.0 - v)).sum::<f64>() / b as f64;

            let z = model.noise(b, &mut rng);
            model.generator.zero_grad();
            model.discriminator.zero_grad();
            let g = model.generator.forward(&z)?;
            let s = model.discriminator.forward(&g)?;
            let (g_loss, gs) = Objective::Bce(vec![1.0; b]).evaluate(&s)?;
            let gx = model.discriminator.backward(&gs)?;
            model.generator.backward(&gx)?;
            adam_g.step(model.generator.params_mut());
            model.generator.zero_grad();
            model.discriminator.zero_grad();

            sums[0] += d_loss;
            sums[1] += g_loss;
            sums[2] += minimax;
        }
        let n = batches as f64;
        trace.d_loss.push(sums[0] / n);
        trace.g_loss.push(sums[1] / n);
        trace.minimax.push(sums[2] / n);
    }
    Ok((model, trace))
}

/// `n` generated patches; see [`Dcgan::sample`].
pub fn dcgan_sample(model: &Dcgan, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    model.sample(n, seed)
}
