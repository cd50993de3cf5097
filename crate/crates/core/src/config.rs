//! Pipeline configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! eta = 3
//! scales = 100, 500, 1000, 2000
//! n_p = auto
//! ```
//!
//! Unknown keys are errors. `auto` selects the rule-based default for
//! `n_p` and `n_t`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteringConfig;
use crate::di::DiConfig;
use crate::error::{arg_err, Error, Result};
use crate::nets::{CwnnConfig, CwnnTrainConfig, DcganConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub eta: usize,
    /// Superpixel counts for a 400x400 image.
    pub scales: Vec<usize>,
    /// Rescale `scales` by image area (at least 16 superpixels each).
    pub scale_by_area: bool,
    pub alpha: [f64; 3],
    pub epsilon: f64,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub gamma: usize,
    pub beta: f64,
    pub m: f64,
    pub n_p: Option<usize>,
    pub fcm_tolerance: f64,
    pub fcm_max_iter: usize,
    pub lambda: usize,
    pub lr_cwnn: f64,
    pub cwnn_epochs: usize,
    pub cwnn_batch: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub gan_epochs: usize,
    pub gan_batch: usize,
    pub gan_pretrain_steps: usize,
    pub gan_pretrain_lr: f64,
    /// Real patches the generator trains on at most.
    pub gan_patches: usize,
    pub noise_dim: usize,
    pub n_t: Option<usize>,
    /// Upper bound on the per-class training-set size.
    pub n_t_max: usize,
    pub skip_gan: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let di = DiConfig::default();
        let cl = ClusteringConfig::default();
        let cw = CwnnTrainConfig::default();
        let gan = DcganConfig::default();
        Self {
            eta: di.eta,
            scales: di.scales,
            scale_by_area: true,
            alpha: di.alpha,
            epsilon: di.epsilon,
            compactness: di.compactness,
            slic_iterations: di.slic_iterations,
            mu1: cl.mu1,
            mu2: cl.mu2,
            gamma: cl.gamma,
            beta: cl.beta,
            m: cl.fuzzifier,
            n_p: None,
            fcm_tolerance: cl.tolerance,
            fcm_max_iter: cl.max_iter,
            lambda: 14,
            lr_cwnn: cw.lr,
            cwnn_epochs: cw.epochs,
            cwnn_batch: cw.batch,
            lr_g: gan.lr_g,
            lr_d: gan.lr_d,
            gan_epochs: gan.epochs,
            gan_batch: gan.batch,
            gan_pretrain_steps: gan.pretrain_steps,
            gan_pretrain_lr: gan.pretrain_lr,
            gan_patches: gan.max_real,
            noise_dim: gan.noise_dim,
            n_t: None,
            n_t_max: 4096,
            skip_gan: false,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Argument(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn parse_auto(key: &str, v: &str) -> Result<Option<usize>> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => arg_err(format!("{key}: expected true or false, got '{v}'")),
    }
}

fn fmt_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |n| n.to_string())
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "eta" => self.eta = parse_num(key, v)?,
            "scales" => self.scales = parse_list(key, v)?,
            "scale_by_area" => self.scale_by_area = parse_bool(key, v)?,
            "alpha" => {
                let a: Vec<f64> = parse_list(key, v)?;
                self.alpha = a.try_into().map_err(|_| Error::Argument("alpha needs three values".into()))?;
            }
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "compactness" => self.compactness = parse_num(key, v)?,
            "slic_iterations" => self.slic_iterations = parse_num(key, v)?,
            "mu1" => self.mu1 = parse_num(key, v)?,
            "mu2" => self.mu2 = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "m" => self.m = parse_num(key, v)?,
            "n_p" => self.n_p = parse_auto(key, v)?,
            "fcm_tolerance" => self.fcm_tolerance = parse_num(key, v)?,
            "fcm_max_iter" => self.fcm_max_iter = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "lr_cwnn" => self.lr_cwnn = parse_num(key, v)?,
            "cwnn_epochs" => self.cwnn_epochs = parse_num(key, v)?,
            "cwnn_batch" => self.cwnn_batch = parse_num(key, v)?,
            "lr_g" => self.lr_g = parse_num(key, v)?,
            "lr_d" => self.lr_d = parse_num(key, v)?,
            "gan_epochs" => self.gan_epochs = parse_num(key, v)?,
            "gan_batch" => self.gan_batch = parse_num(key, v)?,
            "gan_pretrain_steps" => self.gan_pretrain_steps = parse_num(key, v)?,
            "gan_pretrain_lr" => self.gan_pretrain_lr = parse_num(key, v)?,
            "gan_patches" => self.gan_patches = parse_num(key, v)?,
            "noise_dim" => self.noise_dim = parse_num(key, v)?,
            "n_t" => self.n_t = parse_auto(key, v)?,
            "n_t_max" => self.n_t_max = parse_num(key, v)?,
            "skip_gan" => self.skip_gan = parse_bool(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            other => return arg_err(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    /// Parses the text form on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the settings in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return arg_err(format!("line {}: expected key = value", n + 1));
            };
            self.set(k, v).map_err(|e| match e {
                Error::Argument(m) => Error::Argument(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("eta", self.eta.to_string());
        kv("scales", list(&self.scales));
        kv("scale_by_area", self.scale_by_area.to_string());
        kv("alpha", self.alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "));
        kv("epsilon", self.epsilon.to_string());
        kv("compactness", self.compactness.to_string());
        kv("slic_iterations", self.slic_iterations.to_string());
        kv("mu1", self.mu1.to_string());
        kv("mu2", self.mu2.to_string());
        kv("gamma", self.gamma.to_string());
        kv("beta", self.beta.to_string());
        kv("m", self.m.to_string());
        kv("n_p", fmt_auto(self.n_p));
        kv("fcm_tolerance", self.fcm_tolerance.to_string());
        kv("fcm_max_iter", self.fcm_max_iter.to_string());
        kv("lambda", self.lambda.to_string());
        kv("lr_cwnn", self.lr_cwnn.to_string());
        kv("cwnn_epochs", self.cwnn_epochs.to_string());
        kv("cwnn_batch", self.cwnn_batch.to_string());
        kv("lr_g", self.lr_g.to_string());
        kv("lr_d", self.lr_d.to_string());
        kv("gan_epochs", self.gan_epochs.to_string());
        kv("gan_batch", self.gan_batch.to_string());
        kv("gan_pretrain_steps", self.gan_pretrain_steps.to_string());
        kv("gan_pretrain_lr", self.gan_pretrain_lr.to_string());
        kv("gan_patches", self.gan_patches.to_string());
        kv("noise_dim", self.noise_dim.to_string());
        kv("n_t", fmt_auto(self.n_t));
        kv("n_t_max", self.n_t_max.to_string());
        kv("skip_gan", self.skip_gan.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.di_config(None).validate()?;
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            return arg_err(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.m > 1.0) {
            return arg_err(format!("m must exceed 1, got {}", self.m));
        }
        if self.gamma == 0 {
            return arg_err("gamma must be at least 1");
        }
        if self.lambda < 8 || self.lambda % 2 != 0 {
            return arg_err(format!("lambda must be even and at least 8, got {}", self.lambda));
        }
        for (name, v) in
            [("lr_cwnn", self.lr_cwnn), ("lr_g", self.lr_g), ("lr_d", self.lr_d), ("gan_pretrain_lr", self.gan_pretrain_lr)]
        {
            if !(v > 0.0) {
                return arg_err(format!("{name} must be positive"));
            }
        }
        if self.cwnn_batch == 0 || self.gan_batch == 0 || self.noise_dim == 0 {
            return arg_err("batch sizes and noise_dim must be positive");
        }
        if self.gan_patches < crate::nets::MIN_REAL_PATCHES {
            return arg_err(format!("gan_patches must be at least {}", crate::nets::MIN_REAL_PATCHES));
        }
        if self.n_p == Some(0) || self.n_t == Some(0) || self.n_t_max == 0 {
            return arg_err("n_p, n_t and n_t_max must be positive");
        }
        Ok(())
    }

    /// DI settings; with `area` given and `scale_by_area` set, superpixel
    /// counts are scaled to the image.
    pub fn di_config(&self, area: Option<usize>) -> DiConfig {
        let scales = match area {
            Some(a) if self.scale_by_area => crate::di::scale_superpixel_counts(&self.scales, a),
            _ => self.scales.clone(),
        };
        DiConfig {
            eta: self.eta,
            scales,
            alpha: self.alpha,
            epsilon: self.epsilon,
            compactness: self.compactness,
            slic_iterations: self.slic_iterations,
            seed: self.seed,
        }
    }

    pub fn clustering_config(&self) -> ClusteringConfig {
        ClusteringConfig {
            mu1: self.mu1,
            mu2: self.mu2,
            gamma: self.gamma,
            beta: self.beta,
            fuzzifier: self.m,
            n_p: self.n_p,
            tolerance: self.fcm_tolerance,
            max_iter: self.fcm_max_iter,
            seed: self.seed,
        }
    }

    pub fn cwnn_config(&self) -> CwnnConfig {
        CwnnConfig { lambda: self.lambda, ..CwnnConfig::default() }
    }

    pub fn cwnn_train_config(&self) -> CwnnTrainConfig {
        CwnnTrainConfig { lr: self.lr_cwnn, epochs: self.cwnn_epochs, batch: self.cwnn_batch, seed: self.seed }
    }

    pub fn dcgan_config(&self) -> DcganConfig {
        DcganConfig {
            lambda: self.lambda,
            noise_dim: self.noise_dim,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            epochs: self.gan_epochs,
            batch: self.gan_batch,
            pretrain_steps: self.gan_pretrain_steps,
            pretrain_lr: self.gan_pretrain_lr,
            max_real: self.gan_patches,
            seed: self.seed,
            ..DcganConfig::default()
        }
    }
}
