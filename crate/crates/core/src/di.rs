//! Difference-image (DI) generation.
//!
//! The multi-scale superpixel-reconstructed DI is built as
//!
//! ```text
//! I1w, I2w = W * I1, W * I2                      (weighted-average filter)
//! LR      = |ln((I2w + e) / (I1w + e))|
//! SLR     = W * LR
//! SRDI_t  = a1·SLR + a2·median(superpixel) + a3·mean(superpixel)   per scale t
//! MSRDI   = mean_t SRDI_t
//! ```
//!
//! Otsu thresholding is provided for scoring individual DIs.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::raster::{convolve2d, Kernel, Raster};
use crate::superpixel::{slic, superpixel_stats, Segmentation, SlicParams};

/// Superpixel counts used for a 400x400 image.
pub const REFERENCE_SCALES: [usize; 4] = [100, 500, 1000, 2000];
pub const REFERENCE_AREA: usize = 400 * 400;
pub const MIN_SCALE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiConfig {
    /// Weighted-average filter size (odd).
    pub eta: usize,
    /// Superpixel count per scale, strictly increasing.
    pub scales: Vec<usize>,
    /// Weights of pixel value, superpixel median and superpixel mean.
    pub alpha: [f64; 3],
    /// Log/ratio floor relative to the larger of the two filtered maxima.
    pub epsilon: f64,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub seed: u64,
}

impl Default for DiConfig {
    fn default() -> Self {
        Self {
            eta: 3,
            scales: REFERENCE_SCALES.to_vec(),
            alpha: [0.3, 0.4, 0.3],
            epsilon: 1e-6,
            compactness: 0.1,
            slic_iterations: 10,
            seed: 0,
        }
    }
}

impl DiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta == 0 || self.eta % 2 == 0 {
            return arg_err(format!("eta must be odd and positive, got {}", self.eta));
        }
        if self.scales.is_empty() || self.scales.windows(2).any(|w| w[0] >= w[1]) || self.scales[0] == 0 {
            return arg_err(format!("scales must be positive and strictly increasing, got {:?}", self.scales));
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0)) || (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return arg_err(format!("alpha must be non-negative and sum to 1, got {:?}", self.alpha));
        }
        if !(self.epsilon > 0.0) {
            return arg_err("epsilon must be positive");
        }
        if !(self.compactness > 0.0) {
            return arg_err("compactness must be positive");
        }
        Ok(())
    }
}

/// Scales superpixel counts given for a 400x400 image to an image of
/// `area` pixels, keeping at least [`MIN_SCALE`] per scale. Duplicates that
/// appear after clamping are dropped so the list stays strictly increasing.
pub fn scale_superpixel_counts(reference: &[usize], area: usize) -> Vec<usize> {
    let factor = area as f64 / REFERENCE_AREA as f64;
    let mut out: Vec<usize> = Vec::with_capacity(reference.len());
    for &k in reference {
        let k = ((k as f64 * factor).round() as usize).max(MIN_SCALE).min(area);
        if out.last().is_none_or(|&last| k > last) {
            out.push(k);
        }
    }
    out
}

/// Weighted-average filter weights before normalisation: `1 / (η² · d)`
/// with `d` the distance to the centre, and `2 / η²` at the centre.
pub fn raw_weight_kernel(eta: usize) -> Result<Kernel> {
    if eta == 0 || eta % 2 == 0 {
        return arg_err(format!("filter size must be odd and positive, got {eta}"));
    }
    let c = (eta / 2) as f64;
    let e2 = (eta * eta) as f64;
    let mut w = Vec::with_capacity(eta * eta);
    for i in 0..eta {
        for j in 0..eta {
            let d = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt();
            w.push(if d == 0.0 { 2.0 / e2 } else { 1.0 / (e2 * d) });
        }
    }
    Kernel::new(eta, w)
}

/// The weighted-average filter, normalised to unit sum.
pub fn build_weight_kernel(eta: usize) -> Result<Kernel> {
    raw_weight_kernel(eta)?.normalized()
}

pub fn smooth(r: &Raster, eta: usize) -> Result<Raster> {
    Ok(convolve2d(r, &build_weight_kernel(eta)?))
}

/// `|ln((b + eps) / (a + eps))|` per pixel.
pub fn log_ratio(a: &Raster, b: &Raster, eps: f64) -> Result<Raster> {
    if !(eps > 0.0) {
        return arg_err("log-ratio floor must be positive");
    }
    if a.as_slice().iter().chain(b.as_slice()).any(|&v| v < 0.0) {
        return arg_err("log-ratio inputs must be non-negative");
    }
    a.zip_map(b, |x, y| ((y + eps) / (x + eps)).ln().abs())
}

/// Rebuilds every pixel as a convex mix of its own value and the median
/// and mean of its superpixel.
pub fn reconstruct_sr_di(slr: &Raster, seg: &Segmentation, alpha: [f64; 3]) -> Result<Raster> {
    if !seg.covers(slr) {
        return arg_err("segmentation does not match raster dimensions");
    }
    let seg = if seg.stats().len() == seg.count() { seg.clone() } else { superpixel_stats(slr, seg)? };
    let stats = seg.stats();
    let data = slr
        .as_slice()
        .iter()
        .zip(seg.labels())
        .map(|(&v, &l)| alpha[0] * v + alpha[1] * stats[l].median + alpha[2] * stats[l].mean)
        .collect();
    Raster::new(slr.width(), slr.height(), data)
}

/// Every intermediate of the MSRDI construction.
#[derive(Debug, Clone)]
pub struct DiStages {
    pub log_ratio: Raster,
    pub smoothed_log_ratio: Raster,
    pub per_scale: Vec<Raster>,
    pub msrdi: Raster,
    /// Absolute floor added before the ratio.
    pub epsilon: f64,
}

pub fn msrdi(i1: &Raster, i2: &Raster, cfg: &DiConfig) -> Result<Raster> {
    Ok(msrdi_stages(i1, i2, cfg)?.msrdi)
}

pub fn msrdi_stages(i1: &Raster, i2: &Raster, cfg: &DiConfig) -> Result<DiStages> {
    cfg.validate()?;
    if !i1.same_shape(i2) {
        return arg_err("input images differ in size");
    }
    let kernel = build_weight_kernel(cfg.eta)?;
    let i1w = convolve2d(i1, &kernel);
    let i2w = convolve2d(i2, &kernel);
    let peak = i1w.min_max().1.max(i2w.min_max().1);
    let epsilon = if peak > 0.0 { cfg.epsilon * peak } else { cfg.epsilon };
    let lr = log_ratio(&i1w, &i2w, epsilon)?;
    let slr = convolve2d(&lr, &kernel);

    let mut per_scale = Vec::with_capacity(cfg.scales.len());
    for &k in &cfg.scales {
        let params = SlicParams {
            superpixels: k.min(slr.len()),
            compactness: cfg.compactness,
            iterations: cfg.slic_iterations,
            seed: cfg.seed,
        };
        let seg = superpixel_stats(&slr, &slic(&slr, &params)?)?;
        per_scale.push(reconstruct_sr_di(&slr, &seg, cfg.alpha)?);
    }
    let mut acc = vec![0.0; slr.len()];
    for srdi in &per_scale {
        for (a, v) in acc.iter_mut().zip(srdi.as_slice()) {
            *a += v;
        }
    }
    let t = per_scale.len() as f64;
    let msrdi = Raster::new(slr.width(), slr.height(), acc.into_iter().map(|v| v / t).collect())?;
    Ok(DiStages { log_ratio: lr, smoothed_log_ratio: slr, per_scale, msrdi, epsilon })
}

/// Histogram of `r` over `[min, max]` with `bins` equal bins; the maximum
/// lands in the last bin.
pub fn histogram(r: &Raster, bins: usize) -> (Vec<u64>, f64, f64) {
    let (lo, hi) = r.min_max();
    let mut hist = vec![0u64; bins];
    for &v in r.as_slice() {
        hist[bin_index(v, lo, hi, bins)] += 1;
    }
    (hist, lo, hi)
}

#[inline]
fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
}

/// Relative slack under which two between-class variances count as tied.
pub const OTSU_TIE_TOLERANCE: f64 = 1e-12;

/// Best Otsu split of a histogram: returns `k` in `1..bins` such that bins
/// `[0, k)` form the lower class. Ties go to the smallest `k`. `None` when
/// fewer than two bins are occupied.
pub fn otsu_split(hist: &[u64]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut w0 = 0u64;
    let mut sum0 = 0.0;
    let mut scores = Vec::with_capacity(hist.len().saturating_sub(1));
    for k in 1..hist.len() {
        w0 += hist[k - 1];
        sum0 += (k - 1) as f64 * hist[k - 1] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            scores.push(f64::NEG_INFINITY);
            continue;
        }
        let (p0, p1) = (w0 as f64 / total as f64, w1 as f64 / total as f64);
        let mu0 = sum0 / w0 as f64;
        let mu1 = (sum_all - sum0) / w1 as f64;
        scores.push(p0 * p1 * (mu0 - mu1) * (mu0 - mu1));
    }
    pick_first_max(&scores).map(|i| i + 1)
}

/// Index of the first score within [`OTSU_TIE_TOLERANCE`] of the maximum.
pub fn pick_first_max(scores: &[f64]) -> Option<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    scores.iter().position(|&s| s >= best - best.abs() * OTSU_TIE_TOLERANCE)
}

/// Otsu threshold of `r` over a `bins`-bin histogram spanning `[min, max]`.
/// Pixels `>= threshold` form the upper class.
pub fn otsu_threshold(r: &Raster, bins: usize) -> Result<f64> {
    if bins < 2 {
        return arg_err("Otsu needs at least two bins");
    }
    let (hist, lo, hi) = histogram(r, bins);
    if hi <= lo {
        return Err(Error::Degenerate("cannot threshold a constant raster".into()));
    }
    let k = otsu_split(&hist).ok_or_else(|| Error::Degenerate("histogram has a single occupied bin".into()))?;
    Ok(lo + (hi - lo) * k as f64 / bins as f64)
}

/// Binary map (1 = upper class) from an Otsu split, using the same bin
/// assignment the threshold was computed from.
pub fn otsu_binarize(r: &Raster, bins: usize) -> Result<(Raster, f64)> {
    let threshold = otsu_threshold(r, bins)?;
    let (hist, lo, hi) = histogram(r, bins);
    let k = otsu_split(&hist).expect("checked by otsu_threshold");
    Ok((r.map(|v| if bin_index(v, lo, hi, bins) >= k { 1.0 } else { 0.0 }), threshold))
}
