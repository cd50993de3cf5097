//! End-to-end detection and the difference-image comparison harness.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{parallel_cluster, BranchSummary, TernaryMap};
use crate::config::PipelineConfig;
use crate::di::{build_weight_kernel, log_ratio, msrdi, otsu_binarize};
use crate::error::{arg_err, Error, Result};
use crate::eval::{compose_change_map, confusion, metrics, Metrics};
use crate::nets::{cwnn_train, dcgan_train, Cwnn, Dcgan, DcganTrace, MIN_REAL_PATCHES};
use crate::raster::{convolve2d, Raster};
use crate::sampling::{balance_sets, build_pseudo_sets, default_n_t, subsample, PatchSource};

/// Otsu histogram resolution.
pub const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiMethod {
    /// Absolute log-ratio of the raw images.
    Lr,
    /// Log-ratio of the filtered images, filtered again.
    Slr,
    /// Multi-scale superpixel reconstruction of the smoothed log-ratio.
    Msrdi,
}

impl FromStr for DiMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(DiMethod::Lr),
            "slr" => Ok(DiMethod::Slr),
            "msrdi" => Ok(DiMethod::Msrdi),
            _ => arg_err(format!("unknown DI method '{s}', expected lr, slr or msrdi")),
        }
    }
}

fn check_pair(i1: &Raster, i2: &Raster) -> Result<()> {
    if !i1.same_shape(i2) {
        return arg_err(format!(
            "images differ in size: {}x{} vs {}x{}",
            i1.width(),
            i1.height(),
            i2.width(),
            i2.height()
        ));
    }
    Ok(())
}

fn ratio_floor(a: &Raster, b: &Raster, rel: f64) -> f64 {
    let peak = a.min_max().1.max(b.min_max().1);
    if peak > 0.0 {
        rel * peak
    } else {
        rel
    }
}

pub fn difference_image(i1: &Raster, i2: &Raster, method: DiMethod, cfg: &PipelineConfig) -> Result<Raster> {
    check_pair(i1, i2)?;
    let di_cfg = cfg.di_config(Some(i1.len()));
    di_cfg.validate()?;
    match method {
        DiMethod::Lr => log_ratio(i1, i2, ratio_floor(i1, i2, cfg.epsilon)),
        DiMethod::Slr => {
            let k = build_weight_kernel(cfg.eta)?;
            let (a, b) = (convolve2d(i1, &k), convolve2d(i2, &k));
            Ok(convolve2d(&log_ratio(&a, &b, ratio_floor(&a, &b, cfg.epsilon))?, &k))
        }
        DiMethod::Msrdi => msrdi(i1, i2, &di_cfg),
    }
}

#[derive(Debug, Clone)]
pub struct DiOutcome {
    pub di: Raster,
    /// `{0, 1}` Otsu map.
    pub binary: Raster,
    pub threshold: f64,
    pub metrics: Option<Metrics>,
}

/// DI plus Otsu binarisation, scored when a reference is given.
pub fn run_di(i1: &Raster, i2: &Raster, method: DiMethod, cfg: &PipelineConfig, reference: Option<&Raster>) -> Result<DiOutcome> {
    let di = difference_image(i1, i2, method, cfg)?;
    let (binary, threshold) = if di.min_max().0 == di.min_max().1 {
        (Raster::zeros(di.width(), di.height()), di.min_max().0)
    } else {
        otsu_binarize(&di, OTSU_BINS)?
    };
    let metrics = match reference {
        Some(r) => Some(metrics(&confusion(&binary, r)?)?),
        None => None,
    };
    Ok(DiOutcome { di, binary, threshold, metrics })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub msrdi_s: f64,
    pub clustering_s: f64,
    pub gan_s: f64,
    pub cwnn_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectReport {
    pub config: PipelineConfig,
    pub width: usize,
    pub height: usize,
    pub superpixel_scales: Vec<usize>,
    /// Intensity range mapped to `[-1, 1]` for the patches.
    pub patch_scaling: [f64; 2],
    pub branches: Vec<BranchSummary>,
    pub n1: usize,
    pub n2: usize,
    pub n_h: usize,
    pub n_t: usize,
    pub generated: usize,
    pub skip_gan: bool,
    /// Why the generator was not used, when it was not.
    pub gan_note: Option<String>,
    pub cwnn_trained: bool,
    pub changed_pixels: usize,
    pub cwnn_loss: Vec<f64>,
    pub gan: Option<DcganTrace>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    pub msrdi: Raster,
    pub ternary: TernaryMap,
    /// `{0, 1}` final map.
    pub change_map: Raster,
    pub cwnn: Option<Cwnn>,
    pub dcgan: Option<Dcgan>,
    pub report: DetectReport,
}

/// Runs the whole pipeline: MSRDI, parallel clustering, pseudo-labelled
/// patches, generator balancing, classifier training and composition.
pub fn detect(i1: &Raster, i2: &Raster, cfg: &PipelineConfig) -> Result<DetectOutput> {
    cfg.validate()?;
    check_pair(i1, i2)?;
    let t0 = Instant::now();
    let mut timings = Timings::default();

    let di_cfg = cfg.di_config(Some(i1.len()));
    let msrdi = msrdi(i1, i2, &di_cfg)?;
    timings.msrdi_s = t0.elapsed().as_secs_f64();

    let t = Instant::now();
    let clustering = parallel_cluster(&msrdi, &cfg.clustering_config())?;
    let ternary = clustering.ternary;
    timings.clustering_s = t.elapsed().as_secs_f64();

    let (lo, hi) = {
        let (a, b) = (i1.min_max(), i2.min_max());
        (a.0.min(b.0), a.1.max(b.1))
    };
    let source = PatchSource::new(i1.rescale(lo, hi, -1.0, 1.0), i2.rescale(lo, hi, -1.0, 1.0), cfg.lambda)?;
    let sets = build_pseudo_sets(&ternary, &source)?;
    let (n1, n2, n_h) = sets.counts();

    let mut gan_note = None;
    let mut n_t = cfg.n_t.unwrap_or_else(|| default_n_t(n1, n2)).min(cfg.n_t_max);
    if cfg.skip_gan {
        n_t = n_t.min(n1);
    } else if n_t > n1 && n1 < MIN_REAL_PATCHES {
        gan_note = Some(format!("only {n1} changed patches, generator needs {MIN_REAL_PATCHES}"));
        n_t = n1;
    }
    let mut report = DetectReport {
        config: cfg.clone(),
        width: i1.width(),
        height: i1.height(),
        superpixel_scales: di_cfg.scales.clone(),
        patch_scaling: [lo, hi],
        branches: clustering.branches.to_vec(),
        n1,
        n2,
        n_h,
        n_t,
        generated: 0,
        skip_gan: cfg.skip_gan,
        gan_note: None,
        cwnn_trained: false,
        changed_pixels: 0,
        cwnn_loss: Vec::new(),
        gan: None,
        timings: Timings::default(),
    };

    let mut cwnn = None;
    let mut dcgan = None;
    let hard_labels = if n_h == 0 {
        gan_note.get_or_insert_with(|| "no hard pixels, classifier not needed".into());
        report.n_t = 0;
        Vec::new()
    } else {
        if n_t == 0 {
            return Err(Error::Degenerate(format!("no training patches: {n1} changed, {n2} unchanged")));
        }
        let t = Instant::now();
        if n_t > n1 {
            let real = sets.changed.to_vecs();
            let refs: Vec<&[f64]> = real.iter().map(|p| p.as_slice()).collect();
            let (model, trace) = dcgan_train(&refs, &cfg.dcgan_config())?;
            report.gan = Some(trace);
            dcgan = Some(model);
        } else if cfg.skip_gan {
            gan_note.get_or_insert_with(|| "generator disabled".into());
        }
        let changed = if n_t < n1 { subsample(&sets.changed, n_t, cfg.seed)? } else { sets.changed.clone() };
        let balanced = balance_sets(&changed, &sets.unchanged, dcgan.as_ref(), n_t, cfg.seed)?;
        report.generated = balanced.changed.generated_count();
        timings.gan_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let (x, y) = balanced.training_data();
        let refs: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
        let model = cwnn_train(cfg.cwnn_config(), &refs, &y, &cfg.cwnn_train_config())?;
        let mut labels = Vec::with_capacity(n_h);
        for chunk in (0..n_h).collect::<Vec<_>>().chunks(256) {
            let patches: Vec<Vec<f64>> = chunk.iter().map(|&i| sets.hard.patch(i).into_owned()).collect();
            let refs: Vec<&[f64]> = patches.iter().map(|p| p.as_slice()).collect();
            labels.extend(model.classify(&refs)?);
        }
        report.cwnn_trained = true;
        report.cwnn_loss = model.loss_trace.clone();
        timings.cwnn_s = t.elapsed().as_secs_f64();
        cwnn = Some(model);
        labels
    };

    let change_map = compose_change_map(&ternary, &hard_labels)?;
    report.changed_pixels = change_map.as_slice().iter().filter(|&&v| v != 0.0).count();
    report.gan_note = gan_note;
    timings.total_s = t0.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(DetectOutput { msrdi, ternary, change_map, cwnn, dcgan, report })
}
