//! Browser bindings: generate a speckled scene, compare difference images
//! against its mask, and score confusion counts.

use wasm_bindgen::prelude::*;

use sarcd::config::PipelineConfig;
use sarcd::eval::{metrics, Counts};
use sarcd::pipeline::{run_di, DiMethod};
use sarcd::synth::{gen_speckled_pair, SceneSpec, SyntheticPair};
use sarcd::Raster;

fn js(e: sarcd::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Greyscale RGBA bytes, stretched over `[lo, hi]` and clipped.
pub fn to_rgba(r: &Raster, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(4 * r.len());
    for &v in r.as_slice() {
        let g = ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
        out.extend_from_slice(&[g, g, g, 255]);
    }
    out
}

/// Display range for speckled intensities: zero to mean + 3 sd.
pub fn intensity_range(r: &Raster) -> (f64, f64) {
    (0.0, r.mean() + 3.0 * r.std_dev())
}

pub fn make_scene(size: usize, changed_percent: f64, looks: f64, contrast: f64, seed: u64) -> sarcd::Result<SyntheticPair> {
    let spec = SceneSpec {
        width: size,
        height: size,
        changed_fraction: changed_percent / 100.0,
        looks,
        contrast,
        seed,
        ..SceneSpec::default()
    };
    gen_speckled_pair(&spec)
}

#[wasm_bindgen]
pub struct Scene {
    pair: SyntheticPair,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, changed_percent: f64, looks: f64, contrast: f64, seed: u64) -> Result<Scene, JsError> {
        make_scene(size, changed_percent, looks, contrast, seed).map(|pair| Scene { pair }).map_err(js)
    }

    pub fn width(&self) -> usize {
        self.pair.i1.width()
    }

    pub fn height(&self) -> usize {
        self.pair.i1.height()
    }

    pub fn changed_pixels(&self) -> usize {
        self.pair.mask.as_slice().iter().filter(|&&v| v != 0.0).count()
    }

    /// `which`: 1 or 2 for the acquisitions, anything else for the mask.
    pub fn rgba(&self, which: u8) -> Vec<u8> {
        match which {
            1 | 2 => {
                let (_, hi1) = intensity_range(&self.pair.i1);
                let (_, hi2) = intensity_range(&self.pair.i2);
                let img = if which == 1 { &self.pair.i1 } else { &self.pair.i2 };
                to_rgba(img, 0.0, hi1.max(hi2))
            }
            _ => to_rgba(&self.pair.mask, 0.0, 1.0),
        }
    }

    /// Difference image by `method` (lr, slr or msrdi) with its Otsu map.
    pub fn difference(&self, method: &str) -> Result<Difference, JsError> {
        difference(&self.pair, method).map_err(js)
    }
}

#[wasm_bindgen]
pub struct Difference {
    di: Raster,
    binary: Raster,
    threshold: f64,
    report: String,
}

#[wasm_bindgen]
impl Difference {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn di_rgba(&self) -> Vec<u8> {
        let (lo, hi) = self.di.min_max();
        to_rgba(&self.di, lo, hi)
    }

    pub fn binary_rgba(&self) -> Vec<u8> {
        to_rgba(&self.binary, 0.0, 1.0)
    }

    /// Metrics of the Otsu map against the scene mask, as JSON percentages.
    pub fn report(&self) -> String {
        self.report.clone()
    }
}

pub fn difference(pair: &SyntheticPair, method: &str) -> sarcd::Result<Difference> {
    let method: DiMethod = method.parse()?;
    let out = run_di(&pair.i1, &pair.i2, method, &PipelineConfig::default(), Some(&pair.mask))?;
    let report = out.metrics.map(|m| m.to_percent_report());
    Ok(Difference {
        di: out.di,
        binary: out.binary,
        threshold: out.threshold,
        report: serde_json::to_string(&report).expect("metrics serialise"),
    })
}

pub fn counts_report(tp: u64, fp: u64, fn_: u64, tn: u64) -> sarcd::Result<String> {
    let m = metrics(&Counts { tp, fp, fn_, tn })?.to_percent_report();
    Ok(serde_json::to_string(&m).expect("metrics serialise"))
}

/// Metrics of raw confusion counts, as JSON percentages.
#[wasm_bindgen]
pub fn score_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<String, JsError> {
    counts_report(tp, fp, fn_, tn).map_err(js)
}
