//! Synthetic bi-temporal speckled scenes with a known change mask.
//!
//! Background reflectivity is a smooth random field in `[0.2, 1.0]`;
//! changed pixels form a union of random disks whose reflectivity is
//! multiplied by `contrast` in the second acquisition. Intensities are
//! reflectivity times unit-mean Gamma speckle with shape `looks`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Target share of changed pixels; the mask lands within ±20% of it.
    pub changed_fraction: f64,
    /// Upper bound on the number of disks.
    pub blob_count: usize,
    /// Disk radii are drawn uniformly from `[min, max]`.
    pub blob_radius: (f64, f64),
    pub looks: f64,
    pub contrast: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            changed_fraction: 0.01,
            blob_count: 64,
            blob_radius: (2.0, 5.0),
            looks: 4.0,
            contrast: 3.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return arg_err("scene dimensions must be positive");
        }
        if !(self.changed_fraction > 0.0 && self.changed_fraction < 0.5) {
            return arg_err(format!("changed_fraction must lie in (0, 0.5), got {}", self.changed_fraction));
        }
        if !(self.looks >= 1.0) {
            return arg_err(format!("looks must be at least 1, got {}", self.looks));
        }
        if !(self.contrast > 0.0) || self.contrast == 1.0 || !self.contrast.is_finite() {
            return arg_err(format!("contrast must be positive and differ from 1, got {}", self.contrast));
        }
        let (lo, hi) = self.blob_radius;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return arg_err(format!("invalid blob radius range {:?}", self.blob_radius));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub reflectivity1: Raster,
    pub reflectivity2: Raster,
    /// 1 on changed pixels, 0 elsewhere.
    pub mask: Raster,
}

/// Coarse random grid, smoothstep-interpolated and mapped to `[lo, hi]`.
fn smooth_field(width: usize, height: usize, cell: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Raster {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let raw = Raster::from_fn(width, height, |i, j| {
        let (y, x) = (i as f64 / cell as f64, j as f64 / cell as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (ty, tx) = (smooth(y - y0 as f64), smooth(x - x0 as f64));
        let g = |r: usize, c: usize| grid[r * gw + c];
        let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
        let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    });
    let (a, b) = raw.min_max();
    raw.rescale(a, b, lo, hi)
}

/// Pixels with centre distance below `radius` from `(cy, cx)`.
fn disk_pixels(width: usize, height: usize, cy: f64, cx: f64, radius: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let r0 = (cy - radius).floor().max(0.0) as usize;
    let r1 = ((cy + radius).ceil() as usize).min(height.saturating_sub(1));
    let c0 = (cx - radius).floor().max(0.0) as usize;
    let c1 = ((cx + radius).ceil() as usize).min(width.saturating_sub(1));
    for i in r0..=r1 {
        for j in c0..=c1 {
            let (dy, dx) = (i as f64 - cy, j as f64 - cx);
            if dy * dy + dx * dx < radius * radius {
                out.push(i * width + j);
            }
        }
    }
    out
}

const DISK_ATTEMPTS: usize = 10_000;

pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cell = (w.max(h) / 4).max(4);
    let r1 = smooth_field(w, h, cell, 0.2, 1.0, &mut rng);

    let area = (w * h) as f64;
    let target = spec.changed_fraction * area;
    let (lo, hi) = (0.8 * target, 1.2 * target);
    let mut mask = vec![false; w * h];
    let mut count = 0usize;
    let mut disks = 0;
    for _ in 0..DISK_ATTEMPTS {
        if count as f64 >= lo || disks >= spec.blob_count {
            break;
        }
        let radius = if spec.blob_radius.0 < spec.blob_radius.1 {
            rng.random_range(spec.blob_radius.0..=spec.blob_radius.1)
        } else {
            spec.blob_radius.0
        };
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let fresh: Vec<usize> = disk_pixels(w, h, cy, cx, radius).into_iter().filter(|&p| !mask[p]).collect();
        if fresh.is_empty() || (count + fresh.len()) as f64 > hi {
            continue;
        }
        count += fresh.len();
        for p in fresh {
            mask[p] = true;
        }
        disks += 1;
    }
    if !((count as f64) >= lo && (count as f64) <= hi) || count == 0 {
        return Err(Error::Generation(format!(
            "mask has {count} pixels after {disks} disks, wanted {lo:.1}..{hi:.1}"
        )));
    }
    let mask = Raster::new(w, h, mask.iter().map(|&m| f64::from(u8::from(m))).collect())?;
    let r2 = r1.zip_map(&mask, |r, m| if m != 0.0 { r * spec.contrast } else { r })?;
    Ok(Scene { reflectivity1: r1, reflectivity2: r2, mask })
}

/// Multiplies each pixel by an independent Gamma(shape `looks`, scale
/// `1/looks`) draw. Row `i` uses its own ChaCha stream, so the result does
/// not depend on the order rows are generated in.
pub fn speckle(reflectivity: &Raster, looks: f64, seed: u64) -> Result<Raster> {
    if !(looks >= 1.0) || !looks.is_finite() {
        return arg_err(format!("looks must be at least 1, got {looks}"));
    }
    let gamma = Gamma::new(looks, 1.0 / looks).map_err(|e| Error::Argument(e.to_string()))?;
    let (w, h) = (reflectivity.width(), reflectivity.height());
    let mut data = Vec::with_capacity(w * h);
    for i in 0..h {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for j in 0..w {
            data.push(reflectivity.get(i, j) * rng.sample(gamma));
        }
    }
    Raster::new(w, h, data)
}

/// Speckled acquisitions with their reference mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub i1: Raster,
    pub i2: Raster,
    pub mask: Raster,
}

pub fn gen_speckled_pair(spec: &SceneSpec) -> Result<SyntheticPair> {
    let scene = gen_scene(spec)?;
    let s1 = spec.seed.wrapping_mul(2).wrapping_add(1);
    let s2 = spec.seed.wrapping_mul(2).wrapping_add(2);
    Ok(SyntheticPair {
        i1: speckle(&scene.reflectivity1, spec.looks, s1)?,
        i2: speckle(&scene.reflectivity2, spec.looks, s2)?,
        mask: scene.mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let spec = SceneSpec { width: 64, height: 64, changed_fraction: 0.02, seed: 5, ..SceneSpec::default() };
        let a = gen_scene(&spec).unwrap();
        assert_eq!(a, gen_scene(&spec).unwrap());
        let (lo, hi) = a.reflectivity1.min_max();
        assert!(lo >= 0.2 - 1e-12 && hi <= 1.0 + 1e-12);
        for p in 0..64 * 64 {
            let changed = a.reflectivity1.as_slice()[p] != a.reflectivity2.as_slice()[p];
            assert_eq!(changed, a.mask.as_slice()[p] == 1.0);
        }
    }

    #[test]
    fn mask_count_in_band() {
        for seed in 0..5 {
            let spec = SceneSpec { width: 400, height: 400, changed_fraction: 1.0 / 150.0, seed, ..SceneSpec::default() };
            let n = gen_scene(&spec).unwrap().mask.as_slice().iter().sum::<f64>();
            assert!((850.0..=1280.0).contains(&n), "seed {seed}: {n}");
        }
    }

    #[test]
    fn unreachable_fraction_fails() {
        let spec = SceneSpec { changed_fraction: 1e-7, blob_radius: (0.0, 0.0), ..SceneSpec::default() };
        assert!(matches!(gen_scene(&spec), Err(Error::Generation(_))));
        assert!(gen_scene(&SceneSpec { contrast: 1.0, ..SceneSpec::default() }).is_err());
        assert!(gen_scene(&SceneSpec { changed_fraction: 0.5, ..SceneSpec::default() }).is_err());
    }

    #[test]
    fn speckle_statistics() {
        let r = Raster::filled(256, 256, 0.6);
        let s = speckle(&r, 4.0, 9).unwrap();
        assert!((s.mean() / 0.6 - 1.0).abs() < 0.02);
        let cv = s.std_dev() / s.mean();
        assert!((cv * 2.0 - 1.0).abs() < 0.15, "cv {cv}");
        assert!(s.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn many_looks_concentrate() {
        let r = Raster::from_fn(100, 100, |i, j| 0.2 + 0.008 * ((i + j) % 100) as f64);
        let s = speckle(&r, 10000.0, 1).unwrap();
        let close = r.as_slice().iter().zip(s.as_slice()).filter(|(a, b)| ((*b / *a) - 1.0).abs() < 0.05).count();
        assert!(close as f64 >= 0.99 * 10000.0);
        assert!(speckle(&r, 0.5, 1).is_err());
    }

    #[test]
    fn rows_are_independent_of_order() {
        let r = Raster::filled(16, 8, 1.0);
        let full = speckle(&r, 2.0, 3).unwrap();
        let first = speckle(&Raster::filled(16, 1, 1.0), 2.0, 3).unwrap();
        // row 0 of a one-row raster uses stream 0, matching row 0 of the full one
        assert_eq!(&full.as_slice()[..16], first.as_slice());
    }
}
