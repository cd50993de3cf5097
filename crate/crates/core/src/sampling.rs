//! Patches around pixels, pseudo-labelled training sets from the ternary
//! map, and class balancing with generated minority patches.
//!
//! A patch for pixel `(r, c)` stacks the `λ x 2λ` window (λ rows, 2λ
//! columns) of the first image on top of the same window of the second,
//! giving `2λ x 2λ`. Windows reaching past the border are mirrored.

use std::borrow::Cow;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{PixelClass, TernaryMap};
use crate::error::{arg_err, Error, Result};
use crate::nets::Dcgan;
use crate::pgm::save_pgm;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Generated,
}

/// Images real patches are cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSource {
    pub i1: Raster,
    pub i2: Raster,
    pub lambda: usize,
}

impl PatchSource {
    pub fn new(i1: Raster, i2: Raster, lambda: usize) -> Result<Arc<Self>> {
        if !i1.same_shape(&i2) {
            return arg_err("images differ in size");
        }
        if lambda == 0 {
            return arg_err("lambda must be at least 1");
        }
        Ok(Arc::new(Self { i1, i2, lambda }))
    }

    pub fn patch(&self, center: (usize, usize)) -> Vec<f64> {
        extract_patch(&self.i1, &self.i2, center, self.lambda).expect("validated source")
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Item {
    center: Option<(usize, usize)>,
    /// Stored values; real patches from a source are cut on demand.
    data: Option<Vec<f64>>,
    provenance: Provenance,
}

/// Patches of one class. Real patches from a [`PatchSource`] are kept as
/// pixel coordinates and extracted when read.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    side: usize,
    class: PixelClass,
    source: Option<Arc<PatchSource>>,
    items: Vec<Item>,
}

impl PatchSet {
    pub fn new(side: usize, class: PixelClass) -> Self {
        Self { side, class, source: None, items: Vec::new() }
    }

    pub fn with_source(class: PixelClass, source: Arc<PatchSource>) -> Self {
        Self { side: 2 * source.lambda, class, source: Some(source), items: Vec::new() }
    }

    pub fn push_real(&mut self, patch: Vec<f64>, center: (usize, usize)) -> Result<()> {
        self.push(Some(patch), Some(center), Provenance::Real)
    }

    /// A real patch read from the source at `center`.
    pub fn push_center(&mut self, center: (usize, usize)) -> Result<()> {
        match &self.source {
            Some(s) if center.0 < s.i1.height() && center.1 < s.i1.width() => {
                self.items.push(Item { center: Some(center), data: None, provenance: Provenance::Real });
                Ok(())
            }
            Some(_) => arg_err(format!("centre {center:?} lies outside the images")),
            None => arg_err("patch set has no source images"),
        }
    }

    pub fn push_generated(&mut self, patch: Vec<f64>) -> Result<()> {
        if self.class != PixelClass::Changed {
            return arg_err("generated patches only belong to the changed set");
        }
        self.push(Some(patch), None, Provenance::Generated)
    }

    fn push(&mut self, patch: Option<Vec<f64>>, center: Option<(usize, usize)>, provenance: Provenance) -> Result<()> {
        if let Some(p) = &patch {
            if p.len() != self.side * self.side {
                return arg_err(format!("patch has {} values, expected {}x{}", p.len(), self.side, self.side));
            }
        }
        self.items.push(Item { center, data: patch, provenance });
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn class(&self) -> PixelClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn patch(&self, i: usize) -> Cow<'_, [f64]> {
        let it = &self.items[i];
        match (&it.data, &self.source, it.center) {
            (Some(d), _, _) => Cow::Borrowed(d),
            (None, Some(s), Some(c)) => Cow::Owned(s.patch(c)),
            _ => unreachable!("items without data always have a source and centre"),
        }
    }

    /// Every patch, materialised.
    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.patch(i).into_owned()).collect()
    }

    pub fn centers(&self) -> Vec<Option<(usize, usize)>> {
        self.items.iter().map(|it| it.center).collect()
    }

    pub fn provenance(&self) -> Vec<Provenance> {
        self.items.iter().map(|it| it.provenance).collect()
    }

    pub fn generated_count(&self) -> usize {
        self.items.iter().filter(|it| it.provenance == Provenance::Generated).count()
    }

    /// Subset at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> PatchSet {
        PatchSet {
            side: self.side,
            class: self.class,
            source: self.source.clone(),
            items: idx.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    /// Writes every patch as `NNNNN.pgm`, mapping `[-1, 1]` to `[0, 255]`.
    pub fn dump_pgms(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for i in 0..self.len() {
            let p = self.patch(i);
            let r = Raster::new(self.side, self.side, p.iter().map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()).collect())?;
            save_pgm(&r, dir.join(format!("{i:05}.pgm")), 255)?;
        }
        Ok(())
    }
}

/// The `2λ x 2λ` patch of pixel `center = (row, col)`.
pub fn extract_patch(i1: &Raster, i2: &Raster, center: (usize, usize), lambda: usize) -> Result<Vec<f64>> {
    if !i1.same_shape(i2) {
        return arg_err("images differ in size");
    }
    if lambda == 0 {
        return arg_err("lambda must be at least 1");
    }
    let (r, c) = (center.0 as isize, center.1 as isize);
    let (l, top) = (lambda as isize, (lambda / 2) as isize);
    let mut out = Vec::with_capacity(4 * lambda * lambda);
    for img in [i1, i2] {
        for dr in -top..l - top {
            for dc in -l..l {
                out.push(img.get_mirrored(r + dr, c + dc));
            }
        }
    }
    Ok(out)
}

/// Pseudo-labelled patch sets, one patch per pixel of each class.
#[derive(Debug, Clone)]
pub struct PseudoSets {
    pub changed: PatchSet,
    pub unchanged: PatchSet,
    pub hard: PatchSet,
}

impl PseudoSets {
    /// `(N₁, N₂, N_h)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.changed.len(), self.unchanged.len(), self.hard.len())
    }
}

pub fn build_pseudo_sets(ternary: &TernaryMap, source: &Arc<PatchSource>) -> Result<PseudoSets> {
    if source.i1.width() != ternary.width() || source.i1.height() != ternary.height() {
        return arg_err("ternary map and images differ in size");
    }
    let mut sets = PseudoSets {
        changed: PatchSet::with_source(PixelClass::Changed, source.clone()),
        unchanged: PatchSet::with_source(PixelClass::Unchanged, source.clone()),
        hard: PatchSet::with_source(PixelClass::Hard, source.clone()),
    };
    for row in 0..ternary.height() {
        for col in 0..ternary.width() {
            let set = match ternary.get(row, col) {
                PixelClass::Changed => &mut sets.changed,
                PixelClass::Unchanged => &mut sets.unchanged,
                PixelClass::Hard => &mut sets.hard,
            };
            set.push_center((row, col))?;
        }
    }
    if sets.changed.is_empty() {
        return Err(Error::EmptyMinority("both clustering branches agree on no changed pixel".into()));
    }
    Ok(sets)
}

/// `min(N₂, max(4·N₁, 512))`. Falls below `N₁` when the changed class is
/// the larger one.
pub fn default_n_t(n1: usize, n2: usize) -> usize {
    n2.min((4 * n1).max(512))
}

/// A seeded uniform subset of `k` patches, kept in their original order.
pub fn subsample(set: &PatchSet, k: usize, seed: u64) -> Result<PatchSet> {
    if k > set.len() {
        return arg_err(format!("cannot draw {k} patches from {}", set.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, set.len(), k).into_vec();
    idx.sort_unstable();
    Ok(set.select(&idx))
}

/// Equal-sized training classes.
#[derive(Debug, Clone)]
pub struct BalancedSets {
    pub changed: PatchSet,
    pub unchanged: PatchSet,
}

impl BalancedSets {
    /// Patches with labels 1 (changed) and 0 (unchanged).
    pub fn training_data(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = self.changed.to_vecs();
        x.extend(self.unchanged.to_vecs());
        let mut y = vec![crate::nets::CHANGED; self.changed.len()];
        y.extend(vec![crate::nets::UNCHANGED; self.unchanged.len()]);
        (x, y)
    }
}

/// Tops the changed set up to `n_t` with generated patches and draws `n_t`
/// distinct unchanged patches. Without a generator `n_t` must equal `N₁`.
pub fn balance_sets(changed: &PatchSet, unchanged: &PatchSet, generator: Option<&Dcgan>, n_t: usize, seed: u64) -> Result<BalancedSets> {
    let n1 = changed.len();
    if n_t < n1 {
        return arg_err(format!("n_t = {n_t} is below the {n1} changed patches"));
    }
    if n_t > unchanged.len() {
        return arg_err(format!("n_t = {n_t} exceeds the {} unchanged patches", unchanged.len()));
    }
    let mut out_changed = changed.clone();
    if n_t > n1 {
        let Some(g) = generator else {
            return arg_err("a generator is needed to add changed patches");
        };
        if g.side() != changed.side() {
            return arg_err("generator patch size differs from the patch set");
        }
        for p in g.sample(n_t - n1, seed)? {
            out_changed.push_generated(p)?;
        }
    }
    Ok(BalancedSets { changed: out_changed, unchanged: subsample(unchanged, n_t, seed ^ 0x9e37_79b9_7f4a_7c15)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::DcganConfig;

    #[test]
    fn patch_size_and_halves() {
        let a = Raster::filled(30, 30, 2.0);
        let b = Raster::filled(30, 30, -1.0);
        let p = extract_patch(&a, &b, (15, 15), 14).unwrap();
        assert_eq!(p.len(), 28 * 28);
        assert!(p[..14 * 28].iter().all(|&v| v == 2.0));
        assert!(p[14 * 28..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn corner_patch_mirrors() {
        // λ = 2: rows r-1..r, cols c-2..c+1; at (0,0) the rows are {1, 0} and
        // the columns {2, 1, 0, 1} after mirroring
        let a = Raster::from_fn(8, 8, |i, j| (10 * i + j) as f64);
        let b = a.map(|v| v + 100.0);
        let p = extract_patch(&a, &b, (0, 0), 2).unwrap();
        let expect = [
            12.0, 11.0, 10.0, 11.0, //
            2.0, 1.0, 0.0, 1.0, //
            112.0, 111.0, 110.0, 111.0, //
            102.0, 101.0, 100.0, 101.0,
        ];
        assert_eq!(p, expect);
    }

    #[test]
    fn translation_consistency() {
        let a = Raster::from_fn(40, 40, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let b = Raster::from_fn(40, 40, |i, j| ((i * 5 + j) % 13) as f64);
        let shift = |r: &Raster| Raster::from_fn(40, 40, |i, j| r.get((i + 3).min(39), (j + 2).min(39)));
        let p = extract_patch(&a, &b, (20, 20), 4).unwrap();
        let q = extract_patch(&shift(&a), &shift(&b), (17, 18), 4).unwrap();
        assert_eq!(p, q);
    }

    fn ternary(w: usize, h: usize, changed: &[usize], hard: &[usize]) -> TernaryMap {
        let labels = (0..w * h)
            .map(|i| {
                if changed.contains(&i) {
                    PixelClass::Changed
                } else if hard.contains(&i) {
                    PixelClass::Hard
                } else {
                    PixelClass::Unchanged
                }
            })
            .collect();
        TernaryMap::new(w, h, labels).unwrap()
    }

    #[test]
    fn pseudo_sets_count_pixels() {
        let t = ternary(10, 10, &[3, 44, 97], &[5, 6]);
        let src = PatchSource::new(Raster::zeros(10, 10), Raster::zeros(10, 10), 2).unwrap();
        let s = build_pseudo_sets(&t, &src).unwrap();
        assert_eq!(s.counts(), (3, 95, 2));
        for c in s.changed.centers() {
            let (r, col) = c.unwrap();
            assert_eq!(t.get(r, col), PixelClass::Changed);
        }
        let none = ternary(4, 4, &[], &[1]);
        let src = PatchSource::new(Raster::zeros(4, 4), Raster::zeros(4, 4), 2).unwrap();
        assert!(matches!(build_pseudo_sets(&none, &src), Err(Error::EmptyMinority(_))));
    }

    fn set(class: PixelClass, n: usize) -> PatchSet {
        let mut s = PatchSet::new(16, class);
        for i in 0..n {
            s.push_real(vec![i as f64; 256], (i, 0)).unwrap();
        }
        s
    }

    #[test]
    fn balancing() {
        let changed = set(PixelClass::Changed, 10);
        let unchanged = set(PixelClass::Unchanged, 10000);
        let b = balance_sets(&changed, &unchanged, None, 10, 1).unwrap();
        assert_eq!(b.changed, changed);
        assert_eq!(b.unchanged.len(), 10);

        let g = Dcgan::new(DcganConfig { lambda: 8, noise_dim: 4, g_channels: [4, 4, 4], d_channels: [4, 4], ..DcganConfig::default() }).unwrap();
        let b = balance_sets(&changed, &unchanged, Some(&g), 50, 2).unwrap();
        assert_eq!(b.changed.len(), 50);
        assert_eq!(b.changed.generated_count(), 40);
        assert_eq!(b.unchanged.generated_count(), 0);
        let (x, y) = b.training_data();
        assert_eq!((x.len(), y.iter().sum::<usize>()), (100, 50));

        let big = balance_sets(&changed, &unchanged, Some(&g), 500, 3).unwrap();
        let mut seen = big.unchanged.centers();
        seen.dedup();
        assert_eq!(seen.len(), 500);
        let again = balance_sets(&changed, &unchanged, Some(&g), 500, 3).unwrap();
        assert_eq!(again.unchanged, big.unchanged);

        assert!(balance_sets(&changed, &unchanged, Some(&g), 5, 0).is_err());
        assert!(balance_sets(&changed, &unchanged, None, 20, 0).is_err());
    }

    #[test]
    fn generated_patches_stay_out_of_unchanged() {
        let mut s = PatchSet::new(16, PixelClass::Unchanged);
        assert!(s.push_generated(vec![0.0; 256]).is_err());
    }

    #[test]
    fn default_training_size() {
        assert_eq!(default_n_t(10, 10000), 512);
        assert_eq!(default_n_t(300, 10000), 1200);
        assert_eq!(default_n_t(10, 100), 100);
        assert_eq!(default_n_t(200, 100), 100);
    }
}
