//! Fuzzy c-means, the two-stage centre-constrained variant, and the
//! parallel clustering strategy that yields a changed / unchanged / hard
//! label per pixel.
//!
//! The centre-constrained objective is
//!
//! ```text
//! J = Σ_c Σ_n u_cn^m ‖(1 - β_c) x_n + β_c v_c^pre - v_c‖²
//! ```
//!
//! Stage one runs plain FCM on the most and least intense pixels to get the
//! anchors `v^pre`; stage two alternates the closed-form membership and
//! centre updates of `J` over all pixels. Cluster 0 is always the changed
//! (minority) cluster and gets the strong constraint `β₁ = β`; the unchanged
//! cluster gets `β₂ = 0.7 β`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::features::{build_gabor_bank, gabor_features, sigmoid_map, FeatureField};
use crate::raster::{standardize, Raster};

/// Ratio between the unchanged and changed constraint strengths.
pub const MAJORITY_BETA_RATIO: f64 = 0.7;

/// Borrowed row-major sample matrix: `n` vectors of length `dim`.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    dim: usize,
    data: &'a [f64],
}

impl<'a> Samples<'a> {
    pub fn new(dim: usize, data: &'a [f64]) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return arg_err(format!("{} values do not split into vectors of length {dim}", data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl<'a> From<&'a FeatureField> for Samples<'a> {
    fn from(f: &'a FeatureField) -> Self {
        Samples { dim: f.dim(), data: f.as_slice() }
    }
}

/// Fuzzy partition matrix, `clusters x n`, stored cluster-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    clusters: usize,
    n: usize,
    u: Vec<f64>,
}

impl Membership {
    pub fn new(clusters: usize, n: usize, u: Vec<f64>) -> Result<Self> {
        if u.len() != clusters * n {
            return arg_err("membership matrix has the wrong size");
        }
        Ok(Self { clusters, n, u })
    }

    /// Random columns normalised to sum to one.
    pub fn random(clusters: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = vec![0.0; clusters * n];
        for i in 0..n {
            let mut total = 0.0;
            for c in 0..clusters {
                let v: f64 = rng.random_range(1e-3..1.0);
                u[c * n + i] = v;
                total += v;
            }
            for c in 0..clusters {
                u[c * n + i] /= total;
            }
        }
        Self { clusters, n, u }
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize) -> f64 {
        self.u[c * self.n + i]
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.u[c * self.n..(c + 1) * self.n]
    }

    /// Largest deviation of a column sum from one.
    pub fn max_column_error(&self) -> f64 {
        (0..self.n)
            .map(|i| ((0..self.clusters).map(|c| self.get(c, i)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Cluster with the highest membership per sample; ties go to the lower index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                let mut best = 0;
                for c in 1..self.clusters {
                    if self.get(c, i) > self.get(best, i) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmParams {
    pub clusters: usize,
    /// Fuzzifier `m > 1`.
    pub fuzzifier: f64,
    /// Stop once no centre coordinate moves more than this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        Self { clusters: 2, fuzzifier: 2.0, tolerance: 1e-6, max_iter: 100 }
    }
}

impl FcmParams {
    fn validate(&self, n: usize) -> Result<()> {
        if self.clusters < 2 {
            return arg_err("need at least two clusters");
        }
        if n < self.clusters {
            return arg_err(format!("{n} samples cannot form {} clusters", self.clusters));
        }
        if !(self.fuzzifier > 1.0) {
            return arg_err(format!("fuzzifier must exceed 1, got {}", self.fuzzifier));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FcmResult {
    pub membership: Membership,
    pub centres: Vec<Vec<f64>>,
    /// Objective after every membership update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Plain fuzzy c-means from a seeded random partition.
pub fn fcm(x: Samples<'_>, params: &FcmParams, seed: u64) -> Result<FcmResult> {
    params.validate(x.len())?;
    fcm_from_membership(x, Membership::random(params.clusters, x.len(), seed), params)
}

/// Plain fuzzy c-means from a given initial partition.
pub fn fcm_from_membership(x: Samples<'_>, init: Membership, params: &FcmParams) -> Result<FcmResult> {
    params.validate(x.len())?;
    check_spread(x)?;
    if init.clusters != params.clusters || init.n != x.len() {
        return arg_err("initial membership does not match the samples");
    }
    let (n, dim, k, m) = (x.len(), x.dim(), params.clusters, params.fuzzifier);
    let expo = 1.0 / (m - 1.0);
    let mut u = init;
    let mut centres: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut dist = vec![0.0; k];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let mut next = vec![vec![0.0; dim]; k];
        for (c, centre) in next.iter_mut().enumerate() {
            let mut den = 0.0;
            for i in 0..n {
                let w = u.get(c, i).powf(m);
                den += w;
                for (a, &xv) in centre.iter_mut().zip(x.get(i)) {
                    *a += w * xv;
                }
            }
            for a in centre.iter_mut() {
                *a /= den;
            }
        }
        let shift = max_shift(&centres, &next);
        centres = next;

        let mut objective = 0.0;
        for i in 0..n {
            let xi = x.get(i);
            for (c, d) in dist.iter_mut().enumerate() {
                *d = xi.iter().zip(&centres[c]).map(|(&a, &v)| (a - v) * (a - v)).sum();
            }
            write_column(&mut u, i, &dist, expo);
            for c in 0..k {
                objective += u.get(c, i).powf(m) * dist[c];
            }
        }
        trace.push(objective);
        if shift < params.tolerance {
            break;
        }
    }
    Ok(FcmResult { membership: u, centres, objective_trace: trace, iterations })
}

fn check_spread(x: Samples<'_>) -> Result<()> {
    let first = x.get(0);
    if (1..x.len()).all(|i| x.get(i) == first) {
        return Err(Error::Degenerate("all samples are identical".into()));
    }
    Ok(())
}

fn max_shift(prev: &[Vec<f64>], next: &[Vec<f64>]) -> f64 {
    if prev.is_empty() {
        return f64::INFINITY;
    }
    prev.iter()
        .zip(next)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Membership column from squared distances:
/// `u_c = 1 / Σ_j (d_c / d_j)^(1/(m-1))`. A zero distance makes the
/// membership crisp for the first such cluster.
#[inline]
fn write_column(u: &mut Membership, i: usize, dist: &[f64], expo: f64) {
    let n = u.n;
    if let Some(z) = dist.iter().position(|&d| d == 0.0) {
        for c in 0..dist.len() {
            u.u[c * n + i] = if c == z { 1.0 } else { 0.0 };
        }
        return;
    }
    for c in 0..dist.len() {
        let s: f64 = dist.iter().map(|&dj| (dist[c] / dj).powf(expo)).sum();
        u.u[c * n + i] = 1.0 / s;
    }
}

/// Anchors from stage one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreCentres {
    pub changed: Vec<f64>,
    pub unchanged: Vec<f64>,
}

impl PreCentres {
    fn as_vec(&self) -> Vec<Vec<f64>> {
        vec![self.changed.clone(), self.unchanged.clone()]
    }
}

/// Default anchor sample count per side: `max(100, 1%)` of the pixels.
pub fn default_anchor_count(pixels: usize) -> usize {
    (pixels / 100).max(100).min(pixels / 2)
}

/// Stage one: FCM over the `n_p` highest- and `n_p` lowest-ranked pixels.
/// `rank` orders the pixels (the DI value), `x` holds what gets clustered.
/// The changed anchor is the centre the high-ranked group belongs to more.
pub fn tccfcm_stage1(rank: &[f64], x: Samples<'_>, n_p: usize, params: &FcmParams, seed: u64) -> Result<PreCentres> {
    if rank.len() != x.len() {
        return arg_err("ranking values and samples differ in length");
    }
    if n_p == 0 || 2 * n_p > x.len() {
        return arg_err(format!("cannot draw 2 x {n_p} anchor samples from {} pixels", x.len()));
    }
    let mut order: Vec<usize> = (0..rank.len()).collect();
    order.sort_by(|&a, &b| rank[a].total_cmp(&rank[b]).then(a.cmp(&b)));
    let low = &order[..n_p];
    let high = &order[order.len() - n_p..];
    let mut picked: Vec<(usize, bool)> = low.iter().map(|&i| (i, false)).chain(high.iter().map(|&i| (i, true))).collect();
    picked.sort_unstable();

    let mut data = Vec::with_capacity(picked.len() * x.dim());
    for &(i, _) in &picked {
        data.extend_from_slice(x.get(i));
    }
    let sub = Samples::new(x.dim(), &data)?;
    let res = fcm(sub, &FcmParams { clusters: 2, ..*params }, seed)?;

    let mut high_share = [0.0; 2];
    for (j, &(_, is_high)) in picked.iter().enumerate() {
        if is_high {
            high_share[0] += res.membership.get(0, j);
            high_share[1] += res.membership.get(1, j);
        }
    }
    let changed = if high_share[0] >= high_share[1] { 0 } else { 1 };
    Ok(PreCentres { changed: res.centres[changed].clone(), unchanged: res.centres[1 - changed].clone() })
}

/// Outcome of stage two. Index 0 is the changed cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centres: Vec<Vec<f64>>,
    pub pre_centres: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
    pub fuzzifier: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Membership from the constrained distances
/// `‖(1 - β_c) x + β_c v_c^pre - v_c‖²`.
pub fn constrained_membership(x: Samples<'_>, centres: &[Vec<f64>], pre: &[Vec<f64>], betas: &[f64], m: f64) -> Membership {
    let (n, k) = (x.len(), centres.len());
    let mut u = Membership { clusters: k, n, u: vec![0.0; k * n] };
    let mut dist = vec![0.0; k];
    for i in 0..n {
        constrained_distances(x.get(i), centres, pre, betas, &mut dist);
        write_column(&mut u, i, &dist, 1.0 / (m - 1.0));
    }
    u
}

#[inline]
fn constrained_distances(xi: &[f64], centres: &[Vec<f64>], pre: &[Vec<f64>], betas: &[f64], out: &mut [f64]) {
    for (c, d) in out.iter_mut().enumerate() {
        let b = betas[c];
        *d = xi
            .iter()
            .zip(&pre[c])
            .zip(&centres[c])
            .map(|((&a, &p), &v)| {
                let e = (1.0 - b) * a + b * p - v;
                e * e
            })
            .sum();
    }
}

/// Stage two with `β₁ = beta`, `β₂ = 0.7 beta`, starting from the
/// membership the anchors induce.
pub fn tccfcm_stage2(x: Samples<'_>, pre: &PreCentres, beta: f64, params: &FcmParams) -> Result<(Membership, ClusterModel)> {
    if !(0.0..=1.0).contains(&beta) {
        return arg_err(format!("beta must lie in [0, 1], got {beta}"));
    }
    let betas = vec![beta, MAJORITY_BETA_RATIO * beta];
    let pre = pre.as_vec();
    let init = constrained_membership(x, &pre, &pre, &betas, params.fuzzifier);
    tccfcm_stage2_from(x, init, &pre, &betas, params)
}

/// Stage-two iteration from an explicit initial membership and per-cluster
/// constraint strengths.
pub fn tccfcm_stage2_from(
    x: Samples<'_>,
    init: Membership,
    pre: &[Vec<f64>],
    betas: &[f64],
    params: &FcmParams,
) -> Result<(Membership, ClusterModel)> {
    let k = pre.len();
    FcmParams { clusters: k, ..*params }.validate(x.len())?;
    if betas.len() != k || init.clusters != k || init.n != x.len() {
        return arg_err("anchors, betas and membership disagree on the cluster count");
    }
    if pre.iter().any(|p| p.len() != x.dim()) {
        return arg_err("anchor dimension differs from the samples");
    }
    if betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return arg_err("every beta must lie in [0, 1]");
    }
    let (n, dim, m) = (x.len(), x.dim(), params.fuzzifier);
    let expo = 1.0 / (m - 1.0);
    let mut u = init;
    let mut centres: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut dist = vec![0.0; k];
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let mut next = vec![vec![0.0; dim]; k];
        for (c, centre) in next.iter_mut().enumerate() {
            let mut den = 0.0;
            for i in 0..n {
                let w = u.get(c, i).powf(m);
                den += w;
                for (a, &xv) in centre.iter_mut().zip(x.get(i)) {
                    *a += w * xv;
                }
            }
            let b = betas[c];
            for (a, &p) in centre.iter_mut().zip(&pre[c]) {
                // an empty cluster falls back to its anchor
                let mean = if den > 0.0 { *a / den } else { p };
                *a = (1.0 - b) * mean + b * p;
            }
        }
        let shift = max_shift(&centres, &next);
        centres = next;

        let mut objective = 0.0;
        for i in 0..n {
            constrained_distances(x.get(i), &centres, pre, betas, &mut dist);
            write_column(&mut u, i, &dist, expo);
            for c in 0..k {
                objective += u.get(c, i).powf(m) * dist[c];
            }
        }
        trace.push(objective);
        if shift < params.tolerance {
            break;
        }
    }
    let model = ClusterModel {
        centres,
        pre_centres: pre.to_vec(),
        betas: betas.to_vec(),
        fuzzifier: m,
        objective_trace: trace,
        iterations,
    };
    Ok((u, model))
}

/// Per-pixel outcome of the parallel clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelClass {
    Unchanged,
    Hard,
    Changed,
}

impl PixelClass {
    /// Grey level used when the map is written as an image.
    pub fn grey(self) -> f64 {
        match self {
            PixelClass::Unchanged => 0.0,
            PixelClass::Hard => 128.0,
            PixelClass::Changed => 255.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub changed: usize,
    pub unchanged: usize,
    pub hard: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TernaryMap {
    width: usize,
    height: usize,
    labels: Vec<PixelClass>,
}

impl TernaryMap {
    pub fn new(width: usize, height: usize, labels: Vec<PixelClass>) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return arg_err("ternary map size mismatch");
        }
        Ok(Self { width, height, labels })
    }

    /// Averages two binary label sets: both 1 gives changed, both 0
    /// unchanged, disagreement hard.
    pub fn from_branches(width: usize, height: usize, y1: &[u8], y2: &[u8]) -> Result<Self> {
        if y1.len() != y2.len() {
            return arg_err("branch label sets differ in length");
        }
        let labels = y1
            .iter()
            .zip(y2)
            .map(|(&a, &b)| match (a + b) as f64 / 2.0 {
                v if v == 1.0 => PixelClass::Changed,
                v if v == 0.0 => PixelClass::Unchanged,
                _ => PixelClass::Hard,
            })
            .collect();
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[PixelClass] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> PixelClass {
        self.labels[row * self.width + col]
    }

    pub fn counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for l in &self.labels {
            match l {
                PixelClass::Changed => c.changed += 1,
                PixelClass::Unchanged => c.unchanged += 1,
                PixelClass::Hard => c.hard += 1,
            }
        }
        c
    }

    /// `{0, 128, 255}` for unchanged, hard, changed.
    pub fn to_raster(&self) -> Raster {
        Raster::from_fn(self.width, self.height, |i, j| self.get(i, j).grey())
    }

    /// Pixels of one class in raster scan order, as `(row, col)`.
    pub fn pixels_of(&self, class: PixelClass) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(p, _)| (p / self.width, p % self.width))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub mu1: f64,
    pub mu2: f64,
    /// Gabor scales.
    pub gamma: usize,
    pub beta: f64,
    pub fuzzifier: f64,
    /// Anchor samples per side; `None` uses [`default_anchor_count`].
    pub n_p: Option<usize>,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { mu1: -0.2, mu2: 0.3, gamma: 6, beta: 0.5, fuzzifier: 2.0, n_p: None, tolerance: 1e-6, max_iter: 100, seed: 0 }
    }
}

/// One branch of the parallel strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSummary {
    pub mu: f64,
    pub pre_centres: PreCentres,
    pub model: ClusterModel,
    /// Pixels labelled 1.
    pub positives: usize,
}

#[derive(Debug, Clone)]
pub struct ParallelClustering {
    pub ternary: TernaryMap,
    pub branches: [BranchSummary; 2],
    pub labels: [Vec<u8>; 2],
}

/// Binary labels of a stage-two result: 1 where the pixel belongs more to
/// the cluster whose centre has the larger norm.
pub fn branch_labels(u: &Membership, model: &ClusterModel) -> Vec<u8> {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let (pos, neg) = if norm(&model.centres[0]) >= norm(&model.centres[1]) { (0, 1) } else { (1, 0) };
    (0..u.len()).map(|i| u8::from(u.get(pos, i) > u.get(neg, i))).collect()
}

/// Standardise, map through two sigmoids, extract Gabor features and run
/// two-stage clustering on each branch; combine into a ternary map.
pub fn parallel_cluster(msrdi: &Raster, cfg: &ClusteringConfig) -> Result<ParallelClustering> {
    let z = standardize(msrdi).map_err(|_| {
        Error::EmptyMinority("the difference image is constant, so no pixel stands out as changed".into())
    })?;
    let bank = build_gabor_bank(cfg.gamma)?;
    let n_p = cfg.n_p.unwrap_or_else(|| default_anchor_count(msrdi.len()));
    let params = FcmParams { clusters: 2, fuzzifier: cfg.fuzzifier, tolerance: cfg.tolerance, max_iter: cfg.max_iter };

    let run_branch = |mu: f64, seed: u64| -> Result<(BranchSummary, Vec<u8>)> {
        let feats = gabor_features(&sigmoid_map(&z, mu), &bank);
        let x = Samples::from(&feats);
        let pre = tccfcm_stage1(msrdi.as_slice(), x, n_p, &params, seed)?;
        let (u, model) = tccfcm_stage2(x, &pre, cfg.beta, &params)?;
        let labels = branch_labels(&u, &model);
        let positives = labels.iter().map(|&l| l as usize).sum();
        Ok((BranchSummary { mu, pre_centres: pre, model, positives }, labels))
    };
    let (b1, y1) = run_branch(cfg.mu1, cfg.seed)?;
    let (b2, y2) = run_branch(cfg.mu2, cfg.seed.wrapping_add(1))?;
    let ternary = TernaryMap::from_branches(msrdi.width(), msrdi.height(), &y1, &y2)?;
    Ok(ParallelClustering { ternary, branches: [b1, b2], labels: [y1, y2] })
}
