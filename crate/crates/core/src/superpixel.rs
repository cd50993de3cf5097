//! SLIC superpixels for single-channel rasters.
//!
//! Clustering runs in (intensity, row, col) space with the distance
//! `D² = dI² + (compactness · dxy / S)²`, where `S = sqrt(area / k)` is the
//! seeding grid step. Each centre only searches a `2S x 2S` window. A final
//! pass makes every superpixel 4-connected by folding stray fragments into
//! the neighbour they share the longest boundary with.

use crate::error::{arg_err, Result};
use crate::raster::Raster;

/// Per-superpixel summary statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelStats {
    pub size: usize,
    pub mean: f64,
    /// Lower-middle element for even sizes.
    pub median: f64,
}

/// A labelling of every pixel into `count` superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<usize>,
    count: usize,
    stats: Vec<SuperpixelStats>,
}

impl Segmentation {
    /// Wraps an existing label map; labels are compacted to `0..count` in
    /// order of first appearance. Stats start empty.
    pub fn from_labels(width: usize, height: usize, labels: Vec<usize>) -> Result<Self> {
        if width * height != labels.len() || labels.is_empty() {
            return arg_err(format!("{width}x{height} segmentation needs {} labels, got {}", width * height, labels.len()));
        }
        let (labels, count) = compact_labels(&labels);
        Ok(Self { width, height, labels, count, stats: Vec::new() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    /// Empty until [`superpixel_stats`] has been applied.
    pub fn stats(&self) -> &[SuperpixelStats] {
        &self.stats
    }

    pub fn covers(&self, r: &Raster) -> bool {
        self.width == r.width() && self.height == r.height()
    }

    /// Label map as a raster, `label mod 256`, for dumping as a PGM.
    pub fn debug_raster(&self) -> Raster {
        Raster::from_fn(self.width, self.height, |i, j| (self.label(i, j) % 256) as f64)
    }
}

/// Parameters for [`slic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub superpixels: usize,
    pub compactness: f64,
    pub iterations: usize,
    /// Shifts the seeding grid phase; 0 gives the canonical grid.
    pub seed: u64,
}

impl SlicParams {
    pub fn new(superpixels: usize) -> Self {
        Self { superpixels, compactness: 0.1, iterations: 10, seed: 0 }
    }
}

/// Result of a SLIC run: the segmentation plus the clustering objective
/// recorded after every assignment step.
#[derive(Debug, Clone)]
pub struct SlicOutput {
    pub segmentation: Segmentation,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Centre {
    value: f64,
    row: f64,
    col: f64,
}

pub fn slic(r: &Raster, params: &SlicParams) -> Result<Segmentation> {
    Ok(slic_traced(r, params)?.segmentation)
}

pub fn slic_traced(r: &Raster, params: &SlicParams) -> Result<SlicOutput> {
    let (w, h) = (r.width(), r.height());
    let n = w * h;
    let k = params.superpixels;
    if k == 0 || k > n {
        return arg_err(format!("superpixel count {k} outside [1, {n}]"));
    }
    if !(params.compactness > 0.0) {
        return arg_err("compactness must be positive");
    }
    if k == 1 {
        let seg = Segmentation { width: w, height: h, labels: vec![0; n], count: 1, stats: Vec::new() };
        return Ok(SlicOutput { segmentation: seg, objective_trace: Vec::new() });
    }

    let step = ((n as f64) / k as f64).sqrt();
    let mut centres = seed_centres(r, k, params.seed);
    let spatial = params.compactness / step;
    let spatial2 = spatial * spatial;
    let radius = step.ceil() as isize;

    let mut labels = vec![0usize; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut trace = Vec::with_capacity(params.iterations);
    let data = r.as_slice();

    for _ in 0..params.iterations.max(1) {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, c) in centres.iter().enumerate() {
            let r0 = (c.row.round() as isize - radius).max(0) as usize;
            let r1 = ((c.row.round() as isize + radius) as usize).min(h - 1);
            let c0 = (c.col.round() as isize - radius).max(0) as usize;
            let c1 = ((c.col.round() as isize + radius) as usize).min(w - 1);
            for row in r0..=r1 {
                let dr = row as f64 - c.row;
                for col in c0..=c1 {
                    let idx = row * w + col;
                    let dc = col as f64 - c.col;
                    let di = data[idx] - c.value;
                    let d = di * di + spatial2 * (dr * dr + dc * dc);
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = ci;
                    }
                }
            }
        }
        // pixels outside every window keep their previous label
        let mut objective = 0.0;
        for idx in 0..n {
            if !dist[idx].is_finite() {
                let c = centres[labels[idx]];
                let (row, col) = ((idx / w) as f64, (idx % w) as f64);
                let di = data[idx] - c.value;
                dist[idx] = di * di + spatial2 * ((row - c.row).powi(2) + (col - c.col).powi(2));
            }
            objective += dist[idx];
        }
        trace.push(objective);

        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centres.len()];
        for idx in 0..n {
            let s = &mut sums[labels[idx]];
            s.0 += data[idx];
            s.1 += (idx / w) as f64;
            s.2 += (idx % w) as f64;
            s.3 += 1;
        }
        for (c, s) in centres.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let cnt = s.3 as f64;
                *c = Centre { value: s.0 / cnt, row: s.1 / cnt, col: s.2 / cnt };
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h);
    let (labels, count) = compact_labels(&labels);
    let seg = Segmentation { width: w, height: h, labels, count, stats: Vec::new() };
    Ok(SlicOutput { segmentation: seg, objective_trace: trace })
}

/// Hexagonally offset seeding grid with about `k` cells, each centre moved
/// to the lowest-gradient pixel of its 3x3 neighbourhood.
fn seed_centres(r: &Raster, k: usize, seed: u64) -> Vec<Centre> {
    let (w, h) = (r.width(), r.height());
    let step = ((w * h) as f64 / k as f64).sqrt();
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    // seed picks a phase in [0, 0.25) of a cell
    let phase = if seed == 0 { 0.0 } else { (seed % 1000) as f64 / 4000.0 };

    let gradient = |row: usize, col: usize| -> f64 {
        let g = |i: isize, j: isize| r.get_mirrored(i, j);
        let (i, j) = (row as isize, col as isize);
        let gx = g(i, j + 1) - g(i, j - 1);
        let gy = g(i + 1, j) - g(i - 1, j);
        gx * gx + gy * gy
    };

    let mut centres = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        let offset = if gy % 2 == 0 { 0.25 } else { 0.75 };
        for gx in 0..nx {
            let row = (((gy as f64 + 0.5 + phase) * sy) as usize).min(h - 1);
            let col = (((gx as f64 + offset + phase) * sx) as usize).min(w - 1);
            let mut best = (gradient(row, col), row, col);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (row as isize + dr, col as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let g = gradient(rr as usize, cc as usize);
                    if g < best.0 {
                        best = (g, rr as usize, cc as usize);
                    }
                }
            }
            let (_, row, col) = best;
            centres.push(Centre { value: r.get(row, col), row: row as f64, col: col as f64 });
        }
    }
    centres
}

/// Keeps the largest 4-connected component of every label; all other
/// fragments join the adjacent label with which they share the most edges.
fn enforce_connectivity(labels: &[usize], w: usize, h: usize) -> Vec<usize> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let lab = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for q in neighbours4(p, w, h) {
                if comp[q] == usize::MAX && labels[q] == lab {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        comp_label.push(lab);
        comp_size.push(size);
    }

    // largest component per label is kept
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut keeper = vec![usize::MAX; max_label + 1];
    for (id, &lab) in comp_label.iter().enumerate() {
        if keeper[lab] == usize::MAX || comp_size[id] > comp_size[keeper[lab]] {
            keeper[lab] = id;
        }
    }
    let is_orphan: Vec<bool> = comp_label.iter().enumerate().map(|(id, &lab)| keeper[lab] != id).collect();
    if !is_orphan.iter().any(|&o| o) {
        return labels.to_vec();
    }

    // boundary lengths between each orphan and its neighbouring components
    let mut boundary: Vec<Vec<(usize, usize)>> = vec![Vec::new(); comp_label.len()];
    for p in 0..n {
        let a = comp[p];
        if !is_orphan[a] {
            continue;
        }
        for q in neighbours4(p, w, h) {
            let b = comp[q];
            if b != a {
                match boundary[a].iter_mut().find(|(c, _)| *c == b) {
                    Some(e) => e.1 += 1,
                    None => boundary[a].push((b, 1)),
                }
            }
        }
    }

    // resolve orphans smallest first so chains of orphans settle onto kept components
    let mut target: Vec<usize> = (0..comp_label.len()).collect();
    let mut order: Vec<usize> = (0..comp_label.len()).filter(|&c| is_orphan[c]).collect();
    order.sort_by_key(|&c| (comp_size[c], c));
    let find = |target: &Vec<usize>, mut c: usize| {
        while target[c] != c {
            c = target[c];
        }
        c
    };
    for &c in &order {
        let best = boundary[c]
            .iter()
            .filter(|(b, _)| find(&target, *b) != c)
            .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|&(b, _)| b);
        if let Some(b) = best {
            target[c] = find(&target, b);
        }
    }
    (0..n).map(|p| comp_label[find(&target, comp[p])]).collect()
}

fn neighbours4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (row, col) = (p / w, p % w);
    let up = (row > 0).then(|| p - w);
    let down = (row + 1 < h).then(|| p + w);
    let left = (col > 0).then(|| p - 1);
    let right = (col + 1 < w).then(|| p + 1);
    [up, down, left, right].into_iter().flatten()
}

fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut remap = vec![usize::MAX; max + 1];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if remap[l] == usize::MAX {
                remap[l] = next;
                next += 1;
            }
            remap[l]
        })
        .collect();
    (out, next)
}

/// Fills in per-superpixel size, mean and median of `r`.
pub fn superpixel_stats(r: &Raster, seg: &Segmentation) -> Result<Segmentation> {
    if !seg.covers(r) {
        return arg_err("segmentation does not match raster dimensions");
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); seg.count];
    for (&lab, &v) in seg.labels.iter().zip(r.as_slice()) {
        groups[lab].push(v);
    }
    let stats = groups
        .into_iter()
        .map(|mut g| {
            g.sort_by(f64::total_cmp);
            let size = g.len();
            SuperpixelStats { size, mean: g.iter().sum::<f64>() / size as f64, median: g[(size - 1) / 2] }
        })
        .collect();
    Ok(Segmentation { stats, ..seg.clone() })
}
