//! SLIC superpixels over all bands of a (z-normalized) cube.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::exec::{self, Workers};
use crate::model::{HyperCube, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    /// Approximate superpixel side length in pixels.
    pub target_size: usize,
    /// Weight of spatial distance relative to spectral distance.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_size: 20,
            compactness: 1.0,
            iterations: 10,
        }
    }
}

/// Height×width segment ids in `1..=segment_count`, each segment 4-connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    segment_count: u32,
}

impl Segmentation {
    /// Wraps raw segment ids, renumbering them 1.. in row-major first-occurrence order.
    pub fn from_labels(height: usize, width: usize, raw: &[u32]) -> Result<Self> {
        if raw.len() != height * width || raw.is_empty() {
            return Err(Error::LengthMismatch {
                what: "segmentation",
                got: raw.len(),
                expected: height * width,
            });
        }
        let mut mapping = std::collections::HashMap::new();
        let labels: Vec<u32> = raw
            .iter()
            .map(|l| {
                let next = mapping.len() as u32 + 1;
                *mapping.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Self {
            height,
            width,
            labels,
            segment_count: mapping.len() as u32,
        })
    }

    pub fn from_label_map(map: &LabelMap) -> Result<Self> {
        Self::from_labels(map.height(), map.width(), map.labels())
    }

    pub fn to_label_map(&self) -> LabelMap {
        LabelMap::new(self.height, self.width, self.labels.clone()).expect("consistent dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn segment_count(&self) -> u32 {
        self.segment_count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Center {
    row: f64,
    col: f64,
    spectrum: Vec<f64>,
}

pub fn slic_segment(cube: &HyperCube, params: &SlicParams) -> Result<Segmentation> {
    slic_segment_with(cube, params, Workers::Auto)
}

pub fn slic_segment_with(
    cube: &HyperCube,
    params: &SlicParams,
    workers: Workers,
) -> Result<Segmentation> {
    let (h, w) = (cube.height(), cube.width());
    let s = params.target_size;
    if s < 2 {
        return Err(Error::invalid(
            "slic parameters",
            format!("target size must be at least 2, got {s}"),
        ));
    }
    if s > h.max(w) {
        return Err(Error::invalid(
            "slic parameters",
            format!("target size {s} exceeds image of {h}x{w}"),
        ));
    }
    if !(params.compactness.is_finite() && params.compactness >= 0.0) {
        return Err(Error::invalid("slic parameters", "compactness must be finite and nonnegative"));
    }

    let mut centers = initial_centers(cube, s);
    let mut labels: Vec<Option<usize>> = vec![None; h * w];
    for _ in 0..params.iterations.max(1) {
        labels = assign(cube, &centers, params, &labels, workers);
        update_centers(cube, &mut centers, &labels);
    }
    let connected = enforce_connectivity(h, w, &labels);
    Segmentation::from_labels(h, w, &connected)
}

fn grid_positions(len: usize, spacing: usize) -> Vec<usize> {
    let count = len.div_ceil(spacing).max(1);
    let step = len as f64 / count as f64;
    (0..count)
        .map(|i| (((i as f64 + 0.5) * step) as usize).min(len - 1))
        .collect()
}

fn gradient(cube: &HyperCube, row: usize, col: usize) -> f64 {
    let here = cube.pixel(row, col);
    let mut g = 0.0;
    if col + 1 < cube.width() {
        g += here
            .iter()
            .zip(cube.pixel(row, col + 1))
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>();
    }
    if row + 1 < cube.height() {
        g += here
            .iter()
            .zip(cube.pixel(row + 1, col))
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>();
    }
    g
}

/// Regular grid of spacing `s`, each seed moved to the lowest-gradient pixel of its 3×3 neighbourhood.
pub(crate) fn initial_centers(cube: &HyperCube, s: usize) -> Vec<Center> {
    let (h, w) = (cube.height(), cube.width());
    let mut centers = Vec::new();
    for &r in &grid_positions(h, s) {
        for &c in &grid_positions(w, s) {
            let mut best = (gradient(cube, r, c), r, c);
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let g = gradient(cube, rr, cc);
                    if g < best.0 {
                        best = (g, rr, cc);
                    }
                }
            }
            centers.push(Center {
                row: best.1 as f64,
                col: best.2 as f64,
                spectrum: cube.pixel(best.1, best.2).to_vec(),
            });
        }
    }
    centers
}

fn distance_sq(cube: &HyperCube, center: &Center, row: usize, col: usize, spatial_weight: f64) -> f64 {
    let spectral: f64 = cube
        .pixel(row, col)
        .iter()
        .zip(&center.spectrum)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dr = row as f64 - center.row;
    let dc = col as f64 - center.col;
    spectral + spatial_weight * (dr * dr + dc * dc)
}

/// Assigns each pixel to the nearest center among those whose ±S window
/// contains it and the center it was previously assigned to.
pub(crate) fn assign(
    cube: &HyperCube,
    centers: &[Center],
    params: &SlicParams,
    previous: &[Option<usize>],
    workers: Workers,
) -> Vec<Option<usize>> {
    let (h, w) = (cube.height(), cube.width());
    let s = params.target_size;
    let sf = s as f64;
    let spatial_weight = (params.compactness / sf).powi(2);

    // Bucket centers by cell so each pixel only scans nearby candidates.
    let cell_rows = h / s + 2;
    let cell_cols = w / s + 2;
    let mut buckets = vec![Vec::new(); cell_rows * cell_cols];
    for (i, c) in centers.iter().enumerate() {
        let cr = ((c.row / sf) as usize).min(cell_rows - 1);
        let cc = ((c.col / sf) as usize).min(cell_cols - 1);
        buckets[cr * cell_cols + cc].push(i);
    }

    let rows = exec::map_range(workers, h, |r| {
        let mut out = Vec::with_capacity(w);
        let cr_lo = r.saturating_sub(s) / s;
        let cr_hi = ((r + s) / s).min(cell_rows - 1);
        for c in 0..w {
            let cc_lo = c.saturating_sub(s) / s;
            let cc_hi = ((c + s) / s).min(cell_cols - 1);
            let mut best: Option<(f64, usize)> = None;
            for br in cr_lo..=cr_hi {
                for bc in cc_lo..=cc_hi {
                    for &i in &buckets[br * cell_cols + bc] {
                        let center = &centers[i];
                        if (center.row - r as f64).abs() > sf || (center.col - c as f64).abs() > sf {
                            continue;
                        }
                        let d = distance_sq(cube, center, r, c, spatial_weight);
                        let better = match best {
                            None => true,
                            Some((bd, bi)) => d < bd || (d == bd && i < bi),
                        };
                        if better {
                            best = Some((d, i));
                        }
                    }
                }
            }
            // the previous center stays a candidate so the objective cannot increase
            if let Some(i) = previous[r * w + c] {
                let d = distance_sq(cube, &centers[i], r, c, spatial_weight);
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i));
                }
            }
            out.push(best.map(|(_, i)| i));
        }
        out
    });
    rows.into_iter().flatten().collect()
}

/// Moves each center to the mean position and spectrum of its pixels,
/// accumulated in row-major pixel order. Empty centers stay put.
pub(crate) fn update_centers(cube: &HyperCube, centers: &mut [Center], labels: &[Option<usize>]) {
    let bands = cube.bands();
    let mut counts = vec![0usize; centers.len()];
    let mut sums = vec![(0.0f64, 0.0f64); centers.len()];
    let mut spectra = vec![0.0f64; centers.len() * bands];
    for (p, label) in labels.iter().enumerate() {
        let Some(i) = *label else { continue };
        counts[i] += 1;
        sums[i].0 += (p / cube.width()) as f64;
        sums[i].1 += (p % cube.width()) as f64;
        for (acc, v) in spectra[i * bands..(i + 1) * bands].iter_mut().zip(cube.pixel_at(p)) {
            *acc += v;
        }
    }
    for (i, center) in centers.iter_mut().enumerate() {
        if counts[i] == 0 {
            continue;
        }
        let n = counts[i] as f64;
        center.row = sums[i].0 / n;
        center.col = sums[i].1 / n;
        for (dst, acc) in center.spectrum.iter_mut().zip(&spectra[i * bands..(i + 1) * bands]) {
            *dst = acc / n;
        }
    }
}

/// Sum of squared SLIC distances of assigned pixels to their centers.
#[cfg(test)]
pub(crate) fn objective(cube: &HyperCube, centers: &[Center], params: &SlicParams, labels: &[Option<usize>]) -> f64 {
    let spatial_weight = (params.compactness / params.target_size as f64).powi(2);
    labels
        .iter()
        .enumerate()
        .filter_map(|(p, l)| l.map(|i| (p, i)))
        .map(|(p, i)| distance_sq(cube, &centers[i], p / cube.width(), p % cube.width(), spatial_weight))
        .sum()
}

/// 4-connected components of equal values; returns per-pixel component ids and sizes.
pub(crate) fn components<T: PartialEq>(height: usize, width: usize, values: &[T]) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; height * width];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..height * width {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (r, c) = (p / width, p % width);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && values[q] == values[start] {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - width);
            }
            if r + 1 < height {
                visit(p + width);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < width {
                visit(p + 1);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Keeps the largest component of every label and merges each other
/// component into its largest adjacent kept component.
fn enforce_connectivity(height: usize, width: usize, labels: &[Option<usize>]) -> Vec<u32> {
    let mut current: Vec<Option<usize>> = labels.to_vec();
    loop {
        let (comp, sizes) = components(height, width, &current);
        let mut rep = vec![usize::MAX; sizes.len()];
        for (p, &c) in comp.iter().enumerate() {
            if rep[c] == usize::MAX {
                rep[c] = p;
            }
        }
        // largest component per label; ties keep the first in scan order
        let mut keeper: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        for (c, &p) in rep.iter().enumerate() {
            let Some(label) = current[p] else { continue };
            let entry = keeper.entry(label).or_insert(c);
            if sizes[c] > sizes[*entry] {
                *entry = c;
            }
        }
        let is_kept = |c: usize| current[rep[c]].is_some_and(|l| keeper.get(&l) == Some(&c));
        let orphans: Vec<usize> = (0..sizes.len()).filter(|&c| !is_kept(c)).collect();
        if orphans.is_empty() {
            break;
        }
        if keeper.is_empty() {
            return vec![1; height * width];
        }
        // best kept neighbour of each orphan
        let mut target: Vec<Option<usize>> = vec![None; sizes.len()];
        for p in 0..height * width {
            let c = comp[p];
            if is_kept(c) {
                continue;
            }
            let (r, col) = (p / width, p % width);
            let mut neighbours = [None; 4];
            if r > 0 {
                neighbours[0] = Some(p - width);
            }
            if r + 1 < height {
                neighbours[1] = Some(p + width);
            }
            if col > 0 {
                neighbours[2] = Some(p - 1);
            }
            if col + 1 < width {
                neighbours[3] = Some(p + 1);
            }
            for q in neighbours.into_iter().flatten() {
                let n = comp[q];
                if n == c || !is_kept(n) {
                    continue;
                }
                let better = match target[c] {
                    None => true,
                    Some(t) => sizes[n] > sizes[t] || (sizes[n] == sizes[t] && n < t),
                };
                if better {
                    target[c] = Some(n);
                }
            }
        }
        let mut next = current.clone();
        for p in 0..height * width {
            if let Some(t) = target[comp[p]] {
                next[p] = current[rep[t]];
            }
        }
        current = next;
    }
    current.iter().map(|l| l.map_or(0, |i| i as u32 + 1)).collect()
}
