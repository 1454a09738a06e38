//! Shapelet learning: binary segment patches, Hamming k-medoids, and the
//! conversion of medoids into region maps. Also the synthetic Haar patterns
//! used as a non-learned baseline.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Workers};
use crate::model::{Shapelet, ShapeletSet};
use crate::superpixel::{components, Segmentation};

/// A side×side bit mask, row-major, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryPatch {
    side: usize,
    words: Vec<u64>,
}

impl BinaryPatch {
    pub fn new(side: usize, bits: &[bool]) -> Self {
        assert_eq!(bits.len(), side * side, "bit count must be side^2");
        let mut words = vec![0u64; (side * side).div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self { side, words }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, z: usize) -> bool {
        self.words[z / 64] >> (z % 64) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.side * self.side).map(|z| self.get(z)).collect()
    }

    pub fn hamming(&self, other: &Self) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// One binary patch per (window, intersecting segment): 0 on the segment's
/// pixels, 1 elsewhere. Windows are visited row-major with `stride`;
/// exact duplicates are dropped, keeping first occurrence.
pub fn extract_binary_patches(
    segmentation: &Segmentation,
    side: usize,
    stride: usize,
) -> Result<Vec<BinaryPatch>> {
    let (h, w) = (segmentation.height(), segmentation.width());
    if side == 0 || side > h || side > w {
        return Err(Error::CubeSmallerThanPatch {
            height: h,
            width: w,
            side,
        });
    }
    if stride == 0 {
        return Err(Error::invalid("binary patch extraction", "stride must be at least 1"));
    }
    let mut seen = HashSet::new();
    let mut patches = Vec::new();
    let mut window = vec![0u32; side * side];
    for r0 in (0..=h - side).step_by(stride) {
        for c0 in (0..=w - side).step_by(stride) {
            for dr in 0..side {
                for dc in 0..side {
                    window[dr * side + dc] = segmentation.get(r0 + dr, c0 + dc);
                }
            }
            let mut ids: Vec<u32> = Vec::new();
            for &id in &window {
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            for id in ids {
                let bits: Vec<bool> = window.iter().map(|&v| v != id).collect();
                let patch = BinaryPatch::new(side, &bits);
                if seen.insert(patch.clone()) {
                    patches.push(patch);
                }
            }
        }
    }
    Ok(patches)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KMedoidsResult {
    /// Indices into the input patches.
    pub medoids: Vec<usize>,
    /// Cluster (position in `medoids`) of every input patch.
    pub assignment: Vec<usize>,
    pub cost: u64,
    pub iterations: usize,
    /// Total cost after every assignment step.
    pub cost_trace: Vec<u64>,
}

/// Assigns every patch to its nearest medoid (ties to the lowest cluster).
fn assign(patches: &[BinaryPatch], medoids: &[usize], workers: Workers) -> (Vec<usize>, u64) {
    let nearest = exec::map_ordered(workers, patches, |p| {
        let mut best = (u32::MAX, 0usize);
        for (k, &m) in medoids.iter().enumerate() {
            let d = p.hamming(&patches[m]);
            if d < best.0 {
                best = (d, k);
            }
        }
        best
    });
    let cost = nearest.iter().map(|&(d, _)| d as u64).sum();
    (nearest.into_iter().map(|(_, k)| k).collect(), cost)
}

/// Total Hamming cost of clustering `patches` around `medoids`.
pub fn clustering_cost(patches: &[BinaryPatch], medoids: &[usize]) -> u64 {
    patches
        .iter()
        .map(|p| medoids.iter().map(|&m| p.hamming(&patches[m]) as u64).min().unwrap_or(0))
        .sum()
}

/// Seeded farthest-first seeding: a random start, then repeatedly the patch
/// farthest from all chosen medoids (ties to the lowest index).
fn farthest_first(patches: &[BinaryPatch], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..patches.len());
    let mut medoids = vec![first];
    let mut nearest: Vec<u32> = patches.iter().map(|p| p.hamming(&patches[first])).collect();
    while medoids.len() < n {
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold((0usize, 0u32), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        medoids.push(next);
        for (d, p) in nearest.iter_mut().zip(patches) {
            *d = (*d).min(p.hamming(&patches[next]));
        }
    }
    medoids
}

/// PAM-style alternation under Hamming distance: assign to the nearest
/// medoid, then move each medoid to the member with minimal total
/// intra-cluster distance, until a fixed point or `max_iter` rounds.
pub fn kmedoids(patches: &[BinaryPatch], n: usize, max_iter: usize, seed: u64) -> Result<KMedoidsResult> {
    kmedoids_with(patches, n, max_iter, seed, Workers::Auto)
}

pub fn kmedoids_with(
    patches: &[BinaryPatch],
    n: usize,
    max_iter: usize,
    seed: u64,
    workers: Workers,
) -> Result<KMedoidsResult> {
    let distinct = patches.iter().collect::<HashSet<_>>().len();
    if n == 0 || distinct < n {
        return Err(Error::TooFewPatches {
            available: distinct,
            requested: n,
        });
    }
    let mut medoids = farthest_first(patches, n, seed);
    let (mut assignment, mut cost) = assign(patches, &medoids, workers);
    let mut cost_trace = vec![cost];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut members = vec![Vec::new(); n];
        for (i, &k) in assignment.iter().enumerate() {
            members[k].push(i);
        }
        let updated: Vec<usize> = exec::map_range(workers, n, |k| best_member(patches, &members[k], medoids[k]));
        if updated == medoids {
            break;
        }
        medoids = updated;
        (assignment, cost) = assign(patches, &medoids, workers);
        cost_trace.push(cost);
    }
    Ok(KMedoidsResult {
        medoids,
        assignment,
        cost,
        iterations,
        cost_trace,
    })
}

/// Member minimizing the summed distance to all members; the current medoid
/// wins ties, then the lowest index.
fn best_member(patches: &[BinaryPatch], members: &[usize], current: usize) -> usize {
    let total = |c: usize| -> u64 {
        members
            .iter()
            .map(|&m| patches[c].hamming(&patches[m]) as u64)
            .sum()
    };
    let mut best = (total(current), current);
    for &c in members {
        let t = total(c);
        if t < best.0 {
            best = (t, c);
        }
    }
    best.1
}

/// Region map of one binary patch: every 4-connected area of equal bits
/// becomes a region, numbered in row-major first-occurrence order.
pub fn binary_to_shapelet(patch: &BinaryPatch) -> Shapelet {
    let side = patch.side();
    let (comp, _) = components(side, side, &patch.bits());
    Shapelet::new(side, comp.iter().map(|&c| c as u32 + 1).collect())
        .expect("connected components form a valid region map")
}

pub fn medoids_to_shapelets(medoids: &[BinaryPatch]) -> Result<ShapeletSet> {
    ShapeletSet::new(medoids.iter().map(binary_to_shapelet).collect())
}

/// Full learning chain: binary patches → k-medoids → shapelets.
pub fn learn_shapelets(
    segmentation: &Segmentation,
    side: usize,
    count: usize,
    stride: usize,
    max_iter: usize,
    seed: u64,
    workers: Workers,
) -> Result<ShapeletSet> {
    let patches = extract_binary_patches(segmentation, side, stride)?;
    let result = kmedoids_with(&patches, count, max_iter, seed, workers)?;
    let medoids: Vec<BinaryPatch> = result.medoids.iter().map(|&m| patches[m].clone()).collect();
    medoids_to_shapelets(&medoids)
}

/// Number of Haar-style patterns available for `side`.
pub fn haar_capacity(side: usize) -> usize {
    let mut levels = 0;
    while side >= 1 << (levels + 1) {
        levels += 1;
    }
    1 + 4 * levels
}

/// Synthetic dyadic patterns: the full patch, then per level `l = 1, 2, ...`
/// (a 2^l × 2^l cell grid) vertical stripes, horizontal stripes, a two-region
/// checkerboard, and the grid cells themselves.
pub fn haar_shapelets(side: usize, count: usize) -> Result<ShapeletSet> {
    let available = haar_capacity(side);
    if count == 0 || count > available || side == 0 {
        return Err(Error::TooManyHaarShapelets {
            requested: count,
            side,
            available,
        });
    }
    let mut maps: Vec<Vec<u32>> = vec![vec![1; side * side]];
    let mut level = 1;
    while maps.len() < count {
        let cells = 1usize << level;
        let cell = |i: usize| i * cells / side;
        let pattern = |f: &dyn Fn(usize, usize) -> u32| -> Vec<u32> {
            (0..side * side).map(|z| f(cell(z / side), cell(z % side))).collect()
        };
        let level_maps = [
            pattern(&|_, c| c as u32 + 1),
            pattern(&|r, _| r as u32 + 1),
            pattern(&|r, c| ((r + c) % 2) as u32 + 1),
            pattern(&|r, c| (r * cells + c) as u32 + 1),
        ];
        for map in level_maps {
            if maps.len() < count {
                maps.push(map);
            }
        }
        level += 1;
    }
    ShapeletSet::new(
        maps.into_iter()
            .map(|m| Shapelet::new(side, m))
            .collect::<Result<Vec<_>>>()?,
    )
}
