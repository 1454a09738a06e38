//! Seeded synthetic scenes with known ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{HyperCube, LabelMap};

/// Spatial arrangement of the class regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Irregular axis-aligned rectangles.
    #[default]
    Blocks,
    /// The same rectangles in coordinates rotated by 45 degrees.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: u32,
    /// Mean rectangle side in pixels.
    pub block_size: usize,
    pub layout: Layout,
    /// Standard deviation of the per-band Gaussian noise.
    pub noise_sigma: f64,
    /// RMS distance between the two closest class means, in units of
    /// `noise_sigma`.
    pub separation: f64,
    pub train_per_class: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 60,
            width: 60,
            bands: 8,
            classes: 3,
            block_size: 15,
            layout: Layout::Blocks,
            noise_sigma: 0.1,
            separation: 5.0,
            train_per_class: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cube: HyperCube,
    /// Every pixel labeled with its true class.
    pub truth: LabelMap,
    pub class_means: Vec<Vec<f64>>,
    pub train: LabelMap,
    /// Ground truth minus the training pixels.
    pub test: LabelMap,
}

/// Cut points of `0..len` into pieces of roughly `mean` length.
fn cuts(rng: &mut impl Rng, len: usize, mean: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut at = 0;
    let lo = (mean / 2).max(1);
    let hi = (mean + mean / 2).max(lo);
    while at < len {
        at += rng.random_range(lo..=hi);
        out.push(at.min(len));
    }
    out
}

fn cell_of(cuts: &[usize], x: usize) -> usize {
    cuts.partition_point(|&c| c <= x)
}

fn layout_map(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let (h, w) = (cfg.height, cfg.width);
    let k = cfg.classes;
    // (u, v) coordinates, shifted to be nonnegative
    let coords = |r: usize, c: usize| -> (usize, usize) {
        match cfg.layout {
            Layout::Blocks => (r, c),
            Layout::Diagonal => {
                let (r, c) = (r as f64, c as f64);
                let u = (r + c) / std::f64::consts::SQRT_2;
                let v = (r - c + w as f64) / std::f64::consts::SQRT_2;
                (u as usize, v as usize)
            }
        }
    };
    let (mut umax, mut vmax) = (0, 0);
    for r in 0..h {
        for c in 0..w {
            let (u, v) = coords(r, c);
            umax = umax.max(u + 1);
            vmax = vmax.max(v + 1);
        }
    }
    let ucuts = cuts(rng, umax, cfg.block_size);
    let vcuts = cuts(rng, vmax, cfg.block_size);
    let cells: Vec<u32> = (0..ucuts.len() * vcuts.len()).map(|_| rng.random_range(1..=k)).collect();
    let mut labels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (u, v) = coords(r, c);
            labels.push(cells[cell_of(&ucuts, u) * vcuts.len() + cell_of(&vcuts, v)]);
        }
    }
    labels
}

fn class_means(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut means: Vec<Vec<f64>> = (0..cfg.classes).map(|_| (0..cfg.bands).map(|_| unit.sample(rng)).collect()).collect();
    let mut closest = f64::INFINITY;
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let d2: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            closest = closest.min((d2 / cfg.bands as f64).sqrt());
        }
    }
    let wanted = cfg.separation * cfg.noise_sigma;
    if closest.is_finite() && closest > 0.0 {
        let scale = wanted / closest;
        means.iter_mut().flatten().for_each(|x| *x *= scale);
    }
    means
}

/// Generates a scene; regions are re-drawn until every class has more than
/// `train_per_class` pixels.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    if cfg.height == 0 || cfg.width == 0 || cfg.bands < 2 || cfg.classes == 0 || cfg.block_size == 0 {
        return Err(Error::invalid("scene config", "dimensions, classes and block size must be positive, bands at least 2"));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite() && cfg.separation >= 0.0 && cfg.separation.is_finite()) {
        return Err(Error::invalid("scene config", "noise and separation must be finite and nonnegative"));
    }
    let n = cfg.height * cfg.width;
    if n <= (cfg.train_per_class + 1) * cfg.classes as usize {
        return Err(Error::invalid("scene config", "image too small for the requested training pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = class_means(cfg, &mut rng);

    let mut labels;
    let mut attempts = 0;
    loop {
        labels = layout_map(cfg, &mut rng);
        let mut counts = vec![0usize; cfg.classes as usize];
        labels.iter().for_each(|&l| counts[l as usize - 1] += 1);
        if counts.iter().all(|&c| c > cfg.train_per_class) {
            break;
        }
        attempts += 1;
        if attempts == 1000 {
            return Err(Error::invalid("scene config", "could not place every class; use smaller blocks"));
        }
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid("scene config", e.to_string()))?;
    let mut values = Vec::with_capacity(n * cfg.bands);
    for &l in &labels {
        for &m in &means[l as usize - 1] {
            values.push(m + noise.sample(&mut rng));
        }
    }

    let mut train = vec![0u32; n];
    for k in 1..=cfg.classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        members.shuffle(&mut rng);
        members.iter().take(cfg.train_per_class).for_each(|&i| train[i] = k);
    }
    let test: Vec<u32> = labels.iter().zip(&train).map(|(&l, &t)| if t == 0 { l } else { 0 }).collect();

    let (h, w) = (cfg.height, cfg.width);
    Ok(Scene {
        cube: HyperCube::new(h, w, cfg.bands, values)?,
        truth: LabelMap::new(h, w, labels)?,
        class_means: means,
        train: LabelMap::new(h, w, train)?,
        test: LabelMap::new(h, w, test)?,
    })
}

/// Splits the labeled pixels of `reference` into training and test masks,
/// taking `ceil(fraction * count)` pixels of each class (at least one) for
/// training.
pub fn stratified_split(reference: &LabelMap, fraction: f64, seed: u64) -> Result<(LabelMap, LabelMap)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("training fraction", "must lie strictly between 0 and 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = reference.labels();
    let mut train = vec![0u32; labels.len()];
    for k in 1..=reference.max_label() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let take = ((fraction * members.len() as f64).ceil() as usize).clamp(1, members.len());
        members.iter().take(take).for_each(|&i| train[i] = k);
    }
    let test = labels.iter().zip(&train).map(|(&l, &t)| if t == 0 { l } else { 0 }).collect();
    let (h, w) = (reference.height(), reference.width());
    Ok((LabelMap::new(h, w, train)?, LabelMap::new(h, w, test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_contract() {
        for layout in [Layout::Blocks, Layout::Diagonal] {
            let cfg = SceneConfig { layout, ..Default::default() };
            let s = generate_scene(&cfg).unwrap();
            assert_eq!(s, generate_scene(&cfg).unwrap());
            for k in 1..=3 {
                assert_eq!(s.train.labels().iter().filter(|&&l| l == k).count(), 20);
                assert!(s.test.labels().contains(&k));
            }
            for i in 0..3600 {
                let (t, tr, te) = (s.truth.labels()[i], s.train.labels()[i], s.test.labels()[i]);
                assert!(t >= 1);
                assert!((tr == 0) != (te == 0));
                assert_eq!(tr.max(te), t);
            }
            for a in 0..3 {
                for b in a + 1..3 {
                    let d2: f64 = s.class_means[a].iter().zip(&s.class_means[b]).map(|(x, y)| (x - y).powi(2)).sum();
                    assert!((d2 / 8.0).sqrt() >= 5.0 * 0.1 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_boundaries_are_not_axis_aligned() {
        let s = generate_scene(&SceneConfig { layout: Layout::Diagonal, ..Default::default() }).unwrap();
        let t = &s.truth;
        let mut diagonal_steps = 0;
        for r in 1..t.height() {
            for c in 1..t.width() {
                if t.get(r, c) != t.get(r - 1, c) && t.get(r, c) != t.get(r, c - 1) {
                    diagonal_steps += 1;
                }
            }
        }
        assert!(diagonal_steps > 20);
    }

    #[test]
    fn split_is_stratified() {
        let reference = LabelMap::new(2, 5, vec![1, 1, 1, 1, 1, 1, 1, 2, 2, 0]).unwrap();
        let (train, test) = stratified_split(&reference, 0.1, 3).unwrap();
        assert_eq!(train.labels().iter().filter(|&&l| l == 1).count(), 1);
        assert_eq!(train.labels().iter().filter(|&&l| l == 2).count(), 1);
        assert_eq!(test.labels().iter().filter(|&&l| l != 0).count(), 7);
        assert!(stratified_split(&reference, 1.0, 0).is_err());
    }
}
