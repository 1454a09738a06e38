//! Patch-wise coding and reconstruction-error voting.
//!
//! Every fully-interior patch is coded against its own dictionary; each
//! patch pixel then votes `1 / r` for every class whose columns reconstruct
//! it with error `r`. Votes are summed over all overlapping patches in anchor
//! order, so the result does not depend on how patches were scheduled.

use crate::error::{Error, Result};
use crate::exec::{self, Workers};
use crate::model::{Anchor, HyperCube, LabelMap, MrfConfig, ShapeletSet, TrainingSet, VoteField};
use crate::mrf::{dictionary_from_evidence, PixelEvidence, SpectralIndex};
use crate::preprocess::{enumerate_patches, extract_patch};
use crate::sparse::{classwise_pixel_residuals, omp, DEFAULT_RESIDUAL_TOL};

/// Lower clamp on reconstruction errors before inversion.
pub const DEFAULT_VOTE_EPS: f64 = 1e-6;

/// Patches coded between two merges into the vote field.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Maximum number of dictionary columns per patch (W).
    pub sparsity: usize,
    pub mrf: MrfConfig,
    pub vote_eps: f64,
    pub residual_tol: f64,
    pub workers: Workers,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            sparsity: 3,
            mrf: MrfConfig::default(),
            vote_eps: DEFAULT_VOTE_EPS,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            workers: Workers::Auto,
        }
    }
}

/// `1 / max(r, eps)` per present class, 0 for absent ones.
pub fn patch_votes(residuals: &[Vec<Option<f64>>], vote_eps: f64) -> Vec<Vec<f64>> {
    residuals
        .iter()
        .map(|row| row.iter().map(|r| r.map_or(0.0, |r| 1.0 / r.max(vote_eps))).collect())
        .collect()
}

/// Adds a patch's per-pixel vote vectors into the image-wide field.
pub fn accumulate(field: &mut VoteField, anchor: Anchor, side: usize, votes: &[Vec<f64>]) -> Result<()> {
    if anchor.row + side > field.height() || anchor.col + side > field.width() {
        return Err(Error::AnchorOutOfBounds {
            row: anchor.row,
            col: anchor.col,
            side,
        });
    }
    if votes.len() != side * side {
        return Err(Error::LengthMismatch {
            what: "patch votes",
            got: votes.len(),
            expected: side * side,
        });
    }
    for (z, v) in votes.iter().enumerate() {
        let (row, col) = (anchor.row + z / side, anchor.col + z % side);
        for (acc, x) in field.votes_at_mut(row, col).iter_mut().zip(v) {
            *acc += x;
        }
        *field.coverage_mut(row, col) += 1;
    }
    Ok(())
}

/// Per-pixel argmax of the votes, ties to the lowest class; pixels without
/// any vote are left at 0.
pub fn finalize(field: &VoteField) -> LabelMap {
    let mut map = LabelMap::filled(field.height(), field.width(), 0);
    for row in 0..field.height() {
        for col in 0..field.width() {
            let votes = field.votes_at(row, col);
            let mut best = 0;
            for (k, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = k;
                }
            }
            if votes.get(best).is_some_and(|&v| v > 0.0) {
                map.set(row, col, best as u32 + 1);
            }
        }
    }
    map
}

fn check_inputs(cube: &HyperCube, training: &TrainingSet, shapelets: &ShapeletSet, config: &ClassifierConfig) -> Result<()> {
    if training.bands() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "training spectra have {} bands, cube has {}",
            training.bands(),
            cube.bands()
        )));
    }
    if config.sparsity == 0 {
        return Err(Error::invalid("classifier config", "sparsity must be at least 1"));
    }
    if config.vote_eps.is_nan() || config.vote_eps <= 0.0 {
        return Err(Error::invalid("classifier config", "vote epsilon must be positive"));
    }
    let side = shapelets.side();
    if cube.height() < side || cube.width() < side {
        return Err(Error::CubeSmallerThanPatch {
            height: cube.height(),
            width: cube.width(),
            side,
        });
    }
    Ok(())
}

/// Votes of one patch: dictionary construction, coding, class-wise residuals.
fn code_anchor(
    cube: &HyperCube,
    evidence: &[PixelEvidence],
    anchor: Anchor,
    training: &TrainingSet,
    shapelets: &ShapeletSet,
    config: &ClassifierConfig,
) -> Result<Vec<Vec<f64>>> {
    let geometry = shapelets.geometry()?;
    let side = geometry.side();
    let patch = extract_patch(cube, anchor, geometry)?;
    let patch_evidence: Vec<PixelEvidence> = (0..geometry.pixel_count())
        .map(|z| evidence[(anchor.row + z / side) * cube.width() + anchor.col + z % side].clone())
        .collect();
    let dictionary = dictionary_from_evidence(&patch_evidence, shapelets, training, &config.mrf)?;
    let code = omp(dictionary.columns(), &patch.values, config.sparsity, config.residual_tol)?;
    let residuals = classwise_pixel_residuals(&dictionary, &code, &patch.values);
    Ok(patch_votes(&residuals, config.vote_eps))
}

/// Accumulated votes of every patch of `cube`.
pub fn vote_field(
    cube: &HyperCube,
    training: &TrainingSet,
    shapelets: &ShapeletSet,
    config: &ClassifierConfig,
) -> Result<VoteField> {
    check_inputs(cube, training, shapelets, config)?;
    let geometry = shapelets.geometry()?;
    let anchors = enumerate_patches(cube, geometry)?;
    let index = SpectralIndex::new(training)?;
    let workers = config.workers;

    exec::install(workers, || {
        let evidence = exec::map_range(workers, cube.pixel_count(), |p| index.evidence(cube.pixel_at(p)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut field = VoteField::new(cube.height(), cube.width(), training.class_count() as usize);
        for chunk in anchors.chunks(CHUNK) {
            let votes = exec::map_ordered(workers, chunk, |&a| code_anchor(cube, &evidence, a, training, shapelets, config));
            for (&anchor, v) in chunk.iter().zip(votes) {
                accumulate(&mut field, anchor, geometry.side(), &v?)?;
            }
        }
        Ok(field)
    })
}

/// Classifies every pixel of `cube` (expected to be z-normalized, like the
/// training spectra).
pub fn classify_image(
    cube: &HyperCube,
    training: &TrainingSet,
    shapelets: &ShapeletSet,
    config: &ClassifierConfig,
) -> Result<LabelMap> {
    Ok(finalize(&vote_field(cube, training, shapelets, config)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_training_set, Shapelet};

    #[test]
    fn vote_rules() {
        let v = patch_votes(&[vec![Some(0.0), Some(2.0), None]], DEFAULT_VOTE_EPS);
        assert_eq!(v, vec![vec![1e6, 0.5, 0.0]]);
    }

    #[test]
    fn accumulation_is_additive() {
        let mut field = VoteField::new(2, 3, 2);
        accumulate(&mut field, Anchor { row: 0, col: 0 }, 2, &vec![vec![1.0, 0.0]; 4]).unwrap();
        accumulate(&mut field, Anchor { row: 0, col: 1 }, 2, &vec![vec![0.0, 1.0]; 4]).unwrap();
        assert_eq!(field.votes_at(0, 1), &[1.0, 1.0]);
        assert_eq!(field.votes_at(1, 0), &[1.0, 0.0]);
        assert_eq!(field.coverage_at(1, 1), 2);
        assert!(accumulate(&mut field, Anchor { row: 1, col: 0 }, 2, &vec![vec![0.0, 0.0]; 4]).is_err());

        let mut exact = VoteField::new(2, 2, 2);
        let votes = vec![vec![0.5, 1.0], vec![2.0, 0.0], vec![0.0, 0.0], vec![3.0, 3.0]];
        accumulate(&mut exact, Anchor { row: 0, col: 0 }, 2, &votes).unwrap();
        assert_eq!(exact.votes(), &[0.5, 1.0, 2.0, 0.0, 0.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn finalize_rules() {
        let mut field = VoteField::new(1, 3, 2);
        field.votes_at_mut(0, 0).copy_from_slice(&[3.0, 1.0]);
        field.votes_at_mut(0, 1).copy_from_slice(&[2.0, 2.0]);
        assert_eq!(finalize(&field).labels(), &[1, 1, 0]);
        field.votes_at_mut(0, 2).copy_from_slice(&[0.0, 0.5]);
        assert_eq!(finalize(&field).labels(), &[1, 1, 2]);
    }

    fn tiled(rows: usize, cols: usize, spectrum: &[f64]) -> HyperCube {
        HyperCube::new(rows, cols, spectrum.len(), spectrum.repeat(rows * cols)).unwrap()
    }

    #[test]
    fn single_class_image() {
        let a = [1.0, -1.0, 0.5, 2.0];
        let b = [-1.0, 2.0, 0.0, 0.3];
        let ts = validate_training_set(&[a.to_vec(), b.to_vec(), a.iter().map(|v| v * 2.0).collect()], &[2, 1, 2], 4).unwrap();
        let cube = tiled(6, 7, &a);
        let shapelets = ShapeletSet::new(vec![
            Shapelet::new(3, vec![1; 9]).unwrap(),
            Shapelet::new(3, vec![1, 1, 2, 1, 1, 2, 1, 1, 2]).unwrap(),
        ])
        .unwrap();
        let config = ClassifierConfig::default();
        let field = vote_field(&cube, &ts, &shapelets, &config).unwrap();
        for r in 0..6 {
            for c in 0..7 {
                assert!(field.votes_at(r, c)[0] == 0.0, "class 1 voted at ({r},{c})");
                assert!(field.coverage_at(r, c) >= 1);
            }
        }
        assert!(field.votes().iter().all(|v| v.is_finite() && *v >= 0.0));
        let map = finalize(&field);
        assert!(map.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn worker_count_does_not_change_the_map() {
        let mut values = Vec::new();
        for r in 0..12 {
            for c in 0..11 {
                let v = ((r * 7 + c * 3) % 5) as f64;
                values.extend_from_slice(&[v, 1.0 - v, (r as f64).sin(), (c as f64).cos()]);
            }
        }
        let cube = HyperCube::new(12, 11, 4, values).unwrap();
        let mask = LabelMap::new(12, 11, (0..132).map(|i| if i % 9 == 0 { (i % 2) as u32 + 1 } else { 0 }).collect()).unwrap();
        let ts = TrainingSet::from_mask(&cube, &mask).unwrap();
        let shapelets = crate::shapelets::haar_shapelets(4, 5).unwrap();
        let mut config = ClassifierConfig { workers: Workers::Fixed(1), ..Default::default() };
        let a = vote_field(&cube, &ts, &shapelets, &config).unwrap();
        config.workers = Workers::Fixed(8);
        let b = vote_field(&cube, &ts, &shapelets, &config).unwrap();
        assert_eq!(a.votes().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.votes().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(finalize(&a), finalize(&b));
    }

    #[test]
    fn rejects_bad_inputs() {
        let ts = validate_training_set(&[vec![1.0, 2.0]], &[1], 2).unwrap();
        let shapelets = ShapeletSet::new(vec![Shapelet::new(3, vec![1; 9]).unwrap()]).unwrap();
        let small = tiled(2, 5, &[1.0, 2.0]);
        assert!(matches!(classify_image(&small, &ts, &shapelets, &ClassifierConfig::default()), Err(Error::CubeSmallerThanPatch { .. })));
        let cube = tiled(4, 4, &[1.0, 2.0]);
        let zero = ClassifierConfig { sparsity: 0, ..Default::default() };
        assert!(classify_image(&cube, &ts, &shapelets, &zero).is_err());
        let wrong_bands = tiled(4, 4, &[1.0, 2.0, 3.0]);
        assert!(matches!(classify_image(&wrong_bands, &ts, &shapelets, &ClassifierConfig::default()), Err(Error::DimensionMismatch(_))));
    }
}
