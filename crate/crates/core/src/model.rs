//! Core domain types shared by every stage.
//!
//! Class ids are 1-based throughout; `0` means "unlabeled" in every label map.
//! Training-sample indices are 0-based positions into the [`TrainingSet`].

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};

/// An M-band image raster stored pixel-major: the spectrum of pixel
/// `(row, col)` is the contiguous slice `[(row * width + col) * bands ..][..bands]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f64>,
}

impl HyperCube {
    /// Builds a cube from pixel-major (band-interleaved-by-pixel) values.
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::invalid(
                "cube",
                format!("dimensions must be positive, got {height}x{width}x{bands}"),
            ));
        }
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                what: "cube values",
                got: values.len(),
                expected,
            });
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    /// Builds a cube from band-sequential values (band-major, row-major within band).
    pub fn from_band_sequential(
        height: usize,
        width: usize,
        bands: usize,
        bsq: &[f64],
    ) -> Result<Self> {
        let plane = height * width;
        if bsq.len() != plane * bands {
            return Err(Error::LengthMismatch {
                what: "cube values",
                got: bsq.len(),
                expected: plane * bands,
            });
        }
        let mut values = vec![0.0; bsq.len()];
        for b in 0..bands {
            for p in 0..plane {
                values[p * bands + b] = bsq[b * plane + p];
            }
        }
        Self::new(height, width, bands, values)
    }

    pub fn to_band_sequential(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.values.len()];
        for p in 0..plane {
            for b in 0..self.bands {
                out[b * plane + p] = self.values[p * self.bands + b];
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    /// Spectrum of the pixel at flat row-major index `index`.
    pub fn pixel_at(&self, index: usize) -> &[f64] {
        &self.values[index * self.bands..(index + 1) * self.bands]
    }
}

/// Labeled spectra used as the dictionary's spectral source.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    bands: usize,
    spectra: Vec<f64>,
    labels: Vec<u32>,
    class_count: u32,
}

/// Validates labeled spectra against the cube band count `bands`.
///
/// The class count is the largest label; every class in `1..=K` must occur.
pub fn validate_training_set(
    spectra: &[Vec<f64>],
    labels: &[u32],
    bands: usize,
) -> Result<TrainingSet> {
    if spectra.is_empty() {
        return Err(Error::invalid("training set", "no samples"));
    }
    if labels.len() != spectra.len() {
        return Err(Error::LengthMismatch {
            what: "training labels",
            got: labels.len(),
            expected: spectra.len(),
        });
    }
    for s in spectra {
        if s.len() != bands {
            return Err(Error::LengthMismatch {
                what: "training spectrum",
                got: s.len(),
                expected: bands,
            });
        }
    }
    let class_count = labels.iter().copied().max().unwrap_or(0);
    if let Some(&bad) = labels.iter().find(|&&l| l == 0) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            max: class_count,
        });
    }
    let mut seen = vec![false; class_count as usize + 1];
    for &l in labels {
        seen[l as usize] = true;
    }
    if let Some(k) = (1..=class_count).find(|&k| !seen[k as usize]) {
        return Err(Error::EmptyClass(k));
    }
    Ok(TrainingSet {
        bands,
        spectra: spectra.iter().flatten().copied().collect(),
        labels: labels.to_vec(),
        class_count,
    })
}

impl TrainingSet {
    /// Collects every pixel of `cube` whose `mask` label is nonzero, in row-major order.
    pub fn from_mask(cube: &HyperCube, mask: &LabelMap) -> Result<Self> {
        if mask.height() != cube.height() || mask.width() != cube.width() {
            return Err(Error::DimensionMismatch(format!(
                "training mask is {}x{}, cube is {}x{}",
                mask.height(),
                mask.width(),
                cube.height(),
                cube.width()
            )));
        }
        let mut spectra = Vec::new();
        let mut labels = Vec::new();
        for (i, &label) in mask.labels().iter().enumerate() {
            if label > 0 {
                spectra.push(cube.pixel_at(i).to_vec());
                labels.push(label);
            }
        }
        validate_training_set(&spectra, &labels, cube.bands())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn spectrum(&self, index: usize) -> &[f64] {
        &self.spectra[index * self.bands..(index + 1) * self.bands]
    }

    pub fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Lowest sample index carrying class `class`.
    pub fn first_of_class(&self, class: u32) -> Option<usize> {
        self.labels.iter().position(|&l| l == class)
    }
}

/// Top-left corner of a patch window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Anchor {
    pub row: usize,
    pub col: usize,
}

/// Square patch geometry. Patch pixel `z` enumerates the window row-major and
/// occupies rows `[z * M, (z + 1) * M)` of any vectorized patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    side: usize,
}

impl PatchGeometry {
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::invalid(
                "patch geometry",
                format!("side must be at least 2, got {side}"),
            ));
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixel_count(&self) -> usize {
        self.side * self.side
    }

    pub fn pixel_rows(&self, z: usize, bands: usize) -> Range<usize> {
        z * bands..(z + 1) * bands
    }

    /// Stacks per-pixel spectra into one vector in the normative layout.
    pub fn vectorize(&self, pixels: &[Vec<f64>]) -> Result<Vec<f64>> {
        if pixels.len() != self.pixel_count() {
            return Err(Error::LengthMismatch {
                what: "patch pixels",
                got: pixels.len(),
                expected: self.pixel_count(),
            });
        }
        Ok(pixels.concat())
    }

    pub fn unvectorize(&self, vector: &[f64], bands: usize) -> Result<Vec<Vec<f64>>> {
        let expected = self.pixel_count() * bands;
        if bands == 0 || vector.len() != expected {
            return Err(Error::LengthMismatch {
                what: "vectorized patch",
                got: vector.len(),
                expected,
            });
        }
        Ok(vector.chunks(bands).map(<[f64]>::to_vec).collect())
    }
}

/// A side×side map of region ids in `1..=R`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shapelet {
    side: usize,
    region_map: Vec<u32>,
    region_count: u32,
}

impl Shapelet {
    pub fn new(side: usize, region_map: Vec<u32>) -> Result<Self> {
        if side == 0 || region_map.len() != side * side {
            return Err(Error::LengthMismatch {
                what: "shapelet region map",
                got: region_map.len(),
                expected: side * side,
            });
        }
        let region_count = region_map.iter().copied().max().unwrap_or(0);
        if region_map.contains(&0) {
            return Err(Error::invalid("shapelet", "region ids must start at 1"));
        }
        let mut seen = vec![false; region_count as usize + 1];
        for &r in &region_map {
            seen[r as usize] = true;
        }
        if let Some(r) = (1..=region_count).find(|&r| !seen[r as usize]) {
            return Err(Error::invalid(
                "shapelet",
                format!("region id {r} does not occur"),
            ));
        }
        Ok(Self {
            side,
            region_map,
            region_count,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn region_count(&self) -> u32 {
        self.region_count
    }

    pub fn region_map(&self) -> &[u32] {
        &self.region_map
    }

    /// Patch pixel indices of every region; entry `r - 1` holds region `r`.
    pub fn regions(&self) -> Vec<Vec<usize>> {
        let mut regions = vec![Vec::new(); self.region_count as usize];
        for (z, &r) in self.region_map.iter().enumerate() {
            regions[r as usize - 1].push(z);
        }
        regions
    }
}

/// N shapelets of a common side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeletSet {
    side: usize,
    shapelets: Vec<Shapelet>,
}

impl ShapeletSet {
    pub fn new(shapelets: Vec<Shapelet>) -> Result<Self> {
        let side = match shapelets.first() {
            Some(s) => s.side(),
            None => return Err(Error::invalid("shapelet set", "at least one shapelet is required")),
        };
        if let Some(bad) = shapelets.iter().find(|s| s.side() != side) {
            return Err(Error::invalid(
                "shapelet set",
                format!("mixed sides {side} and {}", bad.side()),
            ));
        }
        Ok(Self { side, shapelets })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.shapelets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapelets.is_empty()
    }

    pub fn shapelets(&self) -> &[Shapelet] {
        &self.shapelets
    }

    pub fn geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(self.side)
    }
}

/// Patch-specific spatial-spectral dictionary.
///
/// Column `c` stacks the training spectra `source_indices[c][z]` for every
/// patch pixel `z`; `pixel_labels[c][z]` is the class of that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDictionary {
    bands: usize,
    class_count: u32,
    columns: Vec<Vec<f64>>,
    pixel_labels: Vec<Vec<u32>>,
    source_indices: Vec<Vec<usize>>,
}

impl PatchDictionary {
    /// Assembles columns from per-column sample-index lists, dropping any list
    /// identical to an earlier one.
    pub fn assemble(sources: Vec<Vec<usize>>, training: &TrainingSet) -> Result<Self> {
        let pixel_count = sources.first().map_or(0, Vec::len);
        let mut seen = HashSet::new();
        let mut dict = Self {
            bands: training.bands(),
            class_count: training.class_count(),
            columns: Vec::new(),
            pixel_labels: Vec::new(),
            source_indices: Vec::new(),
        };
        for source in sources {
            if source.len() != pixel_count {
                return Err(Error::LengthMismatch {
                    what: "dictionary column sources",
                    got: source.len(),
                    expected: pixel_count,
                });
            }
            if let Some(&bad) = source.iter().find(|&&l| l >= training.len()) {
                return Err(Error::invalid(
                    "dictionary column",
                    format!("sample index {bad} out of range for {} samples", training.len()),
                ));
            }
            if !seen.insert(source.clone()) {
                continue;
            }
            let mut column = Vec::with_capacity(pixel_count * training.bands());
            for &l in &source {
                column.extend_from_slice(training.spectrum(l));
            }
            dict.pixel_labels
                .push(source.iter().map(|&l| training.label(l)).collect());
            dict.columns.push(column);
            dict.source_indices.push(source);
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn pixel_count(&self) -> usize {
        self.source_indices.first().map_or(0, Vec::len)
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn pixel_labels(&self) -> &[Vec<u32>] {
        &self.pixel_labels
    }

    pub fn source_indices(&self) -> &[Vec<usize>] {
        &self.source_indices
    }
}

/// Result of a sparse-coding run.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Selected column indices in selection order.
    pub selected: Vec<usize>,
    /// Weights of `selected` against the original (un-normalized) columns.
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Residual norm before the first step and after every step.
    pub residual_trace: Vec<f64>,
}

/// Per-pixel, per-class accumulated votes plus coverage counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteField {
    height: usize,
    width: usize,
    class_count: usize,
    votes: Vec<f64>,
    coverage: Vec<u32>,
}

impl VoteField {
    pub fn new(height: usize, width: usize, class_count: usize) -> Self {
        Self {
            height,
            width,
            class_count,
            votes: vec![0.0; height * width * class_count],
            coverage: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Votes of pixel `(row, col)`; entry `k - 1` is class `k`.
    pub fn votes_at(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.class_count;
        &self.votes[start..start + self.class_count]
    }

    pub(crate) fn votes_at_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.class_count;
        &mut self.votes[start..start + self.class_count]
    }

    pub fn coverage_at(&self, row: usize, col: usize) -> u32 {
        self.coverage[row * self.width + col]
    }

    pub(crate) fn coverage_mut(&mut self, row: usize, col: usize) -> &mut u32 {
        &mut self.coverage[row * self.width + col]
    }

    pub fn votes(&self) -> &[f64] {
        &self.votes
    }
}

/// Height×width class ids; `0` = unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::LengthMismatch {
                what: "label map",
                got: labels.len(),
                expected: height * width,
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u32) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u32) {
        self.labels[row * self.width + col] = label;
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Weights of the dictionary-construction energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfConfig {
    /// Weight of the region class-histogram prior.
    pub gamma: f64,
    /// Penalty per pixel whose class disagrees with its region's class.
    pub omega: f64,
}

impl MrfConfig {
    pub fn new(gamma: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("omega", omega)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    "mrf config",
                    format!("{name} must be finite and nonnegative, got {v}"),
                ));
            }
        }
        Ok(Self { gamma, omega })
    }
}

impl Default for MrfConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            omega: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_training_set_is_valid() {
        let ts = validate_training_set(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]], &[1, 2], 3)
            .unwrap();
        assert_eq!(ts.class_count(), 2);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.spectrum(1), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn training_set_length_mismatch() {
        let err = validate_training_set(&[vec![1.0, 2.0, 3.0, 4.0]], &[1], 3).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
    }

    #[test]
    fn training_set_empty_class() {
        let err = validate_training_set(&[vec![0.0; 3], vec![1.0; 3]], &[1, 3], 3).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(2)));
        assert!(err.to_string().contains("empty class"));
    }

    #[test]
    fn training_set_rejects_zero_label() {
        let err = validate_training_set(&[vec![0.0; 2]], &[0], 2).unwrap_err();
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn shapelet_requires_contiguous_regions() {
        assert!(Shapelet::new(2, vec![1, 1, 3, 3]).is_err());
        assert!(Shapelet::new(2, vec![0, 1, 1, 1]).is_err());
        let s = Shapelet::new(2, vec![1, 2, 2, 1]).unwrap();
        assert_eq!(s.regions(), vec![vec![0, 3], vec![1, 2]]);
    }

    #[test]
    fn dictionary_assembly_dedups_by_sources() {
        let ts = validate_training_set(&[vec![1.0, 2.0], vec![5.0, 6.0]], &[1, 2], 2).unwrap();
        let d = PatchDictionary::assemble(vec![vec![0, 1], vec![0, 1], vec![1, 1]], &ts).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.columns()[0], vec![1.0, 2.0, 5.0, 6.0]);
        assert_eq!(d.pixel_labels()[1], vec![2, 2]);
    }

    #[test]
    fn cube_bsq_conversion() {
        let cube = HyperCube::from_band_sequential(1, 2, 2, &[1.0, 2.0, 10.0, 20.0]).unwrap();
        assert_eq!(cube.pixel(0, 1), &[2.0, 20.0]);
        assert_eq!(cube.to_band_sequential(), vec![1.0, 2.0, 10.0, 20.0]);
    }

    proptest! {
        #[test]
        fn vectorize_round_trip(side in 2usize..5, bands in 1usize..4, seed in any::<u64>()) {
            let geom = PatchGeometry::new(side).unwrap();
            let pixels: Vec<Vec<f64>> = (0..side * side)
                .map(|z| (0..bands).map(|b| (seed.wrapping_mul(z as u64 + 1) % 97) as f64 + b as f64 * 0.5).collect())
                .collect();
            let v = geom.vectorize(&pixels).unwrap();
            for z in 0..side * side {
                prop_assert_eq!(&v[geom.pixel_rows(z, bands)], &pixels[z][..]);
            }
            prop_assert_eq!(geom.unvectorize(&v, bands).unwrap(), pixels);
        }

        #[test]
        fn dictionary_assembly_is_deterministic(
            sources in proptest::collection::vec(proptest::collection::vec(0usize..3, 4), 1..6)
        ) {
            let ts = validate_training_set(
                &[vec![0.1, 0.2], vec![0.3, -0.4], vec![1.5, 2.5]],
                &[1, 2, 1],
                2,
            ).unwrap();
            let a = PatchDictionary::assemble(sources.clone(), &ts).unwrap();
            let b = PatchDictionary::assemble(sources, &ts).unwrap();
            prop_assert_eq!(&a, &b);
            for (c, col) in a.columns().iter().enumerate() {
                for z in 0..4 {
                    let l = a.source_indices()[c][z];
                    prop_assert_eq!(&col[z * 2..z * 2 + 2], ts.spectrum(l));
                    prop_assert_eq!(a.pixel_labels()[c][z], ts.label(l));
                }
            }
        }
    }
}
