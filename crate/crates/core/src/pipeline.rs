//! End-to-end runs: normalization, segmentation, shapelets, classification
//! and evaluation with one set of parameters.

use crate::classifier::{classify_image, ClassifierConfig};
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{HyperCube, LabelMap, ShapeletSet, TrainingSet};
use crate::preprocess::z_normalize;
use crate::shapelets::{haar_shapelets, learn_shapelets};
use crate::superpixel::{slic_segment_with, SlicParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeletParams {
    pub count: usize,
    pub side: usize,
    /// Window step when harvesting binary patches.
    pub stride: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Use the synthetic dyadic patterns instead of learning.
    pub haar: bool,
}

impl Default for ShapeletParams {
    fn default() -> Self {
        Self {
            count: 10,
            side: 9,
            stride: 1,
            max_iter: 100,
            seed: 0,
            haar: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExperimentParams {
    pub slic: SlicParams,
    pub shapelets: ShapeletParams,
    pub classifier: ClassifierConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub shapelets: ShapeletSet,
    pub labels: LabelMap,
    pub metrics: Option<MetricsReport>,
}

/// Shapelets for an already z-normalized cube.
pub fn shapelets_for(normalized: &HyperCube, params: &ShapeletParams, slic: &SlicParams, workers: Workers) -> Result<ShapeletSet> {
    if params.haar {
        return haar_shapelets(params.side, params.count);
    }
    let segmentation = slic_segment_with(normalized, slic, workers)?;
    learn_shapelets(&segmentation, params.side, params.count, params.stride, params.max_iter, params.seed, workers)
}

/// Scores `labels` on `test`, sizing the confusion matrix to cover every
/// class seen in either the training set or the test mask.
pub fn score(labels: &LabelMap, test: &LabelMap, training: &TrainingSet) -> Result<MetricsReport> {
    evaluate(labels, test, training.class_count().max(test.max_label()))
}

/// Runs every stage on a raw cube.
pub fn run_experiment(cube: &HyperCube, train: &LabelMap, test: Option<&LabelMap>, params: &ExperimentParams) -> Result<Outcome> {
    if train.height() != cube.height() || train.width() != cube.width() {
        return Err(Error::DimensionMismatch(format!(
            "training mask is {}x{}, cube is {}x{}",
            train.height(),
            train.width(),
            cube.height(),
            cube.width()
        )));
    }
    let normalized = z_normalize(cube);
    let training = TrainingSet::from_mask(&normalized, train)?;
    let shapelets = shapelets_for(&normalized, &params.shapelets, &params.slic, params.classifier.workers)?;
    let labels = classify_image(&normalized, &training, &shapelets, &params.classifier)?;
    let metrics = test.map(|t| score(&labels, t, &training)).transpose()?;
    Ok(Outcome { shapelets, labels, metrics })
}
