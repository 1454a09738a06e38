//! Shapelet-based sparse-representation classification of hyperspectral
//! images.
//!
//! The pipeline: z-normalize the cube, segment it into superpixels, learn
//! characteristic region layouts (shapelets) from the segmentation, and then
//! for every patch build a dictionary by MRF inference over the labeled
//! training spectra, code the patch with OMP and let each pixel vote for the
//! classes that reconstruct it best.
//!
//! ```no_run
//! use shapedc::{run_experiment, generate_scene, ExperimentParams, SceneConfig};
//!
//! let scene = generate_scene(&SceneConfig::default())?;
//! let out = run_experiment(&scene.cube, &scene.train, Some(&scene.test), &ExperimentParams::default())?;
//! println!("OA {:.4}", out.metrics.unwrap().overall);
//! # Ok::<(), shapedc::Error>(())
//! ```

pub mod classifier;
pub mod error;
pub mod exec;
pub mod io;
pub mod metrics;
pub mod model;
pub mod mrf;
pub mod pipeline;
pub mod preprocess;
pub mod shapelets;
pub mod sparse;
pub mod superpixel;
pub mod synth;

pub use classifier::{classify_image, vote_field, ClassifierConfig};
pub use error::{Error, Result};
pub use exec::Workers;
pub use metrics::{evaluate, MetricsReport};
pub use model::{
    Anchor, HyperCube, LabelMap, MrfConfig, PatchDictionary, PatchGeometry, Shapelet, ShapeletSet, SparseCode,
    TrainingSet, VoteField,
};
pub use pipeline::{run_experiment, ExperimentParams, Outcome, ShapeletParams};
pub use superpixel::{slic_segment, slic_segment_with, Segmentation, SlicParams};
pub use synth::{generate_scene, Layout, Scene, SceneConfig};
