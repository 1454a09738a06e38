//! Patch-specific spatial-spectral dictionary construction.
//!
//! For one patch and one shapelet, every pixel picks a training sample and
//! every shapelet region picks a class by minimizing
//!
//! ```text
//! E = -Σ_z corr(x_z, s(p_z)) - γ Σ_r h_r[class(q_r)]
//!     + ω Σ_r Σ_{z ∈ region r} [class(p_z) ≠ class(q_r)]
//! ```
//!
//! where `p` are the pixel choices, `q` the region choices and `h_r` the
//! histogram of nearest-neighbour labels inside region `r`.
//!
//! Each region node only touches its own pixels, so the model is a forest of
//! stars and can be minimized exactly: fix a class per region, let every
//! pixel pick its cheapest sample given that class, keep the best class.
//! A pixel's cheapest sample given class `k` is always the best-correlated
//! sample of some class, so only the per-class maxima of the correlations
//! are needed ([`PixelEvidence`]).

use crate::error::{Error, Result};
use crate::model::{MrfConfig, PatchDictionary, Shapelet, ShapeletSet, TrainingSet};
use crate::preprocess::Patch;

/// Z×L Pearson correlations between patch pixels and training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlations {
    pixels: usize,
    samples: usize,
    values: Vec<f64>,
}

impl Correlations {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let samples = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != samples) {
            return Err(Error::LengthMismatch {
                what: "correlation row",
                got: r.len(),
                expected: samples,
            });
        }
        Ok(Self {
            pixels: rows.len(),
            samples,
            values: rows.concat(),
        })
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, z: usize, l: usize) -> f64 {
        self.values[z * self.samples + l]
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.values[z * self.samples..(z + 1) * self.samples]
    }
}

/// Mean-removed, unit-norm copy of a spectrum; all zeros when the spectrum
/// has no variance across bands.
fn standardize(spectrum: &[f64]) -> Vec<f64> {
    let n = spectrum.len() as f64;
    let mean = spectrum.iter().sum::<f64>() / n;
    let centered: Vec<f64> = spectrum.iter().map(|v| v - mean).collect();
    let ss: f64 = centered.iter().map(|v| v * v).sum();
    let scale: f64 = spectrum.iter().map(|v| v * v).sum();
    if ss <= 1e-24 * scale || ss == 0.0 {
        return vec![0.0; spectrum.len()];
    }
    let norm = ss.sqrt();
    centered.into_iter().map(|v| v / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Training spectra prepared once for repeated correlation queries.
#[derive(Debug, Clone)]
pub struct SpectralIndex<'a> {
    training: &'a TrainingSet,
    standardized: Vec<Vec<f64>>,
}

impl<'a> SpectralIndex<'a> {
    pub fn new(training: &'a TrainingSet) -> Result<Self> {
        if training.bands() < 2 {
            return Err(Error::TooFewBands(training.bands()));
        }
        let standardized = (0..training.len())
            .map(|l| standardize(training.spectrum(l)))
            .collect();
        Ok(Self {
            training,
            standardized,
        })
    }

    pub fn training(&self) -> &TrainingSet {
        self.training
    }

    /// Correlations of one spectrum with every training sample.
    pub fn correlate(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        if spectrum.len() != self.training.bands() {
            return Err(Error::LengthMismatch {
                what: "pixel spectrum",
                got: spectrum.len(),
                expected: self.training.bands(),
            });
        }
        let u = standardize(spectrum);
        Ok(self
            .standardized
            .iter()
            .map(|s| dot(&u, s).clamp(-1.0, 1.0))
            .collect())
    }

    /// Per-class best sample for one spectrum.
    pub fn evidence(&self, spectrum: &[f64]) -> Result<PixelEvidence> {
        Ok(PixelEvidence::from_correlations(&self.correlate(spectrum)?, self.training))
    }
}

/// Pearson correlation of every patch pixel with every training sample.
/// A pixel or sample with zero variance across bands correlates as 0.
pub fn pixel_correlations(pixels: &[Vec<f64>], training: &TrainingSet) -> Result<Correlations> {
    let index = SpectralIndex::new(training)?;
    let rows = pixels
        .iter()
        .map(|p| index.correlate(p))
        .collect::<Result<Vec<_>>>()?;
    Correlations::from_rows(rows)
}

/// Nearest-neighbour label of every pixel: the class of its most correlated
/// sample, ties to the lowest sample index.
pub fn nn_label_estimate(correlations: &Correlations, training: &TrainingSet) -> Vec<u32> {
    (0..correlations.pixels())
        .map(|z| training.label(argmax(correlations.row(z))))
        .collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalized class histogram of `labels` over `region` (pixel indices).
pub fn region_histogram(labels: &[u32], region: &[usize], class_count: u32) -> Result<Vec<f64>> {
    if region.is_empty() {
        return Err(Error::EmptyRegion(0));
    }
    let mut h = vec![0.0; class_count as usize];
    for &z in region {
        let label = labels[z];
        if label == 0 || label > class_count {
            return Err(Error::LabelOutOfRange {
                label,
                max: class_count,
            });
        }
        h[label as usize - 1] += 1.0;
    }
    let n = region.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    Ok(h)
}

/// Histograms of every region of `shapelet`.
pub fn region_histograms(labels: &[u32], shapelet: &Shapelet, class_count: u32) -> Result<Vec<Vec<f64>>> {
    shapelet
        .regions()
        .iter()
        .enumerate()
        .map(|(r, pixels)| {
            region_histogram(labels, pixels, class_count).map_err(|e| match e {
                Error::EmptyRegion(_) => Error::EmptyRegion(r as u32 + 1),
                other => other,
            })
        })
        .collect()
}

/// Energy of a full assignment, evaluated term by term.
pub fn energy(
    pixel_choice: &[usize],
    region_choice: &[usize],
    correlations: &Correlations,
    histograms: &[Vec<f64>],
    shapelet: &Shapelet,
    training: &TrainingSet,
    config: &MrfConfig,
) -> f64 {
    let data: f64 = pixel_choice
        .iter()
        .enumerate()
        .map(|(z, &l)| correlations.get(z, l))
        .sum();
    let prior: f64 = region_choice
        .iter()
        .zip(histograms)
        .map(|(&l, h)| h[training.label(l) as usize - 1])
        .sum();
    let disagreements = shapelet
        .region_map()
        .iter()
        .enumerate()
        .filter(|&(z, &r)| training.label(pixel_choice[z]) != training.label(region_choice[r as usize - 1]))
        .count();
    -data - config.gamma * prior + config.omega * disagreements as f64
}

/// Minimizing pixel and region choices with their energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Training-sample index chosen for every patch pixel.
    pub pixel_choice: Vec<usize>,
    /// Training-sample index representing every region (lowest index of the
    /// winning class).
    pub region_choice: Vec<usize>,
    pub energy: f64,
}

/// What a pixel contributes to inference: the best-correlated sample of
/// every class, and its nearest-neighbour label.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelEvidence {
    /// Entry `k - 1`: (max correlation within class `k`, lowest index attaining it).
    pub class_best: Vec<(f64, usize)>,
    pub nn_label: u32,
}

impl PixelEvidence {
    pub fn from_correlations(row: &[f64], training: &TrainingSet) -> Self {
        let k = training.class_count() as usize;
        let mut class_best: Vec<Option<(f64, usize)>> = vec![None; k];
        for (l, &c) in row.iter().enumerate() {
            let slot = &mut class_best[training.label(l) as usize - 1];
            if slot.is_none_or(|(best, _)| c > best) {
                *slot = Some((c, l));
            }
        }
        let class_best: Vec<(f64, usize)> = class_best
            .into_iter()
            .map(|s| s.expect("every class has a sample"))
            .collect();
        let mut nn = 0;
        for (i, &(c, l)) in class_best.iter().enumerate() {
            let (bc, bl) = class_best[nn];
            if c > bc || (c == bc && l < bl) {
                nn = i;
            }
        }
        Self {
            class_best,
            nn_label: nn as u32 + 1,
        }
    }
}

/// Cheapest sample for a pixel whose region has class `region_class`:
/// (cost, sample index), ties to the lowest sample index.
fn cheapest_sample(evidence: &PixelEvidence, region_class: usize, omega: f64) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (c, &(corr, l)) in evidence.class_best.iter().enumerate() {
        let cost = if c == region_class { -corr } else { omega - corr };
        if cost < best.0 || (cost == best.0 && l < best.1) {
            best = (cost, l);
        }
    }
    best
}

/// Exact minimizer over the per-pixel evidence of one patch.
pub fn infer_from_evidence(
    evidence: &[PixelEvidence],
    shapelet: &Shapelet,
    training: &TrainingSet,
    config: &MrfConfig,
) -> Result<Assignment> {
    if evidence.len() != shapelet.side() * shapelet.side() {
        return Err(Error::LengthMismatch {
            what: "patch evidence",
            got: evidence.len(),
            expected: shapelet.side() * shapelet.side(),
        });
    }
    let k = training.class_count();
    let labels: Vec<u32> = evidence.iter().map(|e| e.nn_label).collect();
    let histograms = region_histograms(&labels, shapelet, k)?;
    let mut pixel_choice = vec![0usize; evidence.len()];
    let mut region_choice = Vec::with_capacity(histograms.len());
    let mut total = 0.0;
    for (pixels, hist) in shapelet.regions().iter().zip(&histograms) {
        let mut best: Option<(f64, usize)> = None;
        for (class, &h) in hist.iter().enumerate().take(k as usize) {
            let cost = -config.gamma * h
                + pixels
                    .iter()
                    .map(|&z| cheapest_sample(&evidence[z], class, config.omega).0)
                    .sum::<f64>();
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, class));
            }
        }
        let (cost, class) = best.expect("at least one class");
        total += cost;
        for &z in pixels {
            pixel_choice[z] = cheapest_sample(&evidence[z], class, config.omega).1;
        }
        region_choice.push(
            training
                .first_of_class(class as u32 + 1)
                .expect("every class has a sample"),
        );
    }
    Ok(Assignment {
        pixel_choice,
        region_choice,
        energy: total,
    })
}

/// Exact minimizer of the energy for one patch and one shapelet.
pub fn infer_assignment(
    correlations: &Correlations,
    shapelet: &Shapelet,
    training: &TrainingSet,
    config: &MrfConfig,
) -> Result<Assignment> {
    if correlations.samples() != training.len() {
        return Err(Error::LengthMismatch {
            what: "correlation row",
            got: correlations.samples(),
            expected: training.len(),
        });
    }
    let evidence: Vec<PixelEvidence> = (0..correlations.pixels())
        .map(|z| PixelEvidence::from_correlations(correlations.row(z), training))
        .collect();
    let mut assignment = infer_from_evidence(&evidence, shapelet, training, config)?;
    let labels = nn_label_estimate(correlations, training);
    let histograms = region_histograms(&labels, shapelet, training.class_count())?;
    assignment.energy = energy(
        &assignment.pixel_choice,
        &assignment.region_choice,
        correlations,
        &histograms,
        shapelet,
        training,
        config,
    );
    Ok(assignment)
}

/// One column per shapelet from precomputed pixel evidence; columns with
/// identical sample choices are kept once.
pub fn dictionary_from_evidence(
    evidence: &[PixelEvidence],
    shapelets: &ShapeletSet,
    training: &TrainingSet,
    config: &MrfConfig,
) -> Result<PatchDictionary> {
    let sources = shapelets
        .shapelets()
        .iter()
        .map(|s| infer_from_evidence(evidence, s, training, config).map(|a| a.pixel_choice))
        .collect::<Result<Vec<_>>>()?;
    PatchDictionary::assemble(sources, training)
}

pub fn build_patch_dictionary(
    patch: &Patch,
    shapelets: &ShapeletSet,
    training: &TrainingSet,
    config: &MrfConfig,
) -> Result<PatchDictionary> {
    if shapelets.side() != patch.geometry.side() {
        return Err(Error::DimensionMismatch(format!(
            "shapelet side {} does not match patch side {}",
            shapelets.side(),
            patch.geometry.side()
        )));
    }
    let index = SpectralIndex::new(training)?;
    let evidence = patch
        .pixels()
        .map(|p| index.evidence(p))
        .collect::<Result<Vec<_>>>()?;
    dictionary_from_evidence(&evidence, shapelets, training, config)
}
