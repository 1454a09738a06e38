//! Band-wise z-normalization and patch enumeration.

use crate::error::{Error, Result};
use crate::model::{Anchor, HyperCube, PatchGeometry};

/// Bands whose population standard deviation falls below this are zeroed.
pub const CONSTANT_BAND_STD: f64 = 1e-12;

/// Standardizes every band to zero mean and unit population standard deviation.
pub fn z_normalize(cube: &HyperCube) -> HyperCube {
    let bands = cube.bands();
    let n = cube.pixel_count() as f64;
    let mut out = cube.clone();
    for b in 0..bands {
        let mean = cube.values().iter().skip(b).step_by(bands).sum::<f64>() / n;
        let var = cube
            .values()
            .iter()
            .skip(b)
            .step_by(bands)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        for v in out.values_mut().iter_mut().skip(b).step_by(bands) {
            *v = if std < CONSTANT_BAND_STD {
                0.0
            } else {
                (*v - mean) / std
            };
        }
    }
    out
}

/// Every fully-interior top-left anchor, row-major, stride 1.
pub fn enumerate_patches(cube: &HyperCube, geometry: PatchGeometry) -> Result<Vec<Anchor>> {
    let side = geometry.side();
    if cube.height() < side || cube.width() < side {
        return Err(Error::CubeSmallerThanPatch {
            height: cube.height(),
            width: cube.width(),
            side,
        });
    }
    let rows = cube.height() - side + 1;
    let cols = cube.width() - side + 1;
    Ok((0..rows)
        .flat_map(|row| (0..cols).map(move |col| Anchor { row, col }))
        .collect())
}

/// A vectorized patch: pixel `z` occupies `values[z * bands..(z + 1) * bands]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub anchor: Anchor,
    pub geometry: PatchGeometry,
    pub bands: usize,
    pub values: Vec<f64>,
}

impl Patch {
    pub fn pixel(&self, z: usize) -> &[f64] {
        &self.values[self.geometry.pixel_rows(z, self.bands)]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.bands)
    }

    pub fn pixel_count(&self) -> usize {
        self.geometry.pixel_count()
    }

    /// Image coordinates of patch pixel `z`.
    pub fn image_position(&self, z: usize) -> (usize, usize) {
        let side = self.geometry.side();
        (self.anchor.row + z / side, self.anchor.col + z % side)
    }
}

pub fn extract_patch(cube: &HyperCube, anchor: Anchor, geometry: PatchGeometry) -> Result<Patch> {
    let side = geometry.side();
    if anchor.row + side > cube.height() || anchor.col + side > cube.width() {
        return Err(Error::AnchorOutOfBounds {
            row: anchor.row,
            col: anchor.col,
            side,
        });
    }
    let bands = cube.bands();
    let mut values = Vec::with_capacity(geometry.pixel_count() * bands);
    for r in anchor.row..anchor.row + side {
        let start = (r * cube.width() + anchor.col) * bands;
        values.extend_from_slice(&cube.values()[start..start + side * bands]);
    }
    Ok(Patch {
        anchor,
        geometry,
        bands,
        values,
    })
}
