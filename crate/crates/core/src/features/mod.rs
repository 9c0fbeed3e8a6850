//! Hand-crafted region representations: 11 shape features per hemisphere,
//! and radiomics texture families over the original volume and its eight
//! Haar sub-bands.

pub mod first_order;
pub mod shape;
pub mod texture;
pub mod wavelet;

use std::fmt::Write as _;

use rayon::prelude::*;

pub use first_order::first_order_features;
pub use shape::{shape_features, ShapeFeatures};
pub use texture::{directions13, glcm_features, glrlm_features, glszm_features, quantize, GrayLevelImage};
pub use wavelet::{haar3d, Subbands};

use crate::error::{Error, Result};
use crate::volume::{Block, Region};

/// Named feature values with a stable order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Non-fatal conditions hit during extraction.
    pub warnings: Vec<String>,
}

impl FeatureVector {
    pub fn from_parts(names: Vec<String>, values: Vec<f64>) -> Self {
        debug_assert_eq!(names.len(), values.len());
        Self { names, values, warnings: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Append `other` with every name prefixed by `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: FeatureVector) {
        self.names.extend(other.names.into_iter().map(|n| format!("{prefix}.{n}")));
        self.values.extend(other.values);
        self.warnings.extend(other.warnings.into_iter().map(|w| format!("{prefix}: {w}")));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Shape,
    Radiomics,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Shape => "shape",
            FeatureKind::Radiomics => "radiomics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadiomicsConfig {
    pub gray_levels: usize,
    pub wavelet: bool,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        Self { gray_levels: 32, wavelet: true }
    }
}

const SIDES: [&str; 2] = ["left", "right"];

pub fn shape_vector(region: &Region) -> Result<FeatureVector> {
    let mut fv = FeatureVector::default();
    for (side, block) in SIDES.iter().zip(region.blocks()) {
        let f = shape_features(&block.mask, block.volume.spacing())?;
        fv.extend_prefixed(
            &format!("{side}.shape"),
            FeatureVector::from_parts(ShapeFeatures::NAMES.iter().map(|s| s.to_string()).collect(), f.values().to_vec()),
        );
    }
    Ok(fv)
}

fn texture_families(volume: &crate::volume::Volume3D, mask: &crate::volume::Mask3D, config: &RadiomicsConfig) -> Result<FeatureVector> {
    let gray = quantize(volume, mask, config.gray_levels)?;
    let dirs = directions13();
    let mut fv = FeatureVector::default();
    fv.extend_prefixed("firstorder", first_order_features(&gray, volume, mask)?);
    fv.extend_prefixed("glcm", glcm_features(&gray, &dirs));
    fv.extend_prefixed("glrlm", glrlm_features(&gray, &dirs));
    fv.extend_prefixed("glszm", glszm_features(&gray));
    Ok(fv)
}

fn block_radiomics(block: &Block, config: &RadiomicsConfig) -> Result<FeatureVector> {
    if block.mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut fv = FeatureVector::default();
    fv.extend_prefixed("original", texture_families(&block.volume, &block.mask, config)?);
    if config.wavelet {
        let sub = haar3d(&block.volume);
        let mut mask = wavelet::downsample_mask(&block.mask);
        if mask.is_empty() {
            // majority vote erased a thin mask; keep any touched cell
            mask = wavelet::downsample_mask_min(&block.mask, 1);
            fv.warnings.push("wavelet mask fell back to any-voxel downsampling".into());
        }
        for (name, band) in wavelet::BAND_NAMES.iter().zip(&sub.bands) {
            fv.extend_prefixed(&format!("wavelet-{name}"), texture_families(band, &mask, config)?);
        }
    }
    Ok(fv)
}

/// Names are `side.band.family.feature`; the count is fixed by `config`
/// (see [`radiomics_feature_count`]).
///
/// The right block is flipped along x into the left block's frame first, so
/// the x-detail wavelet bands of mirrored anatomy carry the same sign.
pub fn radiomics_vector(region: &Region, config: &RadiomicsConfig) -> Result<FeatureVector> {
    let mut fv = FeatureVector::default();
    fv.extend_prefixed(SIDES[0], block_radiomics(&region.left, config)?);
    fv.extend_prefixed(SIDES[1], block_radiomics(&region.right.mirrored_x(), config)?);
    Ok(fv)
}

pub fn radiomics_feature_count(config: &RadiomicsConfig) -> usize {
    let per_band = first_order::FIRST_ORDER_NAMES.len()
        + texture::GLCM_NAMES.len()
        + texture::GLRLM_NAMES.len()
        + texture::GLSZM_NAMES.len();
    let bands = if config.wavelet { 9 } else { 1 };
    per_band * bands * SIDES.len()
}

pub fn extract(region: &Region, kind: FeatureKind, config: &RadiomicsConfig) -> Result<FeatureVector> {
    match kind {
        FeatureKind::Shape => shape_vector(region),
        FeatureKind::Radiomics => radiomics_vector(region, config),
    }
}

/// Extract for many regions in parallel; output order follows the input.
pub fn extract_all(regions: &[Region], kind: FeatureKind, config: &RadiomicsConfig) -> Result<Vec<FeatureVector>> {
    regions.par_iter().map(|r| extract(r, kind, config)).collect()
}

/// CSV with header `id,label,<names>`; unlabeled rows carry `?`.
pub fn features_csv(regions: &[Region], vectors: &[FeatureVector]) -> Result<String> {
    let Some(first) = vectors.first() else {
        return Ok("id,label\n".to_string());
    };
    let mut s = String::from("id,label");
    for n in &first.names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (r, v) in regions.iter().zip(vectors) {
        if v.names != first.names {
            return Err(Error::ShapeMismatch(format!("feature names differ for region {}", r.id)));
        }
        let label = r.label.map_or_else(|| "?".to_string(), |l| l.to_string());
        let _ = write!(s, "{},{}", r.id, label);
        for x in &v.values {
            let _ = write!(s, ",{x:?}");
        }
        s.push('\n');
    }
    Ok(s)
}
