//! Synthetic ordinal-severity phantoms standing in for hippocampal crops.
//!
//! Each subject gets a tilted ellipsoid per hemisphere whose radius shrinks
//! by `atrophy_step` per class, and an intensity field whose multiplicative
//! texture noise grows by `texture_noise_step` per class. The right
//! hemisphere is the x-mirror of the left geometry with independent jitter.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{coords, Block, BoundingBox, Mask3D, Region, Volume3D};

/// Noise level of class 1 tissue.
const BASE_TEXTURE_NOISE: f64 = 0.05;
/// Relative shape of the phantom (x, y, z) before per-subject anisotropy.
const AXIS_FACTORS: [f64; 3] = [1.0, 0.8, 1.4];
const TILT: f64 = 0.3;
const INSIDE_MEAN: f64 = 1.0;
const OUTSIDE_MEAN: f64 = 0.45;
const OUTSIDE_NOISE: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub bbox: BoundingBox,
    pub base_radius: f64,
    pub atrophy_step: f64,
    pub texture_noise_step: f64,
    pub subject_jitter: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Desk-scale defaults matching the toy network input.
    pub fn toy(per_class: usize, seed: u64) -> Self {
        Self {
            classes: 4,
            per_class,
            bbox: BoundingBox::TOY,
            base_radius: 4.0,
            atrophy_step: 0.35,
            texture_noise_step: 0.02,
            subject_jitter: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::ConfigInvalid(format!("classes = {} (need >= 2)", self.classes)));
        }
        if self.per_class < 1 {
            return Err(Error::ConfigInvalid("per_class must be >= 1".into()));
        }
        let floor = self.base_radius - (self.classes - 1) as f64 * self.atrophy_step - 3.0 * self.subject_jitter;
        if !(floor > 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "smallest possible radius {floor} must exceed 1 voxel"
            )));
        }
        if self.atrophy_step < 0.0 || self.texture_noise_step < 0.0 || self.subject_jitter < 0.0 {
            return Err(Error::ConfigInvalid("steps and jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SynthConfig),
    Manifest(PathBuf),
    Derived(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub regions: Vec<Region>,
    pub classes: usize,
    pub provenance: Provenance,
}

impl LabeledDataset {
    /// Wrap labeled regions; every label must lie in `1..=classes`.
    pub fn new(regions: Vec<Region>, classes: usize, provenance: Provenance) -> Result<Self> {
        for r in &regions {
            match r.label {
                Some(l) if (1..=classes).contains(&l) => {}
                Some(l) => return Err(Error::LabelOutOfRange { label: l, k: classes }),
                None => return Err(Error::Format(format!("region {} has no label", r.id))),
            }
        }
        Ok(Self { regions, classes, provenance })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.label.expect("labeled dataset")).collect()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

struct Geometry {
    center: [f64; 3],
    radii: [f64; 3],
    tilt: f64,
}

impl Geometry {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let (s, c) = self.tilt.sin_cos();
        // rotate in the x-z plane
        let u = [c * d[0] + s * d[2], d[1], -s * d[0] + c * d[2]];
        (0..3).map(|a| (u[a] / self.radii[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

fn truncated_normal(rng: &mut rng::Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return z * sigma;
        }
    }
}

fn hemisphere(config: &SynthConfig, label: usize, rng: &mut rng::Rng, mirrored: bool) -> Block {
    let dims = config.bbox.dims();
    let radius = config.base_radius - (label - 1) as f64 * config.atrophy_step + truncated_normal(rng, config.subject_jitter);
    let mut radii = [0.0; 3];
    for a in 0..3 {
        radii[a] = radius * AXIS_FACTORS[a] * (1.0 + rng.random_range(-0.05..0.05));
    }
    let center = std::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let geom = Geometry { center, radii, tilt: TILT };

    let noise = BASE_TEXTURE_NOISE + (label - 1) as f64 * config.texture_noise_step;
    let amp = rng.random_range(0.05..0.15);
    let phase = rng.random_range(0.0..2.0 * PI);
    let wave = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
    let scale = [dims[0] as f64, dims[1] as f64, dims[2] as f64];

    let mut mask = Mask3D::zeros(dims);
    let mut values = Vec::with_capacity(dims.iter().product());
    let nx = dims[0];
    for (x, y, z) in coords(dims) {
        // mirrored hemispheres sample the geometry at the reflected x
        let gx = if mirrored { (nx - 1 - x) as f64 } else { x as f64 };
        let p = [gx, y as f64, z as f64];
        let inside = geom.contains(p);
        let base = 1.0 + amp * (2.0 * PI * (0..3).map(|a| wave[a] * p[a] / scale[a]).sum::<f64>() + phase).sin();
        let eps: f64 = StandardNormal.sample(rng);
        let v = if inside {
            INSIDE_MEAN * base * (1.0 + noise * eps)
        } else {
            OUTSIDE_MEAN * base * (1.0 + OUTSIDE_NOISE * eps)
        };
        mask.set(x, y, z, inside);
        // stored as f32 on disk; keep memory and disk bit-identical
        values.push(v as f32 as f64);
    }
    let volume = Volume3D::new(dims, values).expect("finite phantom");
    Block { volume, mask }
}

/// Generate `per_class` subjects for each class `1..=classes`, ordered by class.
pub fn generate_dataset(config: &SynthConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let mut regions = Vec::with_capacity(config.classes * config.per_class);
    for label in 1..=config.classes {
        for j in 0..config.per_class {
            let subject = ((label - 1) * config.per_class + j) as u64;
            let mut rng = rng::derived(config.seed, subject);
            let left = hemisphere(config, label, &mut rng, false);
            let right = hemisphere(config, label, &mut rng, true);
            regions.push(Region { id: format!("s{subject:05}_c{label}"), left, right, label: Some(label) });
        }
    }
    LabeledDataset::new(regions, config.classes, Provenance::Synthetic(config.clone()))
}

/// Stratified split; class order and within-split order follow the input.
pub fn split(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::ConfigInvalid(format!("train_fraction {train_fraction} not in (0, 1)")));
    }
    let labels = dataset.labels();
    let mut in_train = vec![false; labels.len()];
    let mut rng = rng::seeded(seed);
    for class in 1..=dataset.classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall { class, count: members.len() });
        }
        // Fisher-Yates with the seeded stream
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        let n_train = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len() - 1);
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| -> Vec<Region> {
        dataset.regions.iter().zip(&in_train).filter(|(_, &t)| t == want).map(|(r, _)| r.clone()).collect()
    };
    let prov = |name: &str| Provenance::Derived(format!("split:{name}:fraction={train_fraction}:seed={seed}"));
    Ok((
        LabeledDataset::new(pick(true), dataset.classes, prov("train"))?,
        LabeledDataset::new(pick(false), dataset.classes, prov("test"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(per_class: usize) -> SynthConfig {
        SynthConfig::toy(per_class, 11)
    }

    #[test]
    fn cardinality() {
        let ds = generate_dataset(&small(10)).unwrap();
        assert_eq!(ds.len(), 40);
        for c in 1..=4 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == c).count(), 10);
        }
        for r in &ds.regions {
            assert_eq!(r.dims(), BoundingBox::TOY.dims());
            assert!(!r.left.mask.is_empty() && !r.right.mask.is_empty());
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_dataset(&small(3)).unwrap();
        let b = generate_dataset(&small(3)).unwrap();
        assert_eq!(a, b);
        let mut other = small(3);
        other.seed = 12;
        assert_ne!(a, generate_dataset(&other).unwrap());
    }

    #[test]
    fn rejects_vanishing_masks() {
        let mut c = small(2);
        c.atrophy_step = 1.2;
        assert!(matches!(generate_dataset(&c), Err(Error::ConfigInvalid(_))));
        c = small(0);
        assert!(generate_dataset(&c).is_err());
    }

    #[test]
    fn mirrored_geometry() {
        let mut c = small(1);
        c.subject_jitter = 0.0;
        let ds = generate_dataset(&c).unwrap();
        let r = &ds.regions[0];
        // radii differ by the per-axis anisotropy draw; the tilt flips
        let l = r.left.mask.tight_extent().unwrap();
        let rm = r.right.mask.mirrored_x().tight_extent().unwrap();
        assert!((l[0].0 as i64 - rm[0].0 as i64).abs() <= 1);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = generate_dataset(&small(10)).unwrap();
        let (tr, te) = split(&ds, 0.5, 3).unwrap();
        assert_eq!(tr.len(), 20);
        assert_eq!(te.len(), 20);
        for c in 1..=4 {
            assert_eq!(tr.labels().iter().filter(|&&l| l == c).count(), 5);
            assert_eq!(te.labels().iter().filter(|&&l| l == c).count(), 5);
        }
        let mut ids: Vec<&str> = tr.regions.iter().chain(&te.regions).map(|r| r.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 40);
        let (tr2, _) = split(&ds, 0.5, 3).unwrap();
        assert_eq!(tr, tr2);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let mut ds = generate_dataset(&small(2)).unwrap();
        ds.regions.remove(0);
        assert_eq!(split(&ds, 0.5, 1), Err(Error::ClassTooSmall { class: 1, count: 1 }));
        assert!(split(&ds, 1.0, 1).is_err());
    }
}
