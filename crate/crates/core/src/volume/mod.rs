//! Dense volumes, binary masks, and the left/right region unit consumed by
//! every learner.
//!
//! Voxel storage is row-major with x fastest: `index = x + nx * (y + ny * z)`.

mod augment;
pub mod io;

pub use augment::{directions26, elastic_deform, enumerate_translations, translate, translate_region};

use crate::error::{Error, Result};

/// Voxel counts along x, y, z.
pub type Dims = [usize; 3];

#[inline]
pub(crate) fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Iterate over every `(x, y, z)` coordinate in storage order.
pub(crate) fn coords(dims: Dims) -> impl Iterator<Item = (usize, usize, usize)> {
    let [nx, ny, nz] = dims;
    (0..nz).flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| (x, y, z))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl Volume3D {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        Self::with_spacing(dims, [1.0; 3], values)
    }

    pub fn with_spacing(dims: Dims, spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "volume {:?} needs {} values, got {}",
                dims,
                voxel_count(dims),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume values".into()));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::ConfigInvalid(format!("spacing {spacing:?}")));
        }
        Ok(Self { dims, spacing, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self { dims, spacing: [1.0; 3], values: vec![0.0; voxel_count(dims)] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[linear_index(self.dims, x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = linear_index(self.dims, x, y, z);
        self.values[i] = v;
    }

    /// Value at signed coordinates, zero outside the grid.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64, z: i64) -> f64 {
        if in_grid(self.dims, x, y, z) {
            self.get(x as usize, y as usize, z as usize)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    dims: Dims,
    values: Vec<u8>,
}

impl Mask3D {
    /// Build a mask; any nonzero input value is stored as 1.
    pub fn new(dims: Dims, values: Vec<u8>) -> Result<Self> {
        if values.len() != voxel_count(dims) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} needs {} values, got {}",
                dims,
                voxel_count(dims),
                values.len()
            )));
        }
        let values = values.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self { dims, values: vec![0; voxel_count(dims)] }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let values = coords(dims).map(|(x, y, z)| u8::from(f(x, y, z))).collect();
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[linear_index(self.dims, x, y, z)] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.values[i] = u8::from(on);
    }

    #[inline]
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        in_grid(self.dims, x, y, z) && self.get(x as usize, y as usize, z as usize)
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Inclusive per-axis `(min, max)` of the nonzero voxels.
    pub fn tight_extent(&self) -> Option<[(usize, usize); 3]> {
        let mut ext: Option<[(usize, usize); 3]> = None;
        for (i, (x, y, z)) in coords(self.dims).enumerate() {
            if self.values[i] == 0 {
                continue;
            }
            let p = [x, y, z];
            match ext.as_mut() {
                None => ext = Some([(x, x), (y, y), (z, z)]),
                Some(e) => {
                    for a in 0..3 {
                        e[a].0 = e[a].0.min(p[a]);
                        e[a].1 = e[a].1.max(p[a]);
                    }
                }
            }
        }
        ext
    }

    /// Mirror along the x axis.
    pub fn mirrored_x(&self) -> Self {
        let [nx, _, _] = self.dims;
        Self::from_fn(self.dims, |x, y, z| self.get(nx - 1 - x, y, z))
    }
}

#[inline]
pub(crate) fn in_grid(dims: Dims, x: i64, y: i64, z: i64) -> bool {
    x >= 0
        && y >= 0
        && z >= 0
        && (x as usize) < dims[0]
        && (y as usize) < dims[1]
        && (z as usize) < dims[2]
}

/// One hemisphere: an intensity volume and its segmentation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub volume: Volume3D,
    pub mask: Mask3D,
}

impl Block {
    pub fn new(volume: Volume3D, mask: Mask3D) -> Result<Self> {
        if volume.dims() != mask.dims() {
            return Err(Error::ShapeMismatch(format!(
                "volume {:?} vs mask {:?}",
                volume.dims(),
                mask.dims()
            )));
        }
        Ok(Self { volume, mask })
    }

    pub fn dims(&self) -> Dims {
        self.volume.dims()
    }

    /// Mirror image along x (left/right flip).
    pub fn mirrored_x(&self) -> Self {
        let dims = self.dims();
        let nx = dims[0];
        let mut volume = self.volume.clone();
        for (x, y, z) in coords(dims) {
            volume.set(x, y, z, self.volume.get(nx - 1 - x, y, z));
        }
        Self { volume, mask: self.mask.mirrored_x() }
    }
}

/// Paired left/right hippocampal blocks plus an optional class rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub left: Block,
    pub right: Block,
    pub label: Option<usize>,
}

impl Region {
    pub fn new(id: impl Into<String>, left: Block, right: Block, label: Option<usize>) -> Result<Self> {
        if left.dims() != right.dims() {
            return Err(Error::ShapeMismatch(format!(
                "left {:?} vs right {:?}",
                left.dims(),
                right.dims()
            )));
        }
        Ok(Self { id: id.into(), left, right, label })
    }

    pub fn dims(&self) -> Dims {
        self.left.dims()
    }

    pub fn blocks(&self) -> [&Block; 2] {
        [&self.left, &self.right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    dims: Dims,
}

impl BoundingBox {
    /// Box used for the hippocampal crops of the original cohort.
    pub const PAPER: BoundingBox = BoundingBox { dims: [29, 21, 55] };
    /// Desk-scale box for fast experiments.
    pub const TOY: BoundingBox = BoundingBox { dims: [12, 10, 16] };

    pub fn new(dims: Dims) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::ConfigInvalid(format!("bounding box {dims:?} has a zero axis")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
}

/// Crop a fixed-size block centered on the mask's tight extent.
///
/// The extent center `min + (extent - 1) / 2` lands on box index `(b - 1) / 2`
/// (both floor-rounded). Source voxels outside the grid read as zero.
pub fn crop_region(volume: &Volume3D, mask: &Mask3D, bbox: BoundingBox) -> Result<(Volume3D, Mask3D)> {
    if volume.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?} vs mask {:?}",
            volume.dims(),
            mask.dims()
        )));
    }
    let ext = mask.tight_extent().ok_or(Error::EmptyMask)?;
    let bdims = bbox.dims();
    let extent = [ext[0].1 - ext[0].0 + 1, ext[1].1 - ext[1].0 + 1, ext[2].1 - ext[2].0 + 1];
    if (0..3).any(|a| extent[a] > bdims[a]) {
        return Err(Error::MaskExceedsBox { extent, bbox: bdims });
    }
    let mut origin = [0i64; 3];
    for a in 0..3 {
        let center = (ext[a].0 + (extent[a] - 1) / 2) as i64;
        origin[a] = center - ((bdims[a] - 1) / 2) as i64;
    }
    let mut out_v = Volume3D::zeros(bdims);
    out_v.spacing = volume.spacing();
    let mut out_m = Mask3D::zeros(bdims);
    for (x, y, z) in coords(bdims) {
        let (sx, sy, sz) = (x as i64 + origin[0], y as i64 + origin[1], z as i64 + origin[2]);
        out_v.set(x, y, z, volume.get_or_zero(sx, sy, sz));
        out_m.set(x, y, z, mask.get_signed(sx, sy, sz));
    }
    Ok((out_v, out_m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_voxel(dims: Dims, at: (usize, usize, usize)) -> (Volume3D, Mask3D) {
        let mask = Mask3D::from_fn(dims, |x, y, z| (x, y, z) == at);
        let mut vol = Volume3D::zeros(dims);
        vol.set(at.0, at.1, at.2, 7.0);
        (vol, mask)
    }

    #[test]
    fn crop_centers_single_voxel() {
        let (v, m) = single_voxel([10, 10, 10], (5, 5, 5));
        let (cv, cm) = crop_region(&v, &m, BoundingBox::new([3, 3, 3]).unwrap()).unwrap();
        assert_eq!(cm.dims(), [3, 3, 3]);
        assert!(cm.get(1, 1, 1));
        assert_eq!(cm.count(), 1);
        assert_eq!(cv.get(1, 1, 1), 7.0);
    }

    #[test]
    fn crop_even_box_floor_center() {
        let (v, m) = single_voxel([10, 10, 10], (5, 5, 5));
        let (_, cm) = crop_region(&v, &m, BoundingBox::new([4, 2, 6]).unwrap()).unwrap();
        assert!(cm.get(1, 0, 2));
    }

    #[test]
    fn crop_zero_fills_outside_grid() {
        let mut v = Volume3D::new([4, 4, 4], vec![1.0; 64]).unwrap();
        v.set(0, 0, 0, 2.0);
        let m = Mask3D::from_fn([4, 4, 4], |x, y, z| (x, y, z) == (0, 0, 0));
        let (cv, cm) = crop_region(&v, &m, BoundingBox::new([5, 5, 5]).unwrap()).unwrap();
        assert!(cm.get(2, 2, 2));
        assert_eq!(cv.get(2, 2, 2), 2.0);
        assert_eq!(cv.get(0, 0, 0), 0.0);
        assert_eq!(cv.get(3, 3, 3), 1.0);
    }

    #[test]
    fn crop_rejects_empty_and_oversized() {
        let v = Volume3D::zeros([40, 30, 60]);
        let empty = Mask3D::zeros([40, 30, 60]);
        assert_eq!(crop_region(&v, &empty, BoundingBox::PAPER), Err(Error::EmptyMask));
        let wide = Mask3D::from_fn([40, 30, 60], |x, y, z| (5..35).contains(&x) && y == 10 && z == 10);
        assert!(matches!(
            crop_region(&v, &wide, BoundingBox::PAPER),
            Err(Error::MaskExceedsBox { extent: [30, 1, 1], .. })
        ));
    }

    #[test]
    fn paper_box() {
        assert_eq!(BoundingBox::PAPER.dims(), [29, 21, 55]);
        assert!(BoundingBox::new([0, 1, 1]).is_err());
    }

    #[test]
    fn crop_is_idempotent() {
        let dims = [20, 18, 22];
        let mask = Mask3D::from_fn(dims, |x, y, z| {
            let d = (x as f64 - 9.0).powi(2) + (y as f64 - 7.0).powi(2) / 2.0 + (z as f64 - 12.0).powi(2) / 3.0;
            d < 9.0
        });
        let vol = Volume3D::new(dims, (0..voxel_count(dims)).map(|i| (i % 17) as f64).collect()).unwrap();
        let bbox = BoundingBox::new([9, 11, 13]).unwrap();
        let (v1, m1) = crop_region(&vol, &mask, bbox).unwrap();
        let (v2, m2) = crop_region(&v1, &m1, bbox).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn volume_rejects_bad_input() {
        assert!(Volume3D::new([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Volume3D::new([1, 1, 1], vec![f64::NAN]).is_err());
        assert!(Mask3D::new([1, 1, 2], vec![0]).is_err());
    }
}
