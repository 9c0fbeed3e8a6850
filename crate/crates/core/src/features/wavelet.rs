//! Single-level separable 3D Haar decomposition with average/difference
//! normalization: `a = (x0 + x1) / 2`, `d = (x0 - x1) / 2`.

use crate::volume::{coords, Dims, Mask3D, Volume3D};

/// Band names in output order; letter `n` is the filter along axis `n`
/// (x, y, z), L = average, H = difference.
pub const BAND_NAMES: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub bands: Vec<Volume3D>,
    /// Axes that were padded by one replicated voxel to even length.
    pub padded: [bool; 3],
}

fn pad_even(values: &[f64], dims: Dims) -> (Vec<f64>, Dims, [bool; 3]) {
    let padded = [dims[0] % 2 == 1, dims[1] % 2 == 1, dims[2] % 2 == 1];
    let nd = [dims[0] + padded[0] as usize, dims[1] + padded[1] as usize, dims[2] + padded[2] as usize];
    if nd == dims {
        return (values.to_vec(), dims, padded);
    }
    let out = coords(nd)
        .map(|(x, y, z)| {
            let (sx, sy, sz) = (x.min(dims[0] - 1), y.min(dims[1] - 1), z.min(dims[2] - 1));
            values[crate::volume::linear_index(dims, sx, sy, sz)]
        })
        .collect();
    (out, nd, padded)
}

/// Apply the pair transform along `axis`, halving that dimension.
fn split_axis(values: &[f64], dims: Dims, axis: usize) -> (Vec<f64>, Vec<f64>, Dims) {
    let mut nd = dims;
    nd[axis] /= 2;
    let n = nd.iter().product();
    let mut low = Vec::with_capacity(n);
    let mut high = Vec::with_capacity(n);
    for (x, y, z) in coords(nd) {
        let mut p0 = [x, y, z];
        p0[axis] *= 2;
        let mut p1 = p0;
        p1[axis] += 1;
        let a = values[crate::volume::linear_index(dims, p0[0], p0[1], p0[2])];
        let b = values[crate::volume::linear_index(dims, p1[0], p1[1], p1[2])];
        low.push((a + b) / 2.0);
        high.push((a - b) / 2.0);
    }
    (low, high, nd)
}

pub fn haar3d(volume: &Volume3D) -> Subbands {
    let (vals, dims, padded) = pad_even(volume.values(), volume.dims());
    let mut stage: Vec<(Vec<f64>, Dims)> = vec![(vals, dims)];
    for axis in 0..3 {
        let mut next = Vec::with_capacity(stage.len() * 2);
        for (v, d) in &stage {
            let (lo, hi, nd) = split_axis(v, *d, axis);
            next.push((lo, nd));
            next.push((hi, nd));
        }
        stage = next;
    }
    // stage is ordered by (x filter, y filter, z filter) with z varying fastest
    let spacing = volume.spacing().map(|s| 2.0 * s);
    let bands = stage
        .into_iter()
        .map(|(v, d)| Volume3D::with_spacing(d, spacing, v).expect("finite haar band"))
        .collect();
    Subbands { bands, padded }
}

/// Exact inverse on even-dimensioned inputs: `x0 = a + d`, `x1 = a - d`.
pub fn inverse_haar3d(bands: &[Volume3D]) -> Volume3D {
    assert_eq!(bands.len(), 8, "eight sub-bands required");
    let mut stage: Vec<(Vec<f64>, Dims)> = bands.iter().map(|b| (b.values().to_vec(), b.dims())).collect();
    for axis in (0..3).rev() {
        let mut next = Vec::with_capacity(stage.len() / 2);
        for pair in stage.chunks(2) {
            let (lo, d) = (&pair[0].0, pair[0].1);
            let hi = &pair[1].0;
            let mut nd = d;
            nd[axis] *= 2;
            let mut out = vec![0.0; nd.iter().product()];
            for (i, (x, y, z)) in coords(d).enumerate() {
                let mut p0 = [x, y, z];
                p0[axis] *= 2;
                let mut p1 = p0;
                p1[axis] += 1;
                out[crate::volume::linear_index(nd, p0[0], p0[1], p0[2])] = lo[i] + hi[i];
                out[crate::volume::linear_index(nd, p1[0], p1[1], p1[2])] = lo[i] - hi[i];
            }
            next.push((out, nd));
        }
        stage = next;
    }
    let (v, d) = stage.pop().unwrap();
    Volume3D::new(d, v).expect("finite reconstruction")
}

/// 2x2x2 majority downsampling (4 of 8 counts as inside), with edge
/// replication on odd axes.
pub fn downsample_mask(mask: &Mask3D) -> Mask3D {
    downsample_mask_min(mask, 4)
}

pub(crate) fn downsample_mask_min(mask: &Mask3D, min_on: usize) -> Mask3D {
    let vals: Vec<f64> = mask.values().iter().map(|&v| f64::from(v)).collect();
    let (vals, dims, _) = pad_even(&vals, mask.dims());
    let nd = [dims[0] / 2, dims[1] / 2, dims[2] / 2];
    Mask3D::from_fn(nd, |x, y, z| {
        let mut on = 0;
        for c in 0..8 {
            let p = [2 * x + (c & 1), 2 * y + ((c >> 1) & 1), 2 * z + ((c >> 2) & 1)];
            on += vals[crate::volume::linear_index(dims, p[0], p[1], p[2])] as usize;
        }
        on >= min_on
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_volume() {
        let v = Volume3D::new([4, 2, 6], vec![3.5; 48]).unwrap();
        let s = haar3d(&v);
        assert_eq!(s.bands.len(), 8);
        assert!(s.bands[0].values().iter().all(|&x| x == 3.5));
        for b in &s.bands[1..] {
            assert!(b.values().iter().all(|&x| x == 0.0));
        }
        assert_eq!(s.bands[0].dims(), [2, 1, 3]);
    }

    #[test]
    fn pair_formula() {
        let v = Volume3D::new([2, 1, 1], vec![3.0, 1.0]).unwrap();
        let s = haar3d(&v);
        // y and z are padded by replication, so differences along them vanish
        assert_eq!(s.padded, [false, true, true]);
        assert_eq!(s.bands[0].values(), &[2.0]);
        assert_eq!(s.bands[4].values(), &[1.0]);
    }

    #[test]
    fn mask_majority() {
        let m = Mask3D::from_fn([2, 2, 2], |x, _, _| x == 0);
        assert!(downsample_mask(&m).get(0, 0, 0));
        let m = Mask3D::from_fn([2, 2, 2], |x, y, _| x == 0 && y == 0);
        assert!(!downsample_mask(&m).get(0, 0, 0));
    }

    proptest! {
        #[test]
        fn exact_round_trip(vals in prop::collection::vec(-1000i32..1000, 4 * 2 * 6)) {
            let v = Volume3D::new([4, 2, 6], vals.iter().map(|&i| i as f64 / 8.0).collect()).unwrap();
            let back = inverse_haar3d(&haar3d(&v).bands);
            prop_assert_eq!(back.values(), v.values());
        }

        #[test]
        fn round_trip_within_rounding(vals in prop::collection::vec(-1.0e3f64..1.0e3, 2 * 4 * 2)) {
            let v = Volume3D::new([2, 4, 2], vals).unwrap();
            let scale = v.values().iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let back = inverse_haar3d(&haar3d(&v).bands);
            for (a, b) in back.values().iter().zip(v.values()) {
                prop_assert!((a - b).abs() <= 8.0 * f64::EPSILON * scale);
            }
        }
    }
}
