//! Quantization and second-order texture matrices (GLCM, GLRLM, GLSZM).

use crate::error::{Error, Result};
use crate::volume::{coords, Dims, Mask3D, Volume3D};

use super::FeatureVector;

/// Within-mask intensities binned to `1..=ng`; zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayLevelImage {
    dims: Dims,
    levels: Vec<u16>,
    ng: usize,
}

impl GrayLevelImage {
    /// Build directly from levels (0 = outside the mask).
    pub fn from_levels(dims: Dims, levels: Vec<u16>, ng: usize) -> Result<Self> {
        if levels.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch("level count vs dims".into()));
        }
        if levels.iter().any(|&l| l as usize > ng) {
            return Err(Error::ConfigInvalid(format!("level above ng={ng}")));
        }
        if levels.iter().all(|&l| l == 0) {
            return Err(Error::EmptyMask);
        }
        Ok(Self { dims, levels, ng })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ng(&self) -> usize {
        self.ng
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    /// Level at signed coordinates; 0 outside the grid or mask.
    #[inline]
    fn at(&self, x: i64, y: i64, z: i64) -> u16 {
        if crate::volume::in_grid(self.dims, x, y, z) {
            self.levels[crate::volume::linear_index(self.dims, x as usize, y as usize, z as usize)]
        } else {
            0
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

/// Equal-width binning over the within-mask `[min, max]`; the maximum lands
/// in bin `ng`, a constant region entirely in bin 1.
pub fn quantize(volume: &Volume3D, mask: &Mask3D, ng: usize) -> Result<GrayLevelImage> {
    if ng < 2 || ng > u16::MAX as usize {
        return Err(Error::ConfigInvalid(format!("gray level count {ng}")));
    }
    if volume.dims() != mask.dims() {
        return Err(Error::ShapeMismatch("volume vs mask".into()));
    }
    let inside = || volume.values().iter().zip(mask.values()).filter(|(_, &m)| m != 0).map(|(&v, _)| v);
    let (lo, hi) = inside().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return Err(Error::EmptyMask);
    }
    let width = (hi - lo) / ng as f64;
    let levels = volume
        .values()
        .iter()
        .zip(mask.values())
        .map(|(&v, &m)| {
            if m == 0 {
                0
            } else if width == 0.0 {
                1
            } else {
                ((((v - lo) / width).floor() as usize) + 1).min(ng) as u16
            }
        })
        .collect();
    Ok(GrayLevelImage { dims: volume.dims(), levels, ng })
}

/// 13 unique offsets of the 26-neighborhood (first nonzero of `(dz, dy, dx)`
/// positive).
pub fn directions13() -> Vec<[i64; 3]> {
    crate::volume::directions26()
        .into_iter()
        .filter(|d| {
            let key = [d[2], d[1], d[0]];
            key.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
        })
        .collect()
}

fn entropy2(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Symmetric co-occurrence counts for one offset (row-major `ng x ng`).
pub fn cooccurrence(gray: &GrayLevelImage, offset: [i64; 3]) -> Vec<f64> {
    let ng = gray.ng;
    let mut p = vec![0.0; ng * ng];
    for (x, y, z) in coords(gray.dims) {
        let a = gray.at(x as i64, y as i64, z as i64);
        if a == 0 {
            continue;
        }
        let b = gray.at(x as i64 + offset[0], y as i64 + offset[1], z as i64 + offset[2]);
        if b == 0 {
            continue;
        }
        let (i, j) = (a as usize - 1, b as usize - 1);
        p[i * ng + j] += 1.0;
        p[j * ng + i] += 1.0;
    }
    p
}

pub const GLCM_NAMES: [&str; 16] = [
    "autocorrelation",
    "joint_average",
    "cluster_prominence",
    "cluster_shade",
    "cluster_tendency",
    "contrast",
    "correlation",
    "difference_average",
    "difference_entropy",
    "joint_energy",
    "joint_entropy",
    "inverse_difference",
    "inverse_difference_moment",
    "inverse_variance",
    "maximum_probability",
    "sum_entropy",
];

/// Features of one normalized symmetric GLCM, in [`GLCM_NAMES`] order.
/// `difference_average` is the dissimilarity and `inverse_difference_moment`
/// the homogeneity.
pub fn glcm_matrix_features(p: &[f64], ng: usize) -> [f64; 16] {
    let lvl = |i: usize| (i + 1) as f64;
    let mut mu = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            mu += lvl(i) * p[i * ng + j];
        }
    }
    let mut var = 0.0;
    let mut auto = 0.0;
    let (mut prom, mut shade, mut tend) = (0.0, 0.0, 0.0);
    let (mut contrast, mut energy, mut id, mut idm, mut ivar, mut maxp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    let mut diff = vec![0.0; ng];
    let mut sum = vec![0.0; 2 * ng - 1];
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            if v == 0.0 {
                continue;
            }
            let (a, b) = (lvl(i), lvl(j));
            let k = i.abs_diff(j);
            var += (a - mu).powi(2) * v;
            auto += a * b * v;
            let s = a + b - 2.0 * mu;
            prom += s.powi(4) * v;
            shade += s.powi(3) * v;
            tend += s.powi(2) * v;
            contrast += (k * k) as f64 * v;
            energy += v * v;
            id += v / (1.0 + k as f64);
            idm += v / (1.0 + (k * k) as f64);
            if k > 0 {
                ivar += v / (k * k) as f64;
            }
            maxp = maxp.max(v);
            diff[k] += v;
            sum[i + j] += v;
        }
    }
    // symmetric matrix: marginal means and variances coincide
    let correlation = if var > 0.0 { (auto - mu * mu) / var } else { 1.0 };
    let diff_avg: f64 = diff.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
    [
        auto,
        mu,
        prom,
        shade,
        tend,
        contrast,
        correlation,
        diff_avg,
        entropy2(diff.iter().copied()),
        energy,
        entropy2(p.iter().copied()),
        id,
        idm,
        ivar,
        maxp,
        entropy2(sum.iter().copied()),
    ]
}

/// GLCM features averaged over the directions that have at least one
/// in-mask pair. If none do, all features are 0 and a warning is attached.
pub fn glcm_features(gray: &GrayLevelImage, offsets: &[[i64; 3]]) -> FeatureVector {
    let ng = gray.ng;
    let mut acc = [0.0; 16];
    let mut used = 0usize;
    for &o in offsets {
        let mut p = cooccurrence(gray, o);
        let total: f64 = p.iter().sum();
        if total == 0.0 {
            continue;
        }
        p.iter_mut().for_each(|v| *v /= total);
        let f = glcm_matrix_features(&p, ng);
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v;
        }
        used += 1;
    }
    let mut fv = FeatureVector::from_parts(GLCM_NAMES.iter().map(|s| s.to_string()).collect(), acc.to_vec());
    if used == 0 {
        fv.warnings.push("glcm: no valid voxel pairs for any offset".into());
    } else {
        fv.values.iter_mut().for_each(|v| *v /= used as f64);
    }
    fv
}

/// Run-length counts for one direction: `(level, run length)` pairs.
pub fn runs(gray: &GrayLevelImage, d: [i64; 3]) -> Vec<(u16, usize)> {
    let mut out = Vec::new();
    for (x, y, z) in coords(gray.dims) {
        let (x, y, z) = (x as i64, y as i64, z as i64);
        let level = gray.at(x, y, z);
        if level == 0 || gray.at(x - d[0], y - d[1], z - d[2]) == level {
            continue;
        }
        let mut len = 1;
        while gray.at(x + len as i64 * d[0], y + len as i64 * d[1], z + len as i64 * d[2]) == level {
            len += 1;
        }
        out.push((level, len));
    }
    out
}

pub const GLRLM_NAMES: [&str; 12] = [
    "short_run_emphasis",
    "long_run_emphasis",
    "gray_level_nonuniformity",
    "gray_level_nonuniformity_normalized",
    "run_length_nonuniformity",
    "run_length_nonuniformity_normalized",
    "run_percentage",
    "gray_level_variance",
    "run_variance",
    "run_entropy",
    "low_gray_level_run_emphasis",
    "high_gray_level_run_emphasis",
];

/// Shared statistics of a (level x size) count matrix given as entries.
/// Used for both run-length and size-zone matrices.
fn size_matrix_features(entries: &[(u16, usize)], ng: usize, voxels: usize) -> [f64; 12] {
    let n = entries.len() as f64;
    let max_len = entries.iter().map(|e| e.1).max().unwrap_or(1);
    let mut by_level = vec![0.0; ng + 1];
    let mut by_size = vec![0.0; max_len + 1];
    let mut cells = std::collections::BTreeMap::new();
    let (mut short, mut long, mut low, mut high) = (0.0, 0.0, 0.0, 0.0);
    for &(l, s) in entries {
        let (lf, sf) = (l as f64, s as f64);
        by_level[l as usize] += 1.0;
        by_size[s] += 1.0;
        *cells.entry((l, s)).or_insert(0.0) += 1.0;
        short += 1.0 / (sf * sf);
        long += sf * sf;
        low += 1.0 / (lf * lf);
        high += lf * lf;
    }
    let gln: f64 = by_level.iter().map(|c| c * c).sum();
    let rln: f64 = by_size.iter().map(|c| c * c).sum();
    let mu_level: f64 = entries.iter().map(|e| e.0 as f64).sum::<f64>() / n;
    let mu_size: f64 = entries.iter().map(|e| e.1 as f64).sum::<f64>() / n;
    let var_level = entries.iter().map(|e| (e.0 as f64 - mu_level).powi(2)).sum::<f64>() / n;
    let var_size = entries.iter().map(|e| (e.1 as f64 - mu_size).powi(2)).sum::<f64>() / n;
    let entropy = entropy2(cells.values().map(|c| c / n));
    [
        short / n,
        long / n,
        gln / n,
        gln / (n * n),
        rln / n,
        rln / (n * n),
        n / voxels as f64,
        var_level,
        var_size,
        entropy,
        low / n,
        high / n,
    ]
}

pub fn glrlm_features(gray: &GrayLevelImage, directions: &[[i64; 3]]) -> FeatureVector {
    let voxels = gray.voxel_count();
    let mut acc = [0.0; 12];
    for &d in directions {
        let r = runs(gray, d);
        let f = size_matrix_features(&r, gray.ng, voxels);
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v / directions.len() as f64;
        }
    }
    FeatureVector::from_parts(GLRLM_NAMES.iter().map(|s| s.to_string()).collect(), acc.to_vec())
}

/// 26-connected zones of equal level: `(level, voxel count)`.
pub fn zones(gray: &GrayLevelImage) -> Vec<(u16, usize)> {
    let n = gray.levels.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    let neighbors = crate::volume::directions26();
    for (start, (x, y, z)) in coords(gray.dims).enumerate() {
        let level = gray.levels[start];
        if level == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push([x as i64, y as i64, z as i64]);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for d in &neighbors {
                let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                if gray.at(q[0], q[1], q[2]) != level {
                    continue;
                }
                let qi = crate::volume::linear_index(gray.dims, q[0] as usize, q[1] as usize, q[2] as usize);
                if !seen[qi] {
                    seen[qi] = true;
                    stack.push(q);
                }
            }
        }
        out.push((level, size));
    }
    out
}

pub const GLSZM_NAMES: [&str; 12] = [
    "small_area_emphasis",
    "large_area_emphasis",
    "gray_level_nonuniformity",
    "gray_level_nonuniformity_normalized",
    "size_zone_nonuniformity",
    "size_zone_nonuniformity_normalized",
    "zone_percentage",
    "gray_level_variance",
    "zone_variance",
    "zone_entropy",
    "low_gray_level_zone_emphasis",
    "high_gray_level_zone_emphasis",
];

pub fn glszm_features(gray: &GrayLevelImage) -> FeatureVector {
    let z = zones(gray);
    let f = size_matrix_features(&z, gray.ng, gray.voxel_count());
    FeatureVector::from_parts(GLSZM_NAMES.iter().map(|s| s.to_string()).collect(), f.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: Dims, v: Vec<f64>) -> Volume3D {
        Volume3D::new(dims, v).unwrap()
    }

    fn full(dims: Dims) -> Mask3D {
        Mask3D::from_fn(dims, |_, _, _| true)
    }

    fn value(fv: &FeatureVector, name: &str) -> f64 {
        fv.get(name).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let dims = [11, 1, 1];
        let v = vol(dims, (0..11).map(|i| i as f64 / 10.0).collect());
        let g = quantize(&v, &full(dims), 2).unwrap();
        let expect: Vec<u16> = (0..11).map(|i| if i < 5 { 1 } else { 2 }).collect();
        assert_eq!(g.levels(), expect.as_slice());

        let c = quantize(&vol([2, 2, 1], vec![3.0; 4]), &full([2, 2, 1]), 8).unwrap();
        assert!(c.levels().iter().all(|&l| l == 1));

        let g = quantize(&vol([4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]), &full([4, 1, 1]), 4).unwrap();
        assert_eq!(g.levels(), &[1, 2, 3, 4]);

        let m = Mask3D::zeros([4, 1, 1]);
        assert_eq!(quantize(&vol([4, 1, 1], vec![0.0; 4]), &m, 4), Err(Error::EmptyMask));
        assert!(quantize(&vol([4, 1, 1], vec![0.0; 4]), &full([4, 1, 1]), 1).is_err());
    }

    #[test]
    fn directions_are_a_half_neighborhood() {
        let d = directions13();
        assert_eq!(d.len(), 13);
        for a in &d {
            assert!(!d.contains(&[-a[0], -a[1], -a[2]]));
        }
    }

    /// Levels indexed `[x][y]` on a single z slice.
    fn slice(levels: &[&[u16]], ng: usize) -> GrayLevelImage {
        let nx = levels.len();
        let ny = levels[0].len();
        let mut flat = vec![0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                flat[x + nx * y] = levels[x][y];
            }
        }
        GrayLevelImage::from_levels([nx, ny, 1], flat, ng).unwrap()
    }

    #[test]
    fn glcm_hand_example() {
        let g = slice(&[&[1, 2], &[1, 2]], 2);
        let p = cooccurrence(&g, [0, 1, 0]);
        assert_eq!(p, vec![0.0, 2.0, 2.0, 0.0]);
        let fv = glcm_features(&g, &[[0, 1, 0]]);
        assert!((value(&fv, "contrast") - 1.0).abs() < 1e-9);
        assert!((value(&fv, "joint_energy") - 0.5).abs() < 1e-9);
        assert!((value(&fv, "joint_entropy") - 1.0).abs() < 1e-9);
        assert!((value(&fv, "difference_average") - 1.0).abs() < 1e-9);
        assert!((value(&fv, "correlation") + 1.0).abs() < 1e-9);
    }

    #[test]
    fn glcm_constant_and_sparse() {
        let g = GrayLevelImage::from_levels([3, 3, 3], vec![1; 27], 4).unwrap();
        let fv = glcm_features(&g, &directions13());
        assert_eq!(value(&fv, "contrast"), 0.0);
        assert_eq!(value(&fv, "joint_energy"), 1.0);
        assert!(fv.warnings.is_empty());

        let mut lv = vec![0u16; 27];
        lv[0] = 2;
        let lonely = GrayLevelImage::from_levels([3, 3, 3], lv, 4).unwrap();
        let fv = glcm_features(&lonely, &directions13());
        assert!(fv.values.iter().all(|&v| v == 0.0));
        assert_eq!(fv.warnings.len(), 1);
    }

    #[test]
    fn glrlm_hand_example() {
        let g = slice(&[&[1, 1, 2, 2, 2]], 2);
        let r = runs(&g, [0, 1, 0]);
        assert_eq!(r, vec![(1, 2), (2, 3)]);
        let fv = glrlm_features(&g, &[[0, 1, 0]]);
        assert!((value(&fv, "short_run_emphasis") - (0.25 + 1.0 / 9.0) / 2.0).abs() < 1e-9);
        assert!((value(&fv, "run_percentage") - 0.4).abs() < 1e-12);

        let c = slice(&[&[3; 7]], 4);
        let fv = glrlm_features(&c, &[[0, 1, 0]]);
        assert_eq!(value(&fv, "long_run_emphasis"), 49.0);
    }

    #[test]
    fn glszm_hand_example() {
        let g = slice(&[&[1, 1], &[2, 3]], 3);
        let mut z = zones(&g);
        z.sort();
        assert_eq!(z, vec![(1, 2), (2, 1), (3, 1)]);
        let fv = glszm_features(&g);
        assert!((value(&fv, "small_area_emphasis") - 0.75).abs() < 1e-9);

        let c = GrayLevelImage::from_levels([2, 3, 4], vec![2; 24], 2).unwrap();
        assert_eq!(zones(&c), vec![(2, 24)]);
    }

    #[test]
    fn diagonal_zones_connect() {
        // 26-connectivity joins corner-touching voxels
        let g = slice(&[&[1, 2], &[2, 1]], 2);
        assert_eq!(zones(&g).len(), 2);
    }
}
