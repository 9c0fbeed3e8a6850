//! Mask geometry: volume, exposed-face surface area, diameters, and
//! covariance-based elongation/flatness.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::volume::{coords, Mask3D};

const NEIGHBORS6: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFeatures {
    pub volume: f64,
    pub max_diameter_3d: f64,
    pub max_diameter_2d_column: f64,
    pub max_diameter_2d_row: f64,
    pub max_diameter_2d_slice: f64,
    pub surface_area: f64,
    pub surface_volume_ratio: f64,
    pub flatness: f64,
    pub sphericity: f64,
    pub elongation: f64,
    pub spherical_disproportion: f64,
}

impl ShapeFeatures {
    pub const NAMES: [&'static str; 11] = [
        "volume",
        "max_diameter_3d",
        "max_diameter_2d_column",
        "max_diameter_2d_row",
        "max_diameter_2d_slice",
        "surface_area",
        "surface_volume_ratio",
        "flatness",
        "sphericity",
        "elongation",
        "spherical_disproportion",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.volume,
            self.max_diameter_3d,
            self.max_diameter_2d_column,
            self.max_diameter_2d_row,
            self.max_diameter_2d_slice,
            self.surface_area,
            self.surface_volume_ratio,
            self.flatness,
            self.sphericity,
            self.elongation,
            self.spherical_disproportion,
        ]
    }
}

/// Count exposed voxel faces (6-neighborhood, grid border counts as exposed)
/// weighted by face area in mm².
pub fn exposed_face_area(mask: &Mask3D, spacing: [f64; 3]) -> f64 {
    let face = [spacing[1] * spacing[2], spacing[0] * spacing[2], spacing[0] * spacing[1]];
    let mut area = 0.0;
    for (x, y, z) in coords(mask.dims()) {
        if !mask.get(x, y, z) {
            continue;
        }
        for (n, d) in NEIGHBORS6.iter().enumerate() {
            if !mask.get_signed(x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]) {
                area += face[n / 2];
            }
        }
    }
    area
}

fn is_surface(mask: &Mask3D, x: usize, y: usize, z: usize) -> bool {
    NEIGHBORS6
        .iter()
        .any(|d| !mask.get_signed(x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]))
}

/// Eigenvalues of a symmetric 3x3 matrix, descending.
pub(crate) fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let mut eig = if p1 == 0.0 {
        [m[0][0], m[1][1], m[2][2]]
    } else {
        let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    };
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

pub fn shape_features(mask: &Mask3D, spacing: [f64; 3]) -> Result<ShapeFeatures> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let volume = count as f64 * spacing[0] * spacing[1] * spacing[2];
    let surface_area = exposed_face_area(mask, spacing);

    let mut surface: Vec<[usize; 3]> = Vec::new();
    let mut mean = [0.0; 3];
    for (x, y, z) in coords(mask.dims()) {
        if mask.get(x, y, z) {
            let p = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
            for a in 0..3 {
                mean[a] += p[a];
            }
            if is_surface(mask, x, y, z) {
                surface.push([x, y, z]);
            }
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut cov = [[0.0; 3]; 3];
    for (x, y, z) in coords(mask.dims()) {
        if mask.get(x, y, z) {
            let d = [x as f64 * spacing[0] - mean[0], y as f64 * spacing[1] - mean[1], z as f64 * spacing[2] - mean[2]];
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += d[i] * d[j];
                }
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= count as f64;
        }
    }
    let [l1, l2, l3] = symmetric_eigenvalues(cov);
    let ratio = |l: f64| if l1 > 0.0 { (l.max(0.0) / l1).sqrt() } else { 1.0 };

    // diameters: [3d, plane x=const (column), y=const (row), z=const (slice)]
    let mut diam2 = [0.0f64; 4];
    for (i, p) in surface.iter().enumerate() {
        for q in &surface[i + 1..] {
            let d = [
                (p[0] as f64 - q[0] as f64) * spacing[0],
                (p[1] as f64 - q[1] as f64) * spacing[1],
                (p[2] as f64 - q[2] as f64) * spacing[2],
            ];
            let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            diam2[0] = diam2[0].max(dist2);
            for a in 0..3 {
                if p[a] == q[a] {
                    diam2[a + 1] = diam2[a + 1].max(dist2);
                }
            }
        }
    }
    let equiv = (36.0 * PI * volume * volume).cbrt();
    Ok(ShapeFeatures {
        volume,
        max_diameter_3d: diam2[0].sqrt(),
        max_diameter_2d_column: diam2[1].sqrt(),
        max_diameter_2d_row: diam2[2].sqrt(),
        max_diameter_2d_slice: diam2[3].sqrt(),
        surface_area,
        surface_volume_ratio: surface_area / volume,
        flatness: ratio(l3),
        sphericity: equiv / surface_area,
        elongation: ratio(l2),
        spherical_disproportion: surface_area / equiv,
    })
}
