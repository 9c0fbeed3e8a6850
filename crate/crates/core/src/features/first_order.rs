//! Intensity histogram statistics within the mask.

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

use super::texture::GrayLevelImage;
use super::FeatureVector;

pub const FIRST_ORDER_NAMES: [&str; 17] = [
    "mean",
    "median",
    "variance",
    "skewness",
    "kurtosis",
    "energy",
    "entropy",
    "minimum",
    "maximum",
    "range",
    "robust_mean_absolute_deviation",
    "uniformity",
    "mean_absolute_deviation",
    "root_mean_squared",
    "percentile_10",
    "percentile_90",
    "interquartile_range",
];

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn first_order_features(gray: &GrayLevelImage, raw: &Volume3D, mask: &Mask3D) -> Result<FeatureVector> {
    if raw.dims() != mask.dims() || gray.dims() != mask.dims() {
        return Err(Error::ShapeMismatch("first-order inputs differ in dims".into()));
    }
    let mut x: Vec<f64> = raw.values().iter().zip(mask.values()).filter(|(_, &m)| m != 0).map(|(&v, _)| v).collect();
    if x.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = x.len() as f64;
    x.sort_by(f64::total_cmp);
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };
    let energy: f64 = x.iter().map(|v| v * v).sum();

    let mut hist = vec![0.0; gray.ng() + 1];
    for (&l, &m) in gray.levels().iter().zip(mask.values()) {
        if m != 0 {
            hist[l as usize] += 1.0;
        }
    }
    let probs: Vec<f64> = hist.iter().map(|c| c / n).collect();
    let entropy = -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>();
    let uniformity: f64 = probs.iter().map(|p| p * p).sum();

    let p10 = percentile(&x, 0.10);
    let p90 = percentile(&x, 0.90);
    let robust: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let robust_mean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - robust_mean).abs()).sum::<f64>() / robust.len() as f64;

    let values = vec![
        mean,
        percentile(&x, 0.5),
        m2,
        skewness,
        kurtosis,
        energy,
        entropy,
        x[0],
        x[x.len() - 1],
        x[x.len() - 1] - x[0],
        rmad,
        uniformity,
        x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n,
        (energy / n).sqrt(),
        p10,
        p90,
        percentile(&x, 0.75) - percentile(&x, 0.25),
    ];
    Ok(FeatureVector::from_parts(FIRST_ORDER_NAMES.iter().map(|s| s.to_string()).collect(), values))
}
