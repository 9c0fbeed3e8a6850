use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary log-loss over every logit, in the overflow-free form
/// `max(z, 0) - z t + ln(1 + e^-|z|)`.
pub fn sigmoid_ce_loss(logits: &Tensor, targets: &[f64]) -> Result<(f64, Tensor)> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} logits against {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.values().iter().zip(targets) {
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / count);
    }
    Ok((loss / count, Tensor::new(logits.shape().to_vec(), grad)?))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy of `[N, K]` logits against 1-based classes.
pub fn softmax_ce_loss(logits: &Tensor, classes: &[usize]) -> Result<(f64, Tensor)> {
    let [n, k] = logits.dims2()?;
    if n != classes.len() || n == 0 {
        return Err(Error::ShapeMismatch(format!("{n} logit rows against {} targets", classes.len())));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &c) in logits.values().chunks(k).zip(classes) {
        if c == 0 || c > k {
            return Err(Error::LabelOutOfRange { label: c, k });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - row[c - 1];
        for (j, p) in softmax(row).into_iter().enumerate() {
            let onehot = if j + 1 == c { 1.0 } else { 0.0 };
            grad.push((p - onehot) / n as f64);
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, k], grad)?))
}
