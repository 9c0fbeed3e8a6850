use super::network::{Batch, Network};
use super::train::{head_loss, labels_of};
use crate::error::Result;
use crate::rng;
use crate::volume::Region;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub checked: usize,
    /// Coordinates whose `epsilon` step crossed a ReLU or pool switch and
    /// were re-measured with a smaller step.
    pub refined: usize,
    /// Coordinates still crossing a switch at the smallest step; these
    /// have no two-sided derivative and are left out of the maximum.
    pub skipped: usize,
}

const REFINEMENTS: [f64; 3] = [1.0, 0.1, 0.01];

fn loss_and_pattern(net: &mut Network, batch: &Batch, labels: &[usize]) -> Result<(f64, Vec<usize>)> {
    let (logits, tape) = net.forward_train(batch, None)?;
    let (loss, _) = head_loss(net.config().head, &logits, labels)?;
    Ok((loss, tape.activation_pattern()))
}

/// Central-difference audit of every parameter tensor in train mode with
/// dropout off. Tensors longer than `per_tensor` are subsampled with a
/// seeded selection. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(net: &Network, regions: &[Region], epsilon: f64, per_tensor: usize, seed: u64) -> Result<GradCheckReport> {
    let mut work = net.clone();
    let labels = labels_of(regions, work.config().head.classes())?;
    let refs: Vec<&Region> = regions.iter().collect();
    let batch = work.batch(&refs)?;

    work.zero_grad();
    let (logits, tape) = work.forward_train(&batch, None)?;
    let base_pattern = tape.activation_pattern();
    let (_, grad) = head_loss(work.config().head, &logits, &labels)?;
    work.backward(&tape, &grad);
    let analytic: Vec<(String, Vec<f64>)> = work.params_mut().into_iter().map(|(n, p)| (n, p.grad.clone())).collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (String::new(), 0), checked: 0, refined: 0, skipped: 0 };
    for (t, (name, grads)) in analytic.iter().enumerate() {
        let picks: Vec<usize> = if grads.len() <= per_tensor {
            (0..grads.len()).collect()
        } else {
            let mut v = rand::seq::index::sample(&mut rng::derived(seed, t as u64), grads.len(), per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        for i in picks {
            let mut numeric = None;
            for (attempt, scale) in REFINEMENTS.iter().enumerate() {
                let h = epsilon * scale;
                let w0 = work.params_mut()[t].1.value[i];
                work.params_mut()[t].1.value[i] = w0 + h;
                let (up, p_up) = loss_and_pattern(&mut work, &batch, &labels)?;
                work.params_mut()[t].1.value[i] = w0 - h;
                let (down, p_down) = loss_and_pattern(&mut work, &batch, &labels)?;
                work.params_mut()[t].1.value[i] = w0;
                if p_up == base_pattern && p_down == base_pattern {
                    if attempt > 0 {
                        report.refined += 1;
                    }
                    numeric = Some((up - down) / (2.0 * h));
                    break;
                }
            }
            let Some(n) = numeric else {
                report.skipped += 1;
                continue;
            };
            let a = grads[i];
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (name.clone(), i);
            }
        }
    }
    Ok(report)
}
