use rand::Rng as _;

use super::network::{Head, InputNorm, Network};
use super::optim::{lr_at, sgd_momentum_step, TrainConfig};
use super::loss::{sigmoid_ce_loss, softmax_ce_loss};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::ordinal::{encode, OrdinalLabel};
use crate::rng;
use crate::volume::{directions26, elastic_deform, translate_region, Region};

/// On-the-fly perturbation applied to each sample drawn into a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    None,
    /// Uniform over the identity and the 26 neighbour offsets scaled by
    /// `magnitude` voxels.
    Translate { magnitude: i64 },
    /// Smooth random displacement with peak `amplitude` mm.
    Elastic { amplitude: f64, smoothness: f64 },
}

impl Augmentation {
    fn apply(self, region: &Region, rng: &mut rng::Rng) -> Region {
        match self {
            Augmentation::None => region.clone(),
            Augmentation::Translate { magnitude } => {
                let dirs = directions26();
                let pick = rng.random_range(0..=dirs.len());
                match dirs.get(pick) {
                    Some(d) => translate_region(region, d.map(|v| v * magnitude)),
                    None => region.clone(),
                }
            }
            Augmentation::Elastic { amplitude, smoothness } => {
                elastic_deform(region, amplitude, smoothness, rng.random())
            }
        }
    }
}

/// Training loss per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve(pub Vec<f64>);

impl LossCurve {
    /// Two columns: iteration, loss.
    pub fn to_text(&self) -> String {
        self.0.iter().enumerate().map(|(i, l)| format!("{i}\t{l:?}\n")).collect()
    }
}

/// Loss and logit gradient of the network head for 1-based labels.
pub fn head_loss(head: Head, logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    match head {
        Head::Ordinal { classes } => {
            let mut targets = Vec::with_capacity(labels.len() * (classes - 1));
            for &y in labels {
                targets.extend(encode(OrdinalLabel::new(y, classes)?).to_targets());
            }
            sigmoid_ce_loss(logits, &targets)
        }
        Head::Multiclass { .. } => softmax_ce_loss(logits, labels),
    }
}

pub(crate) fn labels_of(regions: &[Region], classes: usize) -> Result<Vec<usize>> {
    regions
        .iter()
        .map(|r| match r.label {
            Some(y) if (1..=classes).contains(&y) => Ok(y),
            Some(y) => Err(Error::LabelOutOfRange { label: y, k: classes }),
            None => Err(Error::Format(format!("region {} has no label", r.id))),
        })
        .collect()
}

/// Mini-batch SGD with momentum over seeded shuffled epochs. Input
/// normalization is fitted on `dataset` and stored in the network.
pub fn train(
    mut net: Network,
    dataset: &[Region],
    config: &TrainConfig,
    augmentation: Augmentation,
) -> Result<(Network, LossCurve)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::ConfigInvalid("empty training set".into()));
    }
    let head = net.config().head;
    let labels = labels_of(dataset, head.classes())?;
    net.input_norm = InputNorm::fit(dataset);

    let mut shuffle = rng::derived(config.seed, 0);
    let mut aug = rng::derived(config.seed, 1);
    let mut drop = rng::derived(config.seed, 2);
    let batch_size = config.batch_size.min(dataset.len());
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(config.max_iter);

    for iter in 0..config.max_iter {
        let mut picked = Vec::with_capacity(batch_size);
        while picked.len() < batch_size {
            if order.is_empty() {
                order = rand::seq::index::sample(&mut shuffle, dataset.len(), dataset.len()).into_vec();
                order.reverse();
            }
            picked.push(order.pop().expect("refilled above"));
        }
        let samples: Vec<Region> = picked.iter().map(|&i| augmentation.apply(&dataset[i], &mut aug)).collect();
        let refs: Vec<&Region> = samples.iter().collect();
        let batch_labels: Vec<usize> = picked.iter().map(|&i| labels[i]).collect();
        let batch = net.batch(&refs)?;

        net.zero_grad();
        let (logits, tape) = net.forward_train(&batch, Some(&mut drop))?;
        let (loss, grad) = head_loss(head, &logits, &batch_labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {iter}")));
        }
        net.backward(&tape, &grad);
        let lr = lr_at(iter, config);
        for (_, p) in net.params_mut() {
            sgd_momentum_step(&mut p.value, &p.grad, &mut p.velocity, lr, config.momentum)?;
        }
        losses.push(loss);
    }
    Ok((net, LossCurve(losses)))
}
