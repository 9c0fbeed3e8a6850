use super::layers::{
    dropout, dropout_backward, relu, relu_backward, BatchNorm3d, BnCache, Conv3d, ConvCache, Linear, MaxPool3d, Param,
    PoolCache, ResBlock, ResCache,
};
use super::loss::{sigmoid, softmax};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::forest::argmax_lowest;
use crate::ordinal::{decode, OrdinalScorer, ScoreKind};
use crate::rng::{self, Rng};
use crate::volume::{BoundingBox, Dims, Region};

/// Output layer flavor: `K - 1` sigmoid outputs for the ordinal
/// decomposition, `K` softmax outputs for plain multiclass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Ordinal { classes: usize },
    Multiclass { classes: usize },
}

impl Head {
    pub fn classes(self) -> usize {
        match self {
            Head::Ordinal { classes } | Head::Multiclass { classes } => classes,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Head::Ordinal { classes } => classes - 1,
            Head::Multiclass { classes } => classes,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Ordinal { .. } => "ordinal",
            Head::Multiclass { .. } => "multiclass",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Region voxel counts along x, y, z.
    pub input_dims: Dims,
    pub conv1_kernels: usize,
    pub resblock_kernels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    /// Pool after the initial conv (index 0) and after each block.
    pub pool_after: Vec<bool>,
    pub fc1_width: usize,
    pub head: Head,
    pub dropout_rate: f64,
}

impl NetConfig {
    /// Full-size network on the 29x21x55 crop.
    pub fn paper(head: Head) -> Self {
        Self {
            input_dims: BoundingBox::PAPER.dims(),
            conv1_kernels: 64,
            resblock_kernels: vec![64, 128, 128],
            kernel_size: 3,
            pool_size: 2,
            pool_stride: 2,
            pool_after: vec![true; 4],
            fc1_width: 256,
            head,
            dropout_rate: 0.5,
        }
    }

    /// Desk-scale network on the 12x10x16 crop. The crop only survives
    /// three halvings, so the last block runs unpooled.
    pub fn toy(head: Head) -> Self {
        Self {
            input_dims: BoundingBox::TOY.dims(),
            conv1_kernels: 8,
            resblock_kernels: vec![8, 16, 16],
            pool_after: vec![true, true, true, false],
            fc1_width: 32,
            ..Self::paper(head)
        }
    }

    /// Smallest net that still exercises every layer type, including a
    /// projection shortcut. Used for gradient audits.
    pub fn tiny(head: Head) -> Self {
        Self {
            input_dims: [4, 4, 4],
            conv1_kernels: 2,
            resblock_kernels: vec![2, 3, 3],
            pool_after: vec![true, true, false, false],
            fc1_width: 4,
            ..Self::paper(head)
        }
    }

    fn pool(&self) -> MaxPool3d {
        MaxPool3d { size: self.pool_size, stride: self.pool_stride }
    }

    /// Spatial `[d, h, w]` and channel count entering FC1.
    pub fn trunk_output(&self) -> Result<([usize; 3], usize)> {
        let [nx, ny, nz] = self.input_dims;
        let mut dims = [nz, ny, nx];
        let pool = self.pool();
        for (i, &on) in self.pool_after.iter().enumerate() {
            if on {
                dims = pool.output_dims(dims).ok_or_else(|| {
                    Error::ConfigInvalid(format!("pool {i} has nothing left to downsample at {dims:?}"))
                })?;
            }
        }
        Ok((dims, self.resblock_kernels.last().copied().unwrap_or(self.conv1_kernels)))
    }

    pub fn flat_width(&self) -> Result<usize> {
        let (dims, channels) = self.trunk_output()?;
        Ok(dims.iter().product::<usize>() * channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.conv1_kernels == 0 || self.fc1_width == 0 || self.resblock_kernels.contains(&0) {
            return bad("layer widths must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.pool_after.len() != self.resblock_kernels.len() + 1 {
            return bad(format!(
                "pool_after has {} entries for {} blocks",
                self.pool_after.len(),
                self.resblock_kernels.len()
            ));
        }
        if self.head.classes() < 2 {
            return bad("head needs at least 2 classes".into());
        }
        if self.input_dims.contains(&0) {
            return bad("input dims must be positive".into());
        }
        self.trunk_output().map(|_| ())
    }
}

/// One hemisphere pathway: Conv-BN-ReLU, residual blocks, pools, FC1-ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub conv: Conv3d,
    pub bn: BatchNorm3d,
    pub blocks: Vec<ResBlock>,
    pub fc1: Linear,
    pool: MaxPool3d,
    pool_after: Vec<bool>,
}

#[derive(Debug, Clone)]
struct StreamTape {
    conv: ConvCache,
    bn: BnCache,
    mask: Vec<bool>,
    pools: Vec<Option<PoolCache>>,
    blocks: Vec<ResCache>,
    trunk_shape: Vec<usize>,
    fc_in: Tensor,
    fc_mask: Vec<bool>,
}

impl StreamTape {
    fn pattern(&self, out: &mut Vec<usize>) {
        let bits = |m: &[bool], out: &mut Vec<usize>| out.extend(m.iter().map(|&b| b as usize));
        bits(&self.mask, out);
        for b in &self.blocks {
            b.masks().into_iter().for_each(|m| bits(m, out));
        }
        for p in self.pools.iter().flatten() {
            out.extend_from_slice(p.argmax());
        }
        bits(&self.fc_mask, out);
    }
}

fn flatten(x: Tensor) -> Result<Tensor> {
    let n = x.shape()[0];
    let f = x.len() / n.max(1);
    x.reshape(vec![n, f])
}

impl Stream {
    fn new(config: &NetConfig, rng: &mut Rng) -> Result<Self> {
        let k = config.kernel_size;
        let conv = Conv3d::new(1, config.conv1_kernels, k, false, rng)?;
        let mut width = config.conv1_kernels;
        let mut blocks = Vec::new();
        for &out in &config.resblock_kernels {
            blocks.push(ResBlock::new(width, out, k, rng)?);
            width = out;
        }
        Ok(Self {
            conv,
            bn: BatchNorm3d::new(config.conv1_kernels),
            blocks,
            fc1: Linear::new(config.flat_width()?, config.fc1_width, rng),
            pool: config.pool(),
            pool_after: config.pool_after.clone(),
        })
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, StreamTape)> {
        let (h, conv) = self.conv.forward(x, true)?;
        let (h, bn) = self.bn.forward_train(&h)?;
        let (mut h, mask) = relu(h);
        let mut pools = Vec::with_capacity(self.pool_after.len());
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for stage in 0..self.pool_after.len() {
            if stage > 0 {
                let (out, tape) = self.blocks[stage - 1].forward_train(&h)?;
                h = out;
                tapes.push(tape);
            }
            if self.pool_after[stage] {
                let (out, cache) = self.pool.forward(&h)?;
                h = out;
                pools.push(Some(cache));
            } else {
                pools.push(None);
            }
        }
        let trunk_shape = h.shape().to_vec();
        let fc_in = flatten(h)?;
        let (out, fc_mask) = relu(self.fc1.forward(&fc_in)?);
        Ok((out, StreamTape { conv, bn, mask, pools, blocks: tapes, trunk_shape, fc_in, fc_mask }))
    }

    fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = relu(self.bn.forward_eval(&self.conv.forward(x, false)?.0)?).0;
        for stage in 0..self.pool_after.len() {
            if stage > 0 {
                h = self.blocks[stage - 1].forward_eval(&h)?;
            }
            if self.pool_after[stage] {
                h = self.pool.forward(&h)?.0;
            }
        }
        Ok(relu(self.fc1.forward(&flatten(h)?)?).0)
    }

    fn backward(&mut self, tape: &StreamTape, grad: Tensor) {
        let g = relu_backward(&tape.fc_mask, grad);
        let g = self.fc1.backward(&tape.fc_in, &g);
        let mut g = g.reshape(tape.trunk_shape.clone()).expect("trunk shape");
        for stage in (0..self.pool_after.len()).rev() {
            if let Some(cache) = &tape.pools[stage] {
                g = self.pool.backward(cache, &g);
            }
            if stage > 0 {
                g = self.blocks[stage - 1].backward(&tape.blocks[stage - 1], g);
            }
        }
        let g = relu_backward(&tape.mask, g);
        let g = self.bn.backward(&tape.bn, &g);
        self.conv.backward(&tape.conv, &g, false);
    }

    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((format!("{prefix}.conv.weight"), &mut self.conv.weight));
        out.push((format!("{prefix}.bn.gamma"), &mut self.bn.gamma));
        out.push((format!("{prefix}.bn.beta"), &mut self.bn.beta));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_params(&format!("{prefix}.block{i}"), out);
        }
        out.push((format!("{prefix}.fc1.weight"), &mut self.fc1.weight));
        out.push((format!("{prefix}.fc1.bias"), &mut self.fc1.bias));
    }

    fn collect_buffers<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Vec<f64>)>) {
        out.push((format!("{prefix}.bn.running_mean"), &mut self.bn.running_mean));
        out.push((format!("{prefix}.bn.running_var"), &mut self.bn.running_var));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_buffers(&format!("{prefix}.block{i}"), out);
        }
    }
}

/// Intensity z-scoring applied to every input voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl InputNorm {
    /// Mean and standard deviation over every voxel of both hemispheres.
    pub fn fit(regions: &[Region]) -> Self {
        let values = || regions.iter().flat_map(|r| r.blocks()).flat_map(|b| b.volume.values().iter());
        let n = values().count();
        if n == 0 {
            return Self::default();
        }
        let mean = values().sum::<f64>() / n as f64;
        let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }
}

/// Normalized left and right inputs, each `[N, 1, z, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub left: Tensor,
    pub right: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.left.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward-pass record consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    left: StreamTape,
    right: StreamTape,
    dropout_mask: Vec<f64>,
    head_in: Tensor,
}

impl Tape {
    /// Every ReLU gate and pool argmax taken by the pass, flattened. Two
    /// passes with equal patterns share one linear piece of the network.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.left.pattern(&mut out);
        self.right.pattern(&mut out);
        out
    }
}

/// Two-stream network: independent left and right pathways whose FC1
/// outputs are concatenated, dropped out and fed to the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetConfig,
    pub left: Stream,
    pub right: Stream,
    pub head: Linear,
    pub input_norm: InputNorm,
}

impl Network {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let left = Stream::new(&config, &mut rng::derived(seed, 0))?;
        let right = Stream::new(&config, &mut rng::derived(seed, 1))?;
        let head = Linear::new(2 * config.fc1_width, config.head.outputs(), &mut rng::derived(seed, 2));
        Ok(Self { config, left, right, head, input_norm: InputNorm::default() })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn batch(&self, regions: &[&Region]) -> Result<Batch> {
        let [nx, ny, nz] = self.config.input_dims;
        let vox = nx * ny * nz;
        let InputNorm { mean, std } = self.input_norm;
        let mut sides = [Vec::with_capacity(regions.len() * vox), Vec::with_capacity(regions.len() * vox)];
        for r in regions {
            if r.dims() != self.config.input_dims {
                return Err(Error::ShapeMismatch(format!(
                    "region {} has dims {:?}, network expects {:?}",
                    r.id,
                    r.dims(),
                    self.config.input_dims
                )));
            }
            for (side, block) in sides.iter_mut().zip(r.blocks()) {
                side.extend(block.volume.values().iter().map(|v| (v - mean) / std));
            }
        }
        let shape = vec![regions.len(), 1, nz, ny, nx];
        let [l, r] = sides;
        Ok(Batch { left: Tensor::new(shape.clone(), l)?, right: Tensor::new(shape, r)? })
    }

    /// Train-mode pass. Batch statistics drive BN and update its running
    /// averages; dropout is applied only when a generator is supplied.
    pub fn forward_train(&mut self, batch: &Batch, dropout_rng: Option<&mut Rng>) -> Result<(Tensor, Tape)> {
        let (l, left) = self.left.forward_train(&batch.left)?;
        let (r, right) = self.right.forward_train(&batch.right)?;
        let joined = concat(&l, &r)?;
        let (head_in, dropout_mask) = match dropout_rng {
            Some(rng) => dropout(joined, self.config.dropout_rate, rng),
            None => {
                let n = joined.len();
                (joined, vec![1.0; n])
            }
        };
        let logits = self.head.forward(&head_in)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("network logits".into()));
        }
        Ok((logits, Tape { left, right, dropout_mask, head_in }))
    }

    /// Accumulates gradients of every parameter from `d loss / d logits`.
    pub fn backward(&mut self, tape: &Tape, grad_logits: &Tensor) {
        let g = self.head.backward(&tape.head_in, grad_logits);
        let g = dropout_backward(&tape.dropout_mask, g);
        let (gl, gr) = split(&g, self.config.fc1_width);
        self.left.backward(&tape.left, gl);
        self.right.backward(&tape.right, gr);
    }

    /// Concatenated FC1 activations in eval mode, `[N, 2 * fc1_width]`.
    pub fn features(&self, batch: &Batch) -> Result<Tensor> {
        concat(&self.left.forward_eval(&batch.left)?, &self.right.forward_eval(&batch.right)?)
    }

    pub fn logits(&self, batch: &Batch) -> Result<Tensor> {
        self.head.forward(&self.features(batch)?)
    }

    /// Per-region head probabilities: sigmoid per task for the ordinal
    /// head, softmax over classes for the multiclass head.
    pub fn scores(&self, regions: &[Region]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(regions.len());
        for chunk in regions.chunks(16) {
            let refs: Vec<&Region> = chunk.iter().collect();
            let logits = self.logits(&self.batch(&refs)?)?;
            for row in logits.values().chunks(self.config.head.outputs()) {
                out.push(match self.config.head {
                    Head::Ordinal { .. } => row.iter().map(|&z| sigmoid(z)).collect(),
                    Head::Multiclass { .. } => softmax(row),
                });
            }
        }
        Ok(out)
    }

    pub fn predict(&self, regions: &[Region]) -> Result<Vec<usize>> {
        let head = self.config.head;
        self.scores(regions)?
            .iter()
            .map(|s| match head {
                Head::Ordinal { .. } => decode(s, &ScoreKind::Probability.default_thresholds(s.len())),
                Head::Multiclass { .. } => Ok(argmax_lowest(s) + 1),
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|(_, p)| p.zero_grad());
    }

    /// Every learnable tensor with a stable dotted name.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.left.collect_params("left", &mut out);
        self.right.collect_params("right", &mut out);
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// BN running statistics with stable dotted names.
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        self.left.collect_buffers("left", &mut out);
        self.right.collect_buffers("right", &mut out);
        out
    }

    /// Named snapshot of every parameter value and BN buffer.
    pub fn state(&self) -> Vec<(String, Vec<f64>)> {
        let mut copy = self.clone();
        let mut out: Vec<(String, Vec<f64>)> =
            copy.params_mut().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
        out.extend(copy.buffers_mut().into_iter().map(|(n, b)| (n, b.clone())));
        out
    }

    /// Restores a snapshot produced by [`Network::state`] on a network
    /// built from the same config.
    pub fn load_state(&mut self, state: &[(String, Vec<f64>)]) -> Result<()> {
        let lookup: std::collections::HashMap<&str, &Vec<f64>> =
            state.iter().map(|(n, v)| (n.as_str(), v)).collect();
        let mut used = 0;
        let fill = |name: &str, dst: &mut Vec<f64>| -> Result<()> {
            let src = lookup.get(name).ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if src.len() != dst.len() {
                return Err(Error::ShapeMismatch(format!("tensor {name}: {} values, expected {}", src.len(), dst.len())));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for (name, p) in self.params_mut() {
            fill(&name, &mut p.value)?;
            used += 1;
        }
        for (name, b) in self.buffers_mut() {
            fill(&name, b)?;
            used += 1;
        }
        if used != state.len() {
            return Err(Error::Format(format!("{} tensors given, {used} expected", state.len())));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.clone().params_mut().iter().map(|(_, p)| p.len()).sum()
    }
}

fn concat(l: &Tensor, r: &Tensor) -> Result<Tensor> {
    let [n, a] = l.dims2()?;
    let [_, b] = r.dims2()?;
    let mut out = Vec::with_capacity(n * (a + b));
    for (lr, rr) in l.values().chunks(a).zip(r.values().chunks(b)) {
        out.extend_from_slice(lr);
        out.extend_from_slice(rr);
    }
    Tensor::new(vec![n, a + b], out)
}

fn split(g: &Tensor, width: usize) -> (Tensor, Tensor) {
    let n = g.shape()[0];
    let (mut l, mut r) = (Vec::with_capacity(n * width), Vec::with_capacity(n * width));
    for row in g.values().chunks(2 * width) {
        l.extend_from_slice(&row[..width]);
        r.extend_from_slice(&row[width..]);
    }
    (Tensor::new(vec![n, width], l).expect("split"), Tensor::new(vec![n, width], r).expect("split"))
}

impl OrdinalScorer<Region> for Network {
    fn tasks(&self) -> usize {
        self.config.head.outputs()
    }

    fn task_scores(&self, sample: &Region) -> Vec<f64> {
        self.scores(std::slice::from_ref(sample)).expect("region matches network input").remove(0)
    }
}

/// Concatenated eval-mode FC1 activations of one region.
pub fn extract_features(net: &Network, region: &Region) -> Result<FeatureVector> {
    let f = net.features(&net.batch(&[region])?)?;
    let w = net.config.fc1_width;
    let names = ["left", "right"].iter().flat_map(|s| (0..w).map(move |i| format!("deep.{s}.fc1.{i}"))).collect();
    Ok(FeatureVector::from_parts(names, f.into_values()))
}
