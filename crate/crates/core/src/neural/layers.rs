use rand::Rng as _;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Learnable array with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Self { value, grad: vec![0.0; n], velocity: vec![0.0; n] }
    }

    /// Centered uniform init with bound `sqrt(6 / fan_in)`.
    pub fn he_uniform(len: usize, fan_in: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        Self::new((0..len).map(|_| rng.random_range(-bound..bound)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// `c = op(a) * op(b) + beta * c` for row-major `m x k` and `k x n`
/// operands; a transposed operand is stored in its untransposed layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Walk every valid (kernel tap, output row) pair of a same-padded
/// stride-1 convolution, handing over matching destination/source ranges.
fn for_each_tap(
    channels: usize,
    [d, h, w]: [usize; 3],
    k: usize,
    mut f: impl FnMut(usize, std::ops::Range<usize>, std::ops::Range<usize>),
) {
    let p = (k / 2) as isize;
    let sp = d * h * w;
    for c in 0..channels {
        for kz in 0..k {
            let dz = kz as isize - p;
            for ky in 0..k {
                let dy = ky as isize - p;
                for kx in 0..k {
                    let dx = kx as isize - p;
                    let row = ((c * k + kz) * k + ky) * k + kx;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx.max(0)).max(0) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    for z in 0..d {
                        let sz = z as isize + dz;
                        if sz < 0 || sz >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let dst = row * sp + (z * h + y) * w;
                            let src = c * sp + ((sz as usize) * h + sy as usize) * w;
                            let sx0 = (x0 as isize + dx) as usize;
                            f(row, dst + x0..dst + x1, src + sx0..src + sx0 + (x1 - x0));
                        }
                    }
                }
            }
        }
    }
}

fn im2col(x: &[f64], channels: usize, dims: [usize; 3], k: usize, cols: &mut [f64]) {
    cols.iter_mut().for_each(|v| *v = 0.0);
    for_each_tap(channels, dims, k, |_, dst, src| cols[dst].copy_from_slice(&x[src]));
}

fn col2im(cols: &[f64], channels: usize, dims: [usize; 3], k: usize, x: &mut [f64]) {
    for_each_tap(channels, dims, k, |_, dst, src| {
        for (xv, cv) in x[src].iter_mut().zip(&cols[dst]) {
            *xv += cv;
        }
    });
}

/// Stride-1, zero "same" padded 3D cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out, in, kz, ky, kx]`.
    pub weight: Param,
    pub bias: Option<Param>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    shape: [usize; 5],
    cols: Vec<f64>,
}

impl Conv3d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, bias: bool, rng: &mut Rng) -> Result<Self> {
        if kernel % 2 == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::ConfigInvalid(format!(
                "conv {in_channels}->{out_channels} kernel {kernel}: kernel must be odd, widths >= 1"
            )));
        }
        let fan_in = in_channels * kernel.pow(3);
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight: Param::he_uniform(out_channels * fan_in, fan_in, rng),
            bias: bias.then(|| Param::new(vec![0.0; out_channels])),
        })
    }

    fn rows(&self) -> usize {
        self.in_channels * self.kernel.pow(3)
    }

    /// With `keep`, the unfolded input is retained for [`Conv3d::backward`].
    pub fn forward(&self, x: &Tensor, keep: bool) -> Result<(Tensor, ConvCache)> {
        let shape @ [n, c, d, h, w] = x.dims5()?;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch(format!("conv expects {} channels, got {c}", self.in_channels)));
        }
        let (sp, rows, oc) = (d * h * w, self.rows(), self.out_channels);
        let mut out = vec![0.0; n * oc * sp];
        let mut cols = vec![0.0; if keep { n * rows * sp } else { rows * sp }];
        for s in 0..n {
            let buf = if keep { &mut cols[s * rows * sp..(s + 1) * rows * sp] } else { &mut cols[..] };
            im2col(&x.values()[s * c * sp..(s + 1) * c * sp], c, [d, h, w], self.kernel, buf);
            let o = &mut out[s * oc * sp..(s + 1) * oc * sp];
            gemm(oc, rows, sp, &self.weight.value, false, buf, false, 0.0, o);
            if let Some(b) = &self.bias {
                for (oc_row, bv) in o.chunks_mut(sp).zip(&b.value) {
                    oc_row.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        if !keep {
            cols = Vec::new();
        }
        Ok((Tensor::new(vec![n, oc, d, h, w], out)?, ConvCache { shape, cols }))
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input` is set, an empty tensor otherwise.
    pub fn backward(&mut self, cache: &ConvCache, gout: &Tensor, need_input: bool) -> Tensor {
        let [n, c, d, h, w] = cache.shape;
        let (sp, rows, oc) = (d * h * w, self.rows(), self.out_channels);
        assert_eq!(cache.cols.len(), n * rows * sp, "conv backward needs a kept forward cache");
        let mut gin = if need_input { vec![0.0; n * c * sp] } else { Vec::new() };
        let mut gcols = vec![0.0; rows * sp];
        for s in 0..n {
            let g = &gout.values()[s * oc * sp..(s + 1) * oc * sp];
            let cols = &cache.cols[s * rows * sp..(s + 1) * rows * sp];
            gemm(oc, sp, rows, g, false, cols, true, 1.0, &mut self.weight.grad);
            if let Some(b) = &mut self.bias {
                for (gb, row) in b.grad.iter_mut().zip(g.chunks(sp)) {
                    *gb += row.iter().sum::<f64>();
                }
            }
            if need_input {
                gemm(rows, oc, sp, &self.weight.value, true, g, false, 0.0, &mut gcols);
                col2im(&gcols, c, [d, h, w], self.kernel, &mut gin[s * c * sp..(s + 1) * c * sp]);
            }
        }
        if need_input {
            Tensor::new(vec![n, c, d, h, w], gin).expect("input gradient shape")
        } else {
            Tensor::zeros(vec![0])
        }
    }
}

/// Per-channel batch normalization over batch and spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm3d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight kept by the running statistics at each update.
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: [usize; 5],
}

impl BatchNorm3d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    fn check(&self, x: &Tensor) -> Result<[usize; 5]> {
        let dims = x.dims5()?;
        if dims[1] != self.channels {
            return Err(Error::ShapeMismatch(format!("batchnorm expects {} channels, got {}", self.channels, dims[1])));
        }
        Ok(dims)
    }

    /// Normalizes with batch statistics (biased variance) and folds them
    /// into the running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        let shape @ [n, c, d, h, w] = self.check(x)?;
        let sp = d * h * w;
        let m = n * sp;
        if m < 2 {
            return Err(Error::DegenerateBatch(m));
        }
        let xv = x.values();
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let chunks = || (0..n).map(move |s| (s * c + ch) * sp..(s * c + ch + 1) * sp);
            let mean = chunks().flat_map(|r| xv[r].iter()).sum::<f64>() / m as f64;
            let var = chunks().flat_map(|r| xv[r].iter()).map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for r in chunks() {
                for i in r {
                    xhat[i] = (xv[i] - mean) * is;
                    out[i] = g * xhat[i] + b;
                }
            }
            inv_std[ch] = is;
            self.running_mean[ch] = self.momentum * self.running_mean[ch] + (1.0 - self.momentum) * mean;
            self.running_var[ch] = self.momentum * self.running_var[ch] + (1.0 - self.momentum) * var;
        }
        Ok((Tensor::new(x.shape().to_vec(), out)?, BnCache { xhat, inv_std, shape }))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let [n, c, d, h, w] = self.check(x)?;
        let sp = d * h * w;
        let mut out = x.values().to_vec();
        for s in 0..n {
            for ch in 0..c {
                let scale = self.gamma.value[ch] / (self.running_var[ch] + self.eps).sqrt();
                let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
                out[(s * c + ch) * sp..(s * c + ch + 1) * sp].iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        Tensor::new(x.shape().to_vec(), out)
    }

    pub fn backward(&mut self, cache: &BnCache, gout: &Tensor) -> Tensor {
        let [n, c, d, h, w] = cache.shape;
        let sp = d * h * w;
        let m = (n * sp) as f64;
        let g = gout.values();
        let mut gin = vec![0.0; g.len()];
        for ch in 0..c {
            let chunks = || (0..n).map(move |s| (s * c + ch) * sp..(s * c + ch + 1) * sp);
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for i in chunks().flatten() {
                sum_g += g[i];
                sum_gx += g[i] * cache.xhat[i];
            }
            self.beta.grad[ch] += sum_g;
            self.gamma.grad[ch] += sum_gx;
            let k = self.gamma.value[ch] * cache.inv_std[ch] / m;
            for i in chunks().flatten() {
                gin[i] = k * (m * g[i] - sum_g - cache.xhat[i] * sum_gx);
            }
        }
        Tensor::new(gout.shape().to_vec(), gin).expect("batchnorm gradient shape")
    }
}

/// Returns the activation and the mask of positive inputs.
pub fn relu(mut x: Tensor) -> (Tensor, Vec<bool>) {
    let mask: Vec<bool> = x.values().iter().map(|&v| v > 0.0).collect();
    for (v, &on) in x.values_mut().iter_mut().zip(&mask) {
        if !on {
            *v = 0.0;
        }
    }
    (x, mask)
}

pub fn relu_backward(mask: &[bool], mut grad: Tensor) -> Tensor {
    for (g, &on) in grad.values_mut().iter_mut().zip(mask) {
        if !on {
            *g = 0.0;
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool3d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

impl PoolCache {
    pub(crate) fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

impl MaxPool3d {
    /// Output `[d, h, w]`; odd remainders are truncated.
    pub fn output_dims(&self, dims: [usize; 3]) -> Option<[usize; 3]> {
        if self.size == 0 || self.stride == 0 || dims.iter().any(|&v| v < self.size) {
            return None;
        }
        Some(dims.map(|v| (v - self.size) / self.stride + 1))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let [n, c, d, h, w] = x.dims5()?;
        let [od, oh, ow] = self
            .output_dims([d, h, w])
            .ok_or_else(|| Error::ShapeMismatch(format!("pool size {} over spatial {:?}", self.size, [d, h, w])))?;
        let xv = x.values();
        let mut out = Vec::with_capacity(n * c * od * oh * ow);
        let mut argmax = Vec::with_capacity(out.capacity());
        for plane in 0..n * c {
            let base = plane * d * h * w;
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut best = (f64::NEG_INFINITY, usize::MAX);
                        for kz in 0..self.size {
                            for ky in 0..self.size {
                                let row = base + ((z * self.stride + kz) * h + y * self.stride + ky) * w + xo * self.stride;
                                for (i, &v) in xv[row..row + self.size].iter().enumerate() {
                                    if v > best.0 || best.1 == usize::MAX {
                                        best = (v, row + i);
                                    }
                                }
                            }
                        }
                        out.push(best.0);
                        argmax.push(best.1);
                    }
                }
            }
        }
        Ok((Tensor::new(vec![n, c, od, oh, ow], out)?, PoolCache { argmax, in_shape: x.shape().to_vec() }))
    }

    pub fn backward(&self, cache: &PoolCache, gout: &Tensor) -> Tensor {
        let mut gin = Tensor::zeros(cache.in_shape.clone());
        for (&i, &g) in cache.argmax.iter().zip(gout.values()) {
            gin.values_mut()[i] += g;
        }
        gin
    }
}

/// Inverted dropout; returns the output and the per-element scale applied.
pub fn dropout(mut x: Tensor, rate: f64, rng: &mut Rng) -> (Tensor, Vec<f64>) {
    if rate <= 0.0 {
        let n = x.len();
        return (x, vec![1.0; n]);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    x.values_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    (x, mask)
}

pub fn dropout_backward(mask: &[f64], mut grad: Tensor) -> Tensor {
    grad.values_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
    grad
}

/// Fully connected layer on `[N, inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`.
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::he_uniform(inputs * outputs, inputs, rng),
            bias: Param::new(vec![0.0; outputs]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let [n, f] = x.dims2()?;
        if f != self.inputs {
            return Err(Error::ShapeMismatch(format!("linear expects {} inputs, got {f}", self.inputs)));
        }
        let mut out: Vec<f64> = (0..n).flat_map(|_| self.bias.value.iter().copied()).collect();
        gemm(n, f, self.outputs, x.values(), false, &self.weight.value, true, 1.0, &mut out);
        Tensor::new(vec![n, self.outputs], out)
    }

    pub fn backward(&mut self, input: &Tensor, gout: &Tensor) -> Tensor {
        let n = input.shape()[0];
        gemm(self.outputs, n, self.inputs, gout.values(), true, input.values(), false, 1.0, &mut self.weight.grad);
        for row in gout.values().chunks(self.outputs) {
            self.bias.grad.iter_mut().zip(row).for_each(|(b, g)| *b += g);
        }
        let mut gin = vec![0.0; n * self.inputs];
        gemm(n, self.outputs, self.inputs, gout.values(), false, &self.weight.value, false, 0.0, &mut gin);
        Tensor::new(vec![n, self.inputs], gin).expect("linear gradient shape")
    }
}

/// `ReLU(x + F(x))` with `F = Conv-BN-ReLU-Conv-BN`; a biased 1x1x1
/// projection carries the identity path when the width changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub conv1: Conv3d,
    pub bn1: BatchNorm3d,
    pub conv2: Conv3d,
    pub bn2: BatchNorm3d,
    pub projection: Option<Conv3d>,
}

#[derive(Debug, Clone)]
pub struct ResCache {
    c1: ConvCache,
    b1: BnCache,
    mid_mask: Vec<bool>,
    c2: ConvCache,
    b2: BnCache,
    proj: Option<ConvCache>,
    out_mask: Vec<bool>,
}

impl ResCache {
    pub(crate) fn masks(&self) -> [&[bool]; 2] {
        [&self.mid_mask, &self.out_mask]
    }
}

fn add_into(mut a: Tensor, b: &Tensor) -> Tensor {
    a.values_mut().iter_mut().zip(b.values()).for_each(|(x, y)| *x += y);
    a
}

impl ResBlock {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            conv1: Conv3d::new(in_channels, out_channels, kernel, false, rng)?,
            bn1: BatchNorm3d::new(out_channels),
            conv2: Conv3d::new(out_channels, out_channels, kernel, false, rng)?,
            bn2: BatchNorm3d::new(out_channels),
            projection: if in_channels != out_channels {
                Some(Conv3d::new(in_channels, out_channels, 1, true, rng)?)
            } else {
                None
            },
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ResCache)> {
        let (h, c1) = self.conv1.forward(x, true)?;
        let (h, b1) = self.bn1.forward_train(&h)?;
        let (h, mid_mask) = relu(h);
        let (h, c2) = self.conv2.forward(&h, true)?;
        let (h, b2) = self.bn2.forward_train(&h)?;
        let (h, proj) = match &self.projection {
            Some(p) => {
                let (s, cache) = p.forward(x, true)?;
                (add_into(h, &s), Some(cache))
            }
            None => (add_into(h, x), None),
        };
        let (out, out_mask) = relu(h);
        Ok((out, ResCache { c1, b1, mid_mask, c2, b2, proj, out_mask }))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x, false)?.0;
        let h = relu(self.bn1.forward_eval(&h)?).0;
        let h = self.bn2.forward_eval(&self.conv2.forward(&h, false)?.0)?;
        let h = match &self.projection {
            Some(p) => add_into(h, &p.forward(x, false)?.0),
            None => add_into(h, x),
        };
        Ok(relu(h).0)
    }

    pub fn backward(&mut self, cache: &ResCache, gout: Tensor) -> Tensor {
        let g = relu_backward(&cache.out_mask, gout);
        let skip = match (&mut self.projection, &cache.proj) {
            (Some(p), Some(pc)) => p.backward(pc, &g, true),
            _ => g.clone(),
        };
        let gb = self.bn2.backward(&cache.b2, &g);
        let gb = self.conv2.backward(&cache.c2, &gb, true);
        let gb = relu_backward(&cache.mid_mask, gb);
        let gb = self.bn1.backward(&cache.b1, &gb);
        let gb = self.conv1.backward(&cache.c1, &gb, true);
        add_into(gb, &skip)
    }

    pub(crate) fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((format!("{prefix}.conv1.weight"), &mut self.conv1.weight));
        out.push((format!("{prefix}.bn1.gamma"), &mut self.bn1.gamma));
        out.push((format!("{prefix}.bn1.beta"), &mut self.bn1.beta));
        out.push((format!("{prefix}.conv2.weight"), &mut self.conv2.weight));
        out.push((format!("{prefix}.bn2.gamma"), &mut self.bn2.gamma));
        out.push((format!("{prefix}.bn2.beta"), &mut self.bn2.beta));
        if let Some(p) = &mut self.projection {
            out.push((format!("{prefix}.proj.weight"), &mut p.weight));
            if let Some(b) = &mut p.bias {
                out.push((format!("{prefix}.proj.bias"), b));
            }
        }
    }

    pub(crate) fn collect_buffers<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Vec<f64>)>) {
        for (name, bn) in [("bn1", &mut self.bn1), ("bn2", &mut self.bn2)] {
            out.push((format!("{prefix}.{name}.running_mean"), &mut bn.running_mean));
            out.push((format!("{prefix}.{name}.running_var"), &mut bn.running_var));
        }
    }
}
