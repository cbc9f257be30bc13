//! Fused feedforward network: one encoder per modality block, a pooling
//! layer and a small classification head, with hand-written backward passes.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(&self, y: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => y.clone(),
            Activation::Relu => y.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => y.mapv(sigmoid),
        }
    }

    /// Derivative given pre-activation `y` and activation `a`.
    fn derivative(&self, y: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => Array2::ones(y.raw_dim()),
            Activation::Relu => y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Activation::Sigmoid => a.mapv(|v| v * (1.0 - v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Concat,
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub name: String,
    pub input_width: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub batch_norm: bool,
}

impl EncoderSpec {
    /// Static encoder: 32 then 16 units, batch norm, sigmoid, dropout.
    pub fn static_block(name: &str, input_width: usize, dropout: f64) -> Self {
        EncoderSpec {
            name: name.to_string(),
            input_width,
            widths: vec![32, 16],
            activation: Activation::Sigmoid,
            dropout,
            batch_norm: true,
        }
    }

    /// Other encoders: half the input width, then 32 units, rectified.
    pub fn dense_block(name: &str, input_width: usize, dropout: f64) -> Self {
        EncoderSpec {
            name: name.to_string(),
            input_width,
            widths: vec![(input_width / 2).max(1), 32],
            activation: Activation::Relu,
            dropout,
            batch_norm: false,
        }
    }

    pub fn output_width(&self) -> usize {
        self.widths.last().copied().unwrap_or(self.input_width)
    }

    fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.widths.contains(&0) {
            return Err(Error::Config(format!("encoder `{}` has a zero width", self.name)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("encoder `{}` dropout {} outside [0, 1)", self.name, self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub blocks: Vec<EncoderSpec>,
    pub pooling: Pooling,
    pub head_widths: Vec<usize>,
    pub head_dropout: f64,
}

pub const STATIC_BLOCK: &str = "static";
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_HEAD: [usize; 2] = [128, 32];

impl ModelSpec {
    /// Default architecture for named blocks of the given widths.
    pub fn for_blocks(blocks: &[(String, usize)]) -> Self {
        ModelSpec {
            blocks: blocks
                .iter()
                .map(|(name, w)| {
                    if name == STATIC_BLOCK {
                        EncoderSpec::static_block(name, *w, DEFAULT_DROPOUT)
                    } else {
                        EncoderSpec::dense_block(name, *w, DEFAULT_DROPOUT)
                    }
                })
                .collect(),
            pooling: Pooling::Concat,
            head_widths: DEFAULT_HEAD.to_vec(),
            head_dropout: 0.0,
        }
    }

    pub fn pooled_width(&self) -> usize {
        match self.pooling {
            Pooling::Concat => self.blocks.iter().map(|b| b.output_width()).sum(),
            Pooling::Add => self.blocks.first().map(|b| b.output_width()).unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("model needs at least one input block".into()));
        }
        for b in &self.blocks {
            b.validate()?;
        }
        if self.pooling == Pooling::Add {
            let w = self.blocks[0].output_width();
            if let Some(b) = self.blocks.iter().find(|b| b.output_width() != w) {
                return Err(Error::Shape {
                    block: b.name.clone(),
                    expected: w,
                    actual: b.output_width(),
                });
            }
        }
        if self.head_widths.contains(&0) || !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::Config("invalid head configuration".into()));
        }
        Ok(())
    }
}

/// Xavier/Glorot uniform matrix of shape `fan_in x fan_out`.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
}

pub fn xavier_init(fan_in: usize, fan_out: usize, seed: u64) -> Array2<f64> {
    xavier_uniform(fan_in, fan_out, &mut rng_for(seed, "xavier"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub bn: Option<BatchNorm>,
    pub activation: Activation,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    x: Array2<f64>,
    xhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    y: Array2<f64>,
    a: Array2<f64>,
    mask: Option<Array2<f64>>,
    batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

impl LayerGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = vec![self.w.as_slice().unwrap(), self.b.as_slice().unwrap()];
        if let (Some(g), Some(b)) = (&self.gamma, &self.beta) {
            v.push(g.as_slice().unwrap());
            v.push(b.as_slice().unwrap());
        }
        v
    }
}

impl Layer {
    fn new(fan_in: usize, fan_out: usize, bn: bool, activation: Activation, dropout: f64, rng: &mut Rng) -> Self {
        Layer {
            w: xavier_uniform(fan_in, fan_out, rng),
            b: Array1::zeros(fan_out),
            bn: bn.then(|| BatchNorm::new(fan_out)),
            activation,
            dropout,
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()];
        if let Some(bn) = &mut self.bn {
            v.push(bn.gamma.as_slice_mut().unwrap());
            v.push(bn.beta.as_slice_mut().unwrap());
        }
        v
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut v = vec![self.w.as_slice().unwrap(), self.b.as_slice().unwrap()];
        if let Some(bn) = &self.bn {
            v.push(bn.gamma.as_slice().unwrap());
            v.push(bn.beta.as_slice().unwrap());
        }
        v
    }

    fn forward(&self, x: Array2<f64>, mode: Mode, rng: &mut Rng) -> (Array2<f64>, LayerCache) {
        let z = x.dot(&self.w) + &self.b;
        let (y, xhat, inv_std, batch_stats) = match &self.bn {
            None => (z, None, None, None),
            Some(bn) => {
                let (mean, var) = match mode {
                    Mode::Train => (z.mean_axis(Axis(0)).unwrap(), z.var_axis(Axis(0), 0.0)),
                    Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                };
                let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                let xhat = (&z - &mean) * &inv_std;
                let y = &xhat * &bn.gamma + &bn.beta;
                let stats = (mode == Mode::Train).then(|| {
                    let n = z.nrows() as f64;
                    let unbiased = if n > 1.0 { &var * (n / (n - 1.0)) } else { var.clone() };
                    (mean, unbiased)
                });
                (y, Some(xhat), Some(inv_std), stats)
            }
        };
        let a = self.activation.apply(&y);
        let (out, mask) = if mode == Mode::Train && self.dropout > 0.0 {
            let keep = 1.0 - self.dropout;
            let mask = Array2::from_shape_fn(a.raw_dim(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
            (&a * &mask, Some(mask))
        } else {
            (a.clone(), None)
        };
        (
            out,
            LayerCache {
                x,
                xhat,
                inv_std,
                y,
                a,
                mask,
                batch_stats,
            },
        )
    }

    fn backward(&self, c: &LayerCache, d_out: &Array2<f64>) -> (LayerGrad, Array2<f64>) {
        let d_a = match &c.mask {
            Some(m) => d_out * m,
            None => d_out.clone(),
        };
        let d_y = d_a * self.activation.derivative(&c.y, &c.a);
        let (dz, gamma, beta) = match (&self.bn, &c.xhat, &c.inv_std) {
            (Some(bn), Some(xhat), Some(inv_std)) => {
                let dgamma = (&d_y * xhat).sum_axis(Axis(0));
                let dbeta = d_y.sum_axis(Axis(0));
                let dxhat = &d_y * &bn.gamma;
                let dz = if c.batch_stats.is_some() {
                    let n = d_y.nrows() as f64;
                    let s1 = dxhat.sum_axis(Axis(0));
                    let s2 = (&dxhat * xhat).sum_axis(Axis(0));
                    ((&dxhat * n) - &s1 - &(xhat * &s2)) * &(inv_std / n)
                } else {
                    &dxhat * inv_std
                };
                (dz, Some(dgamma), Some(dbeta))
            }
            _ => (d_y, None, None),
        };
        let grad = LayerGrad {
            w: c.x.t().dot(&dz).as_standard_layout().into_owned(),
            b: dz.sum_axis(Axis(0)),
            gamma,
            beta,
        };
        let dx = dz.dot(&self.w.t());
        (grad, dx)
    }

    fn update_running_stats(&mut self, c: &LayerCache) {
        if let (Some(bn), Some((mean, var))) = (&mut self.bn, &c.batch_stats) {
            let m = bn.momentum;
            bn.running_mean = &bn.running_mean * (1.0 - m) + mean * m;
            bn.running_var = &bn.running_var * (1.0 - m) + var * m;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

impl Stack {
    fn forward(&self, x: Array2<f64>, mode: Mode, rng: &mut Rng) -> (Array2<f64>, Vec<LayerCache>) {
        let mut h = x;
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (out, c) = l.forward(h, mode, rng);
            caches.push(c);
            h = out;
        }
        (h, caches)
    }

    fn backward(&self, caches: &[LayerCache], d_out: Array2<f64>) -> (Vec<LayerGrad>, Array2<f64>) {
        let mut d = d_out;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, c) in self.layers.iter().zip(caches).rev() {
            let (g, dx) = l.backward(c, &d);
            grads.push(g);
            d = dx;
        }
        grads.reverse();
        (grads, d)
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Block(usize),
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub blocks: Vec<Stack>,
    pub head: Stack,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    blocks: Vec<Vec<LayerCache>>,
    head: Vec<LayerCache>,
    pub logits: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<Vec<LayerGrad>>,
    pub head: Vec<LayerGrad>,
}

impl ModelGrads {
    /// Gradient slices in the same order as [`ModelParams::params`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.blocks
            .iter()
            .flatten()
            .chain(&self.head)
            .flat_map(|g| g.slices())
            .collect()
    }
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, unit batch-norm scales.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(seed, "init");
        let blocks = spec
            .blocks
            .iter()
            .map(|b| {
                let mut fan_in = b.input_width;
                let layers = b
                    .widths
                    .iter()
                    .map(|&w| {
                        let l = Layer::new(fan_in, w, b.batch_norm, b.activation, b.dropout, &mut rng);
                        fan_in = w;
                        l
                    })
                    .collect();
                Stack { layers }
            })
            .collect();
        let mut fan_in = spec.pooled_width();
        let mut head_layers: Vec<Layer> = spec
            .head_widths
            .iter()
            .map(|&w| {
                let l = Layer::new(fan_in, w, false, Activation::Relu, spec.head_dropout, &mut rng);
                fan_in = w;
                l
            })
            .collect();
        head_layers.push(Layer::new(fan_in, 1, false, Activation::Identity, 0.0, &mut rng));
        Ok(ModelParams {
            spec: spec.clone(),
            blocks,
            head: Stack { layers: head_layers },
        })
    }

    pub fn block_names(&self) -> Vec<&str> {
        self.spec.blocks.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn input_width(&self) -> usize {
        self.spec.blocks.iter().map(|b| b.input_width).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.blocks
            .iter()
            .flat_map(|s| &s.layers)
            .chain(&self.head.layers)
            .flat_map(|l| l.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<(Owner, &mut [f64])> {
        let mut out = Vec::new();
        for (i, s) in self.blocks.iter_mut().enumerate() {
            for l in &mut s.layers {
                out.extend(l.params_mut().into_iter().map(|p| (Owner::Block(i), p)));
            }
        }
        for l in &mut self.head.layers {
            out.extend(l.params_mut().into_iter().map(|p| (Owner::Head, p)));
        }
        out
    }

    pub fn check_inputs(&self, inputs: &[ArrayView2<f64>]) -> Result<usize> {
        if inputs.len() != self.spec.blocks.len() {
            return Err(Error::Shape {
                block: "<blocks>".into(),
                expected: self.spec.blocks.len(),
                actual: inputs.len(),
            });
        }
        let n = inputs[0].nrows();
        for (x, b) in inputs.iter().zip(&self.spec.blocks) {
            if x.ncols() != b.input_width {
                return Err(Error::Shape {
                    block: b.name.clone(),
                    expected: b.input_width,
                    actual: x.ncols(),
                });
            }
            if x.nrows() != n {
                return Err(Error::Shape {
                    block: format!("{} (rows)", b.name),
                    expected: n,
                    actual: x.nrows(),
                });
            }
        }
        Ok(n)
    }

    /// Forward pass returning logits. Blocks flagged in `frozen` always run in
    /// eval mode.
    pub fn forward(&self, inputs: &[ArrayView2<f64>], mode: Mode, frozen: &[bool], rng: &mut Rng) -> Result<ForwardCache> {
        self.check_inputs(inputs)?;
        let mut outs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for (i, (x, s)) in inputs.iter().zip(&self.blocks).enumerate() {
            let m = if frozen.get(i).copied().unwrap_or(false) { Mode::Eval } else { mode };
            let (h, c) = s.forward(x.to_owned(), m, rng);
            outs.push(h);
            caches.push(c);
        }
        let pooled = match self.spec.pooling {
            Pooling::Concat => {
                let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
                concatenate(Axis(1), &views).expect("block outputs share row count")
            }
            Pooling::Add => outs.iter().skip(1).fold(outs[0].clone(), |acc, o| acc + o),
        };
        let (out, head) = self.head.forward(pooled, mode, rng);
        Ok(ForwardCache {
            blocks: caches,
            head,
            logits: out.column(0).to_owned(),
        })
    }

    /// Gradients of parameters and of each input block, given d(loss)/d(logit).
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Array1<f64>) -> (ModelGrads, Vec<Array2<f64>>) {
        let d_out = d_logits.clone().insert_axis(Axis(1));
        let (head, d_pooled) = self.head.backward(&cache.head, d_out);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut d_inputs = Vec::with_capacity(self.blocks.len());
        let mut col = 0;
        for (s, (c, spec)) in self.blocks.iter().zip(cache.blocks.iter().zip(&self.spec.blocks)) {
            let d_h = match self.spec.pooling {
                Pooling::Concat => {
                    let w = spec.output_width();
                    let d = d_pooled.slice(s![.., col..col + w]).to_owned();
                    col += w;
                    d
                }
                Pooling::Add => d_pooled.clone(),
            };
            let (g, dx) = s.backward(c, d_h);
            blocks.push(g);
            d_inputs.push(dx);
        }
        (ModelGrads { blocks, head }, d_inputs)
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache, frozen: &[bool]) {
        for (i, (s, c)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            for (l, lc) in s.layers.iter_mut().zip(c) {
                l.update_running_stats(lc);
            }
        }
        for (l, lc) in self.head.layers.iter_mut().zip(&cache.head) {
            l.update_running_stats(lc);
        }
    }

    /// Eval-mode probabilities.
    pub fn predict_proba(&self, inputs: &[ArrayView2<f64>]) -> Result<Array1<f64>> {
        let mut rng = rng_for(0, "eval");
        let c = self.forward(inputs, Mode::Eval, &[], &mut rng)?;
        Ok(c.logits.mapv(sigmoid))
    }
}

/// Per-class loss weights `N / (2 N_c)`, indexed by label.
pub fn class_weights(labels: &[bool]) -> Result<[f64; 2]> {
    let n = labels.len() as f64;
    let n_pos = labels.iter().filter(|l| **l).count() as f64;
    let n_neg = n - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Data("training labels contain a single class".into()));
    }
    Ok([n / (2.0 * n_neg), n / (2.0 * n_pos)])
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub data_loss: f64,
    pub grads: ModelGrads,
    pub cache: ForwardCache,
}

/// Weighted binary cross-entropy (normalized by the summed example weights)
/// plus `weight_decay / 2` times the squared parameter norm.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    params: &ModelParams,
    inputs: &[ArrayView2<f64>],
    labels: &[bool],
    class_weights: [f64; 2],
    weight_decay: f64,
    mode: Mode,
    frozen: &[bool],
    rng: &mut Rng,
) -> Result<LossOutput> {
    let cache = params.forward(inputs, mode, frozen, rng)?;
    let w: Vec<f64> = labels.iter().map(|l| class_weights[*l as usize]).collect();
    let w_sum: f64 = w.iter().sum();
    let mut data_loss = 0.0;
    let mut d = Array1::zeros(labels.len());
    for (i, (&s, &l)) in cache.logits.iter().zip(labels).enumerate() {
        let y = if l { 1.0 } else { 0.0 };
        data_loss += w[i] * (softplus(s) - y * s);
        d[i] = w[i] * (sigmoid(s) - y) / w_sum;
    }
    data_loss /= w_sum;
    let (mut grads, _) = params.backward(&cache, &d);
    let mut reg = 0.0;
    if weight_decay > 0.0 {
        let values: Vec<Vec<f64>> = params.params().iter().map(|p| p.to_vec()).collect();
        reg = 0.5 * weight_decay * values.iter().flatten().map(|v| v * v).sum::<f64>();
        add_decay(&mut grads, &values, weight_decay);
    }
    Ok(LossOutput {
        loss: data_loss + reg,
        data_loss,
        grads,
        cache,
    })
}

fn add_decay(grads: &mut ModelGrads, values: &[Vec<f64>], lambda: f64) {
    let mut k = 0;
    for g in grads.blocks.iter_mut().flatten().chain(grads.head.iter_mut()) {
        let mut slots: Vec<&mut [f64]> = vec![g.w.as_slice_mut().unwrap(), g.b.as_slice_mut().unwrap()];
        if let (Some(ga), Some(be)) = (&mut g.gamma, &mut g.beta) {
            slots.push(ga.as_slice_mut().unwrap());
            slots.push(be.as_slice_mut().unwrap());
        }
        for s in slots {
            for (gv, pv) in s.iter_mut().zip(&values[k]) {
                *gv += lambda * pv;
            }
            k += 1;
        }
    }
}
