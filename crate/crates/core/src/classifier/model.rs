//! Parameters, inference and the batched training pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{conv_backward, conv_forward, gemm, leaky, leaky_grad, ConvGeom, KSIZE};
use super::loss::{focal_loss_grad, softmax, FocalLossConfig};
use super::{ModelConfig, Predictor};
use crate::error::{Error, Result};
use crate::labels::{ActivityClass, NUM_CLASSES};

/// A named, shaped block of `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    fn filled(name: String, shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            data: vec![value; n],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in ±sqrt(6 / fan_in), for layers followed by a rectifier.
    Kaiming(usize),
    /// Uniform in ±sqrt(3 / fan_in), unit-gain for a plain projection.
    Unit(usize),
    /// Uniform in ±1 / sqrt(fan_in), for the output layer.
    Output(usize),
    Const(f32),
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    geom: ConvGeom,
    conv: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Norm {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
    norm: Option<Norm>,
}

/// Where each layer's tensors sit in `params` / `buffers`.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    stages: Vec<Stage>,
    embed: Dense,
    head: Vec<Dense>,
}

type Plan = (Vec<(String, Vec<usize>, Init)>, Vec<(String, Vec<usize>, Init)>, Layout);

fn plan(cfg: &ModelConfig) -> Plan {
    let mut params = Vec::new();
    let mut buffers = Vec::new();
    let mut param = |name: String, shape: Vec<usize>, init: Init| {
        params.push((name, shape, init));
        params.len() - 1
    };
    let mut buffer = |name: String, shape: Vec<usize>, init: Init| {
        buffers.push((name, shape, init));
        buffers.len() - 1
    };

    let [mut cin, mut h, mut w] = cfg.input_shape;
    let mut stages = Vec::new();
    for (s, &cout) in cfg.encoder_channels.iter().enumerate() {
        let geom = ConvGeom { cin, h, w, cout };
        let p = format!("encoder.{s}");
        stages.push(Stage {
            geom,
            conv: param(format!("{p}.conv.weight"), vec![cout, cin, KSIZE, KSIZE], Init::Kaiming(geom.k())),
            gamma: param(format!("{p}.bn.weight"), vec![cout], Init::Const(1.0)),
            beta: param(format!("{p}.bn.bias"), vec![cout], Init::Const(0.0)),
            mean: buffer(format!("{p}.bn.running_mean"), vec![cout], Init::Const(0.0)),
            var: buffer(format!("{p}.bn.running_var"), vec![cout], Init::Const(1.0)),
        });
        (cin, h, w) = (cout, geom.oh(), geom.ow());
    }

    let embed = Dense {
        inputs: cin,
        outputs: cfg.embedding_dim,
        weight: param("embed.weight".into(), vec![cfg.embedding_dim, cin], Init::Unit(cin)),
        bias: param("embed.bias".into(), vec![cfg.embedding_dim], Init::Const(0.0)),
        norm: None,
    };

    let mut head = Vec::new();
    let mut inputs = cfg.embedding_dim;
    let last = cfg.head_widths.len() - 1;
    for (j, &outputs) in cfg.head_widths.iter().enumerate() {
        let p = format!("head.{j}");
        let init = if j == last { Init::Output(inputs) } else { Init::Kaiming(inputs) };
        let weight = param(format!("{p}.weight"), vec![outputs, inputs], init);
        let bias = param(format!("{p}.bias"), vec![outputs], Init::Const(0.0));
        let norm = (j < last).then(|| Norm {
            gamma: param(format!("{p}.bn.weight"), vec![outputs], Init::Const(1.0)),
            beta: param(format!("{p}.bn.bias"), vec![outputs], Init::Const(0.0)),
            mean: buffer(format!("{p}.bn.running_mean"), vec![outputs], Init::Const(0.0)),
            var: buffer(format!("{p}.bn.running_var"), vec![outputs], Init::Const(1.0)),
        });
        head.push(Dense {
            inputs,
            outputs,
            weight,
            bias,
            norm,
        });
        inputs = outputs;
    }
    (params, buffers, Layout { stages, embed, head })
}

fn run<T: Send, F: Fn(usize) -> T + Sync + Send>(parallel: bool, n: usize, f: F) -> Vec<T> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn sum_in_order(parts: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

/// Convolutional classifier. Construct with [`Model::new`] or load a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub(crate) config: ModelConfig,
    pub(crate) input_scale: f32,
    pub(crate) params: Vec<Tensor>,
    pub(crate) buffers: Vec<Tensor>,
    layout: Layout,
}

/// Everything the backward pass needs from the forward pass.
struct Trace {
    /// Input of each stage, then the encoder output; per sample.
    acts: Vec<Vec<Vec<f32>>>,
    xhat: Vec<Vec<Vec<f32>>>,
    stage_inv_std: Vec<Vec<f64>>,
    pooled: Vec<f32>,
    embed_out: Vec<f32>,
    head_in: Vec<Vec<f32>>,
    head_xhat: Vec<Vec<f32>>,
    head_act: Vec<Vec<f32>>,
    head_mask: Vec<Vec<f32>>,
    head_inv_std: Vec<Vec<f64>>,
    logits: Vec<f32>,
}

impl Model {
    /// Fresh model with seeded initialization; every tensor draws from its own
    /// ChaCha8 stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (pspec, bspec, layout) = plan(&config);
        let build = |specs: Vec<(String, Vec<usize>, Init)>| -> Vec<Tensor> {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (name, shape, init))| {
                    let bound = match init {
                        Init::Const(v) => return Tensor::filled(name, shape, v),
                        Init::Kaiming(fan) => (6.0 / fan as f64).sqrt(),
                        Init::Unit(fan) => (3.0 / fan as f64).sqrt(),
                        Init::Output(fan) => 1.0 / (fan as f64).sqrt(),
                    };
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    let mut t = Tensor::filled(name, shape, 0.0);
                    for v in &mut t.data {
                        *v = rng.gen_range(-bound..bound) as f32;
                    }
                    t
                })
                .collect()
        };
        Ok(Self {
            params: build(pspec),
            buffers: build(bspec),
            config,
            input_scale: 1.0,
            layout,
        })
    }

    /// Reassembles a model, checking tensor names and shapes against `config`.
    pub fn from_parts(config: ModelConfig, input_scale: f32, params: Vec<Tensor>, buffers: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::format("MSMD", format!("input scale {input_scale} must be positive")));
        }
        let (pspec, bspec, layout) = plan(&config);
        for (kind, specs, got) in [("parameter", &pspec, &params), ("buffer", &bspec, &buffers)] {
            if specs.len() != got.len() {
                return Err(Error::format(
                    "MSMD",
                    format!("expected {} {kind} tensors, found {}", specs.len(), got.len()),
                ));
            }
            for ((name, shape, _), t) in specs.iter().zip(got) {
                let n: usize = shape.iter().product();
                if &t.name != name || &t.shape != shape || t.data.len() != n {
                    return Err(Error::format(
                        "MSMD",
                        format!("{kind} {} {:?} does not match expected {name} {shape:?}", t.name, t.shape),
                    ));
                }
            }
        }
        Ok(Self {
            config,
            input_scale,
            params,
            buffers,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn buffers(&self) -> &[Tensor] {
        &self.buffers
    }

    pub fn input_scale(&self) -> f32 {
        self.input_scale
    }

    /// Factor applied to every input value before the first layer.
    pub fn set_input_scale(&mut self, scale: f32) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::argument(format!("input scale {scale} must be positive")));
        }
        self.input_scale = scale;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Zeroes the output layer, making every prediction uniform.
    pub fn zero_output_layer(&mut self) {
        let last = self.layout.head.last().expect("head is never empty");
        let (w, b) = (last.weight, last.bias);
        self.params[w].data.fill(0.0);
        self.params[b].data.fill(0.0);
    }

    fn input_len(&self) -> usize {
        self.config.input_shape.iter().product()
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::argument(format!(
                "window has {} values, the model expects {:?} = {}",
                x.len(),
                self.config.input_shape,
                self.input_len()
            )));
        }
        Ok(())
    }

    fn slope(&self) -> f32 {
        self.config.leaky_slope as f32
    }

    /// Logits in inference mode (running batch-norm statistics, no dropout).
    pub fn logits(&self, x: &[f32]) -> Result<[f64; NUM_CLASSES]> {
        self.check_input(x)?;
        let slope = self.slope();
        let eps = self.config.bn_eps;
        let mut cur: Vec<f32> = x.iter().map(|v| v * self.input_scale).collect();
        let mut cols = Vec::new();
        for st in &self.layout.stages {
            let g = &st.geom;
            cols.resize(g.cols_len(), 0.0);
            let mut out = vec![0.0; g.out_len()];
            conv_forward(&self.params[st.conv].data, &cur, g, &mut cols, &mut out);
            let hw = g.oh() * g.ow();
            for (c, plane) in out.chunks_exact_mut(hw).enumerate() {
                let (scale, shift) = self.bn_affine(st.gamma, st.beta, st.mean, st.var, c, eps);
                for v in plane {
                    *v = leaky((f64::from(*v) * scale + shift) as f32, slope);
                }
            }
            cur = out;
        }
        let hw = cur.len() / self.layout.embed.inputs;
        let mut x: Vec<f64> = cur
            .chunks_exact(hw)
            .map(|p| p.iter().map(|&v| f64::from(v)).sum::<f64>() / hw as f64)
            .collect();
        x = self.dense_eval(&self.layout.embed, &x);
        for layer in &self.layout.head {
            x = self.dense_eval(layer, &x);
            if let Some(n) = &layer.norm {
                for (f, v) in x.iter_mut().enumerate() {
                    let (scale, shift) = self.bn_affine(n.gamma, n.beta, n.mean, n.var, f, eps);
                    *v = f64::from(leaky((*v * scale + shift) as f32, slope));
                }
            }
        }
        Ok(x.try_into().expect("head ends in NUM_CLASSES outputs"))
    }

    /// Class probabilities in inference mode.
    pub fn forward(&self, x: &[f32]) -> Result<[f64; NUM_CLASSES]> {
        let z = self.logits(x)?;
        Ok(softmax(&z).try_into().expect("softmax keeps length"))
    }

    /// Probabilities for many windows, optionally across threads. Results do
    /// not depend on the thread count.
    pub fn forward_many(&self, xs: &[&[f32]], parallel: bool) -> Result<Vec<[f64; NUM_CLASSES]>> {
        run(parallel, xs.len(), |i| self.forward(xs[i])).into_iter().collect()
    }

    fn bn_affine(&self, gamma: usize, beta: usize, mean: usize, var: usize, c: usize, eps: f64) -> (f64, f64) {
        let g = f64::from(self.params[gamma].data[c]);
        let b = f64::from(self.params[beta].data[c]);
        let m = f64::from(self.buffers[mean].data[c]);
        let v = f64::from(self.buffers[var].data[c]);
        let scale = g / (v + eps).sqrt();
        (scale, b - m * scale)
    }

    fn dense_eval(&self, d: &Dense, x: &[f64]) -> Vec<f64> {
        let w = &self.params[d.weight].data;
        let b = &self.params[d.bias].data;
        (0..d.outputs)
            .map(|o| {
                let row = &w[o * d.inputs..(o + 1) * d.inputs];
                f64::from(b[o]) + row.iter().zip(x).map(|(&wv, &xv)| f64::from(wv) * xv).sum::<f64>()
            })
            .collect()
    }

    /// Updates running statistics the way batch norm does in training:
    /// biased batch variance for normalization, unbiased in the running estimate.
    fn update_running(&mut self, mean_idx: usize, var_idx: usize, mean: &[f64], var: &[f64], count: usize) {
        let m = self.config.bn_momentum;
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for (c, (&mu, &v)) in mean.iter().zip(var).enumerate() {
            let rm = &mut self.buffers[mean_idx].data[c];
            *rm = ((1.0 - m) * f64::from(*rm) + m * mu) as f32;
            let rv = &mut self.buffers[var_idx].data[c];
            *rv = ((1.0 - m) * f64::from(*rv) + m * v * unbias) as f32;
        }
    }

    /// One training-mode pass over a batch: forward with batch statistics
    /// (updating running statistics), mean focal loss, and gradients for every
    /// parameter tensor in `params` order.
    pub(crate) fn train_step(
        &mut self,
        batch: &[&[f32]],
        targets: &[ActivityClass],
        loss_cfg: &FocalLossConfig,
        dropout_rng: &mut ChaCha8Rng,
        parallel: bool,
    ) -> Result<(f64, Vec<Vec<f32>>)> {
        if batch.is_empty() || batch.len() != targets.len() {
            return Err(Error::argument("training batch is empty or mislabeled"));
        }
        for x in batch {
            self.check_input(x)?;
        }
        let trace = self.forward_train(batch, dropout_rng, parallel);
        let b = batch.len();
        let mut dlogits = vec![0.0f32; b * NUM_CLASSES];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let z: [f64; NUM_CLASSES] = std::array::from_fn(|k| f64::from(trace.logits[i * NUM_CLASSES + k]));
            let (l, g) = focal_loss_grad(&z, t, loss_cfg);
            loss += l;
            for k in 0..NUM_CLASSES {
                dlogits[i * NUM_CLASSES + k] = (g[k] / b as f64) as f32;
            }
        }
        let loss = loss / b as f64;
        if !loss.is_finite() {
            return Err(Error::Training(format!("loss diverged to {loss}")));
        }
        let grads = self.backward(&trace, dlogits, parallel);
        Ok((loss, grads))
    }

    fn forward_train(&mut self, batch: &[&[f32]], rng: &mut ChaCha8Rng, parallel: bool) -> Trace {
        let b = batch.len();
        let slope = self.slope();
        let eps = self.config.bn_eps;
        let scale = self.input_scale;

        let mut acts: Vec<Vec<Vec<f32>>> = vec![batch.iter().map(|x| x.iter().map(|v| v * scale).collect()).collect()];
        let mut xhats = Vec::new();
        let mut stage_inv_std = Vec::new();
        for s in 0..self.layout.stages.len() {
            let st = self.layout.stages[s].clone();
            let g = st.geom;
            let hw = g.oh() * g.ow();
            let w = &self.params[st.conv].data;
            let input = &acts[s];
            let mut z: Vec<Vec<f32>> = run(parallel, b, |i| {
                let mut cols = vec![0.0; g.cols_len()];
                let mut out = vec![0.0; g.out_len()];
                conv_forward(w, &input[i], &g, &mut cols, &mut out);
                out
            });

            let count = b * hw;
            let sums = run(parallel, b, |i| channel_sums(&z[i], hw, |v| v));
            let mean: Vec<f64> = sum_in_order(&sums, g.cout).into_iter().map(|s| s / count as f64).collect();
            let sq = run(parallel, b, |i| {
                let mut out = vec![0.0; g.cout];
                for (c, plane) in z[i].chunks_exact(hw).enumerate() {
                    out[c] = plane.iter().map(|&v| (f64::from(v) - mean[c]).powi(2)).sum();
                }
                out
            });
            let var: Vec<f64> = sum_in_order(&sq, g.cout).into_iter().map(|s| s / count as f64).collect();
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            self.update_running(st.mean, st.var, &mean, &var, count);

            let gamma = &self.params[st.gamma].data;
            let beta = &self.params[st.beta].data;
            let normalize = |zi: &mut Vec<f32>| -> Vec<f32> {
                let mut a = vec![0.0; zi.len()];
                for c in 0..g.cout {
                    let range = c * hw..(c + 1) * hw;
                    for (zv, av) in zi[range.clone()].iter_mut().zip(&mut a[range]) {
                        let xh = ((f64::from(*zv) - mean[c]) * inv_std[c]) as f32;
                        *zv = xh;
                        *av = leaky(gamma[c] * xh + beta[c], slope);
                    }
                }
                a
            };
            let a: Vec<Vec<f32>> = if parallel {
                z.par_iter_mut().map(normalize).collect()
            } else {
                z.iter_mut().map(normalize).collect()
            };
            xhats.push(z);
            stage_inv_std.push(inv_std);
            acts.push(a);
        }

        let embed = self.layout.embed.clone();
        let channels = embed.inputs;
        let last = acts.last().expect("at least one stage");
        let mut pooled = vec![0.0f32; b * channels];
        for (i, a) in last.iter().enumerate() {
            let hw = a.len() / channels;
            for (c, plane) in a.chunks_exact(hw).enumerate() {
                pooled[i * channels + c] = (plane.iter().map(|&v| f64::from(v)).sum::<f64>() / hw as f64) as f32;
            }
        }
        let embed_out = self.dense_batch(&embed, &pooled, b);

        let mut x = embed_out.clone();
        let mut head_in = Vec::new();
        let mut head_xhat = Vec::new();
        let mut head_act = Vec::new();
        let mut head_mask = Vec::new();
        let mut head_inv_std = Vec::new();
        let p = self.config.dropout_p;
        for layer in self.layout.head.clone() {
            let mut z = self.dense_batch(&layer, &x, b);
            head_in.push(std::mem::take(&mut x));
            let Some(n) = &layer.norm else {
                x = z;
                continue;
            };
            let f = layer.outputs;
            let mut mean = vec![0.0f64; f];
            for row in z.chunks_exact(f) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += f64::from(v);
                }
            }
            mean.iter_mut().for_each(|m| *m /= b as f64);
            let mut var = vec![0.0f64; f];
            for row in z.chunks_exact(f) {
                for (k, &v) in row.iter().enumerate() {
                    var[k] += (f64::from(v) - mean[k]).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v /= b as f64);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            self.update_running(n.mean, n.var, &mean, &var, b);

            let gamma = &self.params[n.gamma].data;
            let beta = &self.params[n.beta].data;
            let mut act = vec![0.0f32; z.len()];
            let mut mask = vec![1.0f32; z.len()];
            let keep = (1.0 / (1.0 - p)) as f32;
            for (idx, zv) in z.iter_mut().enumerate() {
                let k = idx % f;
                let xh = ((f64::from(*zv) - mean[k]) * inv_std[k]) as f32;
                *zv = xh;
                act[idx] = leaky(gamma[k] * xh + beta[k], slope);
                if p > 0.0 {
                    mask[idx] = if rng.gen::<f64>() < p { 0.0 } else { keep };
                }
            }
            x = act.iter().zip(&mask).map(|(a, m)| a * m).collect();
            head_xhat.push(z);
            head_act.push(act);
            head_mask.push(mask);
            head_inv_std.push(inv_std);
        }

        Trace {
            acts,
            xhat: xhats,
            stage_inv_std,
            pooled,
            embed_out,
            head_in,
            head_xhat,
            head_act,
            head_mask,
            head_inv_std,
            logits: x,
        }
    }

    /// `x: [b][inputs]` to `[b][outputs]`.
    fn dense_batch(&self, d: &Dense, x: &[f32], b: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; b * d.outputs];
        gemm(b, d.inputs, d.outputs, x, false, &self.params[d.weight].data, true, &mut out, 0.0);
        let bias = &self.params[d.bias].data;
        for row in out.chunks_exact_mut(d.outputs) {
            for (v, bv) in row.iter_mut().zip(bias) {
                *v += bv;
            }
        }
        out
    }

    /// Weight and bias gradients of a dense layer; returns the input gradient.
    fn dense_backward(&self, d: &Dense, x: &[f32], dz: &[f32], b: usize, grads: &mut [Vec<f32>]) -> Vec<f32> {
        gemm(d.outputs, b, d.inputs, dz, true, x, false, &mut grads[d.weight], 0.0);
        let mut db = vec![0.0f64; d.outputs];
        for row in dz.chunks_exact(d.outputs) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += f64::from(v);
            }
        }
        grads[d.bias] = db.into_iter().map(|v| v as f32).collect();
        let mut dx = vec![0.0f32; b * d.inputs];
        gemm(b, d.outputs, d.inputs, dz, false, &self.params[d.weight].data, false, &mut dx, 0.0);
        dx
    }

    fn backward(&self, t: &Trace, dlogits: Vec<f32>, parallel: bool) -> Vec<Vec<f32>> {
        let b = t.pooled.len() / self.layout.embed.inputs;
        let slope = self.slope();
        let mut grads: Vec<Vec<f32>> = self.params.iter().map(|p| vec![0.0; p.data.len()]).collect();

        let mut dz = dlogits;
        let mut norm_idx = t.head_xhat.len();
        for (j, layer) in self.layout.head.iter().enumerate().rev() {
            if let Some(n) = &layer.norm {
                norm_idx -= 1;
                let f = layer.outputs;
                let xhat = &t.head_xhat[norm_idx];
                let act = &t.head_act[norm_idx];
                let mask = &t.head_mask[norm_idx];
                let mut dy: Vec<f32> = (0..dz.len())
                    .map(|i| dz[i] * mask[i] * leaky_grad(act[i], slope))
                    .collect();
                let mut sum_dy = vec![0.0f64; f];
                let mut sum_dy_xh = vec![0.0f64; f];
                for (i, &v) in dy.iter().enumerate() {
                    sum_dy[i % f] += f64::from(v);
                    sum_dy_xh[i % f] += f64::from(v) * f64::from(xhat[i]);
                }
                let gamma = &self.params[n.gamma].data;
                let inv_std = &t.head_inv_std[norm_idx];
                for (i, v) in dy.iter_mut().enumerate() {
                    let k = i % f;
                    let bn = b as f64;
                    *v = (f64::from(gamma[k]) * inv_std[k] / bn
                        * (bn * f64::from(*v) - sum_dy[k] - f64::from(xhat[i]) * sum_dy_xh[k])) as f32;
                }
                grads[n.gamma] = sum_dy_xh.iter().map(|&v| v as f32).collect();
                grads[n.beta] = sum_dy.iter().map(|&v| v as f32).collect();
                dz = dy;
            }
            dz = self.dense_backward(layer, &t.head_in[j], &dz, b, &mut grads);
        }
        let dpooled = self.dense_backward(&self.layout.embed, &t.pooled, &dz, b, &mut grads);
        debug_assert_eq!(t.head_in[0], t.embed_out);

        let channels = self.layout.embed.inputs;
        let last_hw = t.acts.last().expect("stages")[0].len() / channels;
        let mut da: Vec<Vec<f32>> = (0..b)
            .map(|i| {
                let mut g = vec![0.0f32; channels * last_hw];
                for (c, plane) in g.chunks_exact_mut(last_hw).enumerate() {
                    plane.fill(dpooled[i * channels + c] / last_hw as f32);
                }
                g
            })
            .collect();

        for (s, st) in self.layout.stages.iter().enumerate().rev() {
            let g = st.geom;
            let hw = g.oh() * g.ow();
            let act = &t.acts[s + 1];
            let xhat = &t.xhat[s];
            let inv_std = &t.stage_inv_std[s];
            let gamma = &self.params[st.gamma].data;
            let count = (b * hw) as f64;

            let to_dy = |(i, d): (usize, &mut Vec<f32>)| {
                for (v, &a) in d.iter_mut().zip(&act[i]) {
                    *v *= leaky_grad(a, slope);
                }
            };
            if parallel {
                da.par_iter_mut().enumerate().for_each(to_dy);
            } else {
                da.iter_mut().enumerate().for_each(to_dy);
            }
            let dy = &da;
            let sum_dy = sum_in_order(&run(parallel, b, |i| channel_sums(&dy[i], hw, |v| v)), g.cout);
            let sum_dy_xh = sum_in_order(
                &run(parallel, b, |i| {
                    let mut out = vec![0.0; g.cout];
                    for (c, (pd, px)) in dy[i].chunks_exact(hw).zip(xhat[i].chunks_exact(hw)).enumerate() {
                        out[c] = pd.iter().zip(px).map(|(&d, &x)| f64::from(d) * f64::from(x)).sum();
                    }
                    out
                }),
                g.cout,
            );
            grads[st.gamma] = sum_dy_xh.iter().map(|&v| v as f32).collect();
            grads[st.beta] = sum_dy.iter().map(|&v| v as f32).collect();

            let w = &self.params[st.conv].data;
            let input = &t.acts[s];
            let need_dx = s > 0;
            let per_sample = run(parallel, b, |i| {
                let mut dzi = vec![0.0f32; g.out_len()];
                for c in 0..g.cout {
                    let k = f64::from(gamma[c]) * inv_std[c] / count;
                    for p in c * hw..(c + 1) * hw {
                        dzi[p] = (k * (count * f64::from(dy[i][p]) - sum_dy[c] - f64::from(xhat[i][p]) * sum_dy_xh[c]))
                            as f32;
                    }
                }
                let mut cols = vec![0.0; g.cols_len()];
                let mut dw = vec![0.0; w.len()];
                let mut dx = need_dx.then(|| vec![0.0; g.in_len()]);
                conv_backward(w, &input[i], &dzi, &g, &mut cols, &mut dw, dx.as_deref_mut());
                (dw, dx)
            });
            let gw = &mut grads[st.conv];
            let mut next = Vec::with_capacity(b);
            for (dw, dx) in per_sample {
                for (acc, v) in gw.iter_mut().zip(&dw) {
                    *acc += v;
                }
                if let Some(dx) = dx {
                    next.push(dx);
                }
            }
            da = next;
        }
        grads
    }
}

fn channel_sums(plane: &[f32], hw: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    plane
        .chunks_exact(hw)
        .map(|p| p.iter().map(|&v| f(f64::from(v))).sum())
        .collect()
}

impl Predictor for Model {
    fn input_shape(&self) -> [usize; 3] {
        self.config.input_shape
    }

    fn predict_proba(&self, tensor: &[f32]) -> Result<[f64; NUM_CLASSES]> {
        self.forward(tensor)
    }
}
