//! DCGAN-style generator and critic.
//!
//! Generator: dense, reshape, BN, ReLU, then stride-2 transposed
//! convolutions (each followed by BN and ReLU), then a 3x3 stride-1
//! transposed convolution and a channel softmax.
//!
//! Critic: stride-2 4x4 convolutions with BN and LeakyReLU(0.2), then a dense
//! layer to one score per sample.
//!
//! The generator picks a kernel per axis so every preset shape is reached
//! exactly: 4 for an even target (doubling), 3 for an odd one (2n - 1).

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GanError;
use crate::seeding::Rng;
use crate::tensor::{conv2d_out, BatchNormMode, BatchStats, Graph, NamedTensor, Tensor, Var};

pub const INIT_STD: f64 = 0.02;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;
const GEN_MIN_WIDTH: usize = 16;
const CRITIC_MIN_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One convolution-like layer as recorded in the model sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    pub out_size: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub latent_dim: usize,
    pub label_dim: usize,
    /// Shape after the dense layer: (width, rows, cols).
    pub seed_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticArch {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub label_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub dense_in: usize,
}

/// Running statistics of one batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    fn new(ch: usize) -> Self {
        RunningStats {
            mean: vec![0.0; ch],
            var: vec![1.0; ch],
        }
    }

    fn update(&mut self, s: &BatchStats) {
        for (r, &m) in self.mean.iter_mut().zip(&s.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, &v) in self.var.iter_mut().zip(&s.var_unbiased) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }

    fn mode(&self, mode: Mode) -> BatchNormMode {
        match mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval {
                mean: self.mean.clone(),
                var: self.var.clone(),
            },
        }
    }
}

/// Named parameters plus batchnorm buffers, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
    pub running: Vec<RunningStats>,
}

impl ParamSet {
    fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
            running: Vec::new(),
        }
    }

    fn normal(&mut self, name: String, shape: &[usize], rng: &mut Rng) {
        let dist = Normal::new(0.0, INIT_STD).expect("valid std");
        self.names.push(name);
        self.values
            .push(Tensor::from_fn(shape, |_| dist.sample(rng)));
    }

    fn fill(&mut self, name: String, shape: &[usize], v: f64) {
        self.names.push(name);
        self.values.push(Tensor::filled(shape, v));
    }

    fn batchnorm(&mut self, name: &str, ch: usize) {
        self.fill(format!("{name}.gamma"), &[ch], 1.0);
        self.fill(format!("{name}.beta"), &[ch], 0.0);
        self.running.push(RunningStats::new(ch));
    }

    /// Registers every parameter on the graph, trainable or frozen.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<Vec<Var>, GanError> {
        self.values
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect::<Result<_, _>>()
            .map_err(GanError::from)
    }

    pub fn update_running(&mut self, stats: &[BatchStats]) {
        for (r, s) in self.running.iter_mut().zip(stats) {
            r.update(s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(Tensor::max_abs).fold(0.0, f64::max)
    }

    /// Parameters then buffers, each name prefixed.
    pub fn to_named(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out: Vec<NamedTensor> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, t)| NamedTensor::new(format!("{prefix}{n}"), t.clone()))
            .collect();
        for (i, r) in self.running.iter().enumerate() {
            let ch = r.mean.len();
            out.push(NamedTensor::new(
                format!("{prefix}running{i}.mean"),
                Tensor::new(vec![ch], r.mean.clone()).expect("length matches"),
            ));
            out.push(NamedTensor::new(
                format!("{prefix}running{i}.var"),
                Tensor::new(vec![ch], r.var.clone()).expect("length matches"),
            ));
        }
        out
    }

    /// Overwrites values from blocks produced by [`ParamSet::to_named`].
    pub fn load_named(&mut self, prefix: &str, blocks: &[NamedTensor]) -> Result<(), GanError> {
        let find = |name: String| {
            blocks
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| GanError::Format(format!("missing parameter block {name}")))
        };
        for (n, t) in self.names.iter().zip(self.values.iter_mut()) {
            let b = find(format!("{prefix}{n}"))?;
            if b.tensor.shape() != t.shape() {
                return Err(GanError::Format(format!(
                    "block {prefix}{n} has shape {:?}, expected {:?}",
                    b.tensor.shape(),
                    t.shape()
                )));
            }
            *t = b.tensor.clone();
        }
        for (i, r) in self.running.iter_mut().enumerate() {
            for (suffix, dst) in [("mean", &mut r.mean), ("var", &mut r.var)] {
                let b = find(format!("{prefix}running{i}.{suffix}"))?;
                if b.tensor.numel() != dst.len() {
                    return Err(GanError::Format(format!(
                        "running{i}.{suffix} has the wrong length"
                    )));
                }
                dst.copy_from_slice(b.tensor.data());
            }
        }
        Ok(())
    }
}

/// Number of stride-2 stages needed to bring the smaller side down to 4.
fn stage_count(rows: usize, cols: usize) -> usize {
    let mut t = rows.min(cols);
    let mut n = 0;
    while t > 4 {
        t = t.div_ceil(2);
        n += 1;
    }
    n.max(1)
}

/// Sizes from the seed to the target along one axis, with the kernel that
/// produces each step.
fn upsample_chain(target: usize, stages: usize) -> (Vec<usize>, Vec<usize>) {
    let mut sizes = vec![target];
    let mut kernels = Vec::new();
    for _ in 0..stages {
        let t = *sizes.last().expect("non-empty");
        kernels.push(if t % 2 == 0 { 4 } else { 3 });
        sizes.push(t.div_ceil(2));
    }
    sizes.reverse();
    kernels.reverse();
    (sizes, kernels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub arch: GeneratorArch,
    pub params: ParamSet,
}

pub fn build_generator(
    rows: usize,
    cols: usize,
    channels: usize,
    latent_dim: usize,
    label_dim: usize,
    rng: &mut Rng,
) -> Result<GeneratorNet, GanError> {
    if rows == 0 || cols == 0 || channels == 0 || latent_dim == 0 {
        return Err(GanError::IncompatibleDims(format!(
            "generator needs positive dims, got {rows}x{cols}, {channels} channels, latent {latent_dim}"
        )));
    }
    let stages = stage_count(rows, cols);
    let (rs, rk) = upsample_chain(rows, stages);
    let (cs, ck) = upsample_chain(cols, stages);
    let width = |l: usize| GEN_MIN_WIDTH << (stages - l);

    let mut layers = Vec::new();
    for l in 0..stages {
        layers.push(LayerSpec {
            in_channels: width(l),
            out_channels: width(l + 1),
            kernel: (rk[l], ck[l]),
            stride: 2,
            pad: 1,
            out_size: (rs[l + 1], cs[l + 1]),
        });
    }
    layers.push(LayerSpec {
        in_channels: width(stages),
        out_channels: channels,
        kernel: (3, 3),
        stride: 1,
        pad: 1,
        out_size: (rows, cols),
    });
    let arch = GeneratorArch {
        rows,
        cols,
        channels,
        latent_dim,
        label_dim,
        seed_shape: (width(0), rs[0], cs[0]),
        layers,
    };

    let mut p = ParamSet::new();
    let seed_numel = width(0) * rs[0] * cs[0];
    p.normal(
        "fc.weight".into(),
        &[latent_dim + label_dim, seed_numel],
        rng,
    );
    p.fill("fc.bias".into(), &[seed_numel], 0.0);
    p.batchnorm("bn0", width(0));
    for (l, spec) in arch.layers.iter().enumerate() {
        let name = if l < stages {
            format!("up{l}")
        } else {
            "out".to_string()
        };
        p.normal(
            format!("{name}.weight"),
            &[
                spec.in_channels,
                spec.out_channels,
                spec.kernel.0,
                spec.kernel.1,
            ],
            rng,
        );
        p.fill(format!("{name}.bias"), &[spec.out_channels], 0.0);
        if l < stages {
            p.batchnorm(&format!("bn{}", l + 1), spec.out_channels);
        }
    }
    Ok(GeneratorNet { arch, params: p })
}

impl GeneratorNet {
    pub fn is_conditional(&self) -> bool {
        self.arch.label_dim > 0
    }

    /// `z [n, latent]`, optional `y [n, label]` -> `[n, channels, rows, cols]`
    /// on the channel simplex.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &[Var],
        z: Var,
        label: Option<Var>,
        mode: Mode,
    ) -> Result<(Var, Vec<BatchStats>), GanError> {
        let a = &self.arch;
        let n = g.value(z).shape()[0];
        let input = match (label, a.label_dim) {
            (Some(y), d) if d > 0 => g.concat(z, y)?,
            (None, 0) => z,
            (None, _) => return Err(GanError::LabelRequired),
            (Some(_), _) => return Err(GanError::UnexpectedLabel),
        };
        let mut stats = Vec::new();
        let mut it = params.iter().copied();
        let mut next = || it.next().expect("parameter list matches architecture");
        let mut bn_idx = 0;
        let mut bn = |g: &mut Graph, h: Var, gamma: Var, beta: Var, stats: &mut Vec<BatchStats>| {
            let mode = self.params.running[bn_idx].mode(mode);
            bn_idx += 1;
            let (y, s) = g.batchnorm2d(h, gamma, beta, &mode, BN_EPS)?;
            stats.extend(s);
            Ok::<_, GanError>(y)
        };

        let (w, b) = (next(), next());
        let h = g.dense(input, w, b)?;
        let (c0, r0, k0) = a.seed_shape;
        let h = g.reshape(h, &[n, c0, r0, k0])?;
        let (gm, bt) = (next(), next());
        let h = bn(g, h, gm, bt, &mut stats)?;
        let mut h = g.relu(h)?;
        let last = a.layers.len() - 1;
        for (l, spec) in a.layers.iter().enumerate() {
            let (w, b) = (next(), next());
            h = g.conv_transpose2d(h, w, b, spec.stride, spec.pad)?;
            if l < last {
                let (gm, bt) = (next(), next());
                h = bn(g, h, gm, bt, &mut stats)?;
                h = g.relu(h)?;
            }
        }
        let out = g.channel_softmax(h)?;
        Ok((out, stats))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub arch: CriticArch,
    pub params: ParamSet,
}

pub fn build_critic(
    rows: usize,
    cols: usize,
    channels: usize,
    label_dim: usize,
    rng: &mut Rng,
) -> Result<CriticNet, GanError> {
    if rows == 0 || cols == 0 || channels == 0 {
        return Err(GanError::IncompatibleDims(format!(
            "critic needs positive dims, got {rows}x{cols} with {channels} channels"
        )));
    }
    let stages = stage_count(rows, cols);
    let mut layers = Vec::new();
    let (mut h, mut w, mut cin) = (rows, cols, channels + label_dim);
    for l in 0..stages {
        let (oh, ow) = conv2d_out(h, w, 4, 4, 2, 1)
            .filter(|&(a, b)| a > 0 && b > 0)
            .ok_or_else(|| {
                GanError::IncompatibleDims(format!(
                    "critic cannot downsample {rows}x{cols} {stages} times"
                ))
            })?;
        let cout = CRITIC_MIN_WIDTH << l;
        layers.push(LayerSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: (4, 4),
            stride: 2,
            pad: 1,
            out_size: (oh, ow),
        });
        (h, w, cin) = (oh, ow, cout);
    }
    let arch = CriticArch {
        rows,
        cols,
        channels,
        label_dim,
        dense_in: cin * h * w,
        layers,
    };
    let mut p = ParamSet::new();
    for (l, spec) in arch.layers.iter().enumerate() {
        p.normal(
            format!("conv{l}.weight"),
            &[spec.out_channels, spec.in_channels, 4, 4],
            rng,
        );
        p.fill(format!("conv{l}.bias"), &[spec.out_channels], 0.0);
        p.batchnorm(&format!("cbn{l}"), spec.out_channels);
    }
    p.normal("fc.weight".into(), &[arch.dense_in, 1], rng);
    p.fill("fc.bias".into(), &[1], 0.0);
    Ok(CriticNet { arch, params: p })
}

/// Label vectors `[n, d]` broadcast to constant planes `[n, d, rows, cols]`.
pub fn label_planes(labels: &Tensor, rows: usize, cols: usize) -> Tensor {
    let (n, d) = (labels.shape()[0], labels.shape()[1]);
    let plane = rows * cols;
    Tensor::from_fn(&[n, d, rows, cols], |i| labels.data()[i / plane])
}

impl CriticNet {
    pub fn is_conditional(&self) -> bool {
        self.arch.label_dim > 0
    }

    /// `x [n, channels, rows, cols]`, optional label planes -> scores `[n, 1]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &[Var],
        x: Var,
        label_planes: Option<Var>,
        mode: Mode,
    ) -> Result<(Var, Vec<BatchStats>), GanError> {
        let n = g.value(x).shape()[0];
        let mut h = match (label_planes, self.arch.label_dim) {
            (Some(y), d) if d > 0 => g.concat(x, y)?,
            (None, 0) => x,
            (None, _) => return Err(GanError::MissingLabel),
            (Some(_), _) => return Err(GanError::UnexpectedLabel),
        };
        let mut stats = Vec::new();
        let mut it = params.iter().copied();
        for (l, spec) in self.arch.layers.iter().enumerate() {
            let (w, b, gm, bt) = (it.next(), it.next(), it.next(), it.next());
            let [w, b, gm, bt] =
                [w, b, gm, bt].map(|v| v.expect("parameter list matches architecture"));
            h = g.conv2d(h, w, b, spec.stride, spec.pad)?;
            let (y, s) = g.batchnorm2d(h, gm, bt, &self.params.running[l].mode(mode), BN_EPS)?;
            stats.extend(s);
            h = g.leaky_relu(y, LEAKY_SLOPE)?;
        }
        let h = g.reshape(h, &[n, self.arch.dense_in])?;
        let (w, b) = (it.next(), it.next());
        let out = g.dense(h, w.expect("fc.weight"), b.expect("fc.bias"))?;
        Ok((out, stats))
    }
}
