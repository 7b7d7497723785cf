use super::kernels::{self, Geom};
use super::{shape_err, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchNormMode {
    /// Normalise with the statistics of the current batch.
    Train,
    /// Normalise with stored running statistics.
    Eval { mean: Vec<f64>, var: Vec<f64> },
}

/// Per-channel statistics of a train-mode batchnorm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance, the one used for normalising.
    pub var: Vec<f64>,
    /// Unbiased variance, the one fed into running averages.
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: Geom,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Var,
        geom: Geom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
        n: usize,
        plane: usize,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softmax(Var),
    Mean(Var),
    Sum(Var),
    Log(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Concat(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    is_param: bool,
}

/// Execution record. Values are computed eagerly; operations are kept in
/// the order they ran.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a loss with respect to every parameter of a graph.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of a parameter. Panics if `v` is not a parameter.
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.get(v).expect("gradient requested for a non-parameter")
    }
}

fn check_finite(t: &Tensor, what: &'static str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFiniteInput(what))
    }
}

fn rank2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(shape_err(op, format!("expected rank 2, got {s:?}"))),
    }
}

fn rank4(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(shape_err(op, format!("expected rank 4, got {s:?}"))),
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: impl Iterator<Item = f64>) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.collect()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn leaf(&mut self, value: Tensor, param: bool) -> Result<Var> {
        check_finite(&value, if param { "param" } else { "constant" })?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: param,
            is_param: param,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that does not take gradients.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Input whose gradient `backward` reports.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        if !value.is_finite() {
            return Err(TensorError::NonFiniteOutput(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: if requires_grad { op } else { Op::Leaf },
            requires_grad,
            is_param: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `x [n, in] * w [in, out] + b [out]`
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, i) = rank2(self.value(x), "dense")?;
        let (wi, o) = rank2(self.value(w), "dense")?;
        if wi != i || self.value(b).shape() != [o] {
            return Err(shape_err(
                "dense",
                format!(
                    "x {:?}, w {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let (xv, wv, bv) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let mut y = vec![0.0; n * o];
        for r in 0..n {
            let yr = &mut y[r * o..][..o];
            yr.copy_from_slice(bv);
            for (k, &xk) in xv[r * i..][..i].iter().enumerate() {
                for (yv, &wk) in yr.iter_mut().zip(&wv[k * o..][..o]) {
                    *yv += xk * wk;
                }
            }
        }
        self.push(
            Tensor::new(vec![n, o], y)?,
            Op::Dense { x, w, b },
            &[x, w, b],
            "dense",
        )
    }

    /// `x [n, c, h, w]`, `w [o, c, kh, kw]`, `b [o]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, wd) = rank4(self.value(x), "conv2d")?;
        let (o, wc, kh, kw) = rank4(self.value(w), "conv2d")?;
        if wc != c || self.value(b).shape() != [o] {
            return Err(shape_err(
                "conv2d",
                format!(
                    "x {:?}, w {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let (oh, ow) = kernels::conv2d_out(h, wd, kh, kw, stride, pad).ok_or_else(|| {
            shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} does not fit {h}x{wd} with pad {pad}"),
            )
        })?;
        let geom = Geom {
            n,
            c,
            h,
            w: wd,
            o,
            oh,
            ow,
            kh,
            kw,
            stride,
            pad,
        };
        let mut y = vec![0.0; n * o * oh * ow];
        kernels::corr_forward(self.value(x).data(), self.value(w).data(), &geom, &mut y);
        kernels::add_channel_bias(&mut y, self.value(b).data(), n, oh * ow);
        self.push(
            Tensor::new(vec![n, o, oh, ow], y)?,
            Op::Conv { x, w, b, geom },
            &[x, w, b],
            "conv2d",
        )
    }

    /// `x [n, ci, h, w]`, `w [ci, co, kh, kw]`, `b [co]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (n, ci, h, wd) = rank4(self.value(x), "conv_transpose2d")?;
        let (wci, co, kh, kw) = rank4(self.value(w), "conv_transpose2d")?;
        if wci != ci || self.value(b).shape() != [co] {
            return Err(shape_err(
                "conv_transpose2d",
                format!(
                    "x {:?}, w {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let (oh, ow) =
            kernels::conv_transpose2d_out(h, wd, kh, kw, stride, pad).ok_or_else(|| {
                shape_err(
                    "conv_transpose2d",
                    format!("padding {pad} too large for {h}x{wd}"),
                )
            })?;
        // the output is the image side of the shared correlation
        let geom = Geom {
            n,
            c: co,
            h: oh,
            w: ow,
            o: ci,
            oh: h,
            ow: wd,
            kh,
            kw,
            stride,
            pad,
        };
        let mut y = vec![0.0; n * co * oh * ow];
        kernels::corr_backward_data(self.value(x).data(), self.value(w).data(), &geom, &mut y);
        kernels::add_channel_bias(&mut y, self.value(b).data(), n, oh * ow);
        self.push(
            Tensor::new(vec![n, co, oh, ow], y)?,
            Op::ConvT { x, w, b, geom },
            &[x, w, b],
            "conv_transpose2d",
        )
    }

    /// Per-channel normalisation over batch and spatial axes. Accepts
    /// `[n, c]` or `[n, c, h, w]`. Returns batch statistics in train mode.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: &BatchNormMode,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 2 && shape.len() != 4 {
            return Err(shape_err(
                "batchnorm2d",
                format!("expected rank 2 or 4, got {shape:?}"),
            ));
        }
        let (n, ch) = (shape[0], shape[1]);
        let plane: usize = shape[2..].iter().product();
        if self.value(gamma).shape() != [ch] || self.value(beta).shape() != [ch] {
            return Err(shape_err(
                "batchnorm2d",
                format!("{ch} channels but gamma/beta of another size"),
            ));
        }
        let m = n * plane;
        let xv = self.value(x).data();
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                if m < 2 {
                    return Err(shape_err(
                        "batchnorm2d",
                        "train mode needs at least two values per channel",
                    ));
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let vals = (0..n).flat_map(|i| &xv[(i * ch + c) * plane..][..plane]);
                    let mu = vals.clone().sum::<f64>() / m as f64;
                    mean[c] = mu;
                    var[c] = vals.map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
                }
                let var_unbiased = var.iter().map(|v| v * m as f64 / (m - 1) as f64).collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: var.clone(),
                    var_unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != ch || var.len() != ch {
                    return Err(shape_err(
                        "batchnorm2d",
                        "running statistics have the wrong length",
                    ));
                }
                (mean.clone(), var.clone(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for i in 0..n {
            for c in 0..ch {
                let off = (i * ch + c) * plane;
                for k in off..off + plane {
                    xhat[k] = (xv[k] - mean[c]) * inv_std[c];
                    y[k] = g[c] * xhat[k] + bt[c];
                }
            }
        }
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            train: stats.is_some(),
            n,
            plane,
        };
        let v = self.push(Tensor::new(shape, y)?, op, &[x, gamma, beta], "batchnorm2d")?;
        Ok((v, stats))
    }

    fn map(&mut self, x: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(x);
        let y = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())?;
        self.push(y, op, &[x], name)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Relu(x), "relu", |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.map(x, Op::LeakyRelu(x, slope), "leaky_relu", |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Sigmoid(x), "sigmoid", kernels::sigmoid)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::LogOfNonPositive);
        }
        self.map(x, Op::Log(x), "log", f64::ln)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.map(x, Op::Scale(x, s), "scale", |v| v * s)
    }

    /// Softmax across axis 1 at every other index.
    pub fn channel_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() < 2 {
            return Err(shape_err(
                "channel_softmax",
                format!("expected rank >= 2, got {:?}", t.shape()),
            ));
        }
        let (n, ch) = (t.shape()[0], t.shape()[1]);
        let plane: usize = t.shape()[2..].iter().product();
        let xv = t.data();
        let mut y = vec![0.0; xv.len()];
        for i in 0..n {
            let base = i * ch * plane;
            for p in 0..plane {
                let at = |c: usize| base + c * plane + p;
                let mx = (0..ch).map(|c| xv[at(c)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for c in 0..ch {
                    let e = (xv[at(c)] - mx).exp();
                    y[at(c)] = e;
                    z += e;
                }
                for c in 0..ch {
                    y[at(c)] /= z;
                }
            }
        }
        let y = Tensor::new(t.shape().to_vec(), y)?;
        self.push(y, Op::Softmax(x), &[x], "channel_softmax")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(shape_err("mean", "empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x], "mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x], "sum")
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(
                name,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let y = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let y = Tensor::new(ta.shape().to_vec(), y)?;
        self.push(y, op, &[a, b], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), "add", |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), "sub", |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), "mul", |p, q| p * q)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push(y, Op::Reshape(x), &[x], "reshape")
    }

    /// Joins two tensors along axis 1; all other axes must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err("concat", format!("{sa:?} vs {sb:?}")));
        }
        let n = sa[0];
        let (ka, kb) = (ta.numel() / n.max(1), tb.numel() / n.max(1));
        let mut y = Vec::with_capacity(ta.numel() + tb.numel());
        for i in 0..n {
            y.extend_from_slice(&ta.data()[i * ka..][..ka]);
            y.extend_from_slice(&tb.data()[i * kb..][..kb]);
        }
        let mut shape = sa.to_vec();
        shape[1] += sb[1];
        let y = Tensor::new(shape, y)?;
        self.push(y, Op::Concat(a, b), &[a, b], "concat")
    }

    /// Reverse pass from a scalar loss. A graph supports one pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.is_param.then(|| {
                    let shape = node.value.shape().to_vec();
                    match g {
                        Some(d) => Tensor::new(shape, d).expect("gradient has its value's shape"),
                        None => Tensor::zeros(&shape),
                    }
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;
        let y = nodes[i].value.data();
        match nodes[i].op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (n, ni) = (nodes[x.0].value.shape()[0], nodes[x.0].value.shape()[1]);
                let o = nodes[b.0].value.numel();
                if wants(x) {
                    let wv = val(w);
                    let mut dx = vec![0.0; n * ni];
                    for r in 0..n {
                        let gr = &g[r * o..][..o];
                        for k in 0..ni {
                            dx[r * ni + k] =
                                wv[k * o..][..o].iter().zip(gr).map(|(a, b)| a * b).sum();
                        }
                    }
                    add_into(&mut grads[x.0], dx.into_iter());
                }
                if wants(w) {
                    let xv = val(x);
                    let mut dw = vec![0.0; ni * o];
                    for r in 0..n {
                        let gr = &g[r * o..][..o];
                        for k in 0..ni {
                            let xk = xv[r * ni + k];
                            for (d, &gv) in dw[k * o..][..o].iter_mut().zip(gr) {
                                *d += xk * gv;
                            }
                        }
                    }
                    add_into(&mut grads[w.0], dw.into_iter());
                }
                if wants(b) {
                    let mut db = vec![0.0; o];
                    for r in 0..n {
                        for (d, &gv) in db.iter_mut().zip(&g[r * o..][..o]) {
                            *d += gv;
                        }
                    }
                    add_into(&mut grads[b.0], db.into_iter());
                }
            }
            Op::Conv { x, w, b, geom } => {
                if wants(x) {
                    let mut dx = vec![0.0; geom.n * geom.c * geom.h * geom.w];
                    kernels::corr_backward_data(g, val(w), &geom, &mut dx);
                    add_into(&mut grads[x.0], dx.into_iter());
                }
                if wants(w) {
                    let mut dw = vec![0.0; geom.o * geom.c * geom.kh * geom.kw];
                    kernels::corr_backward_weight(val(x), g, &geom, &mut dw);
                    add_into(&mut grads[w.0], dw.into_iter());
                }
                if wants(b) {
                    let mut db = vec![0.0; geom.o];
                    kernels::channel_sums(g, geom.n, geom.o, geom.oh * geom.ow, &mut db);
                    add_into(&mut grads[b.0], db.into_iter());
                }
            }
            Op::ConvT { x, w, b, geom } => {
                if wants(x) {
                    let mut dx = vec![0.0; geom.n * geom.o * geom.oh * geom.ow];
                    kernels::corr_forward(g, val(w), &geom, &mut dx);
                    add_into(&mut grads[x.0], dx.into_iter());
                }
                if wants(w) {
                    let mut dw = vec![0.0; geom.o * geom.c * geom.kh * geom.kw];
                    kernels::corr_backward_weight(g, val(x), &geom, &mut dw);
                    add_into(&mut grads[w.0], dw.into_iter());
                }
                if wants(b) {
                    let mut db = vec![0.0; geom.c];
                    kernels::channel_sums(g, geom.n, geom.c, geom.h * geom.w, &mut db);
                    add_into(&mut grads[b.0], db.into_iter());
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                ref xhat,
                ref inv_std,
                train,
                n,
                plane,
            } => {
                let ch = inv_std.len();
                let m = (n * plane) as f64;
                let mut sum_g = vec![0.0; ch];
                let mut sum_gx = vec![0.0; ch];
                for i in 0..n {
                    for c in 0..ch {
                        let off = (i * ch + c) * plane;
                        for k in off..off + plane {
                            sum_g[c] += g[k];
                            sum_gx[c] += g[k] * xhat[k];
                        }
                    }
                }
                if wants(x) {
                    let gm = val(gamma);
                    let mut dx = vec![0.0; g.len()];
                    for i in 0..n {
                        for c in 0..ch {
                            let off = (i * ch + c) * plane;
                            let s = gm[c] * inv_std[c];
                            for k in off..off + plane {
                                dx[k] = if train {
                                    s * (g[k] - sum_g[c] / m - xhat[k] * sum_gx[c] / m)
                                } else {
                                    s * g[k]
                                };
                            }
                        }
                    }
                    add_into(&mut grads[x.0], dx.into_iter());
                }
                if wants(gamma) {
                    add_into(&mut grads[gamma.0], sum_gx.into_iter());
                }
                if wants(beta) {
                    add_into(&mut grads[beta.0], sum_g.into_iter());
                }
            }
            Op::Relu(x) => {
                let xv = val(x);
                add_into(
                    &mut grads[x.0],
                    g.iter()
                        .zip(xv)
                        .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }),
                );
            }
            Op::LeakyRelu(x, slope) => {
                let xv = val(x);
                add_into(
                    &mut grads[x.0],
                    g.iter()
                        .zip(xv)
                        .map(|(&d, &v)| if v > 0.0 { d } else { slope * d }),
                );
            }
            Op::Sigmoid(x) => {
                add_into(
                    &mut grads[x.0],
                    g.iter().zip(y).map(|(&d, &s)| d * s * (1.0 - s)),
                );
            }
            Op::Log(x) => {
                add_into(&mut grads[x.0], g.iter().zip(val(x)).map(|(&d, &v)| d / v));
            }
            Op::Scale(x, s) => add_into(&mut grads[x.0], g.iter().map(|&d| d * s)),
            Op::Softmax(x) => {
                let shape = nodes[x.0].value.shape();
                let (n, ch) = (shape[0], shape[1]);
                let plane: usize = shape[2..].iter().product();
                let mut dx = vec![0.0; y.len()];
                for i in 0..n {
                    let base = i * ch * plane;
                    for p in 0..plane {
                        let at = |c: usize| base + c * plane + p;
                        let dot: f64 = (0..ch).map(|c| g[at(c)] * y[at(c)]).sum();
                        for c in 0..ch {
                            dx[at(c)] = y[at(c)] * (g[at(c)] - dot);
                        }
                    }
                }
                add_into(&mut grads[x.0], dx.into_iter());
            }
            Op::Mean(x) => {
                let k = nodes[x.0].value.numel();
                let d = g[0] / k as f64;
                add_into(&mut grads[x.0], std::iter::repeat_n(d, k));
            }
            Op::Sum(x) => {
                let k = nodes[x.0].value.numel();
                add_into(&mut grads[x.0], std::iter::repeat_n(g[0], k));
            }
            Op::Add(a, b) => {
                if wants(a) {
                    add_into(&mut grads[a.0], g.iter().copied());
                }
                if wants(b) {
                    add_into(&mut grads[b.0], g.iter().copied());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    add_into(&mut grads[a.0], g.iter().copied());
                }
                if wants(b) {
                    add_into(&mut grads[b.0], g.iter().map(|d| -d));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    add_into(&mut grads[a.0], g.iter().zip(val(b)).map(|(d, q)| d * q));
                }
                if wants(b) {
                    add_into(&mut grads[b.0], g.iter().zip(val(a)).map(|(d, p)| d * p));
                }
            }
            Op::Reshape(x) => add_into(&mut grads[x.0], g.iter().copied()),
            Op::Concat(a, b) => {
                let n = nodes[a.0].value.shape()[0];
                let ka = nodes[a.0].value.numel() / n.max(1);
                let kb = nodes[b.0].value.numel() / n.max(1);
                let stride = ka + kb;
                if wants(a) {
                    add_into(
                        &mut grads[a.0],
                        (0..n * ka).map(|j| g[(j / ka) * stride + j % ka]),
                    );
                }
                if wants(b) {
                    add_into(
                        &mut grads[b.0],
                        (0..n * kb).map(|j| g[(j / kb) * stride + ka + j % kb]),
                    );
                }
            }
        }
    }
}
