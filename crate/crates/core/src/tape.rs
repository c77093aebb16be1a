//! Wengert-list reverse-mode differentiation.
//!
//! Ops are appended in evaluation order, so the node list is always
//! topologically sorted and [`Tape::backward`] is a single reverse sweep.

use crate::error::{dim_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Epsilon added to the batch variance inside batchnorm.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel statistics observed by a batchnorm op.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    /// Biased variance.
    pub var: Vec<f64>,
}

impl ChannelStats {
    /// Mean over channels of the per-channel standard deviation.
    pub fn mean_std(&self) -> f64 {
        self.var.iter().map(|v| v.sqrt()).sum::<f64>() / self.var.len() as f64
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Relu(Var),
    AvgPool {
        input: Var,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    GlobalAvgPool(Var),
    BatchNorm {
        input: Var,
        scale: Option<Var>,
        shift: Option<Var>,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        frozen: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<S>,
    },
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Linear { .. } => "linear",
            Op::Relu(_) => "relu",
            Op::AvgPool { .. } => "avg_pool",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Reshape(_) => "reshape",
            Op::CrossEntropy { .. } => "softmax_cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::Linear {
                input,
                weight,
                bias,
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                ..
            } => {
                let mut v = vec![*input];
                v.extend(scale);
                v.extend(shift);
                v
            }
            Op::Relu(a)
            | Op::AvgPool { input: a, .. }
            | Op::GlobalAvgPool(a)
            | Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::CrossEntropy { logits: a, .. } => vec![*a],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
        }
    }
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records a forward computation and replays it backward.
pub struct Tape<S: Scalar = f64> {
    nodes: Vec<Node<S>>,
    backward_calls: usize,
    macs: u64,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Output positions `o` in `0..out_len` for which `o*stride + k - pad` lies in `0..in_len`.
#[inline(always)]
fn valid_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let top = in_len + pad;
    let hi = if top > k { ((top - k - 1) / stride + 1).min(out_len) } else { 0 };
    (lo.min(hi), hi)
}

fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (len + 2 * pad).checked_sub(k).map(|r| r / stride + 1)
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_calls: 0,
            macs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of times [`Tape::backward`] has run on this tape.
    pub fn backward_calls(&self) -> usize {
        self.backward_calls
    }

    /// Multiply-accumulate count of all conv and linear ops recorded so far,
    /// summed over the batch.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.clear_grad());
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite(op.name()));
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn data(&self, v: Var) -> &[S] {
        self.nodes[v.0].value.data()
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let (o, wc, kh, kw) = self.value(weight).dims4()?;
        if wc != c {
            return dim_err(format!("conv2d: input has {c} channels, weight expects {wc}"));
        }
        if stride == 0 {
            return dim_err("conv2d: stride must be positive");
        }
        if let Some(b) = bias {
            if self.value(b).numel() != o {
                return dim_err(format!("conv2d: bias length {} != {o}", self.value(b).numel()));
            }
        }
        let (oh, ow) = match (conv_out(h, kh, stride, pad), conv_out(w, kw, stride, pad)) {
            (Some(a), Some(b)) => (a, b),
            _ => return dim_err(format!("conv2d: {kh}x{kw} kernel does not fit {h}x{w} input with pad {pad}")),
        };
        let x = self.data(input);
        let wt = self.data(weight);
        let mut out = vec![S::zero(); n * o * oh * ow];
        if let Some(b) = bias {
            let bd = self.data(b);
            for (i, chunk) in out.chunks_mut(oh * ow).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bd[i % o]);
            }
        }
        for ni in 0..n {
            for oi in 0..o {
                let ob = (ni * o + oi) * oh * ow;
                for ci in 0..c {
                    let xb = (ni * c + ci) * h * w;
                    for ki in 0..kh {
                        let (oh_lo, oh_hi) = valid_range(ki, pad, stride, h, oh);
                        for kj in 0..kw {
                            let wv = wt[((oi * c + ci) * kh + ki) * kw + kj];
                            let (ow_lo, ow_hi) = valid_range(kj, pad, stride, w, ow);
                            for y in oh_lo..oh_hi {
                                let iy = y * stride + ki - pad;
                                let orow = ob + y * ow;
                                let xrow = xb + iy * w;
                                if stride == 1 {
                                    let x0 = xrow + ow_lo + kj - pad;
                                    let xs = &x[x0..x0 + (ow_hi - ow_lo)];
                                    for (o, &xv) in out[orow + ow_lo..orow + ow_hi].iter_mut().zip(xs) {
                                        *o += wv * xv;
                                    }
                                    continue;
                                }
                                for xo in ow_lo..ow_hi {
                                    let ix = xo * stride + kj - pad;
                                    out[orow + xo] += wv * x[xrow + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.macs += (n * o * oh * ow * c * kh * kw) as u64;
        let t = Tensor::new(vec![n, o, oh, ow], out)?;
        self.push(
            t,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
        )
    }

    /// `y = x Wᵀ + b` with `x: (N, In)`, `W: (Out, In)`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, fin) = self.value(input).dims2()?;
        let (fout, win) = self.value(weight).dims2()?;
        if win != fin {
            return dim_err(format!("linear: input width {fin} != weight width {win}"));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != fout {
                return dim_err(format!("linear: bias length {} != {fout}", self.value(b).numel()));
            }
        }
        let x = self.data(input);
        let wt = self.data(weight);
        let mut out = vec![S::zero(); n * fout];
        for i in 0..n {
            let xr = &x[i * fin..(i + 1) * fin];
            for j in 0..fout {
                let wr = &wt[j * fin..(j + 1) * fin];
                let mut acc = match bias {
                    Some(b) => self.data(b)[j],
                    None => S::zero(),
                };
                for k in 0..fin {
                    acc += xr[k] * wr[k];
                }
                out[i * fout + j] = acc;
            }
        }
        self.macs += (n * fout * fin) as u64;
        let t = Tensor::new(vec![n, fout], out)?;
        self.push(t, Op::Linear { input, weight, bias })
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input).map(|v| if v.re() <= 0.0 { S::zero() } else { v });
        self.push(t, Op::Relu(input))
    }

    /// Average pooling; padded positions are excluded from the divisor.
    pub fn avg_pool(&mut self, input: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        if stride == 0 || kernel == 0 {
            return dim_err("avg_pool: kernel and stride must be positive");
        }
        let (oh, ow) = match (conv_out(h, kernel, stride, pad), conv_out(w, kernel, stride, pad)) {
            (Some(a), Some(b)) => (a, b),
            _ => return dim_err(format!("avg_pool: window {kernel} does not fit {h}x{w}")),
        };
        let x = self.data(input);
        let mut out = vec![S::zero(); n * c * oh * ow];
        for p in 0..n * c {
            let xb = p * h * w;
            for y in 0..oh {
                let (y0, y1) = pool_window(y, kernel, stride, pad, h);
                for xo in 0..ow {
                    let (x0, x1) = pool_window(xo, kernel, stride, pad, w);
                    let mut acc = S::zero();
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            acc += x[xb + iy * w + ix];
                        }
                    }
                    let cnt = ((y1 - y0) * (x1 - x0)) as f64;
                    out[(p * oh + y) * ow + xo] = acc.scale(1.0 / cnt);
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push(
            t,
            Op::AvgPool {
                input,
                kernel,
                stride,
                pad,
            },
        )
    }

    /// `(N, C, H, W) -> (N, C)`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let hw = h * w;
        let x = self.data(input);
        let out: Vec<S> = (0..n * c)
            .map(|p| {
                let mut acc = S::zero();
                for &v in &x[p * hw..(p + 1) * hw] {
                    acc += v;
                }
                acc.scale(1.0 / hw as f64)
            })
            .collect();
        let t = Tensor::new(vec![n, c], out)?;
        self.push(t, Op::GlobalAvgPool(input))
    }

    /// Batchnorm normalising with the statistics of this batch.
    ///
    /// Works on `(N, C, H, W)` and `(N, C)` inputs. Returns the observed
    /// per-channel statistics alongside the output.
    pub fn batch_norm(
        &mut self,
        input: Var,
        scale: Option<Var>,
        shift: Option<Var>,
        eps: f64,
    ) -> Result<(Var, ChannelStats)> {
        let (n, c, hw) = channel_layout(self.value(input))?;
        if n < 2 {
            return Err(TensorError::DegenerateBatch(n));
        }
        self.check_affine(scale, shift, c)?;
        let x = self.data(input);
        let m = (n * hw) as f64;
        let mut mean = vec![S::zero(); c];
        let mut var = vec![S::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let b = (ni * c + ci) * hw;
                for &v in &x[b..b + hw] {
                    mean[ci] += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v = v.scale(1.0 / m));
        for ni in 0..n {
            for ci in 0..c {
                let b = (ni * c + ci) * hw;
                for &v in &x[b..b + hw] {
                    let d = v - mean[ci];
                    var[ci] += d * d;
                }
            }
        }
        var.iter_mut().for_each(|v| *v = v.scale(1.0 / m));
        let inv_std: Vec<S> = var
            .iter()
            .map(|&v| S::one() / (v + S::from_f64(eps)).sqrt())
            .collect();
        let stats = ChannelStats {
            mean: mean.iter().map(|v| v.re()).collect(),
            var: var.iter().map(|v| v.re()).collect(),
        };
        let mut xhat = vec![S::zero(); x.len()];
        for ni in 0..n {
            for ci in 0..c {
                let b = (ni * c + ci) * hw;
                for k in b..b + hw {
                    xhat[k] = (x[k] - mean[ci]) * inv_std[ci];
                }
            }
        }
        let out = self.apply_affine(&xhat, scale, shift, n, c, hw);
        let t = Tensor::new(self.shape(input).to_vec(), out)?;
        let v = self.push(
            t,
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                frozen: false,
            },
        )?;
        Ok((v, stats))
    }

    /// Batchnorm with externally supplied statistics, treated as constants.
    pub fn batch_norm_frozen(
        &mut self,
        input: Var,
        scale: Option<Var>,
        shift: Option<Var>,
        stats: &ChannelStats,
        eps: f64,
    ) -> Result<Var> {
        let (n, c, hw) = channel_layout(self.value(input))?;
        if stats.mean.len() != c || stats.var.len() != c {
            return dim_err(format!(
                "batchnorm: {} stored channels, input has {c}",
                stats.mean.len()
            ));
        }
        self.check_affine(scale, shift, c)?;
        let x = self.data(input);
        let inv_std: Vec<S> = stats
            .var
            .iter()
            .map(|&v| S::from_f64(1.0 / (v + eps).sqrt()))
            .collect();
        let mut xhat = vec![S::zero(); x.len()];
        for ni in 0..n {
            for ci in 0..c {
                let b = (ni * c + ci) * hw;
                let mu = S::from_f64(stats.mean[ci]);
                for k in b..b + hw {
                    xhat[k] = (x[k] - mu) * inv_std[ci];
                }
            }
        }
        let out = self.apply_affine(&xhat, scale, shift, n, c, hw);
        let t = Tensor::new(self.shape(input).to_vec(), out)?;
        self.push(
            t,
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                frozen: true,
            },
        )
    }

    fn check_affine(&self, scale: Option<Var>, shift: Option<Var>, c: usize) -> Result<()> {
        for p in scale.iter().chain(shift.iter()) {
            if self.value(*p).numel() != c {
                return dim_err(format!(
                    "batchnorm: affine parameter length {} != {c}",
                    self.value(*p).numel()
                ));
            }
        }
        Ok(())
    }

    fn apply_affine(
        &self,
        xhat: &[S],
        scale: Option<Var>,
        shift: Option<Var>,
        n: usize,
        c: usize,
        hw: usize,
    ) -> Vec<S> {
        let gamma = scale.map(|s| self.data(s));
        let beta = shift.map(|s| self.data(s));
        let mut out = xhat.to_vec();
        for ni in 0..n {
            for ci in 0..c {
                let b = (ni * c + ci) * hw;
                for v in &mut out[b..b + hw] {
                    if let Some(g) = gamma {
                        *v = *v * g[ci];
                    }
                    if let Some(bt) = beta {
                        *v += bt[ci];
                    }
                }
            }
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(t, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let t = self.value(a).map(|v| v.scale(k));
        self.push(t, Op::Scale(a, k))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let mut acc = S::zero();
        for &v in self.data(a) {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        self.push(t, Op::Reshape(a))
    }

    /// Flattens `(N, ...)` to `(N, rest)`.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(a, vec![n, rest])
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = self.value(logits).dims2()?;
        if labels.len() != n {
            return dim_err(format!("cross-entropy: {} labels for {n} rows", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return dim_err(format!("cross-entropy: label {bad} outside 0..{k}"));
        }
        let z = self.data(logits);
        let mut probs = vec![S::zero(); n * k];
        let mut total = S::zero();
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let mut m = row[0];
            for &v in row {
                if v.re() > m.re() {
                    m = v;
                }
            }
            let mut se = S::zero();
            for &v in row {
                se += (v - m).exp();
            }
            let lse = m + se.ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
            total += lse - row[labels[i]];
        }
        let loss = total.scale(1.0 / n as f64);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `root`.
    ///
    /// Adjoints are added into the gradient slot of every node that tracks
    /// gradients, so calling this twice without [`Tape::zero_grads`] doubles
    /// every gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        self.backward_calls += 1;
        let n = root.0 + 1;
        let mut adj: Vec<Option<Vec<S>>> = vec![None; n];
        adj[root.0] = Some(vec![S::one()]);
        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            for (v, contrib) in self.vjp(i, &g) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(contrib),
                }
            }
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` against its upstream adjoint `g`.
    fn vjp(&self, i: usize, g: &[S]) -> Vec<(Var, Vec<S>)> {
        let node = &self.nodes[i];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let (stride, pad) = (*stride, *pad);
                let (n, c, h, w) = self.value(*input).dims4().expect("recorded shape");
                let (o, _, kh, kw) = self.value(*weight).dims4().expect("recorded shape");
                let (_, _, oh, ow) = node.value.dims4().expect("recorded shape");
                let x = self.data(*input);
                let wt = self.data(*weight);
                let want_x = needs(*input);
                let want_w = needs(*weight);
                let mut gx = vec![S::zero(); if want_x { x.len() } else { 0 }];
                let mut gw = vec![S::zero(); if want_w { wt.len() } else { 0 }];
                for ni in 0..n {
                    for oi in 0..o {
                        let ob = (ni * o + oi) * oh * ow;
                        for ci in 0..c {
                            let xb = (ni * c + ci) * h * w;
                            for ki in 0..kh {
                                let (oh_lo, oh_hi) = valid_range(ki, pad, stride, h, oh);
                                for kj in 0..kw {
                                    let widx = ((oi * c + ci) * kh + ki) * kw + kj;
                                    let wv = wt[widx];
                                    let (ow_lo, ow_hi) = valid_range(kj, pad, stride, w, ow);
                                    let mut acc = S::zero();
                                    for y in oh_lo..oh_hi {
                                        let iy = y * stride + ki - pad;
                                        let grow = ob + y * ow;
                                        let xrow = xb + iy * w;
                                        if stride == 1 {
                                            let len = ow_hi - ow_lo;
                                            let x0 = xrow + ow_lo + kj - pad;
                                            let gs = &g[grow + ow_lo..grow + ow_lo + len];
                                            if want_x {
                                                for (d, &gv) in gx[x0..x0 + len].iter_mut().zip(gs) {
                                                    *d += wv * gv;
                                                }
                                            }
                                            if want_w {
                                                for (&xv, &gv) in x[x0..x0 + len].iter().zip(gs) {
                                                    acc += xv * gv;
                                                }
                                            }
                                            continue;
                                        }
                                        for xo in ow_lo..ow_hi {
                                            let ix = xo * stride + kj - pad;
                                            let gv = g[grow + xo];
                                            if want_x {
                                                gx[xrow + ix] += wv * gv;
                                            }
                                            if want_w {
                                                acc += x[xrow + ix] * gv;
                                            }
                                        }
                                    }
                                    if want_w {
                                        gw[widx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if want_x {
                    out.push((*input, gx));
                }
                if want_w {
                    out.push((*weight, gw));
                }
                if let Some(b) = bias {
                    if needs(*b) {
                        let mut gb = vec![S::zero(); o];
                        for (p, chunk) in g.chunks(oh * ow).enumerate() {
                            for &v in chunk {
                                gb[p % o] += v;
                            }
                        }
                        out.push((*b, gb));
                    }
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (n, fin) = self.value(*input).dims2().expect("recorded shape");
                let fout = g.len() / n;
                let x = self.data(*input);
                let wt = self.data(*weight);
                if needs(*input) {
                    let mut gx = vec![S::zero(); n * fin];
                    for i in 0..n {
                        for j in 0..fout {
                            let gv = g[i * fout + j];
                            for k in 0..fin {
                                gx[i * fin + k] += gv * wt[j * fin + k];
                            }
                        }
                    }
                    out.push((*input, gx));
                }
                if needs(*weight) {
                    let mut gw = vec![S::zero(); fout * fin];
                    for i in 0..n {
                        for j in 0..fout {
                            let gv = g[i * fout + j];
                            for k in 0..fin {
                                gw[j * fin + k] += gv * x[i * fin + k];
                            }
                        }
                    }
                    out.push((*weight, gw));
                }
                if let Some(b) = bias {
                    if needs(*b) {
                        let mut gb = vec![S::zero(); fout];
                        for i in 0..n {
                            for j in 0..fout {
                                gb[j] += g[i * fout + j];
                            }
                        }
                        out.push((*b, gb));
                    }
                }
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                let gx = x
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| if xv.re() > 0.0 { gv } else { S::zero() })
                    .collect();
                out.push((*a, gx));
            }
            Op::AvgPool {
                input,
                kernel,
                stride,
                pad,
            } => {
                let (n, c, h, w) = self.value(*input).dims4().expect("recorded shape");
                let (_, _, oh, ow) = node.value.dims4().expect("recorded shape");
                let mut gx = vec![S::zero(); n * c * h * w];
                for p in 0..n * c {
                    let xb = p * h * w;
                    for y in 0..oh {
                        let (y0, y1) = pool_window(y, *kernel, *stride, *pad, h);
                        for xo in 0..ow {
                            let (x0, x1) = pool_window(xo, *kernel, *stride, *pad, w);
                            let cnt = ((y1 - y0) * (x1 - x0)) as f64;
                            let gv = g[(p * oh + y) * ow + xo].scale(1.0 / cnt);
                            for iy in y0..y1 {
                                for ix in x0..x1 {
                                    gx[xb + iy * w + ix] += gv;
                                }
                            }
                        }
                    }
                }
                out.push((*input, gx));
            }
            Op::GlobalAvgPool(a) => {
                let (n, c, h, w) = self.value(*a).dims4().expect("recorded shape");
                let hw = h * w;
                let mut gx = vec![S::zero(); n * c * hw];
                for p in 0..n * c {
                    let gv = g[p].scale(1.0 / hw as f64);
                    gx[p * hw..(p + 1) * hw].iter_mut().for_each(|v| *v = gv);
                }
                out.push((*a, gx));
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                frozen,
            } => {
                let (n, c, hw) = channel_layout(self.value(*input)).expect("recorded shape");
                let gamma = scale.map(|s| self.data(s));
                let m = (n * hw) as f64;
                // dL/dxhat
                let mut dxhat = g.to_vec();
                if let Some(gm) = gamma {
                    for ni in 0..n {
                        for ci in 0..c {
                            let b = (ni * c + ci) * hw;
                            dxhat[b..b + hw].iter_mut().for_each(|v| *v = *v * gm[ci]);
                        }
                    }
                }
                if needs(*input) {
                    let mut gx = vec![S::zero(); dxhat.len()];
                    if *frozen {
                        for ni in 0..n {
                            for ci in 0..c {
                                let b = (ni * c + ci) * hw;
                                for k in b..b + hw {
                                    gx[k] = dxhat[k] * inv_std[ci];
                                }
                            }
                        }
                    } else {
                        let mut s1 = vec![S::zero(); c];
                        let mut s2 = vec![S::zero(); c];
                        for ni in 0..n {
                            for ci in 0..c {
                                let b = (ni * c + ci) * hw;
                                for k in b..b + hw {
                                    s1[ci] += dxhat[k];
                                    s2[ci] += dxhat[k] * xhat[k];
                                }
                            }
                        }
                        for ni in 0..n {
                            for ci in 0..c {
                                let b = (ni * c + ci) * hw;
                                let k0 = inv_std[ci].scale(1.0 / m);
                                for k in b..b + hw {
                                    gx[k] = k0 * (dxhat[k].scale(m) - s1[ci] - xhat[k] * s2[ci]);
                                }
                            }
                        }
                    }
                    out.push((*input, gx));
                }
                if let Some(s) = scale {
                    if needs(*s) {
                        let mut gs = vec![S::zero(); c];
                        for ni in 0..n {
                            for ci in 0..c {
                                let b = (ni * c + ci) * hw;
                                for k in b..b + hw {
                                    gs[ci] += g[k] * xhat[k];
                                }
                            }
                        }
                        out.push((*s, gs));
                    }
                }
                if let Some(s) = shift {
                    if needs(*s) {
                        let mut gs = vec![S::zero(); c];
                        for ni in 0..n {
                            for ci in 0..c {
                                let b = (ni * c + ci) * hw;
                                for &v in &g[b..b + hw] {
                                    gs[ci] += v;
                                }
                            }
                        }
                        out.push((*s, gs));
                    }
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (self.data(*a), self.data(*b));
                if needs(*a) {
                    out.push((*a, g.iter().zip(xb).map(|(&gv, &v)| gv * v).collect()));
                }
                if needs(*b) {
                    out.push((*b, g.iter().zip(xa).map(|(&gv, &v)| gv * v).collect()));
                }
            }
            Op::Scale(a, k) => {
                out.push((*a, g.iter().map(|v| v.scale(*k)).collect()));
            }
            Op::Sum(a) => {
                out.push((*a, vec![g[0]; self.value(*a).numel()]));
            }
            Op::Reshape(a) => {
                out.push((*a, g.to_vec()));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let k = probs.len() / n;
                let gs = g[0].scale(1.0 / n as f64);
                let mut gz = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    gz[i * k + l] = gz[i * k + l] - S::one();
                }
                gz.iter_mut().for_each(|v| *v = *v * gs);
                out.push((*logits, gz));
            }
        }
        out
    }
}

fn pool_window(o: usize, kernel: usize, stride: usize, pad: usize, len: usize) -> (usize, usize) {
    let start = (o * stride) as isize - pad as isize;
    let lo = start.max(0) as usize;
    let hi = ((start + kernel as isize).max(0) as usize).min(len);
    (lo, hi.max(lo))
}

/// `(batch, channels, positions per channel)` for NCHW or NC tensors.
fn channel_layout<S: Scalar>(t: &Tensor<S>) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [n, c, h, w] => Ok((*n, *c, h * w)),
        [n, c] => Ok((*n, *c, 1)),
        s => dim_err(format!("batchnorm expects NCHW or NC input, got {s:?}")),
    }
}
