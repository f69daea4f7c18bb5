use crate::error::{Error, Result};

use super::Tensor;

pub const BN_EPS: f64 = 1e-5;
/// Running statistic update: `running = BN_MOMENTUM * running + (1 - BN_MOMENTUM) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output length `ceil(length / stride)`; equals `length` at stride 1.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel batch moments (population variance).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ChannelStats {
    /// Folds these batch moments into running estimates.
    pub fn update_running(&self, running_mean: &mut [f64], running_var: &mut [f64]) {
        for (r, b) in running_mean.iter_mut().zip(&self.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in running_var.iter_mut().zip(&self.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Right operand repeats over the leading elements of the left one.
    AddBroadcast(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad_left: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    SoftmaxCe {
        logits: Var,
        probs: Vec<f64>,
        target: Vec<f64>,
    },
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Append-only tape. Nodes are stored in creation order, which is a
/// topological order, so the backward sweep is a reverse scan.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn conv_out_len(len: usize, k: usize, stride: usize, padding: Padding) -> (usize, usize, usize) {
    match padding {
        Padding::Same => {
            let pl = (k - 1) / 2;
            let pr = k - 1 - pl;
            (pl, pr, (len + pl + pr - k) / stride + 1)
        }
        Padding::Valid => (0, 0, (len - k) / stride + 1),
    }
}

/// Range of output positions `t` for which `t * stride + j - pad_left` lies in `0..len`.
fn tap_range(len: usize, out_len: usize, stride: usize, j: usize, pad_left: usize) -> (usize, usize) {
    let lo = if j >= pad_left {
        0
    } else {
        (pad_left - j).div_ceil(stride)
    };
    if len + pad_left <= j {
        return (0, 0);
    }
    let hi = ((len - 1 + pad_left - j) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Shapes of one conv1d call, lowered to matrix products over an
/// im2col buffer of shape `[cin * k, b * out_len]`.
struct ConvGeometry {
    b: usize,
    cin: usize,
    len: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pl: usize,
    out_len: usize,
}

impl ConvGeometry {
    fn n(&self) -> usize {
        self.b * self.out_len
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut cols = vec![0.0; self.cin * self.k * n];
        for c in 0..self.cin {
            for j in 0..self.k {
                let row = &mut cols[(c * self.k + j) * n..][..n];
                let (lo, hi) = tap_range(self.len, self.out_len, self.stride, j, self.pl);
                for bi in 0..self.b {
                    let xb = &x[(bi * self.cin + c) * self.len..][..self.len];
                    let rb = &mut row[bi * self.out_len..][..self.out_len];
                    for t in lo..hi {
                        rb[t] = xb[t * self.stride + j - self.pl];
                    }
                }
            }
        }
        cols
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let n = self.n();
        for c in 0..self.cin {
            for j in 0..self.k {
                let row = &cols[(c * self.k + j) * n..][..n];
                let (lo, hi) = tap_range(self.len, self.out_len, self.stride, j, self.pl);
                for bi in 0..self.b {
                    let xb = &mut dx[(bi * self.cin + c) * self.len..][..self.len];
                    let rb = &row[bi * self.out_len..][..self.out_len];
                    for t in lo..hi {
                        xb[t * self.stride + j - self.pl] += rb[t];
                    }
                }
            }
        }
    }

    /// `[cout, b * out_len]` -> `[b, cout, out_len]`.
    fn to_batch_major(&self, y: &[f64]) -> Vec<f64> {
        let (n, l) = (self.n(), self.out_len);
        let mut out = vec![0.0; self.b * self.cout * l];
        for (bi, ob) in out.chunks_mut(self.cout * l).enumerate() {
            for (o, dst) in ob.chunks_mut(l).enumerate() {
                dst.copy_from_slice(&y[o * n + bi * l..][..l]);
            }
        }
        out
    }

    fn to_channel_major(&self, g: &[f64]) -> Vec<f64> {
        let (n, l) = (self.n(), self.out_len);
        let mut y = vec![0.0; self.cout * n];
        for (bi, gb) in g.chunks(self.cout * l).enumerate() {
            for (o, src) in gb.chunks(l).enumerate() {
                y[o * n + bi * l..][..l].copy_from_slice(src);
            }
        }
        y
    }

    /// `W[cout, cin*k] * cols`.
    fn gemm_w_cols(&self, w: &[f64], cols: &[f64]) -> Vec<f64> {
        let (m, kk, n) = (self.cout, self.cin * self.k, self.n());
        let mut y = vec![0.0; m * n];
        // SAFETY: slices hold exactly m*kk, kk*n and m*n row-major elements.
        unsafe {
            matrixmultiply::dgemm(
                m,
                kk,
                n,
                1.0,
                w.as_ptr(),
                kk as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                0.0,
                y.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        y
    }

    /// `gy[cout, n] * cols^T`.
    fn gemm_grad_w(&self, gy: &[f64], cols: &[f64]) -> Vec<f64> {
        let (m, kk, n) = (self.cout, self.cin * self.k, self.n());
        let mut dw = vec![0.0; m * kk];
        // SAFETY: as above; cols is read transposed through its strides.
        unsafe {
            matrixmultiply::dgemm(
                m,
                n,
                kk,
                1.0,
                gy.as_ptr(),
                n as isize,
                1,
                cols.as_ptr(),
                1,
                n as isize,
                0.0,
                dw.as_mut_ptr(),
                kk as isize,
                1,
            );
        }
        dw
    }

    /// `W^T * gy[cout, n]`.
    fn gemm_grad_cols(&self, w: &[f64], gy: &[f64]) -> Vec<f64> {
        let (m, kk, n) = (self.cout, self.cin * self.k, self.n());
        let mut d = vec![0.0; kk * n];
        // SAFETY: as above; w is read transposed through its strides.
        unsafe {
            matrixmultiply::dgemm(
                kk,
                m,
                n,
                1.0,
                w.as_ptr(),
                1,
                kk as isize,
                gy.as_ptr(),
                n as isize,
                1,
                0.0,
                d.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        d
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Var {
        self.push(shape, data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.leaf(t.shape().to_vec(), t.data().to_vec(), false)
    }

    pub fn input(&mut self, t: &Tensor) -> Var {
        self.leaf(t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.leaf(shape, value, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("graph nodes hold consistent shapes")
    }

    /// Clears all gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, value, rg, rec))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a + b` where `b` is tiled over `a`; `b.len()` must divide `a.len()`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.value(a).len(), self.value(b).len());
        if na % nb != 0 {
            return Err(Error::shape(
                "add_broadcast",
                format!("{:?} does not tile {:?}", self.shape(b), self.shape(a)),
            ));
        }
        let bv = self.value(b);
        let value = self.value(a).iter().enumerate().map(|(i, &x)| x + bv[i % nb]).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, value, rg, Op::AddBroadcast(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(shape, value, rg, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(vec![1], vec![s], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[a]);
        self.push(vec![1], vec![s], rg, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).len() || shape.contains(&0) {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape(a))));
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, value, rg, Op::Reshape(a)))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Result<Var> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("leaky_relu slope {alpha} outside (0,1)")));
        }
        let value = self
            .value(a)
            .iter()
            .map(|&x| if x >= 0.0 { x } else { alpha * x })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, value, rg, Op::LeakyRelu(a, alpha)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(shape, value, rg, Op::Tanh(a))
    }

    /// Cross-correlation over `[batch, channels_in, length]` with a
    /// `[channels_out, channels_in, k]` kernel.
    pub fn conv1d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(kernel);
        if xs.len() != 3 {
            return Err(Error::shape("conv1d", format!("input must be rank 3, got {xs:?}")));
        }
        if ws.len() != 3 {
            return Err(Error::shape("conv1d", format!("kernel must be rank 3, got {ws:?}")));
        }
        let (b, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, wcin, k) = (ws[0], ws[1], ws[2]);
        if wcin != cin {
            return Err(Error::shape(
                "conv1d",
                format!("channels_in axis: input has {cin}, kernel expects {wcin}"),
            ));
        }
        if let Some(bv) = bias {
            let bs = self.shape(bv);
            if bs != [cout] {
                return Err(Error::shape(
                    "conv1d",
                    format!("channels_out axis: bias {bs:?}, kernel has {cout}"),
                ));
            }
        }
        if stride == 0 {
            return Err(Error::invalid("conv1d stride must be positive"));
        }
        let pad_total = match padding {
            Padding::Same => k - 1,
            Padding::Valid => 0,
        };
        if k > len + pad_total {
            return Err(Error::shape(
                "conv1d",
                format!("length axis: kernel {k} exceeds padded length {}", len + pad_total),
            ));
        }
        let (pl, _, out_len) = conv_out_len(len, k, stride, padding);

        let geo = ConvGeometry {
            b,
            cin,
            len,
            cout,
            k,
            stride,
            pl,
            out_len,
        };
        let cols = geo.im2col(self.value(input));
        let y = geo.gemm_w_cols(self.value(kernel), &cols);
        let mut out = geo.to_batch_major(&y);
        if let Some(bv) = bias {
            let bias_v = self.value(bv);
            for (chunk, &bo) in out.chunks_mut(out_len).zip(bias_v.iter().cycle()) {
                chunk.iter_mut().for_each(|v| *v += bo);
            }
        }
        let rg = self.rg(&[input, kernel]) || bias.is_some_and(|bv| self.rg(&[bv]));
        Ok(self.push(
            vec![b, cout, out_len],
            out,
            rg,
            Op::Conv1d {
                input,
                kernel,
                bias,
                stride,
                pad_left: pl,
            },
        ))
    }

    /// Per-channel normalisation over batch and length. Train mode returns
    /// the batch moments so the caller can decide whether to fold them into
    /// running statistics.
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<ChannelStats>)> {
        let xs = self.shape(input);
        if xs.len() != 3 {
            return Err(Error::shape("batchnorm1d", format!("input must be rank 3, got {xs:?}")));
        }
        let (b, c, len) = (xs[0], xs[1], xs[2]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "batchnorm1d",
                format!(
                    "channel axis: input has {c}, gamma {:?}, beta {:?}",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        let x = self.value(input);
        let (mean, var, batch_stats) = match mode {
            BatchNormMode::Train => {
                if b < 2 {
                    return Err(Error::invalid("batchnorm1d in train mode needs batch >= 2"));
                }
                let n = (b * len) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for bi in 0..b {
                        let base = (bi * c + ch) * len;
                        s += x[base..base + len].iter().sum::<f64>();
                    }
                    let m = s / n;
                    let mut ss = 0.0;
                    for bi in 0..b {
                        let base = (bi * c + ch) * len;
                        ss += x[base..base + len].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = ss / n;
                }
                (mean, var, true)
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::shape(
                        "batchnorm1d",
                        format!("running stats have {} / {} channels, input {c}", mean.len(), var.len()),
                    ));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma);
        let bt = self.value(beta);
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * len;
                for t in 0..len {
                    let h = (x[base + t] - mean[ch]) * inv_std[ch];
                    xhat[base + t] = h;
                    out[base + t] = g[ch] * h + bt[ch];
                }
            }
        }
        let rg = self.rg(&[input, gamma, beta]);
        let shape = xs.to_vec();
        let v = self.push(
            shape,
            out,
            rg,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        );
        Ok((v, batch_stats.then_some(ChannelStats { mean, var })))
    }

    /// Mean over the batch of `-sum(target * log_softmax(logits))`.
    /// Targets are rows of a probability simplex and receive no gradient.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[f64]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits must be [batch, classes], got {s:?}"),
            ));
        }
        let (b, k) = (s[0], s[1]);
        if target.len() != b * k {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("target has {} values, logits {}", target.len(), b * k),
            ));
        }
        for (row, chunk) in target.chunks(k).enumerate() {
            if chunk.iter().any(|&y| !(0.0..=1.0).contains(&y)) {
                return Err(Error::invalid(format!("target row {row} has entries outside [0,1]")));
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("target row {row} sums to {sum}, not 1")));
            }
        }
        let probs = softmax_rows(self.value(logits), k);
        let lg = self.value(logits);
        let mut loss = 0.0;
        for r in 0..b {
            let row = &lg[r * k..(r + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            for c in 0..k {
                let y = target[r * k + c];
                if y > 0.0 {
                    loss -= y * (row[c] - lse);
                }
            }
        }
        loss /= b as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            vec![1],
            vec![loss],
            rg,
            Op::SoftmaxCe {
                logits,
                probs,
                target: target.to_vec(),
            },
        ))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse", pred, target)?;
        let p = self.value(pred);
        let t = self.value(target);
        let m = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let rg = self.rg(&[pred, target]);
        Ok(self.push(vec![1], vec![m], rg, Op::Mse(pred, target)))
    }

    /// Reverse sweep from a scalar. Rejected if already run since the last
    /// [`Graph::reset_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward("backward already ran; call reset_grads first".into()));
        }
        if self.node(loss).value.len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                self.node(loss).shape
            )));
        }
        self.backward_done = true;
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        let Graph { nodes, grads, .. } = self;
        grads[loss.0] = Some(vec![1.0]);

        fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'g mut Vec<f64>> {
            if !nodes[v.0].requires_grad {
                return None;
            }
            let n = nodes[v.0].value.len();
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
        }

        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(ga) = acc(grads, nodes, v) {
                            ga.iter_mut().zip(&gy).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&gy).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(grads, nodes, *b) {
                        gb.iter_mut().zip(&gy).for_each(|(x, y)| *x -= y);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let da: Vec<f64> = gy.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> = gy.iter().zip(av).map(|(g, x)| g * x).collect();
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&da).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(grads, nodes, *b) {
                        gb.iter_mut().zip(&db).for_each(|(x, y)| *x += y);
                    }
                }
                Op::AddBroadcast(a, b) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&gy).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(grads, nodes, *b) {
                        let nb = gb.len();
                        for (i, y) in gy.iter().enumerate() {
                            gb[i % nb] += y;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&gy).for_each(|(x, y)| *x += c * y);
                    }
                }
                Op::Sum(a) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().for_each(|x| *x += gy[0]);
                    }
                }
                Op::Mean(a) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        let s = gy[0] / ga.len() as f64;
                        ga.iter_mut().for_each(|x| *x += s);
                    }
                }
                Op::Reshape(a) => {
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&gy).for_each(|(x, y)| *x += y);
                    }
                }
                Op::LeakyRelu(a, alpha) => {
                    let xv = &nodes[a.0].value;
                    let d: Vec<f64> = xv
                        .iter()
                        .zip(&gy)
                        .map(|(&x, &g)| if x >= 0.0 { g } else { alpha * g })
                        .collect();
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = node.value.iter().zip(&gy).map(|(&t, &g)| g * (1.0 - t * t)).collect();
                    if let Some(ga) = acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                    stride,
                    pad_left,
                } => {
                    let xsh = &nodes[input.0].shape;
                    let (b, cin, len) = (xsh[0], xsh[1], xsh[2]);
                    let wsh = &nodes[kernel.0].shape;
                    let (cout, k) = (wsh[0], wsh[2]);
                    let out_len = node.shape[2];
                    let (s, pl) = (*stride, *pad_left);
                    if let Some(bv) = bias {
                        if let Some(gb) = acc(grads, nodes, *bv) {
                            for bi in 0..b {
                                for o in 0..cout {
                                    let base = (bi * cout + o) * out_len;
                                    gb[o] += gy[base..base + out_len].iter().sum::<f64>();
                                }
                            }
                        }
                    }
                    let geo = ConvGeometry {
                        b,
                        cin,
                        len,
                        cout,
                        k,
                        stride: s,
                        pl,
                        out_len,
                    };
                    let gy_cm = geo.to_channel_major(&gy);
                    if nodes[kernel.0].requires_grad {
                        let cols = geo.im2col(&nodes[input.0].value);
                        let dw = geo.gemm_grad_w(&gy_cm, &cols);
                        let gw = acc(grads, nodes, *kernel).expect("kernel requires grad");
                        gw.iter_mut().zip(&dw).for_each(|(x, y)| *x += y);
                    }
                    if nodes[input.0].requires_grad {
                        let dcols = geo.gemm_grad_cols(&nodes[kernel.0].value, &gy_cm);
                        let gx = acc(grads, nodes, *input).expect("input requires grad");
                        geo.col2im_add(&dcols, gx);
                    }
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let sh = &node.shape;
                    let (b, c, len) = (sh[0], sh[1], sh[2]);
                    let gvals = &nodes[gamma.0].value;
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for bi in 0..b {
                        for ch in 0..c {
                            let base = (bi * c + ch) * len;
                            for t in 0..len {
                                dgamma[ch] += gy[base + t] * xhat[base + t];
                                dbeta[ch] += gy[base + t];
                            }
                        }
                    }
                    if nodes[input.0].requires_grad {
                        let mut dx = vec![0.0; b * c * len];
                        let n = (b * len) as f64;
                        for ch in 0..c {
                            let scale = gvals[ch] * inv_std[ch];
                            if *batch_stats {
                                // dgamma/dbeta are exactly the sums of dy*xhat and dy
                                let (sum_dy, sum_dy_xhat) = (dbeta[ch], dgamma[ch]);
                                for bi in 0..b {
                                    let base = (bi * c + ch) * len;
                                    for t in 0..len {
                                        dx[base + t] =
                                            scale * (gy[base + t] - sum_dy / n - xhat[base + t] * sum_dy_xhat / n);
                                    }
                                }
                            } else {
                                for bi in 0..b {
                                    let base = (bi * c + ch) * len;
                                    for t in 0..len {
                                        dx[base + t] = scale * gy[base + t];
                                    }
                                }
                            }
                        }
                        let gx = acc(grads, nodes, *input).expect("input requires grad");
                        gx.iter_mut().zip(&dx).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gg) = acc(grads, nodes, *gamma) {
                        gg.iter_mut().zip(&dgamma).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(grads, nodes, *beta) {
                        gb.iter_mut().zip(&dbeta).for_each(|(x, y)| *x += y);
                    }
                }
                Op::SoftmaxCe { logits, probs, target } => {
                    let k = nodes[logits.0].shape[1];
                    let b = nodes[logits.0].shape[0] as f64;
                    if let Some(gl) = acc(grads, nodes, *logits) {
                        for (r, (prow, trow)) in probs.chunks(k).zip(target.chunks(k)).enumerate() {
                            let tsum: f64 = trow.iter().sum();
                            for c in 0..k {
                                gl[r * k + c] += gy[0] * (tsum * prow[c] - trow[c]) / b;
                            }
                        }
                    }
                }
                Op::Mse(p, t) => {
                    let (pv, tv) = (&nodes[p.0].value, &nodes[t.0].value);
                    let n = pv.len() as f64;
                    let d: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| 2.0 * (a - b) / n * gy[0]).collect();
                    if let Some(gp) = acc(grads, nodes, *p) {
                        gp.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gt) = acc(grads, nodes, *t) {
                        gt.iter_mut().zip(&d).for_each(|(x, y)| *x -= y);
                    }
                }
            }
            grads[i] = Some(gy);
        }
        Ok(())
    }
}

/// Row-wise numerically stabilised softmax over rows of length `k`.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (oi, &z) in o.iter_mut().zip(row) {
            *oi = (z - m).exp();
            s += *oi;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
    out
}
