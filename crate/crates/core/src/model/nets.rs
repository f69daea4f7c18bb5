use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, tag};
use crate::tensor::{Bound, ChannelStats, Graph, Padding, ParamSet, Tensor, Var};

use super::config::SaganConfig;
use super::layers::{absorb_stats, add_batchnorm, add_conv, add_residual_block, Ctx, Forward, NetMode};

/// Shared plumbing: every network owns a parameter set and consumes `[m, k]`
/// feature batches.
pub trait Network {
    fn dim(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, mode: NetMode) -> Result<Forward>;

    /// Folds batch-norm moments from a training forward pass into the
    /// running statistics.
    fn absorb(&mut self, stats: &[(String, ChannelStats)]) -> Result<()> {
        absorb_stats(self.params_mut(), stats)
    }

    /// Forward pass on constants, returning the output values. Eval mode
    /// is row-independent and runs in chunks of [`INFER_CHUNK`] rows.
    fn infer(&self, x: &Matrix, mode: NetMode) -> Result<Tensor> {
        check_input(self.dim(), x)?;
        let chunk = match mode {
            NetMode::Eval => INFER_CHUNK,
            NetMode::Train => x.rows(),
        };
        let mut shape = Vec::new();
        let mut data = Vec::new();
        for start in (0..x.rows()).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(x.rows())).collect();
            let part = x.select_rows(&idx);
            let mut g = Graph::new();
            let bound = self.params().bind(&mut g, false);
            let xv = g.leaf(vec![part.rows(), part.cols()], part.into_data(), false);
            let f = self.forward(&mut g, &bound, xv, mode)?;
            shape = g.shape(f.out).to_vec();
            data.extend_from_slice(g.value(f.out));
        }
        shape[0] = x.rows();
        Tensor::new(shape, data)
    }
}

pub const INFER_CHUNK: usize = 256;

fn check_input(dim: usize, x: &Matrix) -> Result<()> {
    if x.cols() != dim {
        return Err(Error::shape(
            "network",
            format!("expected {dim} features, got {}", x.cols()),
        ));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

fn check_var(g: &Graph, dim: usize, x: Var) -> Result<usize> {
    match g.shape(x) {
        [m, k] if *k == dim && *m > 0 => Ok(*m),
        s => Err(Error::shape("network", format!("expected [m, {dim}] input, got {s:?}"))),
    }
}

/// Maps a (noised) source window to a same-sized synthetic target window.
///
/// Residual conv trunk followed by a single-channel projection; the input is
/// carried around the trunk and a learnable per-coordinate offset is added
/// before the `tanh`, so the map starts near `tanh(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    dim: usize,
    n_blocks: usize,
    slope: f64,
    params: ParamSet,
}

impl GeneratorNet {
    pub fn new(dim: usize, cfg: &SaganConfig, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("generator dimension must be positive"));
        }
        let mut rng = stream(seed, &[tag("generator")]);
        let mut p = ParamSet::new();
        add_conv(&mut p, "lift", cfg.g_f, 1, 3, 1.0, &mut rng)?;
        for b in 0..cfg.n_blocks {
            add_residual_block(&mut p, &format!("block{b}"), cfg.g_f, &mut rng)?;
        }
        add_conv(&mut p, "proj", 1, cfg.g_f, 3, 0.1, &mut rng)?;
        p.insert("offset", Tensor::zeros(vec![dim]).with_requires_grad(true))?;
        Ok(Self {
            dim,
            n_blocks: cfg.n_blocks,
            slope: cfg.leaky_slope,
            params: p,
        })
    }

    /// `G(x_s + z)` without gradient tracking.
    pub fn generate(&self, x_s: &Matrix, z: &Matrix, mode: NetMode) -> Result<Matrix> {
        if x_s.rows() != z.rows() || x_s.cols() != z.cols() {
            return Err(Error::shape("generate", "noise and source shapes differ"));
        }
        let noised = Matrix::new(
            x_s.rows(),
            x_s.cols(),
            x_s.data().iter().zip(z.data()).map(|(a, b)| a + b).collect(),
        )?;
        let t = self.infer(&noised, mode)?;
        Matrix::new(x_s.rows(), x_s.cols(), t.into_data())
    }
}

impl Network for GeneratorNet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, mode: NetMode) -> Result<Forward> {
        let m = check_var(g, self.dim, x)?;
        let mut cx = Ctx {
            g,
            bound,
            params: &self.params,
            mode,
            slope: self.slope,
            stats: Vec::new(),
        };
        let h = cx.g.reshape(x, vec![m, 1, self.dim])?;
        let h = cx.conv("lift", h, 1, Padding::Same)?;
        let mut h = cx.leaky(h)?;
        for b in 0..self.n_blocks {
            h = cx.residual(&format!("block{b}"), h)?;
        }
        let h = cx.conv("proj", h, 1, Padding::Same)?;
        let h = cx.g.reshape(h, vec![m, self.dim])?;
        let h = cx.g.add(h, x)?;
        let h = cx.g.add_broadcast(h, bound.var("offset")?)?;
        let out = cx.g.tanh(h);
        Ok(Forward { out, stats: cx.stats })
    }
}

/// Scores windows as real target data (towards 0.9) or generated (towards -1).
///
/// Strided conv stack, batch norm after the first layer only, closed by a
/// full-length conv that yields one `tanh` score per window.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    dim: usize,
    layers: usize,
    head_len: usize,
    slope: f64,
    params: ParamSet,
}

impl DiscriminatorNet {
    pub fn new(dim: usize, cfg: &SaganConfig, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("discriminator dimension must be positive"));
        }
        let mut rng = stream(seed, &[tag("discriminator")]);
        let mut p = ParamSet::new();
        let mut c_in = 1;
        let mut len = dim;
        for l in 0..cfg.d_f {
            let c_out = cfg.d_base_filters << l;
            add_conv(&mut p, &format!("conv{l}"), c_out, c_in, 3, 1.0, &mut rng)?;
            if l == 0 {
                add_batchnorm(&mut p, "bn0", c_out)?;
            }
            c_in = c_out;
            len = len.div_ceil(2);
        }
        add_conv(&mut p, "head", 1, c_in, len, 1.0, &mut rng)?;
        Ok(Self {
            dim,
            layers: cfg.d_f,
            head_len: len,
            slope: cfg.leaky_slope,
            params: p,
        })
    }

    /// Per-window scores in (-1, 1).
    pub fn validity(&self, x: &Matrix, mode: NetMode) -> Result<Vec<f64>> {
        Ok(self.infer(x, mode)?.into_data())
    }

    pub fn head_len(&self) -> usize {
        self.head_len
    }
}

impl Network for DiscriminatorNet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, mode: NetMode) -> Result<Forward> {
        let m = check_var(g, self.dim, x)?;
        let mut cx = Ctx {
            g,
            bound,
            params: &self.params,
            mode,
            slope: self.slope,
            stats: Vec::new(),
        };
        let mut h = cx.g.reshape(x, vec![m, 1, self.dim])?;
        for l in 0..self.layers {
            h = cx.conv(&format!("conv{l}"), h, 2, Padding::Same)?;
            if l == 0 {
                h = cx.bn("bn0", h)?;
            }
            h = cx.leaky(h)?;
        }
        let h = cx.conv("head", h, 1, Padding::Valid)?;
        let h = cx.g.reshape(h, vec![m])?;
        let out = cx.g.tanh(h);
        Ok(Forward { out, stats: cx.stats })
    }
}

/// Activity classifier: residual conv trunk with a full-length conv head
/// producing `n_classes` logits per window.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierNet {
    dim: usize,
    n_classes: usize,
    n_blocks: usize,
    slope: f64,
    params: ParamSet,
}

impl ClassifierNet {
    pub fn new(dim: usize, n_classes: usize, cfg: &SaganConfig, seed: u64) -> Result<Self> {
        if dim == 0 || n_classes < 2 {
            return Err(Error::invalid(format!(
                "classifier needs dim > 0 and at least two classes (dim {dim}, classes {n_classes})"
            )));
        }
        let mut rng = stream(seed, &[tag("classifier")]);
        let mut p = ParamSet::new();
        add_conv(&mut p, "lift", cfg.c_f, 1, 3, 1.0, &mut rng)?;
        for b in 0..cfg.n_blocks {
            add_residual_block(&mut p, &format!("block{b}"), cfg.c_f, &mut rng)?;
        }
        add_conv(&mut p, "head", n_classes, cfg.c_f, dim, 1.0, &mut rng)?;
        Ok(Self {
            dim,
            n_classes,
            n_blocks: cfg.n_blocks,
            slope: cfg.leaky_slope,
            params: p,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Eval-mode logits, `[m, n_classes]`.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let t = self.infer(x, NetMode::Eval)?;
        Matrix::new(x.rows(), self.n_classes, t.into_data())
    }

    /// Arg-max class per window; ties go to the lower class id.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Network for ClassifierNet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, mode: NetMode) -> Result<Forward> {
        let m = check_var(g, self.dim, x)?;
        let mut cx = Ctx {
            g,
            bound,
            params: &self.params,
            mode,
            slope: self.slope,
            stats: Vec::new(),
        };
        let h = cx.g.reshape(x, vec![m, 1, self.dim])?;
        let h = cx.conv("lift", h, 1, Padding::Same)?;
        let mut h = cx.leaky(h)?;
        for b in 0..self.n_blocks {
            h = cx.residual(&format!("block{b}"), h)?;
        }
        let h = cx.conv("head", h, 1, Padding::Valid)?;
        let out = cx.g.reshape(h, vec![m, self.n_classes])?;
        Ok(Forward { out, stats: cx.stats })
    }
}
