//! Layers with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`; calling
//! `backward` consumes the gradient with respect to the layer output and
//! returns the gradient with respect to its input, accumulating parameter
//! gradients along the way.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-call forward state: mode plus the dropout stream.
pub struct ForwardCtx<'a> {
    pub mode: Mode,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            rng: None,
        }
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            mode: Mode::Train,
            rng: Some(rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, for layers feeding a ReLU.
    HeUniform,
    /// `U(-sqrt(6/(fan_in+fan_out)), ..)`.
    XavierUniform,
}

fn init_tensor<T: Real>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    init: Init,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let bound = match init {
        Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
        Init::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))
}

fn expect_rank<T: Real>(x: &Tensor<T>, rank: usize, layer: &str) -> Result<()> {
    if x.ndim() != rank {
        return Err(Error::config(format!(
            "{layer} expects a rank-{rank} input, got shape {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn missing_cache(layer: &str) -> Error {
    Error::config(format!("{layer}: backward called before forward"))
}

/// Output length of a strided 1-D convolution.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Untrimmed output length of a transposed 1-D convolution.
pub fn deconv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if len == 0 {
        return None;
    }
    ((len - 1) * stride + kernel).checked_sub(2 * padding)
}

/// `cols[(c*k + j), o] = x[c, o*stride + j - padding]`, zero outside the signal.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
    cols: &mut [T],
) {
    for c in 0..channels {
        let xs = &x[c * len..(c + 1) * len];
        for j in 0..kernel {
            let row = &mut cols[(c * kernel + j) * out_len..(c * kernel + j + 1) * out_len];
            for (o, slot) in row.iter_mut().enumerate() {
                let pos = (o * stride + j) as isize - padding as isize;
                *slot = if pos >= 0 && (pos as usize) < len {
                    xs[pos as usize]
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back onto a signal.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
    x: &mut [T],
) {
    for c in 0..channels {
        let xs = &mut x[c * len..(c + 1) * len];
        for j in 0..kernel {
            let row = &cols[(c * kernel + j) * out_len..(c * kernel + j + 1) * out_len];
            for (o, &v) in row.iter().enumerate() {
                let pos = (o * stride + j) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    xs[pos as usize] = xs[pos as usize] + v;
                }
            }
        }
    }
}

/// 1-D convolution. Weight shape `[out_channels, in_channels, kernel]`.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel;
        let fan_out = out_channels * kernel;
        let w = init_tensor(&[out_channels, in_channels, kernel], fan_in, fan_out, init, rng);
        Self::from_weights(w, Tensor::zeros(&[out_channels]), stride, padding)
            .expect("consistent shapes")
    }

    pub fn from_weights(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if weight.ndim() != 3 || bias.shape() != [weight.dim(0)] || stride == 0 {
            return Err(Error::config(format!(
                "conv1d weight {:?} / bias {:?} / stride {stride} inconsistent",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            stride,
            padding,
            input: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(2)
    }

    pub fn out_len(&self, len: usize) -> Option<usize> {
        conv_out_len(len, self.kernel(), self.stride, self.padding)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching (no backward possible afterwards).
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_rank(x, 3, "conv1d")?;
        let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, k) = (self.out_channels(), self.kernel());
        if cin != self.in_channels() {
            return Err(Error::config(format!(
                "conv1d expects {} input channels, got {cin}",
                self.in_channels()
            )));
        }
        let lout = self.out_len(len).ok_or_else(|| {
            Error::config(format!(
                "conv1d: length {len} + 2*{} padding shorter than kernel {k}",
                self.padding
            ))
        })?;
        let mut out = Tensor::zeros(&[b, cout, lout]);
        let mut cols = vec![T::zero(); cin * k * lout];
        for n in 0..b {
            im2col(x.row(n), cin, len, k, self.stride, self.padding, lout, &mut cols);
            let y = out.row_mut(n);
            for (co, chunk) in y.chunks_mut(lout).enumerate() {
                chunk.fill(self.bias.value.data()[co]);
            }
            gemm(cout, cin * k, lout, T::one(), self.weight.value.data(), false, &cols, false, T::one(), y);
        }
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("conv1d"))?;
        let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, k) = (self.out_channels(), self.kernel());
        let lout = g.dim(2);
        let mut dx = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); cin * k * lout];
        let mut dcols = vec![T::zero(); cin * k * lout];
        for n in 0..b {
            let gn = g.row(n);
            im2col(x.row(n), cin, len, k, self.stride, self.padding, lout, &mut cols);
            gemm(cout, lout, cin * k, T::one(), gn, false, &cols, true, T::one(), self.weight.grad.data_mut());
            for (co, chunk) in gn.chunks(lout).enumerate() {
                let s: T = chunk.iter().copied().sum();
                let db = &mut self.bias.grad.data_mut()[co];
                *db = *db + s;
            }
            gemm(cin * k, cout, lout, T::one(), self.weight.value.data(), true, gn, false, T::zero(), &mut dcols);
            col2im(&dcols, cin, len, k, self.stride, self.padding, lout, dx.row_mut(n));
        }
        Ok(dx)
    }
}

/// Transposed 1-D convolution. Weight shape `[in_channels, out_channels, kernel]`
/// so it shares storage layout with the [`Conv1d`] it is the adjoint of.
#[derive(Debug, Clone)]
pub struct Deconv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
    /// Requested output length; the nominal output is trimmed on the right.
    pub output_len: Option<usize>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Deconv1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_len: Option<usize>,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel;
        let fan_out = out_channels * kernel;
        let w = init_tensor(&[in_channels, out_channels, kernel], fan_in, fan_out, init, rng);
        Self::from_weights(w, Tensor::zeros(&[out_channels]), stride, padding, output_len)
            .expect("consistent shapes")
    }

    pub fn from_weights(
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: usize,
        output_len: Option<usize>,
    ) -> Result<Self> {
        if weight.ndim() != 3 || bias.shape() != [weight.dim(1)] || stride == 0 {
            return Err(Error::config(format!(
                "deconv1d weight {:?} / bias {:?} / stride {stride} inconsistent",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            stride,
            padding,
            output_len,
            input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(2)
    }

    pub fn nominal_len(&self, len: usize) -> Option<usize> {
        deconv_out_len(len, self.kernel(), self.stride, self.padding)
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        let nominal = self.nominal_len(len).ok_or_else(|| {
            Error::config(format!("deconv1d: padding {} too large", self.padding))
        })?;
        match self.output_len {
            Some(l) if l > nominal => Err(Error::config(format!(
                "deconv1d: requested length {l} exceeds nominal output length {nominal}"
            ))),
            Some(l) => Ok(l),
            None => Ok(nominal),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_rank(x, 3, "deconv1d")?;
        let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        if cin != self.in_channels() {
            return Err(Error::config(format!(
                "deconv1d expects {} input channels, got {cin}",
                self.in_channels()
            )));
        }
        let (cout, k) = (self.out_channels(), self.kernel());
        let lout = self.out_len(len)?;
        let mut out = Tensor::zeros(&[b, cout, lout]);
        let mut cols = vec![T::zero(); cout * k * len];
        for n in 0..b {
            gemm(cout * k, cin, len, T::one(), self.weight.value.data(), true, x.row(n), false, T::zero(), &mut cols);
            let y = out.row_mut(n);
            for (co, chunk) in y.chunks_mut(lout).enumerate() {
                chunk.fill(self.bias.value.data()[co]);
            }
            col2im(&cols, cout, lout, k, self.stride, self.padding, len, y);
        }
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("deconv1d"))?;
        let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
        let (cout, k) = (self.out_channels(), self.kernel());
        let lout = g.dim(2);
        let mut dx = Tensor::zeros(x.shape());
        let mut gcols = vec![T::zero(); cout * k * len];
        for n in 0..b {
            let gn = g.row(n);
            for (co, chunk) in gn.chunks(lout).enumerate() {
                let s: T = chunk.iter().copied().sum();
                let db = &mut self.bias.grad.data_mut()[co];
                *db = *db + s;
            }
            im2col(gn, cout, lout, k, self.stride, self.padding, len, &mut gcols);
            gemm(cin, len, cout * k, T::one(), x.row(n), false, &gcols, true, T::one(), self.weight.grad.data_mut());
            gemm(cin, cout * k, len, T::one(), self.weight.value.data(), false, &gcols, false, T::zero(), dx.row_mut(n));
        }
        Ok(dx)
    }
}

/// Affine map `y = x W + b` with `W: [d_in, d_out]`. Inputs of rank > 2 are
/// flattened to `[batch, d_in]`; the input gradient keeps the original shape.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(d_in: usize, d_out: usize, init: Init, rng: &mut ChaCha8Rng) -> Self {
        let w = init_tensor(&[d_in, d_out], d_in, d_out, init, rng);
        Self::from_weights(w, Tensor::zeros(&[d_out])).expect("consistent shapes")
    }

    pub fn from_weights(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.ndim() != 2 || bias.shape() != [weight.dim(1)] {
            return Err(Error::config(format!(
                "dense weight {:?} / bias {:?} inconsistent",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            input: None,
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.ndim() < 2 || x.row_len() != self.d_in() {
            return Err(Error::config(format!(
                "dense expects {} input features, got shape {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        let (b, din, dout) = (x.batch(), self.d_in(), self.d_out());
        let mut out = Tensor::zeros(&[b, dout]);
        for n in 0..b {
            out.row_mut(n).copy_from_slice(self.bias.value.data());
        }
        gemm(b, din, dout, T::one(), x.data(), false, self.weight.value.data(), false, T::one(), out.data_mut());
        Ok(out)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (b, din, dout) = (x.batch(), self.d_in(), self.d_out());
        gemm(din, b, dout, T::one(), x.data(), true, g.data(), false, T::one(), self.weight.grad.data_mut());
        for n in 0..b {
            for (db, &gv) in self.bias.grad.data_mut().iter_mut().zip(g.row(n)) {
                *db = *db + gv;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(b, dout, din, T::one(), g.data(), false, self.weight.value.data(), true, T::zero(), dx.data_mut());
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    output: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(|v| v.max(T::zero()));
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or_else(|| missing_cache("relu"))?;
        let mut dx = g.clone();
        for (d, &out) in dx.data_mut().iter_mut().zip(y.data()) {
            if out <= T::zero() {
                *d = T::zero();
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor<T>>,
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Sigmoid<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(sigmoid);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or_else(|| missing_cache("sigmoid"))?;
        let mut dx = g.clone();
        for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *d = *d * s * (T::one() - s);
        }
        Ok(dx)
    }
}

/// Batch normalisation over `[batch, features]` or `[batch, channels, len]`
/// (per-channel statistics over batch and length).
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// Weight of the previous running value in the exponential average.
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

impl<T: Real> BatchNorm1d<T> {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Param::new("gamma", Tensor::full(&[features], T::one())),
            beta: Param::new("beta", Tensor::zeros(&[features])),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], T::one()),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.value.len()
    }

    fn layout(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, l) = match x.ndim() {
            2 => (x.dim(0), x.dim(1), 1),
            3 => (x.dim(0), x.dim(1), x.dim(2)),
            _ => {
                return Err(Error::config(format!(
                    "batch_norm expects rank 2 or 3, got {:?}",
                    x.shape()
                )))
            }
        };
        if c != self.features() {
            return Err(Error::config(format!(
                "batch_norm has {} features, input has {c}",
                self.features()
            )));
        }
        Ok((b, c, l))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (b, c, l) = self.layout(x)?;
        let eps = T::lit(self.eps);
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        let train = mode == Mode::Train;
        if train && b < 2 {
            return Err(Error::config("batch_norm in train mode needs batch >= 2"));
        }
        let count = (b * l) as f64;
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for n in 0..b {
                    let base = (n * c + ch) * l;
                    sum += x.data()[base..base + l].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0.0;
                for n in 0..b {
                    let base = (n * c + ch) * l;
                    sq += x.data()[base..base + l]
                        .iter()
                        .map(|v| (v.as_f64() - mean).powi(2))
                        .sum::<f64>();
                }
                let var = sq / count;
                let m = self.momentum;
                let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                let rm = &mut self.running_mean.data_mut()[ch];
                *rm = T::lit(m * rm.as_f64() + (1.0 - m) * mean);
                let rv = &mut self.running_var.data_mut()[ch];
                *rv = T::lit(m * rv.as_f64() + (1.0 - m) * unbiased);
                (T::lit(mean), T::lit(var))
            } else {
                (self.running_mean.data()[ch], self.running_var.data()[ch])
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            let (gm, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for n in 0..b {
                let base = (n * c + ch) * l;
                for i in base..base + l {
                    let h = (x.data()[i] - mean) * istd;
                    xhat[i] = h;
                    y.data_mut()[i] = gm * h + bt;
                }
            }
        }
        self.cache = Some(BnCache {
            shape: x.shape().to_vec(),
            xhat,
            inv_std,
            train,
        });
        Ok(y)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batch_norm"))?;
        let (b, c) = (cache.shape[0], cache.shape[1]);
        let l = if cache.shape.len() == 3 { cache.shape[2] } else { 1 };
        let count = T::lit((b * l) as f64);
        let mut dx = Tensor::zeros(&cache.shape);
        for ch in 0..c {
            let gm = self.gamma.value.data()[ch];
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for n in 0..b {
                let base = (n * c + ch) * l;
                for i in base..base + l {
                    sum_g = sum_g + g.data()[i];
                    sum_gx = sum_gx + g.data()[i] * cache.xhat[i];
                }
            }
            let dg = &mut self.gamma.grad.data_mut()[ch];
            *dg = *dg + sum_gx;
            let db = &mut self.beta.grad.data_mut()[ch];
            *db = *db + sum_g;
            let istd = cache.inv_std[ch];
            for n in 0..b {
                let base = (n * c + ch) * l;
                for i in base..base + l {
                    dx.data_mut()[i] = if cache.train {
                        gm * istd / count
                            * (count * g.data()[i] - sum_g - cache.xhat[i] * sum_gx)
                    } else {
                        gm * istd * g.data()[i]
                    };
                }
            }
        }
        Ok(dx)
    }
}

/// Non-overlapping max pooling over the last axis of `[batch, channels, len]`.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub window: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            cache: None,
        }
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_rank(x, 3, "max_pool1d")?;
        let (b, c, l) = (x.dim(0), x.dim(1), x.dim(2));
        let w = self.window;
        let lout = l / w;
        if lout == 0 {
            return Err(Error::config(format!("max_pool1d: length {l} below window {w}")));
        }
        let mut y = Tensor::zeros(&[b, c, lout]);
        let mut argmax = vec![0usize; b * c * lout];
        for bc in 0..b * c {
            let xs = &x.data()[bc * l..(bc + 1) * l];
            for o in 0..lout {
                let mut best = o * w;
                for i in o * w + 1..o * w + w {
                    if xs[i] > xs[best] {
                        best = i;
                    }
                }
                y.data_mut()[bc * lout + o] = xs[best];
                argmax[bc * lout + o] = bc * l + best;
            }
        }
        self.cache = Some((x.shape().to_vec(), argmax));
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, argmax) = self.cache.as_ref().ok_or_else(|| missing_cache("max_pool1d"))?;
        let mut dx = Tensor::zeros(shape);
        for (&src, &gv) in argmax.iter().zip(g.data()) {
            dx.data_mut()[src] = dx.data()[src] + gv;
        }
        Ok(dx)
    }
}

/// Inverted dropout: kept units are scaled by `1/(1-rate)` in training; eval is identity.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        if ctx.mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let rng = ctx
            .rng
            .as_deref_mut()
            .ok_or_else(|| Error::config("dropout in train mode needs an rng"))?;
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let mut dx = g.clone();
        if let Some(mask) = &self.mask {
            for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                *v = *v * m;
            }
        }
        Ok(dx)
    }
}

/// Reshapes each batch entry to `target` (the batch axis is kept).
#[derive(Debug, Clone)]
pub struct Reshape {
    pub target: Vec<usize>,
    input_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: Vec<usize>) -> Self {
        Self {
            target,
            input_shape: None,
        }
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.target);
        self.input_shape = Some(x.shape().to_vec());
        x.clone().reshape(&shape)
    }

    pub fn backward<T: Real>(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or_else(|| missing_cache("reshape"))?;
        g.clone().reshape(shape)
    }
}
