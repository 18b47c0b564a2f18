//! Generator, discriminator and classifier networks.

use rand_chacha::ChaCha8Rng;

use super::arch::{ClassifierArch, DiscriminatorArch, GeneratorArch};
use crate::error::{Error, Result};
use crate::numeric::{
    softmax, BatchNorm1d, Conv1d, Deconv1d, Dense, Dropout, ForwardCtx, Init, Layer, MaxPool1d,
    Module, Param, Real, Relu, Reshape, Sequential, Sigmoid, Tensor,
};

pub const MIN_FEATURE_DIM: usize = 8;

fn check_dim(m: usize) -> Result<()> {
    if m < MIN_FEATURE_DIM {
        return Err(Error::config(format!(
            "feature length {m} below the minimum of {MIN_FEATURE_DIM}"
        )));
    }
    Ok(())
}

fn relu<T: Real>() -> Layer<T> {
    Layer::Relu(Relu::default())
}

fn bn<T: Real>(features: usize) -> Layer<T> {
    Layer::BatchNorm1d(BatchNorm1d::new(features))
}

fn dropout<T: Real>(rate: f64) -> Result<Layer<T>> {
    Ok(Layer::Dropout(Dropout::new(rate)?))
}

/// Maps noise `[batch, noise_dim]` to samples `[batch, m]` in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct Generator<T> {
    pub arch: GeneratorArch,
    pub feature_dim: usize,
    pub net: Sequential<T>,
}

impl<T: Real> Generator<T> {
    pub fn new(m: usize, arch: &GeneratorArch, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_dim(m)?;
        let k = arch.conv_kernel;
        let n = arch.noise_dim;
        let base_len = m.div_ceil(8);
        let mut layers = vec![Layer::Reshape(Reshape::new(vec![1, n]))];
        let mut cin = 1;
        for &c in &arch.conv_channels {
            layers.push(Layer::Conv1d(Conv1d::new(cin, c, k, 1, k / 2, Init::HeUniform, rng)));
            layers.push(bn(c));
            layers.push(relu());
            cin = c;
        }
        let flat = cin * n;
        let wide = arch.base_channels * base_len;
        layers.push(Layer::Dense(Dense::new(flat, arch.hidden, Init::HeUniform, rng)));
        layers.push(bn(arch.hidden));
        layers.push(relu());
        layers.push(Layer::Dense(Dense::new(arch.hidden, wide, Init::HeUniform, rng)));
        layers.push(bn(wide));
        layers.push(relu());
        layers.push(Layer::Reshape(Reshape::new(vec![arch.base_channels, base_len])));
        let [d1, d2] = arch.deconv_channels;
        layers.push(Layer::Deconv1d(Deconv1d::new(
            arch.base_channels, d1, 4, 2, 1, None, Init::HeUniform, rng,
        )));
        layers.push(bn(d1));
        layers.push(relu());
        layers.push(Layer::Deconv1d(Deconv1d::new(d1, d2, 4, 2, 1, None, Init::HeUniform, rng)));
        layers.push(bn(d2));
        layers.push(relu());
        layers.push(Layer::Deconv1d(Deconv1d::new(
            d2, 1, 4, 2, 1, Some(m), Init::XavierUniform, rng,
        )));
        layers.push(Layer::Sigmoid(Sigmoid::default()));
        layers.push(Layer::Reshape(Reshape::new(vec![m])));
        Ok(Self {
            arch: arch.clone(),
            feature_dim: m,
            net: Sequential::new(layers),
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.arch.noise_dim
    }

    /// Nominal length of the last deconvolution before trimming to `m`.
    pub fn nominal_len(&self) -> usize {
        self.feature_dim.div_ceil(8) * 8
    }

    pub fn generate(&mut self, noise: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.eval(noise)
    }
}

impl<T: Real> Module<T> for Generator<T> {
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        self.net.forward(x, ctx)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.backward(grad)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.net.params_mut()
    }
}

/// Real/fake scorer with a feature tap after its second convolution.
#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    pub arch: DiscriminatorArch,
    pub feature_dim: usize,
    /// Input to the tap (flattened second-convolution activations).
    pub features: Sequential<T>,
    /// Tap to probability.
    pub head: Sequential<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(m: usize, arch: &DiscriminatorArch, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_dim(m)?;
        let k = arch.conv_kernel;
        let [c1, c2] = arch.conv_channels;
        let mut len = m;
        let mut features = vec![Layer::Reshape(Reshape::new(vec![1, m]))];
        let mut cin = 1;
        for c in [c1, c2] {
            let conv = Conv1d::new(cin, c, k, 2, k / 2, Init::HeUniform, rng);
            len = conv.out_len(len).ok_or_else(|| Error::config("discriminator input too short"))?;
            features.push(Layer::Conv1d(conv));
            features.push(bn(c));
            features.push(relu());
            cin = c;
        }
        features.push(Layer::Reshape(Reshape::new(vec![c2 * len])));
        let head = vec![
            Layer::Dense(Dense::new(c2 * len, arch.hidden, Init::HeUniform, rng)),
            bn(arch.hidden),
            relu(),
            Layer::Dense(Dense::new(arch.hidden, 1, Init::XavierUniform, rng)),
            Layer::Sigmoid(Sigmoid::default()),
        ];
        Ok(Self {
            arch: arch.clone(),
            feature_dim: m,
            features: Sequential::new(features),
            head: Sequential::new(head),
        })
    }

    pub fn tap_dim(&self) -> usize {
        let len = self.feature_dim.div_ceil(2).div_ceil(2);
        self.arch.conv_channels[1] * len
    }

    /// Eval-mode feature tap.
    pub fn tap(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.features.eval(x)
    }

    /// Backward from a gradient on the tap alone, returning the input gradient.
    pub fn backward_features(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.features.backward(grad)
    }

    pub fn layer_count(&self, kind: &str) -> usize {
        self.features.count(kind) + self.head.count(kind)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.features.named_tensors("features.");
        out.extend(self.head.named_tensors("head."));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.features.named_tensors_mut("features.");
        out.extend(self.head.named_tensors_mut("head."));
        out
    }
}

impl<T: Real> Module<T> for Discriminator<T> {
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        let f = self.features.forward(x, ctx)?;
        self.head.forward(&f, ctx)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.head.backward(grad)?;
        self.features.backward(&g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.features.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}

/// Family classifier. `forward` yields pre-softmax scores; the logit tap is
/// the flattened third-convolution activation.
#[derive(Debug, Clone)]
pub struct Classifier<T> {
    pub arch: ClassifierArch,
    pub feature_dim: usize,
    pub features: Sequential<T>,
    pub head: Sequential<T>,
}

impl<T: Real> Classifier<T> {
    pub fn new(m: usize, classes: usize, arch: &ClassifierArch, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_dim(m)?;
        if classes < 2 {
            return Err(Error::config("classifier needs at least 2 classes"));
        }
        let k = arch.conv_kernel;
        let [c1, c2, c3] = arch.conv_channels;
        let mut features = vec![Layer::Reshape(Reshape::new(vec![1, m]))];
        let mut cin = 1;
        let mut len = m;
        for (i, c) in [c1, c2, c3].into_iter().enumerate() {
            features.push(Layer::Conv1d(Conv1d::new(cin, c, k, 1, k / 2, Init::HeUniform, rng)));
            features.push(relu());
            if i < 2 {
                features.push(Layer::MaxPool1d(MaxPool1d::new(arch.pool)));
                len /= arch.pool;
            }
            features.push(dropout(arch.conv_dropout)?);
            cin = c;
        }
        if len == 0 {
            return Err(Error::config(format!("feature length {m} too short for pooling")));
        }
        let tap = c3 * len;
        features.push(Layer::Reshape(Reshape::new(vec![tap])));
        let head = vec![
            Layer::Dense(Dense::new(tap, classes, Init::XavierUniform, rng)),
            dropout(arch.head_dropout)?,
        ];
        Ok(Self {
            arch: arch.clone(),
            feature_dim: m,
            features: Sequential::new(features),
            head: Sequential::new(head),
        })
    }

    fn dense(&self) -> &Dense<T> {
        match &self.head.layers[0] {
            Layer::Dense(d) => d,
            _ => unreachable!("classifier head starts with a dense layer"),
        }
    }

    pub fn class_count(&self) -> usize {
        self.dense().d_out()
    }

    pub fn tap_dim(&self) -> usize {
        self.dense().d_in()
    }

    /// Eval-mode logit tap.
    pub fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.features.eval(x)
    }

    /// Eval-mode pre-softmax scores.
    pub fn scores(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.features.eval(x)?;
        self.head.eval(&f)
    }

    pub fn probs(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(softmax(&self.scores(x)?))
    }

    /// Scores for an already computed tap (eval mode).
    pub fn scores_from_tap(&mut self, tap: &Tensor<T>) -> Result<Tensor<T>> {
        self.head.eval(tap)
    }

    /// Widens the output layer to `classes`, keeping existing units.
    pub fn grow(&mut self, classes: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let old = self.class_count();
        if classes <= old {
            return Err(Error::config(format!(
                "cannot grow classifier from {old} to {classes} classes"
            )));
        }
        let d_in = self.tap_dim();
        let mut fresh = Dense::<T>::new(d_in, classes, Init::XavierUniform, rng);
        let prev = self.dense();
        for r in 0..d_in {
            fresh.weight.value.row_mut(r)[..old].copy_from_slice(prev.weight.value.row(r));
        }
        fresh.bias.value.data_mut()[..old].copy_from_slice(prev.bias.value.data());
        self.head.layers[0] = Layer::Dense(fresh);
        Ok(())
    }

    pub fn layer_count(&self, kind: &str) -> usize {
        self.features.count(kind) + self.head.count(kind)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.features.named_tensors("features.");
        out.extend(self.head.named_tensors("head."));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.features.named_tensors_mut("features.");
        out.extend(self.head.named_tensors_mut("head."));
        out
    }
}

impl<T: Real> Module<T> for Classifier<T> {
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        let f = self.features.forward(x, ctx)?;
        self.head.forward(&f, ctx)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.head.backward(grad)?;
        self.features.backward(&g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.features.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}
