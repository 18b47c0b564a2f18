use super::layers::{
    BatchNorm1d, Conv1d, Deconv1d, Dense, Dropout, ForwardCtx, MaxPool1d, Param, Relu,
    Reshape, Sigmoid,
};
use super::tensor::{Real, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    Deconv1d(Deconv1d<T>),
    Dense(Dense<T>),
    Relu(Relu<T>),
    Sigmoid(Sigmoid<T>),
    BatchNorm1d(BatchNorm1d<T>),
    MaxPool1d(MaxPool1d),
    Dropout(Dropout<T>),
    Reshape(Reshape),
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Deconv1d(_) => "deconv1d",
            Layer::Dense(_) => "dense",
            Layer::Relu(_) => "relu",
            Layer::Sigmoid(_) => "sigmoid",
            Layer::BatchNorm1d(_) => "batch_norm",
            Layer::MaxPool1d(_) => "max_pool",
            Layer::Dropout(_) => "dropout",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.forward(x),
            Layer::Deconv1d(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::BatchNorm1d(l) => l.forward(x, ctx.mode),
            Layer::MaxPool1d(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, ctx),
            Layer::Reshape(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.backward(g),
            Layer::Deconv1d(l) => l.backward(g),
            Layer::Dense(l) => l.backward(g),
            Layer::Relu(l) => l.backward(g),
            Layer::Sigmoid(l) => l.backward(g),
            Layer::BatchNorm1d(l) => l.backward(g),
            Layer::MaxPool1d(l) => l.backward(g),
            Layer::Dropout(l) => l.backward(g),
            Layer::Reshape(l) => l.backward(g),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::Deconv1d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm1d(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Deconv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that still belongs in a checkpoint.
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm1d(l) => vec![
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm1d(l) => vec![
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            _ => Vec::new(),
        }
    }
}

/// Anything with a forward pass, a backward pass and trainable parameters.
pub trait Module<T: Real> {
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>>;
    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Layer<T>) {
        self.layers.push(layer);
    }

    pub fn count(&self, kind: &str) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// `(name, tensor)` for every parameter and buffer, in layer order.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in layer.params() {
                out.push((format!("{prefix}{i}.{}.{}", layer.kind(), p.name), &p.value));
            }
            for (name, b) in layer.buffers() {
                out.push((format!("{prefix}{i}.{}.{name}", layer.kind()), b));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            let mut names = Vec::new();
            for p in layer.params() {
                names.push(format!("{prefix}{i}.{kind}.{}", p.name));
            }
            let mut names = names.into_iter();
            match layer {
                Layer::BatchNorm1d(l) => {
                    out.push((names.next().unwrap(), &mut l.gamma.value));
                    out.push((names.next().unwrap(), &mut l.beta.value));
                    out.push((format!("{prefix}{i}.{kind}.running_mean"), &mut l.running_mean));
                    out.push((format!("{prefix}{i}.{kind}.running_var"), &mut l.running_var));
                }
                other => {
                    for p in other.params_mut() {
                        out.push((names.next().unwrap(), &mut p.value));
                    }
                }
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn eval(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x, &mut ForwardCtx::eval())
    }
}

impl<T: Real> Module<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, ctx)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
