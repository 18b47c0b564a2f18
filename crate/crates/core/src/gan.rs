//! Adversarial training of the replay generator.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchConfig, Discriminator, Generator};
use crate::numeric::{Adam, AdamConfig, ForwardCtx, Module, RngStreams, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorLoss {
    Bce,
    #[default]
    Fml,
}

impl GeneratorLoss {
    pub fn label(self) -> &'static str {
        match self {
            GeneratorLoss::Bce => "bce",
            GeneratorLoss::Fml => "fml",
        }
    }
}

/// How the feature-matching distance is reduced over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FmlReduction {
    /// `|| mean(real taps) - mean(fake taps) ||`.
    #[default]
    MeanDifference,
    /// `mean_i || mean(real taps) - fake tap_i ||`.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_loss: GeneratorLoss,
    pub fml_reduction: FmlReduction,
    pub generator_optim: AdamConfig,
    pub discriminator_optim: AdamConfig,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            generator_loss: GeneratorLoss::Fml,
            fml_reduction: FmlReduction::MeanDifference,
            generator_optim: AdamConfig::default(),
            discriminator_optim: AdamConfig::default(),
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("gan.epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("gan.batch_size must be at least 2"));
        }
        for (name, a) in [("generator_optim", &self.generator_optim), ("discriminator_optim", &self.discriminator_optim)] {
            if !(a.lr > 0.0) {
                return Err(Error::config(format!("gan.{name}.lr must be positive")));
            }
        }
        Ok(())
    }
}

fn clamp_prob(p: f64, clamps: &mut u64) -> f64 {
    let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if c != p {
        *clamps += 1;
    }
    c
}

/// `-(1/b) * sum(log D(G(z)))`.
pub fn bce_generator_loss(d_on_fake: &[f64]) -> f64 {
    let mut clamps = 0;
    bce_generator_loss_counted(d_on_fake, &mut clamps)
}

fn bce_generator_loss_counted(d_on_fake: &[f64], clamps: &mut u64) -> f64 {
    let b = d_on_fake.len() as f64;
    -d_on_fake.iter().map(|&p| clamp_prob(p, clamps).ln()).sum::<f64>() / b
}

/// `-(1/b) * sum(log D(x) + log(1 - D(G(z))))`, the negated ascent objective.
pub fn discriminator_loss(d_on_real: &[f64], d_on_fake: &[f64]) -> f64 {
    let mut clamps = 0;
    discriminator_loss_counted(d_on_real, d_on_fake, &mut clamps)
}

fn discriminator_loss_counted(d_on_real: &[f64], d_on_fake: &[f64], clamps: &mut u64) -> f64 {
    let real: f64 = d_on_real.iter().map(|&p| clamp_prob(p, clamps).ln()).sum::<f64>() / d_on_real.len() as f64;
    let fake: f64 = d_on_fake.iter().map(|&p| (1.0 - clamp_prob(p, clamps)).ln()).sum::<f64>()
        / d_on_fake.len() as f64;
    -(real + fake)
}

fn column_means(t: &Tensor<f64>) -> Vec<f64> {
    let (b, d) = (t.batch(), t.row_len());
    let mut mean = vec![0.0; d];
    for i in 0..b {
        for (m, &v) in mean.iter_mut().zip(t.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    mean
}

/// Norm of the difference between the mean real and mean fake feature rows.
pub fn feature_matching_loss(real: &Tensor<f64>, fake: &Tensor<f64>) -> Result<f64> {
    Ok(fml_with_grad(real, fake, FmlReduction::MeanDifference)?.0)
}

/// Loss and its gradient with respect to the fake features.
pub fn fml_with_grad(real: &Tensor<f64>, fake: &Tensor<f64>, reduction: FmlReduction) -> Result<(f64, Tensor<f64>)> {
    if real.batch() == 0 || fake.batch() == 0 {
        return Err(Error::config("feature matching needs nonempty batches"));
    }
    if real.row_len() != fake.row_len() {
        return Err(Error::config(format!(
            "feature widths differ: real {}, fake {}",
            real.row_len(),
            fake.row_len()
        )));
    }
    let b = fake.batch();
    let mr = column_means(real);
    let mut grad = Tensor::zeros(fake.shape());
    match reduction {
        FmlReduction::MeanDifference => {
            let mf = column_means(fake);
            let diff: Vec<f64> = mr.iter().zip(&mf).map(|(r, f)| r - f).collect();
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..b {
                    for (g, d) in grad.row_mut(i).iter_mut().zip(&diff) {
                        *g = -d / (norm * b as f64);
                    }
                }
            }
            Ok((norm, grad))
        }
        FmlReduction::PerSample => {
            let mut total = 0.0;
            for i in 0..b {
                let diff: Vec<f64> = mr.iter().zip(fake.row(i)).map(|(r, f)| r - f).collect();
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                total += norm;
                if norm > 0.0 {
                    for (g, d) in grad.row_mut(i).iter_mut().zip(&diff) {
                        *g = -d / (norm * b as f64);
                    }
                }
            }
            Ok((total / b as f64, grad))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub batches: u64,
    pub d_steps: u64,
    pub g_steps: u64,
    /// Probabilities that hit the log clamp.
    pub clamped: u64,
}

impl LossHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::from("epoch,d_loss,g_loss\n");
        for e in &self.epochs {
            text.push_str(&format!("{},{},{}\n", e.epoch, e.d_loss, e.g_loss));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub struct TrainedGan {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub history: LossHistory,
}

pub fn sample_noise(rng: &mut impl Rng, count: usize, noise_dim: usize) -> Tensor<f32> {
    Tensor::from_fn(&[count, noise_dim], |_| rng.sample::<f32, _>(StandardNormal))
}

fn probs(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&p| p as f64).collect()
}

/// Gradient of `-(1/b) sum log(p)` (or of `log(1-p)` when `fake_side`) with
/// respect to the clamped probabilities.
fn prob_grad(p: &[f64], fake_side: bool) -> Tensor<f32> {
    let b = p.len() as f64;
    let g: Vec<f32> = p
        .iter()
        .map(|&v| {
            let c = v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            (if fake_side { 1.0 / (b * (1.0 - c)) } else { -1.0 / (b * c) }) as f32
        })
        .collect();
    Tensor::new(vec![p.len(), 1], g).expect("column shape")
}

fn finite(v: f64, what: &str, epoch: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at epoch {epoch}, batch {batch}")))
    }
}

/// Trains a generator/discriminator pair on rows already mapped into `[0, 1]`.
///
/// Each batch takes one discriminator step on the real batch and a detached
/// fake batch, then one generator step on freshly drawn noise.
pub fn train_gan(
    data: &[f32],
    feature_dim: usize,
    arch: &ArchConfig,
    config: &GanTrainConfig,
    rngs: &mut RngStreams,
) -> Result<TrainedGan> {
    config.validate()?;
    let m = feature_dim;
    if data.is_empty() || !data.len().is_multiple_of(m) {
        return Err(Error::config("GAN training data is empty or ragged"));
    }
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::config(format!("GAN training value {v} outside [0, 1]")));
    }
    let rows = data.len() / m;
    let mut g = Generator::<f32>::new(m, &arch.generator, rngs.weight_init())?;
    let mut d = Discriminator::<f32>::new(m, &arch.discriminator, rngs.weight_init())?;
    let mut opt_g = Adam::new(config.generator_optim);
    let mut opt_d = Adam::new(config.discriminator_optim);
    let nz = arch.generator.noise_dim;
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..rows).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(rngs.data_shuffle());
        let (mut d_sum, mut g_sum, mut n) = (0.0, 0.0, 0usize);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let b = chunk.len();
            let mut real = Tensor::zeros(&[b, m]);
            for (r, &i) in chunk.iter().enumerate() {
                real.row_mut(r).copy_from_slice(&data[i * m..(i + 1) * m]);
            }

            // Discriminator step.
            let z = sample_noise(rngs.noise(), b, nz);
            let fake = g.forward(&z, &mut ForwardCtx::train(rngs.dropout()))?;
            d.zero_grad();
            let p_real = probs(&d.forward(&real, &mut ForwardCtx::train(rngs.dropout()))?);
            d.backward(&prob_grad(&p_real, false))?;
            let p_fake = probs(&d.forward(&fake, &mut ForwardCtx::train(rngs.dropout()))?);
            d.backward(&prob_grad(&p_fake, true))?;
            let d_loss = discriminator_loss_counted(&p_real, &p_fake, &mut history.clamped);
            let d_loss = finite(d_loss, "discriminator loss", epoch, bi)?;
            opt_d.step(d.params_mut())?;
            history.d_steps += 1;

            // Generator step.
            let z = sample_noise(rngs.noise(), b, nz);
            let fake = g.forward(&z, &mut ForwardCtx::train(rngs.dropout()))?;
            let g_loss;
            let grad_x = match config.generator_loss {
                GeneratorLoss::Bce => {
                    let p = probs(&d.forward(&fake, &mut ForwardCtx::train(rngs.dropout()))?);
                    g_loss = bce_generator_loss_counted(&p, &mut history.clamped);
                    d.backward(&prob_grad(&p, false))?
                }
                GeneratorLoss::Fml => {
                    let real_tap = d.features.forward(&real, &mut ForwardCtx::train(rngs.dropout()))?;
                    let fake_tap = d.features.forward(&fake, &mut ForwardCtx::train(rngs.dropout()))?;
                    let (loss, grad) = fml_with_grad(&real_tap.cast(), &fake_tap.cast(), config.fml_reduction)?;
                    g_loss = loss;
                    d.backward_features(&grad.cast())?
                }
            };
            let g_loss = finite(g_loss, "generator loss", epoch, bi)?;
            g.zero_grad();
            g.backward(&grad_x)?;
            opt_g.step(g.params_mut())?;
            history.g_steps += 1;
            history.batches += 1;
            d_sum += d_loss;
            g_sum += g_loss;
            n += 1;
        }
        if n == 0 {
            return Err(Error::config(format!(
                "GAN training data of {rows} rows yields no batch of at least 2"
            )));
        }
        history.epochs.push(EpochLoss {
            epoch,
            d_loss: d_sum / n as f64,
            g_loss: g_sum / n as f64,
        });
    }
    Ok(TrainedGan {
        generator: g,
        discriminator: d,
        history,
    })
}
