use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::tensor::Real;
use crate::error::{Error, Result};

fn check_state<T>(state: &mut Vec<Vec<T>>, params: &[&mut Param<T>], who: &str) -> Result<()>
where
    T: Real,
{
    if state.is_empty() {
        *state = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        return Ok(());
    }
    let consistent = state.len() == params.len()
        && state.iter().zip(params).all(|(s, p)| s.len() == p.value.len());
    if consistent {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{who}: optimizer state does not match parameter set"
        )))
    }
}

fn check_grads<T: Real>(params: &[&mut Param<T>]) -> Result<()> {
    for p in params {
        p.grad.check_finite(&format!("gradient of {}", p.name))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// SGD with heavy-ball momentum (`v = mu*v + g; p -= lr*v`) and L2 weight decay
/// folded into the gradient.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    velocity: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Sgd<T> {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, mut params: Vec<&mut Param<T>>) -> Result<()> {
        check_grads(&params)?;
        check_state(&mut self.velocity, &params, "sgd")?;
        let lr = T::lit(self.config.lr);
        let mu = T::lit(self.config.momentum);
        let wd = T::lit(self.config.weight_decay);
        for (p, vel) in params.iter_mut().zip(&mut self.velocity) {
            let Param { value, grad, .. } = &mut **p;
            for ((w, &g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(vel.iter_mut()) {
                let g = g + wd * *w;
                *v = mu * *v + g;
                *w = *w - lr * *v;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, mut params: Vec<&mut Param<T>>) -> Result<()> {
        check_grads(&params)?;
        check_state(&mut self.m, &params, "adam")?;
        check_state(&mut self.v, &params, "adam")?;
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad, .. } = &mut **p;
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn scalar(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("w", Tensor::new(vec![1], vec![v]).unwrap());
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar(1.0, 1.0);
        let mut opt = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.0 });
        opt.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_second_step_is_lr_times_1_9() {
        let mut p = scalar(0.0, 1.0);
        let mut opt = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.0 });
        opt.step(vec![&mut p]).unwrap();
        let after_first = p.value.data()[0];
        opt.step(vec![&mut p]).unwrap();
        let second = after_first - p.value.data()[0];
        assert!((second - 0.1 * 1.9).abs() < 1e-12);
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn weight_decay_adds_l2_term() {
        let mut p = scalar(2.0, 0.0);
        let mut opt = Sgd::new(SgdConfig { lr: 0.5, momentum: 0.0, weight_decay: 0.1 });
        opt.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] - (2.0 - 0.5 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = scalar(0.0, g);
            let mut opt = Adam::new(AdamConfig { lr: 0.01, ..AdamConfig::default() });
            opt.step(vec![&mut p]).unwrap();
            let step = p.value.data()[0];
            assert!((step.abs() - 0.01).abs() < 1e-6, "g={g} step={step}");
            assert_eq!(step.signum(), -g.signum());
        }
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut p = scalar(0.0, f64::NAN);
        let mut opt = Sgd::new(SgdConfig { lr: 0.1, momentum: 0.0, weight_decay: 0.0 });
        assert!(matches!(opt.step(vec![&mut p]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn state_mismatch_is_an_error() {
        let mut a = scalar(0.0, 1.0);
        let mut b = scalar(0.0, 1.0);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(vec![&mut a]).unwrap();
        assert!(opt.step(vec![&mut a, &mut b]).is_err());
    }
}
