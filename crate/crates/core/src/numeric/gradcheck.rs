//! Central finite-difference check of analytic parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{ForwardCtx, Mode};
use super::network::Module;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale; below it the
/// finite-difference round-off (about 1e-10 for O(1) losses) dominates.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

const DROPOUT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub per_param: Vec<ParamError>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn scalar_loss<M: Module<f64>>(
    net: &mut M,
    input: &Tensor<f64>,
    probe: &mut Option<Tensor<f64>>,
    mode: Mode,
) -> Result<(f64, Tensor<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(DROPOUT_SEED);
    let mut ctx = ForwardCtx { mode, rng: Some(&mut rng) };
    let out = net.forward(input, &mut ctx)?;
    let probe = probe.get_or_insert_with(|| {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        Tensor::from_fn(out.shape(), |_| r.random_range(-1.0..1.0))
    });
    Ok((out.dot(probe), probe.clone()))
}

/// Compares every parameter's analytic gradient of `sum(output * probe)` (a
/// fixed random probe) against central differences with step [`FD_STEP`].
///
/// Dropout masks are re-drawn from the same seed on every forward pass so the
/// loss is a deterministic function of the parameters.
pub fn grad_check<M: Module<f64>>(
    net: &mut M,
    input: &Tensor<f64>,
    tolerance: f64,
    mode: Mode,
) -> Result<GradCheckReport> {
    let mut probe = None;
    net.zero_grad();
    let (_, probe_t) = scalar_loss(net, input, &mut probe, mode)?;
    net.backward(&probe_t)?;
    let analytic: Vec<(String, Vec<f64>)> = net
        .params_mut()
        .into_iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut per_param = Vec::with_capacity(analytic.len());
    let mut checked = 0;
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (ei, &a) in grads.iter().enumerate() {
            let orig = net.params_mut()[pi].value.data()[ei];
            net.params_mut()[pi].value.data_mut()[ei] = orig + FD_STEP;
            let (up, _) = scalar_loss(net, input, &mut probe, mode)?;
            net.params_mut()[pi].value.data_mut()[ei] = orig - FD_STEP;
            let (down, _) = scalar_loss(net, input, &mut probe, mode)?;
            net.params_mut()[pi].value.data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
            checked += 1;
        }
        per_param.push(ParamError {
            name: format!("#{pi} {name}"),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }

    let worst = per_param
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .cloned();
    let (max_rel_error, worst_param) = worst
        .map(|w| (w.max_rel_error, w.name))
        .unwrap_or((0.0, String::new()));
    if !max_rel_error.is_finite() || max_rel_error > tolerance {
        return Err(Error::GradCheck {
            param: worst_param,
            error: max_rel_error,
            tolerance,
        });
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        per_param,
        checked,
    })
}
