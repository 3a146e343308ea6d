//! Central finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A model whose scalar loss and gradient are exposed over a list of tensors.
pub trait Differentiable {
    fn tensor_names(&self) -> Vec<String>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn loss(&self) -> Result<f64>;

    /// Gradient tensors aligned with [`Self::tensors_mut`].
    fn gradient(&self) -> Result<Vec<Vec<f64>>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Below this magnitude both gradients count as zero.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(tensor name, element index)` of the worst parameter.
    pub worst: Option<(String, usize)>,
    pub failure: Option<String>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Build a model from a seeded RNG and compare its analytic gradient with
/// central differences on every parameter.
pub fn grad_check<M, F>(build: F, seed: u64, config: GradCheckConfig) -> GradCheckReport
where
    M: Differentiable,
    F: FnOnce(&mut ChaCha8Rng) -> M,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build(&mut rng);
    check_model(&mut model, config)
}

pub fn check_model<M: Differentiable>(model: &mut M, config: GradCheckConfig) -> GradCheckReport {
    let names = model.tensor_names();
    let fail = |msg: String, checked: usize| GradCheckReport {
        checked,
        max_relative_error: f64::INFINITY,
        worst: None,
        failure: Some(msg),
        passed: false,
    };
    let analytic = match model.gradient() {
        Ok(g) => g,
        Err(e) => return fail(format!("analytic gradient failed: {e}"), 0),
    };
    let mut checked = 0;
    let mut max_err = 0.0f64;
    let mut worst = None;
    for t in 0..names.len() {
        let len = model.tensors_mut()[t].len();
        for i in 0..len {
            let original = model.tensors_mut()[t][i];
            model.tensors_mut()[t][i] = original + config.step;
            let plus = model.loss();
            model.tensors_mut()[t][i] = original - config.step;
            let minus = model.loss();
            model.tensors_mut()[t][i] = original;
            let (plus, minus) = match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => (p, m),
                _ => return fail(format!("non-finite loss at {}[{i}]", names[t]), checked),
            };
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = relative_error(analytic[t][i], numeric, config.floor);
            checked += 1;
            if worst.is_none() || err > max_err {
                max_err = err;
                worst = Some((names[t].clone(), i));
            }
        }
    }
    GradCheckReport {
        checked,
        max_relative_error: max_err,
        worst,
        failure: None,
        passed: max_err < config.tolerance,
    }
}
