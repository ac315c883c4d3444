use serde::Serialize;

use super::params::Params;
use crate::error::{FitError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Largest relative error within each named parameter block.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub checked: usize,
    pub pass: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` around `model`,
/// perturbing one scalar parameter at a time by `±h`.
pub fn grad_check<M, F>(model: &M, analytic: &M, mut loss: F, h: f64, threshold: f64) -> Result<GradCheckReport>
where
    M: Params + Clone,
    F: FnMut(&M) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(FitError::InvalidArgument(format!("step {h} must be positive")));
    }
    if !model.all_finite() {
        return Err(FitError::NonFinite("model parameters".into()));
    }
    let names = model.names();
    let grads = analytic.slices();
    if grads.len() != names.len() {
        return Err(FitError::dims("analytic gradients do not match the model"));
    }
    let mut probe = model.clone();
    let mut per_param = Vec::with_capacity(names.len());
    let mut checked = 0;
    for (block, name) in names.iter().enumerate() {
        let n = grads[block].len();
        let mut worst = 0.0f64;
        for k in 0..n {
            let orig = probe.slices()[block][k];
            probe.slices_mut()[block][k] = orig + h;
            let up = loss(&probe)?;
            probe.slices_mut()[block][k] = orig - h;
            let down = loss(&probe)?;
            probe.slices_mut()[block][k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(FitError::NonFinite(format!("loss while perturbing {name}[{k}]")));
            }
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[block][k], numeric));
            checked += 1;
        }
        per_param.push((name.clone(), worst));
    }
    let max_rel_error = per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { per_param, max_rel_error, threshold, checked, pass: max_rel_error < threshold })
}
