use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::error::{FitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with bias correction and decoupled weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
    Adagrad { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub step: u64,
    /// Adam first moments, or the Adagrad squared-gradient sums.
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self::new(OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }, lr)
    }

    pub fn adagrad(lr: f64) -> Self {
        Self::new(OptimizerKind::Adagrad { eps: 1e-10 }, lr)
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerState { kind, lr, step: 0, first: Vec::new(), second: Vec::new() }
    }

    fn ensure_shapes(&mut self, shapes: &[usize]) -> Result<()> {
        if self.first.is_empty() {
            self.first = shapes.iter().map(|&n| vec![0.0; n]).collect();
            self.second = shapes.iter().map(|&n| vec![0.0; n]).collect();
            return Ok(());
        }
        let ours: Vec<usize> = self.first.iter().map(Vec::len).collect();
        if ours != shapes {
            return Err(FitError::dims(format!("optimizer state shaped {ours:?}, parameters {shapes:?}")));
        }
        Ok(())
    }

    /// First moments (Adam) or accumulated squared gradients (Adagrad).
    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.first
    }
}

/// Applies one update of `state` to `params` using `grads`.
pub fn optimizer_step<P: Params>(state: &mut OptimizerState, params: &mut P, grads: &P) -> Result<()> {
    let gs = grads.slices();
    let shapes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let gshapes: Vec<usize> = gs.iter().map(|s| s.len()).collect();
    if shapes != gshapes {
        return Err(FitError::dims(format!("parameters {shapes:?} and gradients {gshapes:?}")));
    }
    state.ensure_shapes(&shapes)?;
    state.step += 1;
    let lr = state.lr;
    match state.kind {
        OptimizerKind::Adam { beta1, beta2, eps, weight_decay } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, g), m), v) in params.slices_mut().into_iter().zip(&gs).zip(&mut state.first).zip(&mut state.second) {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    p[k] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p[k]);
                }
            }
        }
        OptimizerKind::Adagrad { eps } => {
            for ((p, g), acc) in params.slices_mut().into_iter().zip(&gs).zip(&mut state.first) {
                for k in 0..p.len() {
                    acc[k] += g[k] * g[k];
                    p[k] -= lr * g[k] / (acc[k].sqrt() + eps);
                }
            }
        }
    }
    params.mark_updated();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    fn single(v: f64) -> Dense {
        Dense::from_parts(1, 1, vec![v], vec![0.0]).unwrap()
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = single(0.7);
        let mut st = OptimizerState::adam(1e-3, 0.0);
        for _ in 0..3 {
            optimizer_step(&mut st, &mut p, &single(0.0)).unwrap();
        }
        assert_eq!(p.w, vec![0.7]);
        assert!(st.accumulators().iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        for g in [1e-3, 0.5, 40.0, -7.0] {
            let mut p = single(1.0);
            let mut st = OptimizerState::adam(1e-3, 0.0);
            optimizer_step(&mut st, &mut p, &single(g)).unwrap();
            let step = 1.0 - p.w[0];
            // m̂/√v̂ = sign(g); ε shifts the magnitude by a relative 1e-8/|g|
            let want = 1e-3 * g.signum() * g.abs() / (g.abs() + 1e-8);
            assert!((step - want).abs() < 1e-15, "g={g}: {step}");
        }
    }

    #[test]
    fn adam_weight_decay_is_decoupled() {
        let mut p = single(2.0);
        let mut st = OptimizerState::adam(0.1, 1e-7);
        optimizer_step(&mut st, &mut p, &single(0.0)).unwrap();
        assert!((p.w[0] - (2.0 - 0.1 * 1e-7 * 2.0)).abs() < 1e-16);
    }

    #[test]
    fn adagrad_two_unit_steps() {
        let mut p = single(0.0);
        let mut st = OptimizerState::adagrad(0.5);
        optimizer_step(&mut st, &mut p, &single(1.0)).unwrap();
        let first = -p.w[0];
        assert!((first - 0.5 / (1.0 + 1e-10)).abs() < 1e-15);
        optimizer_step(&mut st, &mut p, &single(1.0)).unwrap();
        let second = -p.w[0] - first;
        assert!((second - 0.5 / (2f64.sqrt() + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut p = Dense::from_parts(2, 1, vec![0.3, -0.2], vec![0.1]).unwrap();
            let g = Dense::from_parts(2, 1, vec![0.5, 0.25], vec![-1.0]).unwrap();
            let mut st = OptimizerState::adam(1e-2, 1e-7);
            for _ in 0..5 {
                optimizer_step(&mut st, &mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = single(0.0);
        let g = Dense::zeros(2, 1);
        assert!(optimizer_step(&mut OptimizerState::adagrad(0.1), &mut p, &g).is_err());
    }
}
