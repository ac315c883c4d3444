use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the masked values and, in train mode with
/// `p > 0`, the scale mask (0 or `1/(1-p)` per entry) for the backward pass.
pub fn dropout<R: Rng + ?Sized>(x: &[f64], p: f64, rng: &mut R, mode: Mode) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    check_rate(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.to_vec(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x.iter().map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, Some(mask)))
}

pub(crate) fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(FitError::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
    }
    Ok(())
}
