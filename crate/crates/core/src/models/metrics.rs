use crate::error::{FitError, Result};

/// Root mean squared error over one scalar per record.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check(predictions.len(), truths.len())?;
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Mean absolute error averaged over the steps of each record, then over records.
pub fn mae_seq(predictions: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    check(predictions.len(), truths.len())?;
    let mut total = 0.0;
    for (k, (p, t)) in predictions.iter().zip(truths).enumerate() {
        if p.len() != t.len() || p.is_empty() {
            return Err(FitError::dims(format!(
                "record {k}: {} predicted steps for {} true steps",
                p.len(),
                t.len()
            )));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
    }
    Ok(total / predictions.len() as f64)
}

fn check(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(FitError::InsufficientData("no records to score".into()));
    }
    if n != m {
        return Err(FitError::dims(format!("{n} predictions for {m} truths")));
    }
    Ok(())
}
