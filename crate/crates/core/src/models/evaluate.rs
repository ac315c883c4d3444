use serde::{Deserialize, Serialize};

use super::metrics::{mae_seq, rmse};
use crate::data::WorkoutRecord;
use crate::error::{FitError, Result};

/// Model output for one workout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub distance_km: f64,
    pub speed: Vec<f64>,
    pub heart_rate: Vec<f64>,
}

/// Anything that predicts distance and per-step profiles for recorded workouts.
pub trait Predictor {
    fn predict(&self, records: &[&WorkoutRecord]) -> Result<Vec<Prediction>>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distance_rmse_km: f64,
    pub speed_mae_kmh: f64,
    pub heartrate_mae_bpm: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

/// Scores `predictor` on `test` against each record's target distance and
/// recorded speed and heart-rate sequences.
pub fn evaluate(predictor: &dyn Predictor, test: &[&WorkoutRecord]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(FitError::InsufficientData("empty test split".into()));
    }
    let preds = predictor.predict(test)?;
    if preds.len() != test.len() {
        return Err(FitError::dims(format!("{} predictions for {} records", preds.len(), test.len())));
    }
    let dist_pred: Vec<f64> = preds.iter().map(|p| p.distance_km).collect();
    let dist_true: Vec<f64> = test.iter().map(|r| r.target_distance()).collect();
    let speed_pred: Vec<Vec<f64>> = preds.iter().map(|p| p.speed.clone()).collect();
    let speed_true: Vec<Vec<f64>> = test.iter().map(|r| r.speed_seq.clone()).collect();
    let hr_pred: Vec<Vec<f64>> = preds.iter().map(|p| p.heart_rate.clone()).collect();
    let hr_true: Vec<Vec<f64>> = test.iter().map(|r| r.heartrate_seq.clone()).collect();
    Ok(EvalReport {
        distance_rmse_km: rmse(&dist_pred, &dist_true)?,
        speed_mae_kmh: mae_seq(&speed_pred, &speed_true)?,
        heartrate_mae_bpm: mae_seq(&hr_pred, &hr_true)?,
        n_test: test.len(),
        ..EvalReport::default()
    })
}

/// Predicts the training mean distance and, at each step, the training mean
/// of speed and heart rate at that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanBaseline {
    pub distance_km: f64,
    pub speed: Vec<f64>,
    pub heart_rate: Vec<f64>,
}

impl MeanBaseline {
    pub fn fit(train: &[&WorkoutRecord]) -> Result<Self> {
        if train.is_empty() {
            return Err(FitError::InsufficientData("empty training split".into()));
        }
        let distance_km = train.iter().map(|r| r.target_distance()).sum::<f64>() / train.len() as f64;
        let max_len = train.iter().map(|r| r.len()).max().unwrap_or(0);
        let step_mean = |f: fn(&WorkoutRecord) -> &[f64]| -> Vec<f64> {
            (0..max_len)
                .map(|t| {
                    let vals: Vec<f64> = train.iter().filter_map(|r| f(r).get(t).copied()).collect();
                    vals.iter().sum::<f64>() / vals.len() as f64
                })
                .collect()
        };
        Ok(MeanBaseline {
            distance_km,
            speed: step_mean(|r| &r.speed_seq),
            heart_rate: step_mean(|r| &r.heartrate_seq),
        })
    }
}

impl Predictor for MeanBaseline {
    fn predict(&self, records: &[&WorkoutRecord]) -> Result<Vec<Prediction>> {
        records
            .iter()
            .map(|r| {
                let n = r.len();
                if n > self.speed.len() {
                    return Err(FitError::dims(format!(
                        "record of {n} steps exceeds the {} fitted steps",
                        self.speed.len()
                    )));
                }
                Ok(Prediction {
                    distance_km: self.distance_km,
                    speed: self.speed[..n].to_vec(),
                    heart_rate: self.heart_rate[..n].to_vec(),
                })
            })
            .collect()
    }
}
