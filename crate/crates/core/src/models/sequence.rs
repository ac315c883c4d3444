use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::{LossCurve, TrainingConfig};
use super::features::ContextLayout;
use crate::data::NormStats;
use crate::error::{FitError, Result};
use crate::nn::{joint_mse, optimizer_step, DualHeadNet, Mode, OptimizerState, Seq};

/// Number of per-step inputs appended to the context vector: workout
/// distance, altitude and cumulative distance.
pub const STEP_FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceExample {
    pub context: Vec<f64>,
    /// Total workout distance fed to the model (ground truth in training).
    pub distance_km: f64,
    pub altitude: Vec<f64>,
    pub distance: Vec<f64>,
    pub speed: Vec<f64>,
    pub heart_rate: Vec<f64>,
}

/// Inputs for one prediction.
#[derive(Debug, Clone, Copy)]
pub struct SequenceInput<'a> {
    pub context: &'a [f64],
    pub distance_km: f64,
    pub altitude: &'a [f64],
    pub distance: &'a [f64],
}

impl<'a> From<&'a SequenceExample> for SequenceInput<'a> {
    fn from(e: &'a SequenceExample) -> Self {
        SequenceInput { context: &e.context, distance_km: e.distance_km, altitude: &e.altitude, distance: &e.distance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel {
    pub net: DualHeadNet,
    pub stats: NormStats,
    pub layout: ContextLayout,
    pub config: TrainingConfig,
}

fn check_input(layout: &ContextLayout, input: &SequenceInput<'_>) -> Result<()> {
    if input.context.len() != layout.dim() {
        return Err(FitError::dims(format!(
            "context of width {} for a model expecting {}",
            input.context.len(),
            layout.dim()
        )));
    }
    if input.altitude.len() != input.distance.len() || input.altitude.is_empty() {
        return Err(FitError::dims(format!(
            "altitude ({}) and distance ({}) sequences must share a positive length",
            input.altitude.len(),
            input.distance.len()
        )));
    }
    Ok(())
}

/// Time-major network input for inputs of equal length.
fn build_input(stats: &NormStats, inputs: &[SequenceInput<'_>]) -> Seq {
    let len = inputs[0].altitude.len();
    let batch = inputs.len();
    let dim = inputs[0].context.len() + STEP_FEATURES;
    let mut data = Vec::with_capacity(len * batch * dim);
    for t in 0..len {
        for inp in inputs {
            data.extend_from_slice(inp.context);
            data.push(stats.distance.normalize(inp.distance_km));
            data.push(stats.altitude.normalize(inp.altitude[t]));
            data.push(stats.step_distance.normalize(inp.distance[t]));
        }
    }
    Seq { len, batch, dim, data }
}

/// Normalized targets, time-major.
fn build_targets(stats: &NormStats, examples: &[&SequenceExample]) -> (Vec<f64>, Vec<f64>) {
    let len = examples[0].speed.len();
    let mut speed = Vec::with_capacity(len * examples.len());
    let mut hr = Vec::with_capacity(len * examples.len());
    for t in 0..len {
        for e in examples {
            speed.push(stats.speed.normalize(e.speed[t]));
            hr.push(stats.heartrate.normalize(e.heart_rate[t]));
        }
    }
    (speed, hr)
}

/// Denormalized `(speed, heart rate)` sequences for each input.
pub fn predict_sequences_batch(model: &SequenceModel, inputs: &[SequenceInput<'_>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    for inp in inputs {
        check_input(&model.layout, inp)?;
    }
    let mut out = vec![(Vec::new(), Vec::new()); inputs.len()];
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, inp) in inputs.iter().enumerate() {
        by_len.entry(inp.altitude.len()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for idx in by_len.values() {
        for chunk in idx.chunks(64) {
            let group: Vec<SequenceInput<'_>> = chunk.iter().map(|&i| inputs[i]).collect();
            let x = build_input(&model.stats, &group);
            let (y, _) = model.net.forward(&x, Mode::Eval, &mut rng)?;
            let b = chunk.len();
            for (j, &i) in chunk.iter().enumerate() {
                let speed = (0..x.len).map(|t| model.stats.speed.denormalize(y.speed[t * b + j])).collect();
                let hr = (0..x.len).map(|t| model.stats.heartrate.denormalize(y.heart_rate[t * b + j])).collect();
                out[i] = (speed, hr);
            }
        }
    }
    Ok(out)
}

/// Per-step speed (km/h) and heart rate (bpm) for one workout.
pub fn predict_sequences(
    model: &SequenceModel,
    context: &[f64],
    distance_km: f64,
    altitude: &[f64],
    distance: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let input = SequenceInput { context, distance_km, altitude, distance };
    Ok(predict_sequences_batch(model, &[input])?.remove(0))
}

fn joint_loss(model: &SequenceModel, examples: &[SequenceExample]) -> Result<f64> {
    let mut by_len: BTreeMap<usize, Vec<&SequenceExample>> = BTreeMap::new();
    for e in examples {
        by_len.entry(e.altitude.len()).or_default().push(e);
    }
    let (mut total, mut count) = (0.0, 0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for group in by_len.values() {
        for chunk in group.chunks(64) {
            let inputs: Vec<SequenceInput<'_>> = chunk.iter().map(|e| SequenceInput::from(*e)).collect();
            let x = build_input(&model.stats, &inputs);
            let (ts, th) = build_targets(&model.stats, chunk);
            let (y, _) = model.net.forward(&x, Mode::Eval, &mut rng)?;
            let (loss, _, _) = joint_mse(&y, &ts, &th)?;
            total += loss * ts.len() as f64;
            count += ts.len();
        }
    }
    Ok(total / count as f64)
}

fn check_example(layout: &ContextLayout, e: &SequenceExample) -> Result<()> {
    check_input(layout, &SequenceInput::from(e))?;
    if e.speed.len() != e.altitude.len() || e.heart_rate.len() != e.altitude.len() {
        return Err(FitError::dims("target sequences differ in length from the inputs"));
    }
    Ok(())
}

/// Trains the stacked bidirectional model with Adagrad on the equal-weight
/// sum of speed and heart-rate mean squared errors over normalized targets,
/// with full backpropagation through time. Early stopping as for the
/// distance model, on the validation joint loss.
pub fn train_sequence(
    train: &[SequenceExample],
    validation: &[SequenceExample],
    stats: &NormStats,
    layout: ContextLayout,
    config: &TrainingConfig,
) -> Result<(SequenceModel, LossCurve)> {
    config.validate()?;
    if train.is_empty() {
        return Err(FitError::InsufficientData("empty training split".into()));
    }
    let [h1, h2] = config.hidden[..] else {
        return Err(FitError::InvalidArgument(format!(
            "sequence model needs two hidden widths, got {:?}",
            config.hidden
        )));
    };
    for e in train.iter().chain(validation) {
        check_example(&layout, e)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = DualHeadNet::init(layout.dim() + STEP_FEATURES, h1, h2, config.dropout, &mut rng)?;
    let mut model = SequenceModel { net, stats: stats.clone(), layout, config: config.clone() };
    let mut opt = OptimizerState::adagrad(config.learning_rate);

    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in train.iter().enumerate() {
        by_len.entry(e.altitude.len()).or_default().push(i);
    }
    let val_set = if validation.is_empty() { train } else { validation };
    let mut curve = LossCurve::default();
    let mut best = (f64::INFINITY, model.net.clone());
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for idx in by_len.values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            batches.extend(idx.chunks(config.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);
        let (mut epoch_loss, mut weight) = (0.0, 0usize);
        for batch in &batches {
            let examples: Vec<&SequenceExample> = batch.iter().map(|&i| &train[i]).collect();
            let inputs: Vec<SequenceInput<'_>> = examples.iter().map(|e| SequenceInput::from(*e)).collect();
            let x = build_input(&model.stats, &inputs);
            let (ts, th) = build_targets(&model.stats, &examples);
            let (y, cache) = model.net.forward(&x, Mode::Train, &mut rng)?;
            let (loss, ds, dh) = joint_mse(&y, &ts, &th)?;
            let (grads, _) = model.net.backward(&cache, &ds, &dh)?;
            optimizer_step(&mut opt, &mut model.net, &grads)?;
            epoch_loss += loss * batch.len() as f64;
            weight += batch.len();
        }
        curve.train.push(epoch_loss / weight as f64);
        let val = joint_loss(&model, val_set)?;
        if !val.is_finite() {
            return Err(FitError::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        curve.validation.push(val);
        if val < best.0 {
            best = (val, model.net.clone());
            curve.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.net = best.1;
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::features::tests::toy_stats;
    use crate::nn::{selu, Dense, Params};

    fn example(speed: f64, hr: f64, len: usize) -> SequenceExample {
        SequenceExample {
            context: vec![0.2, 0.0, 1.0, 0.0, 0.4],
            distance_km: 8.0,
            altitude: (0..len).map(|t| 100.0 + 5.0 * t as f64).collect(),
            distance: (0..len).map(|t| 8.0 * t as f64 / (len - 1).max(1) as f64).collect(),
            speed: vec![speed; len],
            heart_rate: vec![hr; len],
        }
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig { hidden: vec![6, 4], batch_size: 4, epochs: 5, ..TrainingConfig::sequence_default() }
    }

    #[test]
    fn output_lengths_follow_input() {
        let layout = ContextLayout::new(0, false);
        let train = vec![example(10.0, 120.0, 7)];
        let (model, _) = train_sequence(&train, &[], &toy_stats(), layout, &small_config()).unwrap();
        let e = example(0.0, 0.0, 7);
        let (s, h) = predict_sequences(&model, &e.context, 8.0, &e.altitude, &e.distance).unwrap();
        assert_eq!((s.len(), h.len()), (7, 7));
        assert!(predict_sequences(&model, &e.context, 8.0, &e.altitude, &e.distance[..6]).is_err());
    }

    #[test]
    fn zeroed_heads_give_constant_sequences() {
        let layout = ContextLayout::new(0, false);
        let (mut model, _) = train_sequence(&[example(10.0, 120.0, 4)], &[], &toy_stats(), layout, &small_config()).unwrap();
        model.net.speed_head = Dense::from_parts(8, 1, vec![0.0; 8], vec![0.25]).unwrap();
        model.net.hr_head = Dense::from_parts(12, 1, vec![0.0; 12], vec![0.5]).unwrap();
        let e = example(0.0, 0.0, 4);
        let (s, h) = predict_sequences(&model, &e.context, 8.0, &e.altitude, &e.distance).unwrap();
        let stats = toy_stats();
        assert!(s.iter().all(|&v| v == stats.speed.denormalize(selu(0.25))));
        assert!(h.iter().all(|&v| v == stats.heartrate.denormalize(selu(0.5))));
    }

    #[test]
    fn constant_targets_are_learned() {
        let layout = ContextLayout::new(0, false);
        let train: Vec<_> = (0..8).map(|_| example(12.0, 130.0, 6)).collect();
        let cfg = TrainingConfig { epochs: 150, patience: 150, dropout: 0.0, learning_rate: 2e-2, ..small_config() };
        let stats = toy_stats();
        let (model, _) = train_sequence(&train, &[], &stats, layout, &cfg).unwrap();
        let e = &train[0];
        let (s, h) = predict_sequences(&model, &e.context, 8.0, &e.altitude, &e.distance).unwrap();
        let speed_mae = s.iter().map(|v| (v - 12.0).abs()).sum::<f64>() / 6.0;
        let hr_mae = h.iter().map(|v| (v - 130.0).abs()).sum::<f64>() / 6.0;
        assert!(speed_mae < 0.02 * stats.speed.span(), "speed MAE {speed_mae}");
        assert!(hr_mae < 0.02 * stats.heartrate.span(), "heart-rate MAE {hr_mae}");
    }

    #[test]
    fn training_is_deterministic() {
        let layout = ContextLayout::new(0, false);
        let train: Vec<_> = (0..6).map(|k| example(8.0 + k as f64, 110.0 + k as f64, 5)).collect();
        let a = train_sequence(&train, &[], &toy_stats(), layout, &small_config()).unwrap();
        let b = train_sequence(&train, &[], &toy_stats(), layout, &small_config()).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.net.slices(), b.0.net.slices());
    }

    #[test]
    fn rejects_bad_configs() {
        let layout = ContextLayout::new(0, false);
        let cfg = TrainingConfig { hidden: vec![4], ..small_config() };
        assert!(train_sequence(&[example(1.0, 1.0, 3)], &[], &toy_stats(), layout, &cfg).is_err());
        assert!(train_sequence(&[], &[], &toy_stats(), layout, &small_config()).is_err());
    }
}
