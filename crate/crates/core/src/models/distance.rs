use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::ContextLayout;
use crate::data::MinMax;
use crate::error::{FitError, Result};
use crate::nn::{mlp_backward, mlp_forward, mlp_predict, optimizer_step, Mlp, Mode, OptimizerState};

/// Optimization settings shared by both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl TrainingConfig {
    /// Adam at 1e-3, weight decay 1e-7, one hidden layer of 64, dropout 0.2.
    pub fn distance_default() -> Self {
        TrainingConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-7,
            dropout: 0.2,
            patience: 10,
            hidden: vec![64],
            seed: 0,
        }
    }

    /// Adagrad at 5e-3, recurrent widths 128 and 64, dropout 0.2.
    pub fn sequence_default() -> Self {
        TrainingConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 5e-3,
            weight_decay: 0.0,
            dropout: 0.2,
            patience: 10,
            hidden: vec![128, 64],
            seed: 0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(FitError::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(FitError::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Per-epoch training loss and validation score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceExample {
    pub context: Vec<f64>,
    pub target_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    pub mlp: Mlp,
    pub distance_range: MinMax,
    pub layout: ContextLayout,
    pub config: TrainingConfig,
}

impl DistanceModel {
    fn check_context(&self, context: &[f64]) -> Result<()> {
        if context.len() != self.layout.dim() || self.mlp.input_dim() != self.layout.dim() {
            return Err(FitError::dims(format!(
                "context of width {} for a model expecting {}",
                context.len(),
                self.layout.dim()
            )));
        }
        Ok(())
    }
}

/// Predicted workout distance in km: the sigmoid output mapped back onto the
/// training distance range.
pub fn predict_distance(model: &DistanceModel, context: &[f64]) -> Result<f64> {
    model.check_context(context)?;
    let y = mlp_predict(&model.mlp, context, 1)?;
    Ok(model.distance_range.denormalize(y[0]))
}

/// Batched [`predict_distance`] over row-major contexts.
pub fn predict_distance_batch(model: &DistanceModel, contexts: &[Vec<f64>]) -> Result<Vec<f64>> {
    for c in contexts {
        model.check_context(c)?;
    }
    let y = mlp_predict(&model.mlp, &contexts.concat(), contexts.len())?;
    Ok(y.into_iter().map(|v| model.distance_range.denormalize(v)).collect())
}

fn normalized_rmse(mlp: &Mlp, xs: &[f64], ys: &[f64]) -> Result<f64> {
    let p = mlp_predict(mlp, xs, ys.len())?;
    Ok((p.iter().zip(ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ys.len() as f64).sqrt())
}

/// Trains the distance MLP with Adam on the mean squared error between the
/// sigmoid output and the min-max scaled target. Keeps the parameters of
/// the epoch with the lowest validation RMSE and stops after `patience`
/// epochs without improvement.
pub fn train_distance(
    train: &[DistanceExample],
    validation: &[DistanceExample],
    distance_range: MinMax,
    layout: ContextLayout,
    config: &TrainingConfig,
) -> Result<(DistanceModel, LossCurve)> {
    config.validate()?;
    if train.is_empty() {
        return Err(FitError::InsufficientData("empty training split".into()));
    }
    let dim = layout.dim();
    if let Some(bad) = train.iter().chain(validation).find(|e| e.context.len() != dim) {
        return Err(FitError::dims(format!("context of width {} for layout width {dim}", bad.context.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut widths = vec![dim];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut mlp = Mlp::init(&widths, &mut rng)?;
    let mut opt = OptimizerState::adam(config.learning_rate, config.weight_decay);

    let target = |e: &DistanceExample| distance_range.normalize(e.target_km);
    let (val_x, val_y): (Vec<f64>, Vec<f64>) = if validation.is_empty() {
        (train.iter().flat_map(|e| e.context.clone()).collect(), train.iter().map(target).collect())
    } else {
        (validation.iter().flat_map(|e| e.context.clone()).collect(), validation.iter().map(target).collect())
    };

    let mut curve = LossCurve::default();
    let mut best = (f64::INFINITY, mlp.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x: Vec<f64> = chunk.iter().flat_map(|&i| train[i].context.iter().copied()).collect();
            let (y, cache) = mlp_forward(&mlp, &x, chunk.len(), config.dropout, Mode::Train, &mut rng)?;
            let n = chunk.len() as f64;
            let mut up = Vec::with_capacity(chunk.len());
            for (&i, p) in chunk.iter().zip(&y) {
                let e = p - target(&train[i]);
                epoch_loss += e * e;
                up.push(2.0 * e / n);
            }
            let (grads, _) = mlp_backward(&mlp, &cache, &up)?;
            optimizer_step(&mut opt, &mut mlp, &grads)?;
        }
        curve.train.push(epoch_loss / train.len() as f64);
        let val = normalized_rmse(&mlp, &val_x, &val_y)?;
        if !val.is_finite() {
            return Err(FitError::NonFinite(format!("validation RMSE at epoch {epoch}")));
        }
        curve.validation.push(val);
        if val < best.0 {
            best = (val, mlp.clone());
            curve.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let model = DistanceModel { mlp: best.1, distance_range, layout, config: config.clone() };
    Ok((model, curve))
}
