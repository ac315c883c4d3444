//! End-to-end training: split, route clustering, context tensor, rank
//! selection, embeddings, both predictive models, and the served bundle.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{ModelBundle, RouteEntry};
use super::distance::{
    predict_distance_batch, train_distance, DistanceExample, DistanceModel, LossCurve, TrainingConfig,
};
use super::evaluate::{evaluate, EvalReport, MeanBaseline, Prediction, Predictor};
use super::features::{assemble_context, ContextInput, ContextLayout};
use super::sequence::{predict_sequences_batch, train_sequence, SequenceExample, SequenceInput, SequenceModel};
use crate::cluster::{kmeans_fit, route_signature, ClusterModel, DEFAULT_CLUSTERS, DEFAULT_SIGNATURE_POINTS};
use crate::data::{
    augment_route, is_loop, select, split_and_normalize, DatasetSplit, Gender, NormStats, WorkoutRecord,
    DEFAULT_FRACTION_RANGE, DEFAULT_LOOP_EPSILON_M,
};
use crate::error::{FitError, Result};
use crate::tensor::{build_context_tensor_with, rank_sweep, CoreConsistencyReport, CpConfig, CpFactors, Embeddings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub clusters: usize,
    pub signature_points: usize,
    pub kmeans_iters: usize,
    /// Candidate CP ranks; the one with the highest core consistency is used.
    pub ranks: Vec<usize>,
    pub cp: CpConfig,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Add one loop-extended copy of each looped training workout to the
    /// distance model's training set.
    pub augment: bool,
    pub augment_range: (f64, f64),
    pub include_gender: bool,
    pub distance: TrainingConfig,
    pub sequence: TrainingConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            clusters: DEFAULT_CLUSTERS,
            signature_points: DEFAULT_SIGNATURE_POINTS,
            kmeans_iters: 100,
            ranks: (2..=10).collect(),
            cp: CpConfig { max_sweeps: 500, tol: 1e-8, ..CpConfig::default() },
            split: [0.8, 0.1, 0.1],
            augment: true,
            augment_range: DEFAULT_FRACTION_RANGE,
            include_gender: true,
            distance: TrainingConfig::distance_default(),
            sequence: TrainingConfig::sequence_default(),
            seed: 0,
        }
    }
}

/// Route clusters, decomposition and embeddings learned from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStage {
    pub split: DatasetSplit,
    pub stats: NormStats,
    pub clusters: ClusterModel,
    pub factors: CpFactors,
    pub rank_report: CoreConsistencyReport,
    pub embeddings: Embeddings,
}

impl EmbeddingStage {
    pub fn layout(&self, include_gender: bool) -> ContextLayout {
        ContextLayout::new(self.embeddings.rank, include_gender)
    }
}

/// Seeded split and training-split normalization statistics.
pub fn prepare(records: &[WorkoutRecord], config: &PipelineConfig) -> Result<(DatasetSplit, NormStats)> {
    split_and_normalize(records, config.split, config.seed)
}

/// k-means over route signatures of `records`, reducing `k` to the number of
/// distinct routes when there are fewer.
pub fn fit_clusters(records: &[&WorkoutRecord], config: &PipelineConfig) -> Result<ClusterModel> {
    let sigs = records
        .iter()
        .map(|r| route_signature(r, config.signature_points))
        .collect::<Result<Vec<_>>>()?;
    match kmeans_fit(&sigs, config.clusters, config.seed, config.kmeans_iters) {
        Err(FitError::InfeasibleK { distinct, .. }) if distinct > 0 => {
            kmeans_fit(&sigs, distinct, config.seed, config.kmeans_iters)
        }
        other => other,
    }
}

/// Context tensor over the training split, rank sweep, and embeddings at
/// the selected rank.
pub fn fit_embeddings(
    records: &[WorkoutRecord],
    split: DatasetSplit,
    stats: NormStats,
    clusters: ClusterModel,
    config: &PipelineConfig,
) -> Result<EmbeddingStage> {
    let train: Vec<WorkoutRecord> = select(records, &split.train).into_iter().cloned().collect();
    let assignments = train.iter().map(|r| clusters.assign_record(r)).collect::<Result<Vec<_>>>()?;
    let ct = build_context_tensor_with(&train, &assignments, clusters.k())?;
    let (report, all) = rank_sweep(&ct.tensor, &config.ranks, &config.cp)?;
    let pos = config.ranks.iter().position(|&r| r == report.selected_rank).expect("selected from the sweep");
    let factors = all.into_iter().nth(pos).expect("one factor set per rank");
    let embeddings = Embeddings::from_factors(&factors, &ct.index)?;
    Ok(EmbeddingStage { split, stats, clusters, factors, rank_report: report, embeddings })
}

fn context_for(
    stage: &EmbeddingStage,
    layout: &ContextLayout,
    record: &WorkoutRecord,
    cluster: usize,
) -> Result<Vec<f64>> {
    let input = ContextInput {
        user_id: &record.user_id,
        cluster,
        sport: record.sport.clone(),
        gender: record.gender,
        calories: record.calories,
        route_distance_km: record.route_distance(),
    };
    assemble_context(&stage.embeddings, &input, &stage.stats, layout)
}

/// Distance training examples; with `augment` set, each looped workout also
/// contributes one extended copy that keeps the original target distance.
pub fn distance_examples(
    records: &[&WorkoutRecord],
    stage: &EmbeddingStage,
    layout: &ContextLayout,
    augment: Option<((f64, f64), u64)>,
) -> Result<Vec<DistanceExample>> {
    let mut rng = augment.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(records.len() * 2);
    for r in records {
        let cluster = stage.clusters.assign_record(r)?;
        out.push(DistanceExample { context: context_for(stage, layout, r, cluster)?, target_km: r.target_distance() });
        if let (Some(rng), Some((range, _))) = (rng.as_mut(), augment) {
            if is_loop(r, DEFAULT_LOOP_EPSILON_M) {
                let ext = augment_route(r, range, rng)?;
                out.push(DistanceExample {
                    context: context_for(stage, layout, &ext, cluster)?,
                    target_km: ext.target_distance(),
                });
            }
        }
    }
    Ok(out)
}

/// Sequence examples fed with each workout's true distance.
pub fn sequence_examples(
    records: &[&WorkoutRecord],
    stage: &EmbeddingStage,
    layout: &ContextLayout,
) -> Result<Vec<SequenceExample>> {
    records
        .iter()
        .map(|r| {
            let cluster = stage.clusters.assign_record(r)?;
            Ok(SequenceExample {
                context: context_for(stage, layout, r, cluster)?,
                distance_km: r.target_distance(),
                altitude: r.altitude_seq.clone(),
                distance: r.distance_seq.clone(),
                speed: r.speed_seq.clone(),
                heart_rate: r.heartrate_seq.clone(),
            })
        })
        .collect()
}

/// Packages trained parts with a route catalog built from `records`.
pub fn assemble_bundle(
    records: &[WorkoutRecord],
    stage: EmbeddingStage,
    distance: DistanceModel,
    sequence: SequenceModel,
    config: &PipelineConfig,
) -> Result<ModelBundle> {
    if distance.layout != sequence.layout || distance.layout.rank != stage.embeddings.rank {
        return Err(FitError::dims("distance and sequence models disagree on the context layout"));
    }
    let mut routes = Vec::with_capacity(records.len());
    let mut user_gender = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in records {
        if r.ground_truth_distance.is_some() || !seen.insert(r.workout_id.as_str()) {
            continue;
        }
        routes.push(RouteEntry {
            route_id: r.workout_id.clone(),
            cluster: stage.clusters.assign_record(r)?,
            sport: r.sport.clone(),
            distance_km: r.route_distance(),
            altitude_seq: r.altitude_seq.clone(),
            distance_seq: r.distance_seq.clone(),
        });
        if r.gender != Gender::Unknown || !user_gender.contains_key(&r.user_id) {
            user_gender.insert(r.user_id.clone(), r.gender);
        }
    }
    let sequence_length = records.iter().map(WorkoutRecord::len).max().unwrap_or(0);
    Ok(ModelBundle {
        sequence_length,
        config: config.clone(),
        layout: distance.layout,
        stats: stage.stats,
        clusters: stage.clusters,
        factors: stage.factors,
        rank_report: stage.rank_report,
        embeddings: stage.embeddings,
        distance,
        sequence,
        routes,
        user_gender,
    })
}

impl Predictor for ModelBundle {
    /// Distance from the MLP, then profiles from the sequence model fed with
    /// that predicted distance.
    fn predict(&self, records: &[&WorkoutRecord]) -> Result<Vec<Prediction>> {
        let mut contexts = Vec::with_capacity(records.len());
        for r in records {
            let input = ContextInput {
                user_id: &r.user_id,
                cluster: self.clusters.assign_record(r)?,
                sport: r.sport.clone(),
                gender: r.gender,
                calories: r.calories,
                route_distance_km: r.route_distance(),
            };
            contexts.push(assemble_context(&self.embeddings, &input, &self.stats, &self.layout)?);
        }
        let distances = predict_distance_batch(&self.distance, &contexts)?;
        let inputs: Vec<SequenceInput<'_>> = records
            .iter()
            .zip(&contexts)
            .zip(&distances)
            .map(|((r, c), &d)| SequenceInput { context: c, distance_km: d, altitude: &r.altitude_seq, distance: &r.distance_seq })
            .collect();
        let seqs = predict_sequences_batch(&self.sequence, &inputs)?;
        Ok(distances
            .into_iter()
            .zip(seqs)
            .map(|(distance_km, (speed, heart_rate))| Prediction { distance_km, speed, heart_rate })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub bundle: ModelBundle,
    pub split: DatasetSplit,
    pub distance_curve: LossCurve,
    pub sequence_curve: LossCurve,
    pub evaluation: EvalReport,
    pub baseline: EvalReport,
    /// Test workouts left out because their user has no training workouts.
    pub cold_start_skipped: usize,
}

/// Runs every training stage on cleaned records and scores the result on the
/// held-out test split against the mean baseline.
pub fn train_pipeline(records: &[WorkoutRecord], config: &PipelineConfig) -> Result<PipelineOutput> {
    let (split, stats) = prepare(records, config)?;
    let train = select(records, &split.train);
    let validation = select(records, &split.validation);
    let clusters = fit_clusters(&train, config)?;
    let stage = fit_embeddings(records, split.clone(), stats, clusters, config)?;
    let layout = stage.layout(config.include_gender);
    let known = |r: &&WorkoutRecord| stage.embeddings.index.user_row(&r.user_id).is_some();
    let validation: Vec<&WorkoutRecord> = validation.into_iter().filter(known).collect();

    let augment = config.augment.then_some((config.augment_range, config.seed));
    let d_train = distance_examples(&train, &stage, &layout, augment)?;
    let d_val = distance_examples(&validation, &stage, &layout, None)?;
    let (distance, distance_curve) = train_distance(&d_train, &d_val, stage.stats.distance, layout, &config.distance)?;

    let s_train = sequence_examples(&train, &stage, &layout)?;
    let s_val = sequence_examples(&validation, &stage, &layout)?;
    let (sequence, sequence_curve) = train_sequence(&s_train, &s_val, &stage.stats, layout, &config.sequence)?;

    let bundle = assemble_bundle(records, stage, distance, sequence, config)?;
    let all_test = select(records, &split.test);
    let test: Vec<&WorkoutRecord> = all_test
        .iter()
        .copied()
        .filter(|r| bundle.embeddings.index.user_row(&r.user_id).is_some())
        .collect();
    let mut evaluation = evaluate(&bundle, &test)?;
    let mut baseline = evaluate(&MeanBaseline::fit(&train)?, &test)?;
    for report in [&mut evaluation, &mut baseline] {
        report.n_train = train.len();
        report.n_validation = validation.len();
    }
    Ok(PipelineOutput {
        cold_start_skipped: all_test.len() - test.len(),
        bundle,
        split,
        distance_curve,
        sequence_curve,
        evaluation,
        baseline,
    })
}
