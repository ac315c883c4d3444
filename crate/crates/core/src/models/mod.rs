//! Context features, the distance and sequence models, metrics, evaluation,
//! model bundles and the end-to-end training pipeline.

mod bundle;
mod distance;
mod evaluate;
mod features;
mod metrics;
mod pipeline;
mod sequence;

pub use bundle::{
    decode_artifact, decode_bundle, encode_artifact, encode_bundle, load_artifact, load_bundle, save_artifact,
    save_bundle, ModelBundle, RouteEntry, BUNDLE_KIND, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use distance::{
    predict_distance, predict_distance_batch, train_distance, DistanceExample, DistanceModel, LossCurve,
    TrainingConfig,
};
pub use evaluate::{evaluate, EvalReport, MeanBaseline, Prediction, Predictor};
pub use features::{assemble_context, ContextInput, ContextLayout};
pub use metrics::{mae_seq, rmse};
pub use pipeline::{
    assemble_bundle, distance_examples, fit_clusters, fit_embeddings, prepare, sequence_examples, train_pipeline,
    EmbeddingStage, PipelineConfig, PipelineOutput,
};
pub use sequence::{
    predict_sequences, predict_sequences_batch, train_sequence, SequenceExample, SequenceInput, SequenceModel,
    STEP_FEATURES,
};
