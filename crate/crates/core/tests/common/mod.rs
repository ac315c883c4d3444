use fitforge::data::{generate_synthetic, SyntheticConfig, WorkoutRecord};
use fitforge::models::{train_pipeline, PipelineConfig, PipelineOutput};

pub fn small_records() -> Vec<WorkoutRecord> {
    generate_synthetic(&SyntheticConfig {
        n_users: 12,
        n_routes: 8,
        workouts_per_user: 8,
        sequence_length: 12,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

pub fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig { clusters: 4, ranks: vec![2, 3], ..PipelineConfig::default() };
    cfg.distance.epochs = 5;
    cfg.distance.hidden = vec![8];
    cfg.sequence.epochs = 1;
    cfg.sequence.hidden = vec![6, 4];
    cfg
}

#[allow(dead_code)]
pub fn small_pipeline() -> (Vec<WorkoutRecord>, PipelineOutput) {
    let records = small_records();
    let out = train_pipeline(&records, &small_config()).unwrap();
    (records, out)
}
