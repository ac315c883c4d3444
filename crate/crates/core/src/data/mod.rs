//! Workout records: parsing, cleaning, loop augmentation, splitting,
//! normalization statistics and a synthetic generator.

mod augment;
mod clean;
mod record;
mod split;
mod synth;

pub use augment::{
    augment_route, augment_route_with_fraction, haversine_m, is_loop, DEFAULT_FRACTION_RANGE,
    DEFAULT_LOOP_EPSILON_M,
};
pub use clean::{clean, violated_rule, CleaningReport, CleaningRules};
pub use record::{
    parse_records, read_records_file, write_records, write_records_file, Gender, Sport,
    WorkoutRecord,
};
pub use split::{select, split_and_normalize, DatasetSplit, MinMax, NormStats};
pub use synth::{generate_synthetic, simulate_workout, SyntheticConfig, SyntheticUser, SyntheticWorld, RouteTemplate};
