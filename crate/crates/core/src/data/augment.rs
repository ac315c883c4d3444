//! Route extension for loop workouts.
//!
//! A workout that ends where it started is extended by replaying the first
//! few steps of the route after the final point. The extended sequences are
//! used as model input while the original distance stays the target, which
//! teaches the distance model that fewer calories mean a shorter workout on
//! the same route.

use rand::Rng;

use super::record::WorkoutRecord;
use crate::error::{FitError, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default maximum start/end separation for a route to count as a loop.
pub const DEFAULT_LOOP_EPSILON_M: f64 = 100.0;

/// Default range of the appended fraction of the route.
pub const DEFAULT_FRACTION_RANGE: (f64, f64) = (0.05, 0.5);

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

pub fn is_loop(record: &WorkoutRecord, epsilon_m: f64) -> bool {
    let n = record.len();
    n >= 2
        && haversine_m(
            record.lat_seq[0],
            record.lon_seq[0],
            record.lat_seq[n - 1],
            record.lon_seq[n - 1],
        ) < epsilon_m
}

/// Extends a loop route by `round(fraction * L)` replayed steps, at least one
/// for any positive fraction.
///
/// The replay starts at the second point because the last point of a loop
/// already coincides with the first. Cumulative distance continues from the
/// final value.
pub fn augment_route_with_fraction(
    record: &WorkoutRecord,
    fraction: f64,
    epsilon_m: f64,
) -> Result<WorkoutRecord> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(FitError::InvalidArgument(format!(
            "augmentation fraction {fraction} outside [0, 1)"
        )));
    }
    if !is_loop(record, epsilon_m) {
        return Err(FitError::NotALoop(record.workout_id.clone()));
    }
    let len = record.len();
    let extra = if fraction == 0.0 {
        0
    } else {
        ((fraction * len as f64).round() as usize).clamp(1, len - 1)
    };
    if extra == 0 {
        return Ok(record.clone());
    }
    let replay = 1..=extra;
    let extend = |seq: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(len + extra);
        out.extend_from_slice(seq);
        out.extend_from_slice(&seq[replay.clone()]);
        out
    };
    let base = record.route_distance();
    let mut distance_seq = record.distance_seq.clone();
    distance_seq.extend(record.distance_seq[replay.clone()].iter().map(|d| base + d));

    Ok(WorkoutRecord {
        workout_id: format!("{}+aug{extra}", record.workout_id),
        user_id: record.user_id.clone(),
        sport: record.sport.clone(),
        gender: record.gender,
        calories: record.calories,
        altitude_seq: extend(&record.altitude_seq),
        distance_seq,
        speed_seq: extend(&record.speed_seq),
        heartrate_seq: extend(&record.heartrate_seq),
        lat_seq: extend(&record.lat_seq),
        lon_seq: extend(&record.lon_seq),
        start_time: record.start_time,
        ground_truth_distance: Some(record.target_distance()),
    })
}

/// Extends a loop route by a fraction drawn uniformly from `range`.
pub fn augment_route<R: Rng + ?Sized>(
    record: &WorkoutRecord,
    range: (f64, f64),
    rng: &mut R,
) -> Result<WorkoutRecord> {
    let (lo, hi) = range;
    if !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(FitError::InvalidArgument(format!(
            "fraction range ({lo}, {hi}) must lie inside (0, 1)"
        )));
    }
    let t = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    augment_route_with_fraction(record, t, DEFAULT_LOOP_EPSILON_M)
}
