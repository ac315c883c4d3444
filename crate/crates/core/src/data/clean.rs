use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::record::{Sport, WorkoutRecord};

/// Filtering rules applied by [`clean`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningRules {
    /// km/h caps indexed like [`Sport::index`].
    pub max_speed: [f64; 3],
    /// meters, applied to the mean altitude of a record
    pub max_mean_altitude: f64,
    pub allowed_sports: BTreeSet<Sport>,
    /// When set, records whose length differs from this are dropped.
    pub sequence_length: Option<usize>,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            max_speed: [50.0, 100.0, 80.0],
            max_mean_altitude: 8000.0,
            allowed_sports: Sport::MODELLED.iter().cloned().collect(),
            sequence_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub retained_count: usize,
    pub removals: Vec<(String, String)>,
}

pub const RULE_SPORT: &str = "sport_filter";
pub const RULE_LENGTH: &str = "sequence_length";
pub const RULE_SPEED: &str = "speed_cap";
pub const RULE_ALTITUDE: &str = "altitude_cap";
pub const RULE_HEART_RATE: &str = "heart_rate_range";
pub const RULE_DISTANCE: &str = "distance_monotone";

/// First rule the record violates, if any.
pub fn violated_rule(record: &WorkoutRecord, rules: &CleaningRules) -> Option<&'static str> {
    let Some(sport_idx) = record.sport.index() else {
        return Some(RULE_SPORT);
    };
    if !rules.allowed_sports.contains(&record.sport) {
        return Some(RULE_SPORT);
    }
    if record.is_empty() || rules.sequence_length.is_some_and(|l| record.len() != l) {
        return Some(RULE_LENGTH);
    }
    let cap = rules.max_speed[sport_idx];
    if record.speed_seq.iter().any(|&v| v < 0.0 || v > cap) {
        return Some(RULE_SPEED);
    }
    if record.mean_altitude() > rules.max_mean_altitude {
        return Some(RULE_ALTITUDE);
    }
    if record.heartrate_seq.iter().any(|&h| h <= 0.0 || h >= 250.0) {
        return Some(RULE_HEART_RATE);
    }
    let d = &record.distance_seq;
    if d[0].abs() > 1e-9 || d.windows(2).any(|w| w[1] < w[0]) {
        return Some(RULE_DISTANCE);
    }
    None
}

/// Drops records that violate any rule. Never fails.
pub fn clean(records: Vec<WorkoutRecord>, rules: &CleaningRules) -> (Vec<WorkoutRecord>, CleaningReport) {
    let input_count = records.len();
    let mut retained = Vec::with_capacity(records.len());
    let mut removals = Vec::new();
    for r in records {
        match violated_rule(&r, rules) {
            Some(rule) => removals.push((r.workout_id.clone(), rule.to_string())),
            None => retained.push(r),
        }
    }
    let report = CleaningReport {
        input_count,
        retained_count: retained.len(),
        removals,
    };
    (retained, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::Gender;

    pub(crate) fn flat_record(id: &str, sport: Sport, speed: f64, alt: f64) -> WorkoutRecord {
        let n = 6;
        WorkoutRecord {
            workout_id: id.into(),
            user_id: "u".into(),
            sport,
            gender: Gender::Female,
            calories: 100.0,
            altitude_seq: vec![alt; n],
            distance_seq: (0..n).map(|i| i as f64 * 0.1).collect(),
            speed_seq: vec![speed; n],
            heartrate_seq: vec![120.0; n],
            lat_seq: vec![0.0; n],
            lon_seq: vec![0.0; n],
            start_time: None,
            ground_truth_distance: None,
        }
    }

    fn removed_by(rec: WorkoutRecord) -> Option<String> {
        let (_, report) = clean(vec![rec], &CleaningRules::default());
        report.removals.first().map(|(_, r)| r.clone())
    }

    #[test]
    fn fast_run_hits_speed_cap() {
        let mut r = flat_record("a", Sport::Run, 10.0, 100.0);
        r.speed_seq[3] = 60.0;
        assert_eq!(removed_by(r).as_deref(), Some(RULE_SPEED));
    }

    #[test]
    fn high_altitude_hits_altitude_cap() {
        let r = flat_record("a", Sport::Bike, 20.0, 9000.0);
        assert_eq!(removed_by(r).as_deref(), Some(RULE_ALTITUDE));
    }

    #[test]
    fn kayaking_hits_sport_filter() {
        let r = flat_record("a", Sport::Other("kayaking".into()), 5.0, 0.0);
        assert_eq!(removed_by(r).as_deref(), Some(RULE_SPORT));
    }

    #[test]
    fn fast_bike_is_kept() {
        let r = flat_record("a", Sport::Bike, 60.0, 100.0);
        assert_eq!(removed_by(r), None);
    }

    #[test]
    fn short_sequence_is_rejected_when_length_configured() {
        let rules = CleaningRules {
            sequence_length: Some(10),
            ..Default::default()
        };
        let (kept, report) = clean(vec![flat_record("a", Sport::Run, 8.0, 0.0)], &rules);
        assert!(kept.is_empty());
        assert_eq!(report.removals[0].1, RULE_LENGTH);
    }

    #[test]
    fn decreasing_distance_is_rejected() {
        let mut r = flat_record("a", Sport::Run, 8.0, 0.0);
        r.distance_seq[4] = 0.1;
        assert_eq!(removed_by(r).as_deref(), Some(RULE_DISTANCE));
    }

    #[test]
    fn report_counts_balance_and_clean_is_idempotent() {
        let mut fast = flat_record("b", Sport::Run, 70.0, 0.0);
        fast.speed_seq[0] = 1.0;
        let recs = vec![
            flat_record("a", Sport::Run, 8.0, 0.0),
            fast,
            flat_record("c", Sport::Other("golf".into()), 3.0, 0.0),
            flat_record("d", Sport::MountainBike, 15.0, 8500.0),
            flat_record("e", Sport::MountainBike, 15.0, 500.0),
        ];
        let rules = CleaningRules::default();
        let (once, report) = clean(recs, &rules);
        assert_eq!(report.input_count, report.retained_count + report.removals.len());
        assert_eq!(report.retained_count, 2);
        let (twice, report2) = clean(once.clone(), &rules);
        assert_eq!(once, twice);
        assert!(report2.removals.is_empty());
    }
}
