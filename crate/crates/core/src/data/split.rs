use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::WorkoutRecord;
use crate::error::{FitError, Result};

/// Closed value range used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<MinMax> {
        let mut it = values.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(MinMax { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Degenerate ranges map every value to 0.
    pub fn normalize(&self, x: f64) -> f64 {
        let span = self.span();
        if span > 0.0 {
            (x - self.min) / span
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.min + y * self.span()
    }
}

/// Min-max statistics for every scalar and sequential feature, computed on
/// the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub calories: MinMax,
    /// Total workout distance in km; shared by the target and route-length inputs.
    pub distance: MinMax,
    pub altitude: MinMax,
    /// Per-step cumulative distance in km.
    pub step_distance: MinMax,
    pub speed: MinMax,
    pub heartrate: MinMax,
}

impl NormStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a WorkoutRecord> + Clone) -> Result<Self> {
        let none = || FitError::InsufficientData("no records to compute normalization".into());
        let flat = |f: fn(&'a WorkoutRecord) -> &'a [f64]| {
            MinMax::of(records.clone().into_iter().flat_map(move |r| f(r).iter().copied()))
        };
        Ok(NormStats {
            calories: MinMax::of(records.clone().into_iter().map(|r| r.calories)).ok_or_else(none)?,
            distance: MinMax::of(records.clone().into_iter().flat_map(|r| {
                [r.target_distance(), r.route_distance()]
            }))
            .ok_or_else(none)?,
            altitude: flat(|r| &r.altitude_seq).ok_or_else(none)?,
            step_distance: flat(|r| &r.distance_seq).ok_or_else(none)?,
            speed: flat(|r| &r.speed_seq).ok_or_else(none)?,
            heartrate: flat(|r| &r.heartrate_seq).ok_or_else(none)?,
        })
    }

    pub fn ranges(&self) -> [(&'static str, MinMax); 6] {
        [
            ("calories", self.calories),
            ("distance", self.distance),
            ("altitude", self.altitude),
            ("step_distance", self.step_distance),
            ("speed", self.speed),
            ("heartrate", self.heartrate),
        ]
    }

    pub fn from_ranges(values: &[f64]) -> Result<Self> {
        if values.len() != 12 {
            return Err(FitError::dims(format!("expected 12 range values, got {}", values.len())));
        }
        let mm = |i: usize| MinMax {
            min: values[2 * i],
            max: values[2 * i + 1],
        };
        Ok(NormStats {
            calories: mm(0),
            distance: mm(1),
            altitude: mm(2),
            step_distance: mm(3),
            speed: mm(4),
            heartrate: mm(5),
        })
    }

    pub fn to_ranges(&self) -> Vec<f64> {
        self.ranges().iter().flat_map(|(_, r)| [r.min, r.max]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Partition sizes for `n` items; every part gets at least one item.
fn split_counts(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, r) in counts.iter_mut().zip(&raw) {
        // absorb representation error such as 0.1 * 10 = 1.0000000000000002
        *c = (r + 1e-9).floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = n.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    counts
}

/// Seeded shuffle-and-cut into train/validation/test, with normalization
/// statistics from the training part only.
pub fn split_and_normalize(
    records: &[WorkoutRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<(DatasetSplit, NormStats)> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(FitError::InvalidArgument(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    if records.len() < 3 {
        return Err(FitError::InsufficientData(format!(
            "{} records cannot fill 3 splits",
            records.len()
        )));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.workout_id.clone()).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let [n_train, n_val, _] = split_counts(ids.len(), ratios);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    let split = DatasetSplit {
        train: ids,
        validation,
        test,
        seed,
    };
    let train_set: std::collections::HashSet<&str> = split.train.iter().map(String::as_str).collect();
    let train_records: Vec<&WorkoutRecord> = records
        .iter()
        .filter(|r| train_set.contains(r.workout_id.as_str()))
        .collect();
    let stats = NormStats::from_records(train_records.iter().copied())?;
    Ok((split, stats))
}

/// Selects the records whose ids appear in `ids`, preserving `ids` order.
pub fn select<'a>(records: &'a [WorkoutRecord], ids: &[String]) -> Vec<&'a WorkoutRecord> {
    let index: std::collections::HashMap<&str, &WorkoutRecord> =
        records.iter().map(|r| (r.workout_id.as_str(), r)).collect();
    ids.iter().filter_map(|id| index.get(id.as_str()).copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{Gender, Sport};
    use proptest::prelude::*;

    fn rec(i: usize, calories: f64, distance: f64) -> WorkoutRecord {
        WorkoutRecord {
            workout_id: format!("w{i:02}"),
            user_id: "u".into(),
            sport: Sport::Run,
            gender: Gender::Unknown,
            calories,
            altitude_seq: vec![10.0, 20.0],
            distance_seq: vec![0.0, distance],
            speed_seq: vec![5.0, 6.0],
            heartrate_seq: vec![100.0, 110.0],
            lat_seq: vec![0.0, 0.0],
            lon_seq: vec![0.0, 0.0],
            start_time: None,
            ground_truth_distance: None,
        }
    }

    #[test]
    fn ten_records_split_eight_one_one_repeatably() {
        let recs: Vec<_> = (0..10).map(|i| rec(i, 500.0, 1.0 + i as f64)).collect();
        let (a, _) = split_and_normalize(&recs, [0.8, 0.1, 0.1], 7).unwrap();
        let (b, _) = split_and_normalize(&recs, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (8, 1, 1));
        assert_eq!(a, b);
        let mut all: Vec<_> = a.train.iter().chain(&a.validation).chain(&a.test).cloned().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn constant_calories_normalize_to_zero() {
        let recs: Vec<_> = (0..10).map(|i| rec(i, 500.0, 1.0 + i as f64)).collect();
        let (_, stats) = split_and_normalize(&recs, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(stats.calories, MinMax { min: 500.0, max: 500.0 });
        assert_eq!(stats.calories.normalize(500.0), 0.0);
    }

    #[test]
    fn distance_range_from_training_distances() {
        let recs = [rec(0, 1.0, 2.0), rec(1, 1.0, 4.0), rec(2, 1.0, 10.0)];
        let stats = NormStats::from_records(recs.iter()).unwrap();
        assert_eq!(stats.distance, MinMax { min: 2.0, max: 10.0 });
        assert_eq!(stats.distance.normalize(4.0), 0.25);
    }

    #[test]
    fn too_few_records_is_an_error() {
        let recs = [rec(0, 1.0, 2.0), rec(1, 1.0, 4.0)];
        assert!(matches!(
            split_and_normalize(&recs, [0.8, 0.1, 0.1], 1),
            Err(FitError::InsufficientData(_))
        ));
    }

    #[test]
    fn stats_ignore_held_out_records() {
        let recs: Vec<_> = (0..20).map(|i| rec(i, 100.0 * i as f64, 1.0)).collect();
        let (split, stats) = split_and_normalize(&recs, [0.6, 0.2, 0.2], 3).unwrap();
        let train_cal = select(&recs, &split.train).iter().map(|r| r.calories).fold(f64::MIN, f64::max);
        assert_eq!(stats.calories.max, train_cal);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(lo in -1e4f64..1e4, span in 1e-3f64..1e4, x in -1e5f64..1e5) {
            let mm = MinMax { min: lo, max: lo + span };
            let back = mm.denormalize(mm.normalize(x));
            let scale = x.abs().max(lo.abs()).max((lo + span).abs());
            prop_assert!((back - x).abs() <= 1e-9 * scale);
        }

        #[test]
        fn split_counts_are_exhaustive(n in 3usize..500, a in 0.05f64..1.0, b in 0.05f64..1.0, c in 0.05f64..1.0) {
            let s = a + b + c;
            let counts = split_counts(n, [a / s, b / s, c / s]);
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            prop_assert!(counts.iter().all(|&k| k >= 1));
        }
    }
}
