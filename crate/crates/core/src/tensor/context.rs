use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::dense::DenseTensor3;
use crate::cluster::ClusterModel;
use crate::data::WorkoutRecord;
use crate::error::{FitError, Result};

/// Context features along the third tensor mode, in order.
pub const CONTEXT_FEATURES: [&str; 9] = [
    "gender_code",
    "share_run",
    "share_bike",
    "share_mountain_bike",
    "workouts_per_week",
    "avg_duration_h",
    "avg_distance_km",
    "avg_speed_kmh",
    "avg_heartrate_bpm",
];

const WEEK_SECONDS: f64 = 7.0 * 86_400.0;

/// Row/column lookup for the user and route-cluster modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "IndexRepr", from = "IndexRepr")]
pub struct EntityIndex {
    /// Sorted user ids; position is the row of the user factor.
    pub users: Vec<String>,
    pub n_clusters: usize,
    rows: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexRepr {
    users: Vec<String>,
    n_clusters: usize,
}

impl From<IndexRepr> for EntityIndex {
    fn from(r: IndexRepr) -> Self {
        EntityIndex::new(r.users, r.n_clusters)
    }
}

impl From<EntityIndex> for IndexRepr {
    fn from(e: EntityIndex) -> Self {
        IndexRepr { users: e.users, n_clusters: e.n_clusters }
    }
}

impl EntityIndex {
    pub fn new(mut users: Vec<String>, n_clusters: usize) -> Self {
        users.sort();
        users.dedup();
        let rows = users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        EntityIndex {
            users,
            n_clusters,
            rows,
        }
    }

    pub fn user_row(&self, user_id: &str) -> Option<usize> {
        self.rows.get(user_id).copied()
    }
}

#[derive(Debug, Clone)]
pub struct ContextTensor {
    /// Slice-standardized tensor fed to the decomposition.
    pub tensor: DenseTensor3,
    /// Cell means before standardization.
    pub raw: DenseTensor3,
    /// `populated[u * n_clusters + r]` is true when user `u` has a workout on cluster `r`.
    pub populated: Vec<bool>,
    pub index: EntityIndex,
}

/// Per-workout feature vector, with the user-level weekly frequency supplied.
fn workout_features(record: &WorkoutRecord, per_week: f64) -> [f64; 9] {
    let mut share = [0.0; 3];
    if let Some(i) = record.sport.index() {
        share[i] = 1.0;
    }
    [
        record.gender.code(),
        share[0],
        share[1],
        share[2],
        per_week,
        record.duration_hours(),
        record.target_distance(),
        record.mean_speed(),
        record.mean_heartrate(),
    ]
}

fn weekly_frequency(records: &[&WorkoutRecord]) -> f64 {
    let times: Vec<i64> = records.iter().filter_map(|r| r.start_time).collect();
    let weeks = match (times.iter().min(), times.iter().max()) {
        (Some(lo), Some(hi)) => ((hi - lo) as f64 / WEEK_SECONDS).max(1.0),
        _ => 1.0,
    };
    records.len() as f64 / weeks
}

/// Builds the user × route-cluster × context tensor.
///
/// Cell `(u, r, c)` is the mean of feature `c` over user `u`'s workouts on
/// cluster `r`. Each feature slice is then z-scored over populated cells;
/// unpopulated cells stay zero.
pub fn build_context_tensor(records: &[WorkoutRecord], clusters: &ClusterModel) -> Result<ContextTensor> {
    if records.is_empty() {
        return Err(FitError::InsufficientData("no records for the context tensor".into()));
    }
    if records.iter().any(|r| r.sport.index().is_none()) {
        return Err(FitError::validation("sport", "context tensor needs cleaned records"));
    }
    let assignments: Vec<usize> = records
        .iter()
        .map(|r| clusters.assign_record(r))
        .collect::<Result<_>>()?;
    build_context_tensor_with(records, &assignments, clusters.k())
}

/// Same as [`build_context_tensor`] with precomputed cluster assignments.
pub fn build_context_tensor_with(
    records: &[WorkoutRecord],
    assignments: &[usize],
    n_clusters: usize,
) -> Result<ContextTensor> {
    if records.is_empty() {
        return Err(FitError::InsufficientData("no records for the context tensor".into()));
    }
    if assignments.len() != records.len() || assignments.iter().any(|&c| c >= n_clusters) {
        return Err(FitError::dims("cluster assignments do not match records"));
    }
    let mut by_user: BTreeMap<&str, Vec<&WorkoutRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }
    let index = EntityIndex::new(by_user.keys().map(|s| s.to_string()).collect(), n_clusters);
    let frequency: HashMap<&str, f64> = by_user
        .iter()
        .map(|(u, recs)| (*u, weekly_frequency(recs)))
        .collect();

    let nf = CONTEXT_FEATURES.len();
    let (ni, nj) = (index.users.len(), n_clusters);
    let mut sums = vec![0.0; ni * nj * nf];
    let mut counts = vec![0usize; ni * nj];
    for (r, &cluster) in records.iter().zip(assignments) {
        let u = index.user_row(&r.user_id).expect("indexed above");
        let cell = u * nj + cluster;
        counts[cell] += 1;
        let feats = workout_features(r, frequency[r.user_id.as_str()]);
        for (f, v) in feats.iter().enumerate() {
            sums[cell * nf + f] += v;
        }
    }
    let populated: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let mut raw = vec![0.0; ni * nj * nf];
    for cell in 0..ni * nj {
        if counts[cell] > 0 {
            for f in 0..nf {
                raw[cell * nf + f] = sums[cell * nf + f] / counts[cell] as f64;
            }
        }
    }

    let n_pop = populated.iter().filter(|&&p| p).count() as f64;
    let mut scaled = vec![0.0; raw.len()];
    for f in 0..nf {
        let vals = || (0..ni * nj).filter(|&c| populated[c]).map(|c| raw[c * nf + f]);
        let mean = vals().sum::<f64>() / n_pop;
        let var = vals().map(|v| (v - mean).powi(2)).sum::<f64>() / n_pop;
        let sd = var.sqrt();
        for c in (0..ni * nj).filter(|&c| populated[c]) {
            scaled[c * nf + f] = if sd > 1e-12 { (raw[c * nf + f] - mean) / sd } else { 0.0 };
        }
    }
    Ok(ContextTensor {
        tensor: DenseTensor3::from_values((ni, nj, nf), scaled)?,
        raw: DenseTensor3::from_values((ni, nj, nf), raw)?,
        populated,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Gender, Sport};

    fn rec(id: &str, user: &str, sport: Sport, distance: f64) -> WorkoutRecord {
        WorkoutRecord {
            workout_id: id.into(),
            user_id: user.into(),
            sport,
            gender: Gender::Male,
            calories: 100.0,
            altitude_seq: vec![0.0, 0.0, 0.0],
            distance_seq: vec![0.0, distance / 2.0, distance],
            speed_seq: vec![10.0, 10.0, 10.0],
            heartrate_seq: vec![120.0, 130.0, 140.0],
            lat_seq: vec![0.0; 3],
            lon_seq: vec![0.0; 3],
            start_time: None,
            ground_truth_distance: None,
        }
    }

    #[test]
    fn single_workout_cell_is_raw_features() {
        let r = rec("w", "u", Sport::Bike, 5.0);
        let ct = build_context_tensor_with(std::slice::from_ref(&r), &[0], 1).unwrap();
        let want = [1.0, 0.0, 1.0, 0.0, 1.0, 0.5, 5.0, 10.0, 130.0];
        for (f, w) in want.iter().enumerate() {
            assert!((ct.raw.get(0, 0, f) - w).abs() < 1e-12, "feature {f}");
        }
        // one populated cell: every slice standardizes to zero
        assert!(ct.tensor.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cell_averages_distance() {
        let recs = vec![rec("a", "u", Sport::Run, 4.0), rec("b", "u", Sport::Run, 6.0)];
        let ct = build_context_tensor_with(&recs, &[1, 1], 2).unwrap();
        assert!((ct.raw.get(0, 1, 6) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unvisited_cluster_is_zero_fiber() {
        let recs = vec![
            rec("a", "u1", Sport::Run, 4.0),
            rec("b", "u2", Sport::Bike, 20.0),
            rec("c", "u2", Sport::Run, 6.0),
        ];
        let ct = build_context_tensor_with(&recs, &[0, 1, 0], 2).unwrap();
        assert_eq!(ct.index.users, vec!["u1", "u2"]);
        assert!(!ct.populated[1]);
        for f in 0..9 {
            assert_eq!(ct.tensor.get(0, 1, f), 0.0);
            assert_eq!(ct.raw.get(0, 1, f), 0.0);
        }
        // populated slices are standardized: mean zero over populated cells
        for f in 0..9 {
            let s: f64 = [(0, 0), (1, 0), (1, 1)].iter().map(|&(u, r)| ct.tensor.get(u, r, f)).sum();
            assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn index_survives_serde() {
        let idx = EntityIndex::new(vec!["b".into(), "a".into()], 3);
        let back: EntityIndex = serde_json::from_str(&serde_json::to_string(&idx).unwrap()).unwrap();
        assert_eq!(back.user_row("b"), Some(1));
        assert_eq!(back, idx);
    }

    #[test]
    fn empty_records_rejected() {
        assert!(build_context_tensor_with(&[], &[], 1).is_err());
    }

    #[test]
    fn weekly_frequency_uses_span() {
        let mut a = rec("a", "u", Sport::Run, 1.0);
        let mut b = rec("b", "u", Sport::Run, 1.0);
        a.start_time = Some(0);
        b.start_time = Some((2.0 * WEEK_SECONDS) as i64);
        assert!((weekly_frequency(&[&a, &b]) - 1.0).abs() < 1e-12);
    }
}
