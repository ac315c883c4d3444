//! Route clustering.
//!
//! Every workout has its own GPS trace, so routes are grouped into a small
//! number of categories before building the context tensor. A route is
//! summarised by a fixed-size signature (positions and altitude resampled at
//! equispaced arc length, plus total distance and ascent) and grouped with
//! k-means.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WorkoutRecord;
use crate::error::{FitError, Result};

pub const DEFAULT_SIGNATURE_POINTS: usize = 16;
pub const DEFAULT_CLUSTERS: usize = 32;

/// Raw (unstandardized) route signature of dimension `3K + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSignature(pub Vec<f64>);

impl RouteSignature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    // xs is non-decreasing; find the last segment starting at or before x
    let hi = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    if span <= 0.0 {
        return ys[hi];
    }
    let w = ((x - xs[lo]) / span).clamp(0.0, 1.0);
    ys[lo] + w * (ys[hi] - ys[lo])
}

/// Resamples latitude, longitude and altitude at `points` equispaced
/// cumulative-distance positions and appends total distance and ascent.
///
/// Layout: `[lat_0..lat_{K-1}, lon_0..lon_{K-1}, alt_0..alt_{K-1}, distance_km, ascent_m]`.
pub fn route_signature(record: &WorkoutRecord, points: usize) -> Result<RouteSignature> {
    if points < 2 {
        return Err(FitError::InvalidArgument("signature needs at least 2 points".into()));
    }
    let total = record.route_distance();
    if record.len() < 2 || !(total > 0.0) {
        return Err(FitError::DegenerateRoute(record.workout_id.clone()));
    }
    let d = &record.distance_seq;
    let mut sig = Vec::with_capacity(3 * points + 2);
    for seq in [&record.lat_seq, &record.lon_seq, &record.altitude_seq] {
        for k in 0..points {
            let x = total * k as f64 / (points - 1) as f64;
            sig.push(interpolate(d, seq, x));
        }
    }
    let ascent: f64 = record
        .altitude_seq
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .sum();
    sig.push(total);
    sig.push(ascent);
    Ok(RouteSignature(sig))
}

/// Per-component standardization fitted on training signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(signatures: &[RouteSignature]) -> Result<Self> {
        let first = signatures
            .first()
            .ok_or_else(|| FitError::InsufficientData("no signatures".into()))?;
        let dim = first.dim();
        if signatures.iter().any(|s| s.dim() != dim) {
            return Err(FitError::dims("signatures differ in dimension"));
        }
        let n = signatures.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in signatures {
            for (m, v) in mean.iter_mut().zip(&s.0) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for s in signatures {
            for ((sd, v), m) in std.iter_mut().zip(&s.0).zip(&mean) {
                *sd += (v - m).powi(2) / n;
            }
        }
        for sd in &mut std {
            *sd = if *sd > 1e-24 { sd.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, sig: &RouteSignature) -> Result<Vec<f64>> {
        if sig.dim() != self.mean.len() {
            return Err(FitError::dims(format!(
                "signature has dimension {}, model expects {}",
                sig.dim(),
                self.mean.len()
            )));
        }
        Ok(sig
            .0
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `k` centroids in standardized signature space.
    pub centroids: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    pub signature_points: usize,
    pub seed: u64,
    /// Within-cluster sum of squares after each Lloyd assignment.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    sorted.len()
}

fn kmeans_pp_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        // total > 0 because k does not exceed the number of distinct points
        let c = points[pick.expect("a point with positive distance exists")].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means with k-means++ seeding and Lloyd iterations on standardized signatures.
pub fn kmeans_fit(
    signatures: &[RouteSignature],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel> {
    let standardizer = Standardizer::fit(signatures)?;
    let points: Vec<Vec<f64>> = signatures
        .iter()
        .map(|s| standardizer.apply(s))
        .collect::<Result<_>>()?;
    let distinct = distinct_count(&points);
    if k == 0 || k > distinct {
        return Err(FitError::InfeasibleK { k, distinct });
    }
    let points_per_sig = (signatures[0].dim() - 2) / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_seed(&points, k, &mut rng);
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let dim = points[0].len();

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, p) in assignment.iter_mut().zip(&points) {
            let (c, d) = nearest(&centroids, p);
            inertia += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(&points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // empty clusters take the point farthest from its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[assignment[i]]);
                        let dj = sq_dist(&points[j], &centroids[assignment[j]]);
                        di.partial_cmp(&dj).unwrap().then(j.cmp(&i))
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
                counts[assignment[far]] -= 1;
                assignment[far] = c;
                counts[c] = 1;
            }
        }
    }
    Ok(ClusterModel {
        centroids,
        standardizer,
        signature_points: points_per_sig,
        seed,
        inertia_history: history,
    })
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Nearest centroid of a raw signature.
    pub fn assign(&self, signature: &RouteSignature) -> Result<usize> {
        let z = self.standardizer.apply(signature)?;
        Ok(nearest(&self.centroids, &z).0)
    }

    pub fn assign_record(&self, record: &WorkoutRecord) -> Result<usize> {
        self.assign(&route_signature(record, self.signature_points)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Gender, Sport};
    use rand_distr::{Distribution, StandardNormal};

    fn line_record(n: usize, length_km: f64) -> WorkoutRecord {
        let f = |i: usize| i as f64 / (n - 1) as f64;
        WorkoutRecord {
            workout_id: format!("line{n}"),
            user_id: "u".into(),
            sport: Sport::Run,
            gender: Gender::Unknown,
            calories: 1.0,
            altitude_seq: (0..n).map(|i| 100.0 + 30.0 * (f(i) * 6.0).sin()).collect(),
            distance_seq: (0..n).map(|i| length_km * f(i)).collect(),
            speed_seq: vec![10.0; n],
            heartrate_seq: vec![120.0; n],
            lat_seq: (0..n).map(|i| 45.0 + 0.01 * f(i)).collect(),
            lon_seq: (0..n).map(|i| 7.0 + 0.02 * f(i)).collect(),
            start_time: None,
            ground_truth_distance: None,
        }
    }

    #[test]
    fn straight_flat_line_resamples_evenly() {
        let mut r = line_record(11, 2.0);
        r.altitude_seq = vec![50.0; 11];
        let s = route_signature(&r, 4).unwrap();
        assert_eq!(s.dim(), 14);
        for k in 0..4 {
            let f = k as f64 / 3.0;
            assert!((s.0[k] - (45.0 + 0.01 * f)).abs() < 1e-12);
            assert!((s.0[4 + k] - (7.0 + 0.02 * f)).abs() < 1e-12);
            assert_eq!(s.0[8 + k], 50.0);
        }
        assert_eq!(s.0[12], 2.0);
        assert_eq!(s.0[13], 0.0);
    }

    #[test]
    fn double_density_gives_same_signature() {
        let coarse = line_record(9, 3.0);
        // insert midpoints, which lie on the piecewise-linear path
        let mid = |seq: &[f64]| -> Vec<f64> {
            let mut out = Vec::new();
            for w in seq.windows(2) {
                out.push(w[0]);
                out.push(0.5 * (w[0] + w[1]));
            }
            out.push(*seq.last().unwrap());
            out
        };
        let mut fine = coarse.clone();
        fine.altitude_seq = mid(&coarse.altitude_seq);
        fine.distance_seq = mid(&coarse.distance_seq);
        fine.lat_seq = mid(&coarse.lat_seq);
        fine.lon_seq = mid(&coarse.lon_seq);
        fine.speed_seq = vec![10.0; fine.altitude_seq.len()];
        fine.heartrate_seq = fine.speed_seq.clone();
        let a = route_signature(&coarse, 16).unwrap();
        let b = route_signature(&fine, 16).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn single_point_route_is_degenerate() {
        let mut r = line_record(2, 1.0);
        for seq in [
            &mut r.altitude_seq,
            &mut r.distance_seq,
            &mut r.speed_seq,
            &mut r.heartrate_seq,
            &mut r.lat_seq,
            &mut r.lon_seq,
        ] {
            seq.truncate(1);
        }
        assert!(matches!(route_signature(&r, 4), Err(FitError::DegenerateRoute(_))));
    }

    fn sigs(points: &[Vec<f64>]) -> Vec<RouteSignature> {
        points.iter().map(|p| RouteSignature(p.clone())).collect()
    }

    #[test]
    fn k_equal_to_points_has_zero_inertia() {
        let pts = vec![vec![0.0, 1.0], vec![3.0, -1.0], vec![5.0, 5.0], vec![-2.0, 0.5]];
        let m = kmeans_fit(&sigs(&pts), 4, 1, 50).unwrap();
        assert!(m.inertia_history.last().unwrap().abs() < 1e-20);
        let mut ids: Vec<usize> = pts.iter().map(|p| m.assign(&RouteSignature(p.clone())).unwrap()).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_blobs_split_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let centre = if i % 2 == 0 { 0.0 } else { 100.0 };
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            pts.push(vec![centre + x, centre + y]);
            truth.push(i % 2);
        }
        let m = kmeans_fit(&sigs(&pts), 2, 11, 100).unwrap();
        // brute-force nearest centroid in standardized space
        let labels: Vec<usize> = pts
            .iter()
            .map(|p| {
                let z = m.standardizer.apply(&RouteSignature(p.clone())).unwrap();
                let d: Vec<f64> = m.centroids.iter().map(|c| sq_dist(c, &z)).collect();
                if d[0] <= d[1] { 0 } else { 1 }
            })
            .collect();
        let flip = labels[0] != truth[0];
        for (l, t) in labels.iter().zip(&truth) {
            assert_eq!(*l != *t, flip);
        }
    }

    #[test]
    fn fit_is_deterministic_and_inertia_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let a = kmeans_fit(&sigs(&pts), 7, 99, 100).unwrap();
        let b = kmeans_fit(&sigs(&pts), 7, 99, 100).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", a.inertia_history);
        }
        for (i, c) in a.centroids.iter().enumerate() {
            assert_eq!(nearest(&a.centroids, c).0, i);
            for c2 in &a.centroids[i + 1..] {
                assert_ne!(c, c2);
            }
        }
    }

    #[test]
    fn infeasible_k_is_rejected() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(
            kmeans_fit(&sigs(&pts), 3, 0, 10),
            Err(FitError::InfeasibleK { k: 3, distinct: 2 })
        ));
    }

    #[test]
    fn assign_rules() {
        let model = ClusterModel {
            centroids: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 7.0]],
            standardizer: Standardizer::identity(2),
            signature_points: 0,
            seed: 0,
            inertia_history: vec![],
        };
        assert_eq!(model.assign(&RouteSignature(vec![0.0, 7.0])).unwrap(), 3);
        // equidistant from centroids 1 and 2 (and farther from 0)
        let mut tie = model.clone();
        tie.centroids[0] = vec![0.0, 50.0];
        assert_eq!(tie.assign(&RouteSignature(vec![0.0, 0.0])).unwrap(), 1);
        assert!(model.assign(&RouteSignature(vec![0.0])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let dists: Vec<f64> = model.centroids.iter().map(|c| sq_dist(c, &p)).collect();
            let best = (0..4).min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap()).unwrap();
            assert_eq!(model.assign(&RouteSignature(p)).unwrap(), best);
        }
    }
}
