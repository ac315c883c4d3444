//! Deterministic synthetic workout generator.
//!
//! The generative model is fixed so that tests can reason about it:
//!
//! * every user has a latent fitness `phi ~ U(0.5, 1.5)`, a gender, a
//!   preferred sport (chosen for 80% of their workouts) and a weekly
//!   workout frequency in `[1, 5]`;
//! * every route template is a closed circular loop whose length depends on
//!   the template's sport, with an altitude profile given by a smoothed,
//!   bounded random walk pinned to return to its start;
//! * along a workout, `grade_t = d altitude / d horizontal` (clamped to
//!   `±0.15`), `speed_t = phi * base(sport) * (1 - K_GRADE * grade_t) + noise`
//!   clamped to at least 0.5 km/h, and
//!   `heartrate_t = 60 + HR_PER_KMH * speed_t + HR_PER_GRADE * max(grade_t, 0) + noise`
//!   clamped to `[40, 210]`;
//! * each workout is one lap of its template sampled at `L` instants with a
//!   constant per-workout step duration, so cumulative distance integrates
//!   speed and ends at the template length; positions are found by a short
//!   fixed-point iteration because grade depends on position;
//! * `calories = kcal_per_km(sport) * sum_t speed_t * dt * (1 + HR_CALORIE_GAIN * heartrate_t / 100)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::record::{Gender, Sport, WorkoutRecord};
use crate::error::{FitError, Result};

pub const K_GRADE: f64 = 2.5;
pub const MAX_GRADE: f64 = 0.15;
pub const HR_REST: f64 = 60.0;
pub const HR_PER_KMH: f64 = 3.0;
pub const HR_PER_GRADE: f64 = 300.0;
pub const HR_CALORIE_GAIN: f64 = 0.5;
pub const SPEED_NOISE_KMH: f64 = 1.0;
pub const HR_NOISE_BPM: f64 = 4.0;
const FIXED_POINT_ROUNDS: usize = 4;
const WEEK_SECONDS: f64 = 7.0 * 86_400.0;

pub fn base_speed(sport: &Sport) -> f64 {
    match sport {
        Sport::Run => 10.0,
        Sport::Bike => 25.0,
        _ => 16.0,
    }
}

pub fn kcal_per_km(sport: &Sport) -> f64 {
    match sport {
        Sport::Run => 60.0,
        Sport::Bike => 25.0,
        _ => 35.0,
    }
}

fn route_length_range(sport: &Sport) -> (f64, f64) {
    match sport {
        Sport::Run => (3.0, 12.0),
        Sport::Bike => (15.0, 50.0),
        _ => (8.0, 30.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_routes: usize,
    pub workouts_per_user: usize,
    pub sequence_length: usize,
    /// Multiplies the speed and heart-rate noise standard deviations.
    pub noise_scale: f64,
    /// Standard deviation (m) of the altitude random-walk step; 0 gives flat routes.
    pub terrain_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 100,
            n_routes: 45,
            workouts_per_user: 20,
            sequence_length: 50,
            noise_scale: 1.0,
            terrain_scale: 4.0,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_routes == 0 || self.workouts_per_user == 0 {
            return Err(FitError::InvalidArgument("synthetic counts must be positive".into()));
        }
        if self.sequence_length < 2 {
            return Err(FitError::InvalidArgument("sequence_length must be at least 2".into()));
        }
        if !(self.noise_scale >= 0.0) || !(self.terrain_scale >= 0.0) {
            return Err(FitError::InvalidArgument("noise and terrain scales must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticUser {
    pub id: String,
    pub fitness: f64,
    pub gender: Gender,
    pub preferred_sport: Sport,
    pub workouts_per_week: f64,
}

#[derive(Debug, Clone)]
pub struct RouteTemplate {
    pub sport: Sport,
    pub length_km: f64,
    pub center: (f64, f64),
    /// Altitude at equispaced fractions of the lap; first and last coincide.
    pub altitude: Vec<f64>,
}

impl RouteTemplate {
    fn altitude_at(&self, s: f64) -> f64 {
        let n = self.altitude.len() - 1;
        let x = (s / self.length_km).clamp(0.0, 1.0) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        self.altitude[i] * (1.0 - w) + self.altitude[i + 1] * w
    }

    fn lat_lon_at(&self, s: f64) -> (f64, f64) {
        let theta = 2.0 * std::f64::consts::PI * s / self.length_km;
        let radius_km = self.length_km / (2.0 * std::f64::consts::PI);
        let dlat = radius_km / 111.195;
        let dlon = dlat / self.center.0.to_radians().cos();
        (self.center.0 + dlat * theta.sin(), self.center.1 + dlon * (1.0 - theta.cos()))
    }
}

fn sample_altitude_profile(rng: &mut ChaCha8Rng, n: usize, step_sd: f64) -> Vec<f64> {
    let base = rng.gen_range(50.0..800.0);
    if step_sd == 0.0 {
        return vec![base; n];
    }
    let normal = Normal::new(0.0, step_sd).unwrap();
    let mut walk = vec![0.0; n];
    for i in 1..n {
        walk[i] = walk[i - 1] + normal.sample(rng);
    }
    // smooth with a centered moving average of width 5
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            walk[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    // pin the loop closed, then bound
    let drift = smooth[n - 1] - smooth[0];
    (0..n)
        .map(|i| {
            let v = smooth[i] - smooth[0] - drift * i as f64 / (n - 1) as f64;
            (base + v).clamp(0.0, 4000.0)
        })
        .collect()
}

pub struct SyntheticWorld {
    pub users: Vec<SyntheticUser>,
    pub routes: Vec<RouteTemplate>,
}

impl SyntheticWorld {
    pub fn sample(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Self {
        let users = (0..config.n_users)
            .map(|u| SyntheticUser {
                id: format!("u{u:04}"),
                fitness: rng.gen_range(0.5..1.5),
                gender: if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female },
                preferred_sport: Sport::MODELLED[rng.gen_range(0..3)].clone(),
                workouts_per_week: rng.gen_range(1.0..5.0),
            })
            .collect();
        let routes = (0..config.n_routes)
            .map(|r| {
                let sport = Sport::MODELLED[r % 3].clone();
                let (lo, hi) = route_length_range(&sport);
                RouteTemplate {
                    length_km: rng.gen_range(lo..hi),
                    center: (rng.gen_range(40.0..55.0), rng.gen_range(-5.0..20.0)),
                    altitude: sample_altitude_profile(rng, config.sequence_length, config.terrain_scale),
                    sport,
                }
            })
            .collect();
        SyntheticWorld { users, routes }
    }
}

/// Noise-free-capable single workout simulation on a route template.
pub fn simulate_workout(
    id: String,
    user: &SyntheticUser,
    sport: &Sport,
    route: &RouteTemplate,
    len: usize,
    noise_scale: f64,
    start_time: i64,
    rng: &mut ChaCha8Rng,
) -> WorkoutRecord {
    let speed_noise: Vec<f64> = (0..len).map(|_| gaussian(rng) * SPEED_NOISE_KMH * noise_scale).collect();
    let hr_noise: Vec<f64> = (0..len).map(|_| gaussian(rng) * HR_NOISE_BPM * noise_scale).collect();
    let base = user.fitness * base_speed(sport);
    let d = route.length_km;

    let mut pos: Vec<f64> = (0..len).map(|t| d * t as f64 / (len - 1) as f64).collect();
    let mut grade = vec![0.0; len];
    let mut speed = vec![0.0; len];
    let mut dt = 0.0;
    for _ in 0..FIXED_POINT_ROUNDS {
        for t in 0..len {
            let (a, b) = if t == 0 { (0, 1) } else { (t - 1, t) };
            let dh = (pos[b] - pos[a]) * 1000.0;
            let g = if dh > 0.0 {
                (route.altitude_at(pos[b]) - route.altitude_at(pos[a])) / dh
            } else {
                0.0
            };
            grade[t] = g.clamp(-MAX_GRADE, MAX_GRADE);
            speed[t] = (base * (1.0 - K_GRADE * grade[t]) + speed_noise[t]).max(0.5);
        }
        let travelled: f64 = speed[1..].iter().sum();
        dt = d / travelled;
        let mut acc = 0.0;
        pos[0] = 0.0;
        for t in 1..len {
            acc += speed[t] * dt;
            pos[t] = acc;
        }
        pos[len - 1] = d;
    }
    let heartrate: Vec<f64> = (0..len)
        .map(|t| {
            (HR_REST + HR_PER_KMH * speed[t] + HR_PER_GRADE * grade[t].max(0.0) + hr_noise[t])
                .clamp(40.0, 210.0)
        })
        .collect();
    let calories = kcal_per_km(sport)
        * (1..len)
            .map(|t| speed[t] * dt * (1.0 + HR_CALORIE_GAIN * heartrate[t] / 100.0))
            .sum::<f64>();
    let (lat_seq, lon_seq) = pos.iter().map(|&s| route.lat_lon_at(s)).unzip();
    WorkoutRecord {
        workout_id: id,
        user_id: user.id.clone(),
        sport: sport.clone(),
        gender: user.gender,
        calories,
        altitude_seq: pos.iter().map(|&s| route.altitude_at(s)).collect(),
        distance_seq: pos,
        speed_seq: speed,
        heartrate_seq: heartrate,
        lat_seq,
        lon_seq,
        start_time: Some(start_time),
        ground_truth_distance: None,
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// Generates `n_users * workouts_per_user` records. Same config, same output.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<WorkoutRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = SyntheticWorld::sample(config, &mut rng);
    let mut records = Vec::with_capacity(config.n_users * config.workouts_per_user);
    let epoch = 1_600_000_000i64;
    for user in &world.users {
        let gap = WEEK_SECONDS / user.workouts_per_week;
        for w in 0..config.workouts_per_user {
            let sport = if rng.gen_bool(0.8) {
                user.preferred_sport.clone()
            } else {
                Sport::MODELLED[rng.gen_range(0..3)].clone()
            };
            let candidates: Vec<usize> = (0..world.routes.len())
                .filter(|&r| world.routes[r].sport == sport)
                .collect();
            let route = if candidates.is_empty() {
                rng.gen_range(0..world.routes.len())
            } else {
                candidates[rng.gen_range(0..candidates.len())]
            };
            let start = epoch + (w as f64 * gap + rng.gen_range(0.0..3600.0)) as i64;
            let id = format!("w{:06}", records.len());
            records.push(simulate_workout(
                id,
                user,
                &sport,
                &world.routes[route],
                config.sequence_length,
                config.noise_scale,
                start,
                &mut rng,
            ));
        }
    }
    Ok(records)
}
