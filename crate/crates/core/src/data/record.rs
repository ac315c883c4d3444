use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};

/// Sport label of a workout. Anything outside the three modelled sports is
/// kept verbatim so that cleaning can report it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Sport {
    Run,
    Bike,
    MountainBike,
    Other(String),
}

impl Sport {
    pub const MODELLED: [Sport; 3] = [Sport::Run, Sport::Bike, Sport::MountainBike];

    /// Position in the one-hot sport encoding, `None` for unmodelled sports.
    pub fn index(&self) -> Option<usize> {
        match self {
            Sport::Run => Some(0),
            Sport::Bike => Some(1),
            Sport::MountainBike => Some(2),
            Sport::Other(_) => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Sport::Run => "run",
            Sport::Bike => "bike",
            Sport::MountainBike => "mountain-bike",
            Sport::Other(s) => s,
        }
    }
}

impl From<String> for Sport {
    fn from(s: String) -> Self {
        match s.as_str() {
            "run" => Sport::Run,
            "bike" => Sport::Bike,
            "mountain-bike" => Sport::MountainBike,
            _ => Sport::Other(s),
        }
    }
}

impl From<Sport> for String {
    fn from(s: Sport) -> Self {
        s.as_str().to_string()
    }
}

impl std::str::FromStr for Sport {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self> {
        match Sport::from(s.to_string()) {
            Sport::Other(_) => Err(FitError::validation(
                "sport",
                format!("unsupported sport {s:?}; expected run, bike or mountain-bike"),
            )),
            sport => Ok(sport),
        }
    }
}

impl fmt::Display for Sport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    /// Numeric code used as a model feature.
    pub fn code(self) -> f64 {
        match self {
            Gender::Male => 1.0,
            Gender::Female => -1.0,
            Gender::Unknown => 0.0,
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            "unknown" => Ok(Gender::Unknown),
            _ => Err(FitError::validation("gender", format!("unknown gender {s:?}"))),
        }
    }
}

/// One exercise session with aligned per-step sensor sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkoutRecord {
    pub workout_id: String,
    pub user_id: String,
    pub sport: Sport,
    #[serde(default)]
    pub gender: Gender,
    /// kcal
    pub calories: f64,
    /// meters
    pub altitude_seq: Vec<f64>,
    /// cumulative km, starts at 0
    pub distance_seq: Vec<f64>,
    /// km/h
    pub speed_seq: Vec<f64>,
    /// beats per minute
    pub heartrate_seq: Vec<f64>,
    pub lat_seq: Vec<f64>,
    pub lon_seq: Vec<f64>,
    /// Unix seconds; only used for the per-week frequency context feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<i64>,
    /// Ground-truth distance of an extended (augmented) route. When set, the
    /// sequences describe the extended route while this is the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_distance: Option<f64>,
}

impl WorkoutRecord {
    pub fn len(&self) -> usize {
        self.altitude_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.altitude_seq.is_empty()
    }

    /// Total distance covered by the sequences (km).
    pub fn route_distance(&self) -> f64 {
        self.distance_seq.last().copied().unwrap_or(0.0)
    }

    /// Distance the models are trained to predict (km).
    pub fn target_distance(&self) -> f64 {
        self.ground_truth_distance
            .unwrap_or_else(|| self.route_distance())
    }

    /// Workout duration in hours, integrated from distance increments and speed.
    pub fn duration_hours(&self) -> f64 {
        let mut hours = 0.0;
        for t in 1..self.len() {
            let dd = self.distance_seq[t] - self.distance_seq[t - 1];
            let v = 0.5 * (self.speed_seq[t] + self.speed_seq[t - 1]);
            if v > 0.0 && dd > 0.0 {
                hours += dd / v;
            }
        }
        hours
    }

    pub fn mean_speed(&self) -> f64 {
        mean(&self.speed_seq)
    }

    pub fn mean_heartrate(&self) -> f64 {
        mean(&self.heartrate_seq)
    }

    pub fn mean_altitude(&self) -> f64 {
        mean(&self.altitude_seq)
    }

    fn sequences(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("altitude_seq", &self.altitude_seq),
            ("distance_seq", &self.distance_seq),
            ("speed_seq", &self.speed_seq),
            ("heartrate_seq", &self.heartrate_seq),
            ("lat_seq", &self.lat_seq),
            ("lon_seq", &self.lon_seq),
        ]
    }

    /// Checks sequence alignment and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.workout_id.is_empty() {
            return Err(FitError::validation("workout_id", "empty id"));
        }
        if !self.calories.is_finite() || self.calories < 0.0 {
            return Err(FitError::validation(
                "calories",
                format!("expected a finite value >= 0, got {}", self.calories),
            ));
        }
        let len = self.altitude_seq.len();
        for (name, seq) in self.sequences() {
            if seq.len() != len {
                return Err(FitError::validation(
                    name,
                    format!("has {} entries but altitude_seq has {len}", seq.len()),
                ));
            }
            if seq.iter().any(|v| !v.is_finite()) {
                return Err(FitError::validation(name, "contains a non-finite value"));
            }
        }
        Ok(())
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Reads line-delimited workout records. Blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<WorkoutRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WorkoutRecord = serde_json::from_str(&line).map_err(|e| FitError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut writer: W, records: &[WorkoutRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_records_file(path: &std::path::Path) -> Result<Vec<WorkoutRecord>> {
    let file = std::fs::File::open(path)?;
    parse_records(std::io::BufReader::new(file))
}

pub fn write_records_file(path: &std::path::Path, records: &[WorkoutRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(file), records)
}
