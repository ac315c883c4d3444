use serde::{Deserialize, Serialize};

use crate::data::{Gender, NormStats, Sport};
use crate::error::{FitError, Result};
use crate::tensor::{Embeddings, EntityId};

const CONTEXT_CLAMP: f64 = 10.0;

/// Slot layout of the context vector:
/// `[user embedding (R), route embedding (R), calories, run, bike, mountain-bike, gender?, route distance]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLayout {
    pub rank: usize,
    pub include_gender: bool,
}

impl ContextLayout {
    pub fn new(rank: usize, include_gender: bool) -> Self {
        ContextLayout { rank, include_gender }
    }

    pub fn dim(&self) -> usize {
        2 * self.rank + 5 + usize::from(self.include_gender)
    }

    pub fn calories_slot(&self) -> usize {
        2 * self.rank
    }

    pub fn sport_slot(&self, sport_index: usize) -> usize {
        2 * self.rank + 1 + sport_index
    }

    pub fn gender_slot(&self) -> Option<usize> {
        self.include_gender.then_some(2 * self.rank + 4)
    }

    pub fn route_distance_slot(&self) -> usize {
        self.dim() - 1
    }

    pub fn slot_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.rank).map(|r| format!("user_{r}")).collect();
        names.extend((0..self.rank).map(|r| format!("route_{r}")));
        names.extend(["calories", "sport_run", "sport_bike", "sport_mountain_bike"].map(String::from));
        if self.include_gender {
            names.push("gender".into());
        }
        names.push("route_distance".into());
        names
    }
}

/// Raw inputs for one context vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextInput<'a> {
    pub user_id: &'a str,
    pub cluster: usize,
    pub sport: Sport,
    pub gender: Gender,
    pub calories: f64,
    pub route_distance_km: f64,
}

/// Builds the context vector with min-max scaled scalars; every entry is
/// clipped to ±10.
pub fn assemble_context(
    embeddings: &Embeddings,
    input: &ContextInput<'_>,
    stats: &NormStats,
    layout: &ContextLayout,
) -> Result<Vec<f64>> {
    if embeddings.rank != layout.rank {
        return Err(FitError::dims(format!(
            "embeddings of rank {} for a layout of rank {}",
            embeddings.rank, layout.rank
        )));
    }
    if !(input.calories >= 0.0) || !input.calories.is_finite() {
        return Err(FitError::validation("target_calories", format!("{} is not a non-negative number", input.calories)));
    }
    let sport = input
        .sport
        .index()
        .ok_or_else(|| FitError::validation("sport", format!("unsupported sport {}", input.sport.as_str())))?;
    let mut v = Vec::with_capacity(layout.dim());
    v.extend_from_slice(embeddings.lookup(EntityId::User(input.user_id))?);
    v.extend_from_slice(embeddings.lookup(EntityId::RouteCluster(input.cluster))?);
    v.push(stats.calories.normalize(input.calories));
    let mut onehot = [0.0; 3];
    onehot[sport] = 1.0;
    v.extend_from_slice(&onehot);
    if layout.include_gender {
        v.push(input.gender.code());
    }
    v.push(stats.distance.normalize(input.route_distance_km));
    for x in v.iter_mut() {
        *x = x.clamp(-CONTEXT_CLAMP, CONTEXT_CLAMP);
    }
    debug_assert_eq!(v.len(), layout.dim());
    Ok(v)
}
