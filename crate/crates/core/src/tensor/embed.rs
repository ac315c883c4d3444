use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::context::EntityIndex;
use super::cp::CpFactors;
use crate::error::{FitError, Result};

/// Entity whose embedding is requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityId<'a> {
    User(&'a str),
    RouteCluster(usize),
}

/// User and route-cluster embeddings: rows of the user and route factors,
/// each factor scaled by the square root of its row count so that every
/// column has unit root-mean-square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub index: EntityIndex,
    pub rank: usize,
    /// users × R, row-major
    pub users: Vec<f64>,
    /// clusters × R, row-major
    pub routes: Vec<f64>,
}

fn scaled_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let scale = (m.nrows() as f64).sqrt();
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().map(|v| v * scale));
    }
    out
}

impl Embeddings {
    pub fn from_factors(factors: &CpFactors, index: &EntityIndex) -> Result<Self> {
        if factors.a.nrows() != index.users.len() || factors.b.nrows() != index.n_clusters {
            return Err(FitError::dims(format!(
                "factors are {}x{} users/clusters, index has {}x{}",
                factors.a.nrows(),
                factors.b.nrows(),
                index.users.len(),
                index.n_clusters
            )));
        }
        Ok(Embeddings {
            index: EntityIndex::new(index.users.clone(), index.n_clusters),
            rank: factors.rank(),
            users: scaled_rows(&factors.a),
            routes: scaled_rows(&factors.b),
        })
    }

    pub fn lookup(&self, id: EntityId<'_>) -> Result<&[f64]> {
        let r = self.rank;
        match id {
            EntityId::User(user) => {
                let row = self.index.user_row(user).ok_or_else(|| FitError::NotFound {
                    kind: "user",
                    id: user.to_string(),
                })?;
                Ok(&self.users[row * r..(row + 1) * r])
            }
            EntityId::RouteCluster(c) => {
                if c >= self.index.n_clusters {
                    return Err(FitError::NotFound {
                        kind: "route cluster",
                        id: c.to_string(),
                    });
                }
                Ok(&self.routes[c * r..(c + 1) * r])
            }
        }
    }

    /// Text table `id v_1 .. v_R`, one entity per line, for external plotting.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt_row = |out: &mut String, id: &str, row: &[f64]| {
            out.push_str(id);
            for v in row {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        };
        for (i, u) in self.index.users.iter().enumerate() {
            fmt_row(&mut out, &format!("user:{u}"), &self.users[i * self.rank..(i + 1) * self.rank]);
        }
        for c in 0..self.index.n_clusters {
            fmt_row(&mut out, &format!("route:{c}"), &self.routes[c * self.rank..(c + 1) * self.rank]);
        }
        out
    }
}

/// Row `id` of the user or route factor of a decomposition.
pub fn embedding_lookup(factors: &CpFactors, index: &EntityIndex, id: EntityId<'_>) -> Result<Vec<f64>> {
    match id {
        EntityId::User(user) => {
            let row = index.user_row(user).ok_or_else(|| FitError::NotFound {
                kind: "user",
                id: user.to_string(),
            })?;
            Ok(factors.a.row(row).iter().copied().collect())
        }
        EntityId::RouteCluster(c) if c < factors.b.nrows() => Ok(factors.b.row(c).iter().copied().collect()),
        EntityId::RouteCluster(c) => Err(FitError::NotFound {
            kind: "route cluster",
            id: c.to_string(),
        }),
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FitError::dims(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(FitError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
