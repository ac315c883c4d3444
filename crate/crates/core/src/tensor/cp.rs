//! CP decomposition by alternating least squares, Tucker core fitting for
//! given CP factors, and the core consistency diagnostic.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::DenseTensor3;
use crate::error::{FitError, Result};

const RIDGE: f64 = 1e-12;

/// Column-wise Kronecker product: column `r` of the result is `m_r ⊗ n_r`,
/// so row `a * N.rows + b` holds `m[a, r] * n[b, r]`.
pub fn khatri_rao(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != n.ncols() {
        return Err(FitError::dims(format!(
            "khatri-rao operands have {} and {} columns",
            m.ncols(),
            n.ncols()
        )));
    }
    let (mr, nr) = (m.nrows(), n.nrows());
    Ok(DMatrix::from_fn(mr * nr, m.ncols(), |row, r| {
        m[(row / nr, r)] * n[(row % nr, r)]
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig {
            rank: 2,
            max_sweeps: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Kruskal form `Σ_r λ_r A_r ∘ B_r ∘ C_r` with unit-norm factor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpFactors {
    /// users × R
    pub a: DMatrix<f64>,
    /// route clusters × R
    pub b: DMatrix<f64>,
    /// context features × R
    pub c: DMatrix<f64>,
    pub lambda: Vec<f64>,
    /// Relative reconstruction error after each sweep.
    pub fit_history: Vec<f64>,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn reconstruct(&self) -> DenseTensor3 {
        let (i, j, k) = (self.a.nrows(), self.b.nrows(), self.c.nrows());
        let mut out = DenseTensor3::zeros(i, j, k);
        for r in 0..self.rank() {
            for ii in 0..i {
                let ar = self.lambda[r] * self.a[(ii, r)];
                for jj in 0..j {
                    let abr = ar * self.b[(jj, r)];
                    for kk in 0..k {
                        *out.get_mut(ii, jj, kk) += abr * self.c[(kk, r)];
                    }
                }
            }
        }
        out
    }

    /// Same model with λ folded into the user factor and unit weights.
    pub fn with_weights_absorbed(&self) -> CpFactors {
        let mut a = self.a.clone();
        for (r, l) in self.lambda.iter().enumerate() {
            a.column_mut(r).scale_mut(*l);
        }
        CpFactors {
            a,
            b: self.b.clone(),
            c: self.c.clone(),
            lambda: vec![1.0; self.rank()],
            fit_history: self.fit_history.clone(),
        }
    }

    pub fn relative_error(&self, tensor: &DenseTensor3) -> f64 {
        relative_error(tensor, &self.reconstruct())
    }
}

fn relative_error(x: &DenseTensor3, approx: &DenseTensor3) -> f64 {
    let norm = x.norm();
    let resid: f64 = x
        .values()
        .iter()
        .zip(approx.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        resid / norm
    } else {
        resid
    }
}

/// Solves `F · V = M` for symmetric positive semi-definite `V`.
fn solve_normal(m: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut reg = v.clone();
    for d in 0..reg.nrows() {
        reg[(d, d)] += RIDGE;
    }
    match reg.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&m.transpose()).transpose()),
        None => Ok(m * pinv(&reg)?),
    }
}

fn normalize_columns(f: &mut DMatrix<f64>) -> Vec<f64> {
    (0..f.ncols())
        .map(|r| {
            let n = f.column(r).norm();
            if n > 0.0 {
                f.column_mut(r).unscale_mut(n);
            }
            n
        })
        .collect()
}

/// CP-ALS with deterministic uniform `[-0.5, 0.5]` initialization.
///
/// Each sweep updates A, B and C in turn from the mode-n unfolding and the
/// Khatri-Rao product of the other two factors, then normalizes columns into
/// λ. Stops once the relative error changes by less than `tol`.
pub fn cp_als(tensor: &DenseTensor3, config: &CpConfig) -> Result<CpFactors> {
    if config.rank == 0 {
        return Err(FitError::InvalidArgument("CP rank must be at least 1".into()));
    }
    if tensor.values().iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("tensor".into()));
    }
    let (i, j, k) = tensor.dims();
    let r = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |rows: usize| DMatrix::from_fn(rows, r, |_, _| rng.gen_range(-0.5..0.5));
    let mut a = init(i);
    let mut b = init(j);
    let mut c = init(k);
    normalize_columns(&mut a);
    normalize_columns(&mut b);
    normalize_columns(&mut c);
    let mut lambda = vec![1.0; r];

    let x1 = tensor.unfold(0);
    let x2 = tensor.unfold(1);
    let x3 = tensor.unfold(2);
    let mut history: Vec<f64> = Vec::new();

    for _ in 0..config.max_sweeps.max(1) {
        let gram = |f: &DMatrix<f64>| f.transpose() * f;

        a = solve_normal(&(&x1 * khatri_rao(&c, &b)?), &gram(&c).component_mul(&gram(&b)))?;
        normalize_columns(&mut a);
        b = solve_normal(&(&x2 * khatri_rao(&c, &a)?), &gram(&c).component_mul(&gram(&a)))?;
        normalize_columns(&mut b);
        c = solve_normal(&(&x3 * khatri_rao(&b, &a)?), &gram(&b).component_mul(&gram(&a)))?;
        lambda = normalize_columns(&mut c);

        let current = CpFactors {
            a: a.clone(),
            b: b.clone(),
            c: c.clone(),
            lambda: lambda.clone(),
            fit_history: Vec::new(),
        };
        let err = current.relative_error(tensor);
        let done = history.last().is_some_and(|prev: &f64| (prev - err).abs() < config.tol);
        history.push(err);
        if done || err == 0.0 {
            break;
        }
    }
    Ok(CpFactors {
        a,
        b,
        c,
        lambda,
        fit_history: history,
    })
}

/// Least-squares Tucker3 core for fixed factor matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    pub core: DenseTensor3,
    /// Squared Frobenius residual `‖X − A G (C ⊗ B)ᵀ‖²`.
    pub residual: f64,
}

/// Moore-Penrose pseudo-inverse via faer's SVD, treating singular values
/// below `max(rows, cols) · ε · σ_max` as zero.
pub(crate) fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = fm
        .svd()
        .map_err(|e| FitError::NonFinite(format!("SVD did not converge: {e:?}")))?;
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let sigma_max = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    let cut = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let mut out = DMatrix::zeros(cols, rows);
    for k in 0..s.nrows() {
        if s[k] > cut {
            for i in 0..cols {
                let vik = v[(i, k)] / s[k];
                for j in 0..rows {
                    out[(i, j)] += vik * u[(j, k)];
                }
            }
        }
    }
    Ok(out)
}

/// Fits `G` minimizing `‖X − A G (C ⊗ B)ᵀ‖²`.
///
/// `vec G = (C ⊗ B ⊗ A)⁺ vec X` factors as `(C⁺ ⊗ B⁺ ⊗ A⁺) vec X`, so the
/// core is `X` multiplied by each factor's pseudo-inverse along its mode.
/// Rank-deficient factors are handled by the pseudo-inverse.
pub fn tucker_core(tensor: &DenseTensor3, factors: &CpFactors) -> Result<CoreTensor> {
    let (i, j, k) = tensor.dims();
    let r = factors.rank();
    for (name, f, rows) in [("A", &factors.a, i), ("B", &factors.b, j), ("C", &factors.c, k)] {
        if f.nrows() != rows || f.ncols() != r {
            return Err(FitError::dims(format!(
                "factor {name} is {}x{}, tensor needs {rows}x{r}",
                f.nrows(),
                f.ncols()
            )));
        }
    }
    let a = &factors.a;
    let core = tensor
        .mode_product(0, &pinv(a)?)?
        .mode_product(1, &pinv(&factors.b)?)?
        .mode_product(2, &pinv(&factors.c)?)?;
    let approx = core
        .mode_product(0, a)?
        .mode_product(1, &factors.b)?
        .mode_product(2, &factors.c)?;
    let residual = tensor
        .values()
        .iter()
        .zip(approx.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok(CoreTensor { core, residual })
}

/// Core consistency `100 (1 − Σ (g_lmn − δ_lmn)² / R)` against the
/// superdiagonal tensor of ones.
pub fn core_consistency(core: &DenseTensor3) -> Result<f64> {
    let (r, r2, r3) = core.dims();
    if r != r2 || r != r3 {
        return Err(FitError::dims(format!("core is {r}x{r2}x{r3}, expected cubic")));
    }
    let mut sum = 0.0;
    for l in 0..r {
        for m in 0..r {
            for n in 0..r {
                let target = if l == m && m == n { 1.0 } else { 0.0 };
                sum += (core.get(l, m, n) - target).powi(2);
            }
        }
    }
    Ok(100.0 * (1.0 - sum / r as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub rank: usize,
    pub core_consistency: f64,
    /// `1 − ‖X − X̂‖ / ‖X‖`
    pub relative_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreConsistencyReport {
    pub scores: Vec<RankScore>,
    pub selected_rank: usize,
}

impl CoreConsistencyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,cc,relative_fit\n");
        for s in &self.scores {
            out.push_str(&format!("{},{},{}\n", s.rank, s.core_consistency, s.relative_fit));
        }
        out
    }
}

/// Decomposes at every rank and keeps the highest core consistency, ties
/// going to the smaller rank.
pub fn rank_sweep(
    tensor: &DenseTensor3,
    ranks: &[usize],
    base: &CpConfig,
) -> Result<(CoreConsistencyReport, Vec<CpFactors>)> {
    if ranks.is_empty() {
        return Err(FitError::InvalidArgument("rank sweep needs at least one rank".into()));
    }
    let mut scores = Vec::with_capacity(ranks.len());
    let mut all = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let factors = cp_als(tensor, &CpConfig { rank, ..base.clone() })?;
        let core = tucker_core(tensor, &factors.with_weights_absorbed())?;
        let cc = core_consistency(&core.core)?;
        let fit = 1.0 - factors.fit_history.last().copied().unwrap_or(1.0);
        scores.push(RankScore {
            rank,
            core_consistency: cc,
            relative_fit: fit,
        });
        all.push(factors);
    }
    let mut best = 0;
    for (idx, s) in scores.iter().enumerate() {
        let b = &scores[best];
        if s.core_consistency > b.core_consistency
            || (s.core_consistency == b.core_consistency && s.rank < b.rank)
        {
            best = idx;
        }
    }
    let selected_rank = scores[best].rank;
    Ok((CoreConsistencyReport { scores, selected_rank }, all))
}
