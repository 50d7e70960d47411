use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::mean_std;
use crate::error::{ProbeError, Result};

pub const DEFAULT_PERMUTATIONS: usize = 100;

/// Subtracts each column's mean.
pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

struct CenteredPair {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    denom: f64,
}

fn prepare(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<CenteredPair> {
    if x.nrows() != y.nrows() {
        return Err(ProbeError::Validation(format!(
            "row-count mismatch: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(ProbeError::Validation("CKA needs at least 2 rows".into()));
    }
    let (x, y) = (center_columns(x), center_columns(y));
    let denom = x.tr_mul(&x).norm() * y.tr_mul(&y).norm();
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(ProbeError::Degenerate(
            "CKA denominator is zero (constant input)".into(),
        ));
    }
    Ok(CenteredPair { x, y, denom })
}

fn aligned(pair: &CenteredPair, y: &DMatrix<f64>) -> f64 {
    let cross = y.tr_mul(&pair.x).norm_squared();
    (cross / pair.denom).clamp(0.0, 1.0)
}

/// Linear CKA: `||Ycᵀ Xc||²_F / (||Xcᵀ Xc||_F ||Ycᵀ Yc||_F)` on column-centred inputs.
pub fn linear_cka(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let pair = prepare(x, y)?;
    Ok(aligned(&pair, &pair.y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaResult {
    pub cka: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    /// `cka - baseline_mean`.
    pub delta: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// The row permutations used for the baseline; all drawn up front from `seed`.
pub fn baseline_permutations(n: usize, permutations: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

/// CKA against a baseline where the rows of `y` are shuffled, breaking the pairing.
/// The baseline std is the population std over permutations.
pub fn cka_permutation_delta(x: &DMatrix<f64>, y: &DMatrix<f64>, permutations: usize, seed: u64) -> Result<CkaResult> {
    if permutations == 0 {
        return Err(ProbeError::Validation("permutations must be at least 1".into()));
    }
    let pair = prepare(x, y)?;
    let cka = aligned(&pair, &pair.y);
    // Row shuffles keep column means, so the centred Y can be permuted directly.
    let scores: Vec<f64> = baseline_permutations(pair.y.nrows(), permutations, seed)
        .iter()
        .map(|perm| aligned(&pair, &pair.y.select_rows(perm)))
        .collect();
    let (baseline_mean, baseline_std) = mean_std(&scores);
    Ok(CkaResult {
        cka,
        baseline_mean,
        baseline_std,
        delta: cka - baseline_mean,
        permutations,
        seed,
    })
}
