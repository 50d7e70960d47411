//! Canonical correlation analysis via orthonormal range bases, and
//! projection-weighted CCA on top of it.
//!
//! Each centred input is reduced to the left singular vectors that carry
//! `var_keep` of its energy; the canonical correlations are then the singular
//! values of `Uxᵀ Uy`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cka::center_columns;
use crate::error::{ProbeError, Result};

pub const DEFAULT_VAR_KEEP: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// Canonical correlations, descending, in `[0, 1]`.
    pub correlations: Vec<f64>,
    /// `n x c` canonical variates of the first argument; orthonormal columns.
    pub canonical_variates_x: DMatrix<f64>,
    /// Dimensions kept for `(x, y)` after truncation.
    pub kept_dims: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcaParams {
    pub var_keep: f64,
    pub eps: f64,
}

impl Default for CcaParams {
    fn default() -> Self {
        Self {
            var_keep: DEFAULT_VAR_KEEP,
            eps: DEFAULT_EPS,
        }
    }
}

impl CcaParams {
    fn validate(&self) -> Result<()> {
        if !(self.var_keep > 0.0 && self.var_keep <= 1.0) {
            return Err(ProbeError::Validation(format!(
                "var_keep must lie in (0, 1], got {}",
                self.var_keep
            )));
        }
        if !(self.eps >= 0.0 && self.eps < 1.0) {
            return Err(ProbeError::Validation(format!(
                "eps must lie in [0, 1), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis for the retained column space of a centred matrix.
///
/// Singular values at or below `eps * s_max` count as numerically zero;
/// of the rest, the fewest leading directions reaching `var_keep` of the
/// squared-singular-value total are kept.
fn range_basis(m: &DMatrix<f64>, params: CcaParams, which: &str) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().take_while(|&&v| v > params.eps * s_max && v > 0.0).count();
    if rank == 0 {
        return Err(ProbeError::Degenerate(format!("{which} has rank 0 after centring")));
    }
    let energy: Vec<f64> = s[..rank].iter().map(|v| v * v).collect();
    let total: f64 = energy.iter().sum();
    let keep = if params.var_keep >= 1.0 {
        rank
    } else {
        let mut acc = 0.0;
        let mut keep = rank;
        for (i, e) in energy.iter().enumerate() {
            acc += e;
            if acc >= params.var_keep * total {
                keep = i + 1;
                break;
            }
        }
        keep
    };
    let cols: Vec<usize> = order[..keep].to_vec();
    Ok(u.select_columns(&cols))
}

/// CCA between the rows of `x` and `y`, both centred internally.
pub fn cca(x: &DMatrix<f64>, y: &DMatrix<f64>, params: CcaParams) -> Result<CcaResult> {
    params.validate()?;
    if x.nrows() != y.nrows() {
        return Err(ProbeError::Validation(format!(
            "row-count mismatch: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() <= 2 {
        return Err(ProbeError::Validation("CCA needs more than 2 rows".into()));
    }
    let ux = range_basis(&center_columns(x), params, "x")?;
    let uy = range_basis(&center_columns(y), params, "y")?;
    let kept_dims = (ux.ncols(), uy.ncols());

    let m = ux.tr_mul(&uy);
    let svd = m.svd(true, false);
    let a = svd.u.expect("requested U");
    let c = kept_dims.0.min(kept_dims.1);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    order.truncate(c);

    let correlations = order.iter().map(|&i| svd.singular_values[i].clamp(0.0, 1.0)).collect();
    let canonical_variates_x = &ux * a.select_columns(&order);
    Ok(CcaResult {
        correlations,
        canonical_variates_x,
        kept_dims,
    })
}

/// PWCCA weights: `|⟨h_i, x̃_j⟩|` summed over the centred columns of `x`, normalized to 1.
pub fn pwcca_weights(result: &CcaResult, x: &DMatrix<f64>) -> Vec<f64> {
    let xc = center_columns(x);
    let proj = result.canonical_variates_x.tr_mul(&xc);
    let raw: Vec<f64> = proj.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// Projection-weighted mean canonical correlation, weighted by the first argument.
pub fn pwcca(x: &DMatrix<f64>, y: &DMatrix<f64>, params: CcaParams) -> Result<f64> {
    let result = cca(x, y, params)?;
    let weights = pwcca_weights(&result, x);
    let score: f64 = weights.iter().zip(&result.correlations).map(|(w, r)| w * r).sum();
    Ok(score.clamp(0.0, 1.0))
}
