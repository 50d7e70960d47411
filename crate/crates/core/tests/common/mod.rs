//! Reference implementations used to check the library from the outside.
//!
//! Each oracle takes a different route to the same quantity than the code
//! under test: Gram matrices instead of feature-space products for CKA, a
//! covariance eigenproblem instead of orthonormal range bases for CCA, and
//! plain recursion instead of dynamic programming for edit distance.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// `n x n` centring matrix `I - 11ᵀ/n`.
fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// `tr(K H L H)`, the (unscaled) biased HSIC estimator.
fn hsic(k: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let h = centering(k.nrows());
    (k * &h * l * &h).trace()
}

/// Linear CKA through Gram matrices of the raw inputs.
pub fn cka_gram_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let k = x * x.transpose();
    let l = y * y.transpose();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

fn inverse_sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| 1.0 / v.sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Canonical correlations from the eigenvalues of
/// `Sxx^{-1/2} Sxy Syy^{-1} Syx Sxx^{-1/2}`, with `ridge` added to both
/// diagonal blocks. Returned descending, `min(p, q)` values.
pub fn cca_eigen_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Vec<f64> {
    let n = x.nrows() as f64;
    let xc = centering(x.nrows()) * x;
    let yc = centering(y.nrows()) * y;
    let sxx = xc.transpose() * &xc / n + DMatrix::identity(x.ncols(), x.ncols()) * ridge;
    let syy = yc.transpose() * &yc / n + DMatrix::identity(y.ncols(), y.ncols()) * ridge;
    let sxy = xc.transpose() * &yc / n;
    let a = inverse_sqrt_spd(&sxx);
    let syy_inv = syy.try_inverse().expect("Syy invertible");
    let m = &a * &sxy * syy_inv * sxy.transpose() * &a;
    let m = (&m + m.transpose()) * 0.5;
    let mut rho: Vec<f64> = m
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    rho.truncate(x.ncols().min(y.ncols()));
    rho
}

/// Textbook recursive edit distance (exponential; short inputs only).
pub fn levenshtein_naive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((ha, ta)), Some((hb, tb))) => {
            if ha == hb {
                levenshtein_naive(ta, tb)
            } else {
                1 + levenshtein_naive(ta, b)
                    .min(levenshtein_naive(a, tb))
                    .min(levenshtein_naive(ta, tb))
            }
        }
    }
}

pub fn euclid_loop(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

/// Random string over `alphabet` symbols with length in `0..=max_len`.
pub fn random_symbols(rng: &mut ChaCha8Rng, alphabet: u8, max_len: usize) -> Vec<u8> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(0..alphabet)).collect()
}
