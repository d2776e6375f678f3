//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

/// Force exact symmetry by averaging with the transpose.
///
/// Downstream trace formulas assume their inputs are symmetric, so products
/// like `B^T Z B` are symmetrized once at construction.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Max absolute deviation from symmetry, scaled by the largest entry.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && asymmetry(a) <= tol
}

/// Eigenvalue range (min, max) of a symmetric matrix.
pub fn sym_eig_bounds(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(a.clone()).map(|c| c.inverse())
}

/// Solve `A X = B` for symmetric positive definite `A`, escalating a diagonal
/// jitter (1e-12 * tr(A)/n, x10 per attempt, 3 attempts) before giving up.
/// Returns the solution and the jitter actually applied.
pub fn spd_solve_with_jitter(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    if let Some(chol) = nalgebra::Cholesky::new(a.clone()) {
        return Some((chol.solve(b), 0.0));
    }
    let base = 1e-12 * a.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut jitter = base;
    for _ in 0..3 {
        let mut aj = a.clone();
        for i in 0..n {
            aj[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(aj) {
            return Some((chol.solve(b), jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// Factor `L` with `L L^T = A` for a symmetric positive *semi*definite `A`.
///
/// Eigenvalue-based so that exactly singular covariances (for example the
/// zero row/column of an intercept signal) still factor; eigenvalues below
/// `-1e-8 * max` are rejected, small negatives are clamped to zero.
pub fn psd_factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = -1e-8 * max.max(1e-300);
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return None;
        }
        let s = lambda.max(0.0).sqrt();
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    Some(scaled)
}

/// Quadratic form `v^T A v`.
pub fn quad_form(v: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    (v.transpose() * a * v)[(0, 0)]
}

/// Spectral radius (largest modulus of the eigenvalues) of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Serialize a matrix to a row-major `Vec`.
pub fn to_row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}
